import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from nonloc import kernel as kern
from nonloc.exceptions import ConfigurationError
from nonloc.geometry import Domain, build_grid
from nonloc.kernel import KernelSpec
from nonloc.nonlocal_op import apply, build_family, build_plan
from nonloc.solver import (IsaacsDirichletSolver, NonlocalDirichletSolver, ParabolicConfig,
                           ParabolicNonlocalSolver, PicardConfig, Scheme, picard_step,
                           solve_direct, solve_isaacs, solve_parabolic, solve_picard, system_matrix)


def ones(plan):
    return plan.grid.sample(1.0)


class TestPicardConfig:
    def test_default_step(self, plan_02):
        cfg = PicardConfig.default(plan_02)
        assert cfg.a == pytest.approx(0.9 * min(1 / cfg.nu0, 1 / plan_02.l1_norm))
        assert 0 < cfg.theoretical_factor < 1

    @pytest.mark.parametrize("a", [0.0, -0.1, 1.0])
    def test_step_bound(self, plan_02, a):
        cfg = PicardConfig.default(plan_02)
        with pytest.raises(ConfigurationError):
            PicardConfig(a, cfg.nu0, cfg.l1_norm)

    def test_singular_kernel_has_no_default(self):
        plan = build_plan(KernelSpec.singular(0.5), build_grid(Domain.interval(), 0.05))
        with pytest.raises(ConfigurationError):
            PicardConfig.default(plan)


class TestPicard:
    def test_zero_fixed_point(self, plan_02):
        cfg = PicardConfig.default(plan_02)
        z = plan_02.grid.zeros()
        assert np.all(picard_step(z, z, plan_02, cfg) == 0)
        u, rep = solve_picard(z, plan_02, cfg)
        assert rep.iterations <= 1 and np.all(u == 0)

    def test_single_unknown(self, plan_02):
        g = plan_02.grid
        mask = np.zeros(g.size, bool)
        i = g.node_of(0.0)
        mask[i] = True
        f = ones(plan_02)
        # the diagonal is the self weight minus the kernel mass
        self_weight = plan_02.stencil[plan_02.K] + plan_02.l1_norm
        expected = 1.0 / (plan_02.l1_norm - self_weight)
        u, rep = solve_picard(f, plan_02, mask=mask)
        assert rep.converged
        assert u[i] == pytest.approx(expected, rel=1e-8)
        assert solve_direct(f, plan_02, mask=mask)[i] == pytest.approx(expected, rel=1e-14)

    def test_contraction_inequality(self, plan_02, rng):
        cfg = PicardConfig.default(plan_02)
        g = plan_02.grid
        m = g.closure_mask
        f = ones(plan_02)
        for _ in range(20):
            u1, u2 = rng.normal(size=(2, g.size)) * m
            lhs = np.abs(picard_step(u1, f, plan_02, cfg) - picard_step(u2, f, plan_02, cfg)).max()
            assert lhs <= cfg.theoretical_factor * np.abs(u1 - u2).max() * (1 + 1e-12)

    def test_solution_properties(self, plan_05):
        u, rep = solve_picard(ones(plan_05), plan_05)
        m = plan_05.grid.closure_mask
        assert rep.converged and rep.final_residual <= 1e-9
        assert np.all(u[m] > 0) and u.max() <= 2 / 3
        assert rep.measured_factor <= rep.theoretical_factor + 0.05
        assert rep.asymptotic_factor() <= rep.theoretical_factor + 1e-3

    def test_agrees_with_direct(self, plan_02):
        u, rep = solve_picard(ones(plan_02), plan_02)
        assert np.abs(u - solve_direct(ones(plan_02), plan_02)).max() <= 10 * 1e-9

    def test_iteration_cap_reported(self, plan_02):
        cfg = PicardConfig.default(plan_02, max_iter=3)
        _, rep = solve_picard(ones(plan_02), plan_02, cfg)
        assert not rep.converged and rep.iterations == 3


class TestDirect:
    def test_zero(self, plan_02):
        assert np.all(solve_direct(plan_02.grid.zeros(), plan_02) == 0)

    def test_diagonal_dominance(self, plan_02):
        A = system_matrix(plan_02)
        nu0 = kern.nu0_lower_bound(plan_02.spec, plan_02.grid.domain)
        off = np.abs(A).sum(axis=1) - np.abs(np.diag(A))
        assert np.all(np.diag(A) - off >= nu0 - 1e-8)

    def test_maximum_principle(self, plan_02, rng):
        m = plan_02.grid.closure_mask
        for sign in (1, -1):
            f = sign * rng.uniform(0, 1, plan_02.grid.size) * m
            u = solve_direct(f, plan_02)
            assert np.all(sign * u >= 0)

    def test_singular_kernel_pins_boundary(self):
        g = build_grid(Domain.interval(), 0.05)
        plan = build_plan(KernelSpec.singular(0.5), g)
        u = solve_direct(g.sample(1.0), plan)
        assert u[g.node_of(-1.0)] == 0 and u[g.node_of(1.0)] == 0
        assert np.all(u[g.interior_mask] > 0)


class TestIsaacs:
    def test_singleton_matches_linear(self, plan_02):
        fam = build_family(plan_02.spec, plan_02.grid)
        u, _ = solve_isaacs(ones(plan_02), fam)
        v, _ = solve_picard(ones(plan_02), plan_02)
        assert np.abs(u - v).max() < 1e-8

    def test_bracketed_and_nonnegative(self):
        g = build_grid(Domain.interval(), 0.05)
        ramp = kern.RadialProfile((0.0, 1.0), (0.5, 2.0), 2.0)
        spec = KernelSpec.anisotropic(0.5, 0.2, {(0, 0): 0.5, (0, 1): 2.0, (1, 0): ramp, (1, 1): 1.0},
                                      0.5, 2.0)
        fam = build_family(spec, g)
        f = g.sample(1.0)
        u, rep = solve_isaacs(f, fam)
        assert rep.converged
        lo = solve_direct(f, fam.plans[(0, 1)])
        hi = solve_direct(f, fam.plans[(0, 0)])
        m = g.closure_mask
        assert np.all(u[m] >= 0)
        assert np.all(lo[m] <= u[m] + 1e-8) and np.all(u[m] <= hi[m] + 1e-8)


class TestParabolic:
    def test_zero_data(self, plan_02):
        _, traj = solve_parabolic(plan_02.grid.zeros(), plan_02, ParabolicConfig(0.5, 5.0))
        assert np.all(traj == 0)

    def test_single_explicit_step(self, plan_02):
        dt = 0.5 / abs(plan_02.diagonal)
        _, traj = solve_parabolic(ones(plan_02), plan_02, ParabolicConfig(dt, dt, Scheme.EXPLICIT))
        np.testing.assert_allclose(traj[1], dt * ones(plan_02), rtol=1e-15)

    def test_explicit_cfl_enforced(self, plan_02):
        dt = 2.0 / abs(plan_02.diagonal)
        with pytest.raises(ConfigurationError, match="diagonal"):
            solve_parabolic(ones(plan_02), plan_02, ParabolicConfig(dt, dt, Scheme.EXPLICIT))

    def test_dt_must_divide_horizon(self):
        with pytest.raises(ConfigurationError):
            ParabolicConfig(0.3, 1.0)

    def test_implicit_monotone_to_steady_state(self, plan_02):
        f = ones(plan_02)
        _, traj = solve_parabolic(f, plan_02, ParabolicConfig(0.5, 50.0))
        assert np.all(np.diff(traj, axis=0) >= -1e-14)
        assert np.abs(traj[-1] - solve_direct(f, plan_02)).max() <= 1e-4

    def test_explicit_monotone_in_data(self, plan_02, rng):
        m = plan_02.grid.closure_mask
        dt = 1.0 / abs(plan_02.diagonal)
        cfg = ParabolicConfig(dt, 40 * dt, Scheme.EXPLICIT)
        f1 = rng.uniform(0, 1, plan_02.grid.size) * m
        f2 = f1 + rng.uniform(0, 1, plan_02.grid.size) * m
        _, a = solve_parabolic(f1, plan_02, cfg)
        _, b = solve_parabolic(f2, plan_02, cfg)
        assert np.all(b >= a - 1e-14)


class TestEstimators:
    def test_fit_predict(self):
        est = NonlocalDirichletSolver(KernelSpec.zero_order(0.5, 0.2), h=0.05).fit(1.0)
        assert est.report_.converged
        assert est.predict([0.0])[0] == pytest.approx(est.solution_[est.grid_.node_of(0.0)])
        assert est.predict([1.5])[0] == 0.0

    def test_direct_and_picard_agree(self):
        spec = KernelSpec.zero_order(0.5, 0.2)
        a = NonlocalDirichletSolver(spec, h=0.05).fit(lambda x: 1 + x)
        b = clone(a).set_params(method="direct").fit(lambda x: 1 + x)
        np.testing.assert_allclose(a.solution_, b.solution_, atol=1e-8)

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            NonlocalDirichletSolver(KernelSpec.zero_order(0.5, 0.2)).predict([0.0])

    def test_get_params_round_trip(self):
        est = NonlocalDirichletSolver(KernelSpec.zero_order(0.5, 0.2), h=0.025, tol=1e-8)
        assert clone(est).get_params() == est.get_params()

    def test_resolution_checked(self):
        with pytest.raises(ConfigurationError):
            NonlocalDirichletSolver(KernelSpec.zero_order(0.5, 0.2), h=0.1).fit(1.0)

    def test_isaacs_estimator(self):
        spec = KernelSpec.anisotropic(0.5, 0.2, {(0, 0): 0.5, (0, 1): 2.0}, 0.5, 2.0)
        est = IsaacsDirichletSolver(spec, h=0.05).fit(1.0)
        assert est.report_.converged and est.predict([0.0])[0] > 0

    def test_parabolic_estimator(self):
        est = ParabolicNonlocalSolver(KernelSpec.zero_order(0.5, 0.2), h=0.05, dt=0.5, T_final=50.0)
        est.fit(1.0)
        ell = NonlocalDirichletSolver(KernelSpec.zero_order(0.5, 0.2), h=0.05, method="direct").fit(1.0)
        assert np.abs(est.solution_ - ell.solution_).max() <= 1e-4
