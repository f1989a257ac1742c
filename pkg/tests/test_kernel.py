import math

import numpy as np
import pytest
from scipy import integrate

from nonloc import kernel as kern
from nonloc.exceptions import ConfigurationError, ConsistencyError, DomainError
from nonloc.geometry import Domain
from nonloc.kernel import KernelSpec, RadialProfile


def indicator(radius=1.0):
    return RadialProfile.from_table([[0.0, 1.0], [radius, 1.0]])


class TestEvalKernel:
    def test_zero_order_values(self):
        spec = KernelSpec.zero_order(0.5, 1.0)
        assert kern.eval_kernel(spec, 0.0) == 1.0
        assert kern.eval_kernel(spec, 1.0) == 0.5
        assert kern.eval_kernel(KernelSpec.zero_order(0.5, 0.5), 0.25) == pytest.approx(3.2, rel=1e-15)

    @pytest.mark.parametrize("sigma", [0.2, 0.5, 0.8])
    def test_scaling_identity(self, sigma):
        z = np.linspace(-3, 3, 41)
        one = KernelSpec.zero_order(sigma, 1.0)
        for eps in (0.5, 0.1):
            p = 1 + 2 * sigma
            lhs = kern.eval_kernel(KernelSpec.zero_order(sigma, eps), z)
            rhs = eps ** -p * kern.eval_kernel(one, z / eps)
            np.testing.assert_allclose(lhs, rhs, rtol=1e-13)

    def test_symmetry_exact(self):
        z = np.linspace(0.01, 4, 50)
        for spec in (KernelSpec.zero_order(0.3, 0.2), KernelSpec.singular(0.7),
                     KernelSpec.general_j(kern.bump_profile()),
                     KernelSpec.regularized(kern.bump_profile(), 0.1, 1.5)):
            assert np.array_equal(kern.eval_kernel(spec, z), kern.eval_kernel(spec, -z))

    def test_singular_at_origin_raises(self):
        with pytest.raises(DomainError):
            kern.eval_kernel(KernelSpec.singular(0.5), 0.0)

    def test_regularized_density(self):
        J = kern.bump_profile()
        eps, alpha = 0.2, 1.5
        z = np.array([0.05, 0.1, 0.3, 1.2, 1.7])
        expected = J(np.abs(z)) / np.minimum(1.0, np.abs(z / eps) ** alpha)
        np.testing.assert_allclose(kern.eval_kernel(KernelSpec.regularized(J, eps, alpha), z), expected,
                                   rtol=1e-14)

    def test_zero_order_below_fractional(self):
        z = np.linspace(0.01, 5, 200)
        for eps in (1.0, 0.1):
            assert np.all(kern.eval_kernel(KernelSpec.zero_order(0.5, eps), z)
                          <= kern.eval_kernel(KernelSpec.singular(0.5), z))

    def test_anisotropic_coefficients_within_bounds(self):
        ramp = RadialProfile((0.0, 1.0), (0.5, 2.0), 2.0)
        spec = KernelSpec.anisotropic(0.5, 0.2, {(0, 0): 0.5, (0, 1): ramp}, 0.5, 2.0)
        r = np.linspace(0, 3, 100)
        for _, prof in spec.coefficients:
            assert np.all((prof(r) >= 0.5) & (prof(r) <= 2.0))

    def test_anisotropic_out_of_bounds_rejected(self):
        with pytest.raises(ConfigurationError):
            KernelSpec.anisotropic(0.5, 0.2, {(0, 0): 3.0}, 0.5, 2.0)


class TestMasses:
    def test_l1_values(self):
        assert kern.l1_norm(KernelSpec.zero_order(0.5, 1.0)) == pytest.approx(math.pi, abs=1e-10)
        assert kern.l1_norm(KernelSpec.zero_order(0.5, 0.5)) == pytest.approx(2 * math.pi, abs=1e-10)
        assert kern.l1_norm(KernelSpec.singular(0.5)) == math.inf

    @pytest.mark.parametrize("sigma", [0.25, 0.5, 0.75])
    def test_l1_against_quadrature(self, sigma):
        spec = KernelSpec.zero_order(sigma, 0.3)
        val, _ = integrate.quad(lambda z: kern.eval_kernel(spec, z), 0, np.inf, epsabs=1e-13, limit=200)
        assert kern.l1_norm(spec) == pytest.approx(2 * val, rel=1e-9)

    @pytest.mark.parametrize("sigma", [0.25, 0.5, 0.75])
    def test_scaling_of_l1(self, sigma):
        vals = [kern.l1_norm(KernelSpec.zero_order(sigma, e)) * e ** (2 * sigma)
                for e in (1, 0.5, 0.25, 0.1)]
        np.testing.assert_allclose(vals, vals[0], rtol=1e-6)

    def test_tail_values(self):
        assert kern.tail_mass(KernelSpec.singular(0.5), 1.0) == pytest.approx(2.0, rel=1e-12)
        assert kern.tail_mass(KernelSpec.zero_order(0.5, 1.0), 1.0) == pytest.approx(math.pi / 2, rel=1e-12)

    def test_tail_at_zero_is_l1(self):
        for spec in (KernelSpec.zero_order(0.4, 0.3), KernelSpec.general_j(kern.bump_profile())):
            assert kern.tail_mass(spec, 0.0) == pytest.approx(kern.l1_norm(spec), rel=1e-12)

    def test_tail_nonincreasing_to_zero(self):
        spec = KernelSpec.zero_order(0.5, 0.2)
        t = [kern.tail_mass(spec, R) for R in np.geomspace(0.01, 1e6, 40)]
        assert np.all(np.diff(t) <= 0)
        assert t[-1] < 1e-5

    def test_levy_condition(self):
        for spec in (KernelSpec.zero_order(0.5, 0.2), KernelSpec.singular(0.3),
                     KernelSpec.general_j(kern.bump_profile()),
                     KernelSpec.regularized(kern.bump_profile(), 0.1, 1.5)):
            assert math.isfinite(kern.second_moment_near_zero(spec) + kern.tail_mass(spec, 1.0))


class TestCellWeights:
    def test_symmetric(self):
        w = kern.cell_weights(KernelSpec.zero_order(0.5, 0.2), 0.05, 30)
        np.testing.assert_array_equal(w, w[::-1])

    def test_partition(self):
        spec = KernelSpec.zero_order(0.5, 1.0)
        h, K = 0.25, 40
        total = kern.cell_weights(spec, h, K).sum() + kern.tail_mass(spec, (K + 0.5) * h)
        assert total == pytest.approx(math.pi, rel=1e-8)

    def test_partition_general_j(self):
        spec = KernelSpec.general_j(kern.bump_profile())
        h, K = 0.1, 12
        total = kern.cell_weights(spec, h, K).sum() + kern.tail_mass(spec, (K + 0.5) * h)
        assert total == pytest.approx(kern.l1_norm(spec), rel=1e-8)

    def test_indicator_hand_integration(self):
        w = kern.cell_weights(KernelSpec.general_j(indicator()), 0.5, 2)
        np.testing.assert_allclose(w, [0.25, 0.5, 0.5, 0.5, 0.25], atol=1e-12)

    def test_singular_centre_cell_zero(self):
        w = kern.cell_weights(KernelSpec.singular(0.5), 0.1, 5)
        assert w[5] == 0.0
        assert kern.zero_cell_moment(KernelSpec.singular(0.5), 0.1) == pytest.approx(0.05, rel=1e-12)

    def test_resolution_rule(self):
        with pytest.raises(ConfigurationError, match="eps/4"):
            kern.cell_weights(KernelSpec.zero_order(0.5, 0.2), 0.1, 5)

    def test_half_hats_sum_to_cells(self):
        spec = KernelSpec.zero_order(0.5, 0.2)
        h, K = 0.05, 20
        r = kern.half_hat_weights(spec, h, K)
        assert r.size == 2 * K + 1
        # a full hat at offset k collects the falling ramp of cell k and the rising one of cell k-1
        hat = r + r[::-1]
        quad = [integrate.quad(lambda z: max(0.0, 1 - abs(z - k * h) / h) * kern.eval_kernel(spec, z),
                               (k - 1) * h, (k + 1) * h, points=[k * h])[0] for k in range(-3, 4)]
        np.testing.assert_allclose(hat[K - 3:K + 4], quad, rtol=1e-10)


class TestExteriorMass:
    def test_unit_interval(self):
        spec = KernelSpec.zero_order(0.5, 1.0)
        assert kern.nu0_lower_bound(spec, Domain.interval()) == pytest.approx(math.pi / 2, rel=1e-12)
        xs = np.linspace(-1, 1, 201)
        assert np.argmin(kern.exterior_mass(spec, Domain.interval(), xs)) == 100

    def test_indicator_support_inside_domain_is_rejected(self):
        with pytest.raises(ConsistencyError):
            kern.nu0_lower_bound(KernelSpec.general_j(indicator(1.0)), Domain.interval())

    def test_indicator_brute_force(self):
        spec = KernelSpec.general_j(indicator(1.5))
        xs = np.linspace(-1, 1, 401)
        brute = [2 * 1.5 - (min(1.5, 1 - x) + min(1.5, x + 1)) for x in xs]
        assert kern.nu0_lower_bound(spec, Domain.interval()) == pytest.approx(min(brute), abs=1e-12)
        assert min(brute) == pytest.approx(1.0)

    def test_tiny_domain_sees_all_mass(self):
        spec = KernelSpec.zero_order(0.5, 0.5)
        val = kern.nu0_lower_bound(spec, Domain.interval(-1e-7, 1e-7))
        assert val == pytest.approx(kern.l1_norm(spec), rel=1e-5)


class TestSerialization:
    @pytest.mark.parametrize("spec", [
        KernelSpec.zero_order(0.5, 0.2),
        KernelSpec.singular(0.3),
        KernelSpec.general_j(kern.bump_profile(n=21)),
        KernelSpec.regularized(kern.bump_profile(n=21), 0.1, 1.5),
        KernelSpec.anisotropic(0.5, 0.2, {(0, 0): 0.5, (0, 1): [[0.0, 0.5], [1.0, 2.0]]}, 0.5, 2.0),
    ])
    def test_round_trip(self, spec):
        assert KernelSpec.from_dict(spec.to_dict()) == spec

    @pytest.mark.parametrize("kw", [dict(sigma=0.0, epsilon=0.1), dict(sigma=1.0, epsilon=0.1),
                                    dict(sigma=0.5, epsilon=0.0)])
    def test_bad_parameters(self, kw):
        with pytest.raises(ConfigurationError):
            KernelSpec.zero_order(**kw)

    def test_regularized_alpha_range(self):
        with pytest.raises(ConfigurationError):
            KernelSpec.regularized(kern.bump_profile(), 0.1, 2.5)
