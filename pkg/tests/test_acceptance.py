"""Acceptance suite: one test and one PASS/FAIL line per criterion, run through the shipped presets.

Run ``pytest tests/test_acceptance.py -v`` to see the summary block, or
``python tests/test_acceptance.py`` to print the lines directly.
"""
import numpy as np

from nonloc import cli
from nonloc import config as C
from nonloc import kernel as kern
from nonloc.geometry import build_grid
from nonloc.nonlocal_op import build_plan
from nonloc.solver import PicardConfig, solve_direct, solve_picard, system_matrix

# pinned tolerances
CONTRACTION_SLACK = 1e-3
CONTRACTION_SECONDS = 10.0
PICARD_TOL = 1e-9
REFINEMENT_RTOL = 0.25
JUMP_MIN_BETA0 = 0.05
JUMP_MAX_RESIDUAL = 0.05
ENVELOPE_MAX_RATIO = 0.25
CONVERGENCE_SECONDS = 300.0
INTERIOR_MIN_DROP = 4.0
GLOBAL_MIN_FRACTION = 0.5
BARRIER_MAX_DEGRADATION = 0.2
PARABOLIC_GAP = 1e-4
PARABOLIC_ENVELOPE_FACTOR = 1.1


def preset(n):
    return C.normalize(C.load_preset(f"ac{n}"))


def report(log, n, title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  AC{n:<2d} {title}: {detail}"
    log.append(line)
    return ok


def test_ac1_contraction(acceptance_log):
    cfg = preset(1)
    out = cli.cmd_study(cfg)
    s = out.summary
    grid = build_grid(C.domain_from_config(cfg), cfg["grid"]["h_target"])
    plan = build_plan(C.kernel_from_config(cfg), grid)
    f = grid.sample(1.0)
    u, rep = solve_picard(f, plan, PicardConfig.default(plan, tol=PICARD_TOL))
    gap = float(np.abs(u - solve_direct(f, plan)).max())
    A = system_matrix(plan)
    dominance = float(np.min(np.diag(A) - (np.abs(A).sum(axis=1) - np.abs(np.diag(A)))))
    nu0 = kern.nu0_lower_bound(plan.spec, grid.domain)
    ok = (s["asymptotic_factor"] <= s["theoretical_factor"] + CONTRACTION_SLACK
          and s["final_residual"] <= PICARD_TOL
          and out.timing["wall_time"] < CONTRACTION_SECONDS
          and gap <= 10 * PICARD_TOL and dominance >= nu0 - 1e-8)
    report(acceptance_log, 1, "contraction",
           ok, f"ratio {s['asymptotic_factor']:.4f} <= {s['theoretical_factor']:.4f}+{CONTRACTION_SLACK:g}, "
           f"residual {s['final_residual']:.2e} in {out.timing['wall_time']:.3f}s, "
           f"|picard-direct| {gap:.1e}, dominance {dominance:.6f} >= nu0 {nu0:.6f}")
    assert ok


def test_ac2_linfty_bound(acceptance_log):
    out = cli.cmd_study(preset(2))
    rows = out.tables["linfty"]
    ok = out.passed and out.summary["violations"] == 0
    report(acceptance_log, 2, "sup-norm bound", ok,
           "max|u| " + ", ".join(f"{r['sup_u']:.4f}" for r in rows) + f" <= {rows[0]['bound']:.4f}")
    assert ok


def test_ac3_boundary_positivity(acceptance_log):
    out = cli.cmd_study(preset(3))
    rows = out.tables["positivity"]
    ok = out.passed and all(r["u_h"] > 0 and r["u_h2"] > 0 for r in rows) \
        and out.summary["max_change"] <= REFINEMENT_RTOL
    report(acceptance_log, 3, "boundary value", ok,
           f"min u(boundary) {min(r['u_h'] for r in rows):.4f} > 0, "
           f"max change under h/2 {out.summary['max_change']:.2e} <= {REFINEMENT_RTOL}")
    assert ok


def test_ac4_jump_uniformity(acceptance_log):
    out = cli.cmd_study(preset(4))
    s = out.summary
    ok = out.passed and s["beta0"] >= JUMP_MIN_BETA0 and s["residual"] <= JUMP_MAX_RESIDUAL
    report(acceptance_log, 4, "boundary jump", ok,
           f"C0 {s['C0']:.4f}, beta0 {s['beta0']:.2f} >= {JUMP_MIN_BETA0}, "
           f"residual {s['residual']:.2%} <= {JUMP_MAX_RESIDUAL:.0%}")
    assert ok


def test_ac5_equicontinuity(acceptance_log):
    out = cli.cmd_study(preset(5))
    r = out.summary["ratio"]
    ok = out.passed and r <= ENVELOPE_MAX_RATIO
    report(acceptance_log, 5, "equicontinuity", ok, f"m(0.01)/m(0.5) {r:.4f} <= {ENVELOPE_MAX_RATIO}")
    assert ok


def test_ac6_convergence(acceptance_log):
    out = cli.cmd_study(preset(6))
    errs = [r["error"] for r in out.tables["convergence"]]
    dec = all(b < a for a, b in zip(errs, errs[1:]))
    g, t = out.summary["gamma0"], out.timing["wall_time"]
    ok = out.passed and dec and g > 0 and t < CONVERGENCE_SECONDS
    report(acceptance_log, 6, "fractional limit", ok,
           "errors " + ", ".join(f"{e:.4f}" for e in errs) + f" decreasing={dec}, "
           f"gamma0 {g:.3f} > 0, {t:.2f}s < {CONVERGENCE_SECONDS:g}s")
    assert ok


def test_ac7_counterexample(acceptance_log):
    out = cli.cmd_study(preset(7))
    s = out.summary
    glob = [r["global_error"] for r in out.tables["counterexample"]]
    floor = GLOBAL_MIN_FRACTION * s["limit_boundary_value"]
    ok = out.passed and s["interior_drop"] >= INTERIOR_MIN_DROP and min(glob) >= floor
    report(acceptance_log, 7, "non-uniform limit", ok,
           f"interior drop {s['interior_drop']:.2f}x >= {INTERIOR_MIN_DROP:g}x, "
           f"min global error {min(glob):.4f} >= {floor:.4f}")
    assert ok


def test_ac8_barrier(acceptance_log):
    out = cli.cmd_barrier_check(preset(8))
    s = out.summary
    ok = out.passed and s["beta0"] > 0 and s["delta_bar"] > 0 and s["c_star"] > 0 \
        and s["max_degradation"] <= BARRIER_MAX_DEGRADATION
    report(acceptance_log, 8, "barrier certification", ok,
           f"beta0 {s['beta0']:.2f}, strip {s['delta_bar']:.3f}, c* {s['c_star']:.4f} > 0, "
           f"h/2 change {s['max_degradation']:.2%} <= {BARRIER_MAX_DEGRADATION:.0%}")
    assert ok


def test_ac9_comparison(acceptance_log):
    out = cli.cmd_study(preset(9))
    rows = out.tables["comparison"]
    ok = out.passed and len(rows) == 50 and out.summary["violations"] == 0 \
        and out.summary["barrier_passed"]
    report(acceptance_log, 9, "comparison", ok,
           f"{out.summary['violations']} violations in {len(rows)} pairs, "
           f"barrier comparison passed={out.summary['barrier_passed']}")
    assert ok


def test_ac10_isaacs(acceptance_log):
    out = cli.cmd_study(preset(10))
    rows = out.tables["isaacs"]
    worst = max(r["violation"] - r["roundoff_scale"] for r in rows)
    ok = out.passed and len(rows) == 100 and worst <= 0 and out.summary["bracketed"]
    report(acceptance_log, 10, "inf-sup family", ok,
           f"{len(rows)} pairs, worst sandwich excess over round-off {worst:.1e} <= 0, "
           f"bracketed={out.summary['bracketed']}")
    assert ok


def test_ac11_parabolic(acceptance_log):
    out = cli.cmd_study(preset(11))
    s = out.summary
    ok = out.passed and s["monotone"] and s["gap"] <= PARABOLIC_GAP \
        and s["modulus_ratio"] <= PARABOLIC_ENVELOPE_FACTOR
    report(acceptance_log, 11, "parabolic", ok,
           f"monotone={s['monotone']}, gap {s['gap']:.1e} <= {PARABOLIC_GAP:g} at T={s['T_final']:g}, "
           f"modulus/envelope {s['modulus_ratio']:.3f} <= {PARABOLIC_ENVELOPE_FACTOR}")
    assert ok


if __name__ == "__main__":
    log = []
    for name, fn in sorted(globals().items()):
        if name.startswith("test_ac"):
            try:
                fn(log)
            except AssertionError:
                pass
    print("\n".join(sorted(log, key=lambda s: int(s.split("AC")[1].split()[0]))))
