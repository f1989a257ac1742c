"""Command-line front end: ``nonloc {solve,barrier-check,study,validate}``.

Exit codes: 0 success, 1 configuration error, 2 non-convergence, 3 an
acceptance threshold in the configuration was not met.
"""
from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from . import analysis as an
from . import config as C
from . import kernel as kern
from .barriers import BarrierKind, BarrierSpec, check_supersolution, fit_beta0
from .exceptions import ConfigurationError, ConsistencyError
from .geometry import build_grid
from .nonlocal_op import apply, build_family, build_plan
from .solver import (PicardConfig, ParabolicConfig, solve_direct, solve_isaacs, solve_parabolic,
                     solve_picard)

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_ACCEPTANCE = 0, 1, 2, 3


@dataclass
class Outcome:
    """What a command produced: tables to write, a summary, and a status."""

    tables: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    passed: bool = True
    converged: bool = True
    timing: dict = field(default_factory=dict)


# -- helpers ------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v) + 0.0, ".17g")
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "" if v is None else str(v)


def write_csv(path, rows):
    """Write a list of dicts with 17-significant-digit numbers."""
    rows = list(rows)
    cols = list(rows[0]) if rows else []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in cols])


def write_curves(outdir, name, rows):
    """Two-column plot files: the first column against every other numeric column."""
    if not rows:
        return
    cols = list(rows[0])
    x = cols[0]
    for c in cols[1:]:
        vals = [r.get(c) for r in rows]
        if not all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool)
                   for v in vals):
            continue
        with open(Path(outdir) / f"{name}__{c}.dat", "w") as fh:
            fh.write(f"# {x} {c}\n")
            for r in rows:
                if r.get(x) is not None:
                    fh.write(f"{_fmt(r[x])} {_fmt(r[c])}\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def content_hash(payload):
    text = json.dumps(_jsonable(payload), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def run_record(cfg, command, outcome, started, finished):
    """Run record; the hash covers the numeric config, version, command, summary and tables only."""
    echo = {k: v for k, v in cfg.items() if k != "output"}
    hashed = {"config": echo, "version": __version__, "command": command,
              "summary": outcome.summary, "tables": outcome.tables}
    rec = dict(hashed, config=cfg)
    rec["passed"] = outcome.passed
    rec["converged"] = outcome.converged
    rec["timing"] = outcome.timing
    rec["timestamps"] = {"started": started, "finished": finished}
    rec["content_hash"] = content_hash(hashed)
    return _jsonable(rec)


def _now():
    return dt.datetime.now(dt.timezone.utc).isoformat()


def _rhs(cfg, grid):
    return grid.sample(C.rhs_from_config(cfg))


def _solve_one(spec, domain, h, cfg=None):
    grid = build_grid(domain, h)
    plan = build_plan(spec, grid)
    f = grid.sample(1.0) if cfg is None else _rhs(cfg, grid)
    return grid, plan, f, solve_direct(f, plan)


# -- commands -----------------------------------------------------------------

def cmd_solve(cfg):
    spec = C.kernel_from_config(cfg)
    domain = C.domain_from_config(cfg)
    grid = build_grid(domain, cfg["grid"]["h_target"], cfg["grid"].get("truncation_radius"))
    plan = build_plan(spec, grid)
    f = _rhs(cfg, grid)
    sv = cfg["solver"]
    if sv["method"] == "direct" or not spec.integrable:
        t0 = time.perf_counter()
        u = solve_direct(f, plan)
        res = float(np.max(np.abs((-apply(plan, u) - f)[plan.unknown_mask]), initial=0.0))
        summary = {"method": "direct", "final_residual": res, "converged": True}
        timing = {"wall_time": time.perf_counter() - t0}
        converged = True
    else:
        if "a" in sv:
            nu0 = kern.nu0_lower_bound(spec, domain)
            pc = PicardConfig(sv["a"], nu0, plan.l1_norm, sv["tol"], sv["max_iter"])
        else:
            pc = PicardConfig.default(plan, tol=sv["tol"], max_iter=sv["max_iter"])
        u, rep = solve_picard(f, plan, pc)
        summary = rep.to_dict()
        timing = {"wall_time": summary.pop("wall_time")}
        summary["a"] = pc.a
        summary["nu0"] = pc.nu0
        converged = rep.converged
    m = grid.closure_mask
    rows = [{"x": x, "d": d, "u": v} for x, d, v in zip(grid.nodes[m], grid.distance[m], u[m])]
    return Outcome({"solution": rows}, summary, converged, converged, timing)


def cmd_barrier_check(cfg):
    st = cfg.get("study") or {"name": "barrier", **C.STUDY_DEFAULTS["barrier"]}
    domain = C.domain_from_config(cfg)
    sigma = cfg["kernel"]["sigma"]
    fits = {}
    for level, factor in (("h", st["h_factor"]), ("h/2", st["h_factor"] / 2)):
        plans = {e: build_plan(kern.KernelSpec.zero_order(sigma, e), build_grid(domain, factor * e))
                 for e in st["eps"]}
        if level == "h":
            fit = fit_beta0(plans, domain, st.get("betas"), st.get("widths"))
            fits[level] = fit.per_epsilon
            coarse = fit
        else:
            fits[level] = {e: check_supersolution(
                BarrierSpec(BarrierKind.PSI, e, beta=coarse.beta0, sigma=sigma), plans[e], 0.0,
                coarse.delta_bar) for e in st["eps"]}
    rows = []
    degr = 0.0
    for e in st["eps"]:
        c0, c1 = fits["h"][e].c_star, fits["h/2"][e].c_star
        degr = max(degr, abs(c1 - c0) / c0)
        for level in ("h", "h/2"):
            r = fits[level][e]
            rows.append({"level": level, **r.row()})
    c_fine = min(r.c_star for r in fits["h/2"].values())
    passed = coarse.beta0 > 0 and coarse.delta_bar > 0 and coarse.c_star > 0 and c_fine > 0 \
        and degr <= st["max_degradation"]
    summary = {"beta0": coarse.beta0, "delta_bar": coarse.delta_bar, "c_star": coarse.c_star,
               "c_star_fine": c_fine, "max_degradation": degr}
    return Outcome({"barrier": rows}, summary, passed)


def _study_contraction(cfg, st):
    spec = C.kernel_from_config(cfg)
    grid = build_grid(C.domain_from_config(cfg), cfg["grid"]["h_target"])
    plan = build_plan(spec, grid)
    pc = PicardConfig.default(plan, tol=cfg["solver"]["tol"], max_iter=cfg["solver"]["max_iter"])
    u, rep = solve_picard(_rhs(cfg, grid), plan, pc)
    asym = rep.asymptotic_factor()
    ok = rep.converged and asym <= pc.theoretical_factor + st["factor_slack"] \
        and rep.wall_time <= st["max_seconds"]
    rows = [{"iteration": i, "residual": r,
             "increment": rep.increment_history[i - 1] if i else None}
            for i, r in enumerate(rep.residual_history)]
    summary = {"a": pc.a, "nu0": pc.nu0, "l1_norm": pc.l1_norm,
               "theoretical_factor": pc.theoretical_factor, "asymptotic_factor": asym,
               "measured_factor": rep.measured_factor, "iterations": rep.iterations,
               "final_residual": rep.final_residual}
    return Outcome({"contraction": rows}, summary, ok, rep.converged, {"wall_time": rep.wall_time})


def _study_linfty(cfg, st):
    sigma, domain = cfg["kernel"]["sigma"], C.domain_from_config(cfg)
    rows = []
    for e in st["eps"]:
        grid, plan, f, u = _solve_one(kern.KernelSpec.zero_order(sigma, e), domain,
                                      st["h_factor"] * e, cfg)
        chk = an.linfty_bound_check(u, f, sigma, grid)
        rows.append({"epsilon": e, "sup_u": chk.sup_u, "bound": chk.bound, "margin": chk.margin})
    ok = all(r["margin"] >= 0 for r in rows)
    return Outcome({"linfty": rows}, {"violations": sum(r["margin"] < 0 for r in rows)}, ok)


def _study_positivity(cfg, st):
    sigma, domain = cfg["kernel"]["sigma"], C.domain_from_config(cfg)
    rows, ok = [], True
    for e in st["eps"]:
        spec = kern.KernelSpec.zero_order(sigma, e)
        g0, _, f0, u0 = _solve_one(spec, domain, st["h_factor"] * e, cfg)
        g1, _, _, u1 = _solve_one(spec, domain, st["h_factor"] * e / 2, cfg)
        rho0 = float(f0[g0.closure_mask].min())
        chk = an.boundary_positivity_check((g0, u0), (g1, u1), f0, rho0, st["rtol"])
        ok &= chk.passed and not chk.skipped
        if chk.skipped:
            continue
        for x, (a, b) in chk.boundary_values.items():
            rows.append({"epsilon": e, "endpoint": x, "u_h": a, "u_h2": b,
                         "relative_change": abs(b - a) / abs(a)})
    worst = max((r["relative_change"] for r in rows), default=float("nan"))
    return Outcome({"positivity": rows}, {"max_change": worst}, ok)


def _family_solutions(cfg, st):
    sigma, domain = cfg["kernel"]["sigma"], C.domain_from_config(cfg)
    sols = {}
    for e in st["eps"]:
        grid, _, _, u = _solve_one(kern.KernelSpec.zero_order(sigma, e), domain, st["h"], cfg)
        sols[e] = (grid, u)
    return sols


def _study_jump(cfg, st):
    fit = an.boundary_jump_fit(_family_solutions(cfg, st), st["strip"],
                               max_residual=st["max_residual"])
    ok = not fit.degenerate and fit.beta0 >= st["min_beta0"] and fit.residual <= st["max_residual"] \
        and fit.majorizes()
    rows = [{"beta": b, "C0": c, "residual": r} for b, (c, r) in fit.per_beta.items()]
    data = [{"d": d, "epsilon": e, "abs_u": u} for d, e, u in fit.data]
    return Outcome({"jump_fit": rows, "jump_data": data},
                   {"C0": fit.C0, "beta0": fit.beta0, "residual": fit.residual}, ok)


def _envelope(cfg, st):
    mods = {e: an.modulus_of_continuity(u, g, st["t"]) for e, (g, u) in
            _family_solutions(cfg, st).items()}
    return an.equicontinuity_envelope(mods)


def _study_equicontinuity(cfg, st):
    env = _envelope(cfg, st)
    rows = [{"t": t, "envelope": m, **{f"m_eps_{e:g}": est.m[i] for e, est in env.members.items()}}
            for i, (t, m) in enumerate(zip(env.t, env.envelope))]
    ok = env.small_large_ratio <= st["max_ratio"]
    return Outcome({"envelope": rows}, {"ratio": env.small_large_ratio}, ok)


def _study_convergence(cfg, st):
    rf = an.convergence_study(cfg["kernel"]["sigma"], st["eps"], C.domain_from_config(cfg),
                              st["h_factor"], st["interior_depth"])
    ok = rf.strictly_decreasing and rf.gamma0 > 0 and rf.wall_time <= st["max_seconds"]
    return Outcome({"convergence": rf.rows()},
                   {"gamma0": rf.gamma0, "C": rf.C, "violations": rf.violations}, ok,
                   timing={"wall_time": rf.wall_time})


def _study_counterexample(cfg, st):
    k = cfg["kernel"]
    table = k.get("profile_table")
    profile = kern.RadialProfile.from_table(table) if table else kern.bump_profile()
    rep = an.counterexample_study(profile, st["alpha"], st["eps"], C.domain_from_config(cfg),
                                  st["h"], C.rhs_from_config(cfg), st["interior_depth"])
    ok = rep.interior_drop >= st["min_interior_drop"] and \
        bool(np.all(rep.global_errors >= st["min_global_fraction"] * rep.limit_boundary_value))
    return Outcome({"counterexample": rep.rows()},
                   {"interior_drop": rep.interior_drop,
                    "limit_boundary_value": rep.limit_boundary_value, "h": rep.h}, ok)


def _study_comparison(cfg, st):
    spec = C.kernel_from_config(cfg)
    grid = build_grid(C.domain_from_config(cfg), cfg["grid"]["h_target"])
    plan = build_plan(spec, grid)
    res = an.comparison_pairs(plan, int(st["n_pairs"]), int(st["seed"]))
    rows = [{"pair": i, "passed": r.passed, "precondition_ok": r.precondition_ok,
             "worst_gap": r.worst_gap} for i, r in enumerate(res)]
    f = _rhs(cfg, grid)
    fmax = float(np.abs(f[grid.closure_mask]).max())
    u = solve_direct(f, plan)
    chi = an.chi_barrier(spec.sigma, grid.domain, spec.epsilon, fmax)
    v = an.barrier_values(chi, grid)
    bar = an.comparison_check(u, v, plan, f, fmax)
    ok = all(r.passed for r in res) and bar.passed
    return Outcome({"comparison": rows},
                   {"violations": sum(not r.passed for r in res), "barrier_passed": bar.passed,
                    "barrier_gap": bar.worst_gap}, ok)


def isaacs_family_spec(sigma, epsilon, lam1, lam2):
    """2x2 family: two constant coefficients and two radial ramps between ``lam1`` and ``lam2``."""
    up = kern.RadialProfile((0.0, 1.0), (lam1, lam2), lam2)
    down = kern.RadialProfile((0.0, 1.0), (lam2, lam1), lam1)
    return kern.KernelSpec.anisotropic(sigma, epsilon, {(0, 0): lam1, (0, 1): lam2,
                                                        (1, 0): up, (1, 1): down}, lam1, lam2)


def _study_isaacs(cfg, st):
    k = cfg["kernel"]
    grid = build_grid(C.domain_from_config(cfg), cfg["grid"]["h_target"])
    lam1, lam2 = st["lambda1"], st["lambda2"]
    fam = build_family(isaacs_family_spec(k["sigma"], k["epsilon"], lam1, lam2), grid)
    rng = np.random.default_rng(int(st["seed"]))
    worst = 0.0
    rows = []
    for i in range(int(st["n_pairs"])):
        u1 = rng.normal(size=grid.size) * grid.closure_mask
        u2 = rng.normal(size=grid.size) * grid.closure_mask
        v, scale = an.isaacs_sandwich_violation(fam, u1, u2)
        rows.append({"pair": i, "violation": v, "roundoff_scale": scale})
        worst = max(worst, v - scale)
    f = _rhs(cfg, grid)
    u, rep = solve_isaacs(f, fam)
    lo = solve_direct(f, fam.plans[(0, 1)])
    hi = solve_direct(f, fam.plans[(0, 0)])
    m = grid.closure_mask
    tol = 10 * cfg["solver"]["tol"]
    bracket = bool(np.all(u[m] >= lo[m] - tol) and np.all(u[m] <= hi[m] + tol))
    ok = worst <= 0 and bracket and rep.converged
    summary = {"max_sandwich_violation": max(r["violation"] for r in rows), "bracketed": bracket,
               "iterations": rep.iterations, "measured_factor": rep.measured_factor,
               "theoretical_factor": rep.theoretical_factor}
    return Outcome({"isaacs": rows}, summary, ok, rep.converged)


def _study_parabolic(cfg, st):
    spec = C.kernel_from_config(cfg)
    grid = build_grid(C.domain_from_config(cfg), st["h"])
    plan = build_plan(spec, grid)
    f = _rhs(cfg, grid)
    T = 50.0 * max(1.0, 1.0 / plan.l1_norm)
    T = st["dt"] * math.ceil(T / st["dt"] - 1e-9)
    times, traj = solve_parabolic(f, plan, ParabolicConfig(st["dt"], T, st["scheme"]))
    m = grid.closure_mask
    steps = np.diff(traj[:, m], axis=0)
    monotone = bool(np.all(steps >= -1e-14))
    ell = solve_direct(f, plan)
    gap = float(np.abs(traj[-1] - ell)[m].max())
    mod = an.modulus_of_continuity(traj[-1], grid, st["t"])
    env = _envelope(cfg, {**st, "h": st["h"]})
    ratio = float(np.max(mod.m / env.envelope))
    ok = monotone and gap <= st["gap_tol"] and ratio <= st["envelope_factor"]
    rows = [{"t": t, "modulus": a, "elliptic_envelope": b} for t, a, b in
            zip(mod.t, mod.m, env.envelope)]
    return Outcome({"parabolic": rows}, {"T_final": T, "monotone": monotone, "gap": gap,
                                         "modulus_ratio": ratio}, ok)


STUDY_RUNNERS = {
    "contraction": _study_contraction, "linfty": _study_linfty, "positivity": _study_positivity,
    "jump": _study_jump, "equicontinuity": _study_equicontinuity,
    "convergence": _study_convergence, "counterexample": _study_counterexample,
    "comparison": _study_comparison, "isaacs": _study_isaacs, "parabolic": _study_parabolic,
}


def cmd_study(cfg, which=None):
    st = cfg.get("study")
    if st is None:
        raise ConfigurationError("study: missing [study] block")
    name = which or st["name"]
    if name == "barrier":
        return cmd_barrier_check(cfg)
    if name not in STUDY_RUNNERS:
        raise ConfigurationError(f"unknown study {name!r}; choose from {sorted(STUDY_RUNNERS)}")
    if name != st["name"]:
        raw = {k: v for k, v in cfg.items() if k != "study"}
        cfg = C.normalize({**raw, "study": {"name": name}})
        st = cfg["study"]
    return STUDY_RUNNERS[name](cfg, st)


# -- entry point --------------------------------------------------------------

def _parser():
    p = argparse.ArgumentParser(prog="nonloc", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        src = sp.add_mutually_exclusive_group(required=True)
        src.add_argument("config", nargs="?", help="TOML run configuration")
        src.add_argument("--preset", help="shipped preset name, e.g. ac6")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a configuration value (repeatable)")
        sp.add_argument("--out", help="output directory (overrides output.dir)")

    common(sub.add_parser("solve", help="solve the Dirichlet problem"))
    common(sub.add_parser("barrier-check", help="fit and certify the boundary barrier"))
    sp = sub.add_parser("study", help="run an analysis study")
    common(sp)
    sp.add_argument("--name", help="study to run (defaults to study.name)")
    common(sub.add_parser("validate", help="check a configuration and print it normalized"))
    return p


def _load(args):
    raw = C.load_preset(args.preset) if args.preset else C.load_toml(args.config)
    raw = C.apply_overrides(raw, args.set)
    if args.out:
        raw.setdefault("output", {})["dir"] = args.out
    return C.normalize(raw)


def main(argv=None):
    args = _parser().parse_args(argv)
    threads = os.environ.get("NONLOC_THREADS")
    try:
        limit = int(threads) if threads else None
        if limit is not None and limit < 1:
            raise ValueError
    except ValueError:
        print(f"error: NONLOC_THREADS must be a positive integer, got {threads!r}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = _load(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        sys.stdout.write(C.dumps(cfg))
        return EXIT_OK
    started = _now()
    try:
        with threadpool_limits(limits=limit):
            if args.command == "solve":
                out = cmd_solve(cfg)
            elif args.command == "barrier-check":
                out = cmd_barrier_check(cfg)
            else:
                out = cmd_study(cfg, args.name)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConsistencyError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    outdir = Path(cfg["output"]["dir"])
    outdir.mkdir(parents=True, exist_ok=True)
    for name, rows in out.tables.items():
        write_csv(outdir / f"{name}.csv", rows)
        write_curves(outdir, name, rows)
    rec = run_record(cfg, args.command, out, started, _now())
    (outdir / "run_record.json").write_text(json.dumps(rec, indent=2, sort_keys=True))
    status = "PASS" if out.passed else "FAIL"
    print(f"{args.command}: {status} hash={rec['content_hash'][:16]} -> {outdir}")
    for k, v in out.summary.items():
        if not isinstance(v, (list, tuple)):
            print(f"  {k} = {_fmt(v)}")
    if not out.converged:
        return EXIT_DIVERGED
    if not out.passed:
        return EXIT_ACCEPTANCE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
