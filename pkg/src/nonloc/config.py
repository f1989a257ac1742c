"""Run configuration: TOML parsing, defaults, cross-field validation and overrides."""
from __future__ import annotations

import copy
import sys
from importlib import resources

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import kernel as kern
from .exceptions import ConfigurationError
from .geometry import Domain

STUDIES = ("contraction", "linfty", "positivity", "jump", "equicontinuity", "convergence",
           "counterexample", "barrier", "comparison", "isaacs", "parabolic")

DEFAULTS = {
    "kernel": {"family": "ZeroOrder", "sigma": 0.5, "epsilon": 0.2},
    "domain": {"intervals": [[-1.0, 1.0]]},
    "grid": {"h_target": 0.05},
    "solver": {"method": "picard", "tol": 1e-9, "max_iter": 100000},
    "data": {"f": 1.0},
    "output": {"dir": "nonloc_out"},
}

STUDY_DEFAULTS = {
    "contraction": {"factor_slack": 1e-3, "max_seconds": 10.0},
    "linfty": {"eps": [0.4, 0.2, 0.1, 0.05], "h_factor": 0.25},
    "positivity": {"eps": [0.4, 0.2, 0.1, 0.05], "h_factor": 0.25, "rtol": 0.25},
    "jump": {"eps": [0.4, 0.2, 0.1, 0.05], "h": 0.005, "strip": 0.3, "min_beta0": 0.05,
             "max_residual": 0.05},
    "equicontinuity": {"eps": [0.4, 0.2, 0.1, 0.05], "h": 0.005,
                       "t": [0.01, 0.02, 0.05, 0.1, 0.2, 0.5], "max_ratio": 0.25},
    "convergence": {"eps": [0.4, 0.2, 0.1, 0.05], "h_factor": 0.25, "interior_depth": 0.25,
                    "max_seconds": 300.0},
    "counterexample": {"eps": [0.4, 0.2, 0.1, 0.05], "alpha": 1.5, "h": 0.0125,
                       "interior_depth": 0.25, "min_interior_drop": 4.0,
                       "min_global_fraction": 0.5},
    "barrier": {"eps": [0.4, 0.2, 0.1], "h_factor": 0.25, "max_degradation": 0.2},
    "comparison": {"n_pairs": 50, "seed": 20240101},
    "isaacs": {"lambda1": 0.5, "lambda2": 2.0, "n_pairs": 100, "seed": 20240102},
    "parabolic": {"dt": 0.5, "scheme": "ImplicitEuler", "gap_tol": 1e-4, "envelope_factor": 1.1,
                  "h": 0.005, "t": [0.01, 0.02, 0.05, 0.1, 0.2, 0.5],
                  "eps": [0.4, 0.2, 0.1, 0.05]},
}


def load_toml(path):
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from exc


def load_preset(name):
    """Parse a shipped preset (``ac1`` ... ``ac11``)."""
    fname = name if name.endswith(".toml") else f"{name}.toml"
    ref = resources.files("nonloc") / "presets" / fname
    if not ref.is_file():
        raise ConfigurationError(f"unknown preset {name!r}")
    return tomllib.loads(ref.read_text())


def parse_value(text):
    """TOML literal if it parses as one, otherwise the raw string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(cfg, items):
    """Apply ``key.path=value`` overrides in order."""
    cfg = copy.deepcopy(cfg)
    for item in items or ():
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not of the form key=value")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        node = cfg
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"override {key!r} descends into a non-table value")
        node[parts[-1]] = parse_value(text.strip())
    return cfg


def _merge(base, extra):
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _floatify(obj):
    """Integers in numeric fields become floats so that round trips are exact."""
    if isinstance(obj, dict):
        return {k: (v if k in _INT_KEYS else _floatify(v)) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_floatify(v) for v in obj]
    if isinstance(obj, int) and not isinstance(obj, bool):
        return float(obj)
    return obj


_INT_KEYS = {"max_iter", "n_pairs", "seed", "store_every"}


def normalize(raw):
    """Fill defaults, coerce types and validate; returns a new plain dict."""
    if not isinstance(raw, dict):
        raise ConfigurationError("configuration must be a table")
    unknown = set(raw) - {"kernel", "domain", "grid", "solver", "data", "output", "study"}
    if unknown:
        raise ConfigurationError(f"unknown top-level blocks: {sorted(unknown)}")
    cfg = _merge(DEFAULTS, raw)
    if "study" in cfg:
        name = cfg["study"].get("name")
        if name not in STUDIES:
            raise ConfigurationError(f"study.name: unknown study {name!r}; choose from {STUDIES}")
        cfg["study"] = _merge(STUDY_DEFAULTS[name], cfg["study"])
    cfg = _floatify(cfg)
    validate(cfg)
    return cfg


def kernel_from_config(cfg, epsilon=None):
    block = dict(cfg["kernel"])
    if block.get("profile") == "bump":
        block.pop("profile")
        block["profile_table"] = kern.bump_profile().to_table()
    if epsilon is not None:
        block["epsilon"] = epsilon
    try:
        return kern.KernelSpec.from_dict(block)
    except KeyError as exc:
        raise ConfigurationError(f"kernel: missing key {exc}") from exc


def domain_from_config(cfg):
    try:
        return Domain(tuple(tuple(iv) for iv in cfg["domain"]["intervals"]))
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"domain.intervals: {exc}") from exc


def validate(cfg):
    """Cross-field checks run before any computation."""
    domain_from_config(cfg)
    spec = kernel_from_config(cfg)
    h = cfg["grid"].get("h_target")
    if not isinstance(h, float) or h <= 0:
        raise ConfigurationError("grid.h_target must be a positive number")
    if spec.family in (kern.Family.ZERO_ORDER, kern.Family.ANISOTROPIC):
        try:
            kern.check_resolution(spec, h)
        except ConfigurationError as exc:
            raise ConfigurationError(f"grid.h_target: {exc}") from exc
    method = cfg["solver"].get("method")
    if method not in ("picard", "direct"):
        raise ConfigurationError(f"solver.method must be 'picard' or 'direct', got {method!r}")
    if "a" in cfg["solver"]:
        a = cfg["solver"]["a"]
        if spec.integrable:
            dom = domain_from_config(cfg)
            bound = min(1.0 / kern.nu0_lower_bound(spec, dom), 1.0 / kern.l1_norm(spec))
            if not 0 < a < bound:
                raise ConfigurationError(f"solver.a = {a:g} violates 0 < a < {bound:g}")
    f = cfg["data"].get("f")
    if not isinstance(f, (float, list)):
        raise ConfigurationError("data.f must be a number or a table of [x, value] pairs")
    st = cfg.get("study")
    if st is None:
        return
    eps = st.get("eps")
    if eps is not None:
        if not eps or any(not (isinstance(e, float) and e > 0) for e in eps):
            raise ConfigurationError("study.eps must be a nonempty list of positive numbers")
    if st["name"] in ("jump", "equicontinuity", "parabolic") and spec.family is kern.Family.ZERO_ORDER:
        for e in eps or [spec.epsilon]:
            if st["h"] > e / 4 * (1 + 1e-9):
                raise ConfigurationError(
                    f"study.h = {st['h']:g} exceeds epsilon/4 for epsilon = {e:g} (rule h <= eps/4)")
    if "h_factor" in st and st["h_factor"] > 0.25 + 1e-12:
        raise ConfigurationError("study.h_factor must be <= 0.25 (rule h <= eps/4)")
    if st["name"] == "parabolic":
        if st["scheme"] not in ("ImplicitEuler", "ExplicitEuler"):
            raise ConfigurationError("study.scheme must be ImplicitEuler or ExplicitEuler")
        if st["dt"] <= 0:
            raise ConfigurationError("study.dt must be positive")
    if st["name"] == "isaacs" and not 0 < st["lambda1"] < st["lambda2"]:
        raise ConfigurationError("study.lambda1/lambda2 must satisfy 0 < lambda1 < lambda2")


def dumps(cfg):
    return tomli_w.dumps(cfg)


def loads(text):
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(str(exc)) from exc


def rhs_from_config(cfg):
    """Constant or piecewise-linear data ``f``."""
    f = cfg["data"]["f"]
    if isinstance(f, float):
        return f
    table = np.asarray(f, dtype=float)
    if table.ndim != 2 or table.shape[1] != 2 or np.any(np.diff(table[:, 0]) <= 0):
        raise ConfigurationError("data.f table must be increasing [x, value] pairs")
    return lambda x: np.interp(x, table[:, 0], table[:, 1])
