"""Scenario configuration: parsing, validation with defaults, and object construction.

Configs are JSON documents.  :func:`validate` never raises on bad input; it
returns every violation with its field path.
"""

import copy
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import streams
from .coeffs import KERNELS, CoefficientSet, make_kernel
from .roughpath import ito_lift, lift_smooth

MODES = ("rsde", "mkv-direct", "mkv-picard", "randomize", "diagnose", "sweep")

DEFAULTS = {
    "dims": {"d": 1, "e": 1, "ebar": 1},
    "grid": {"T": 1.0, "K": 64},
    "N": 64,
    "kernels": {
        "b": {"id": "zero"},
        "sigma": {"id": "zero"},
        "f": {"id": "zero"},
        "fprime": {"id": "zero"},
    },
    "driver": {"type": "brownian", "fn": "sin", "scale": 1.0},
    "init": {"mean": 0.0, "std": 1.0},
    "params": {"alpha": 0.4, "beta": 0.4, "beta_prime": 0.4, "gamma": 3.0, "m": 2.0, "p": 2.0, "q": [2.0]},
    "sub_resolution": 64,
    "picard": {"tol": 1e-10, "max_iter": 50, "init": "initial"},
    "randomize": {"S": 32, "phi": ["tanh"], "classical_resolution": None},
    "diagnostics": {"probe_bounds": [-3.0, 3.0], "probe_resolution": 9, "probe_times": 5,
                    "stability_ceiling": 100.0},
    "sweep": {"base_mode": "rsde", "K": [], "N": [], "xi_eps": [], "reference": "finest"},
    "output": {"dir": "out", "atoms": False, "trajectories": False, "remainders": False},
    "threads": 1,
}

SMOOTH_DRIVERS = ("sin", "linear", "poly", "zero")


@dataclass
class Validation:
    config: dict
    errors: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.errors


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse(text):
    return json.loads(text)


def emit(config):
    return json.dumps(config, sort_keys=True, indent=1)


def config_hash(config):
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and bool(np.isfinite(v))


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _num(cfg, path, errors, kind=float):
    node = cfg
    for key in path.split("."):
        if not isinstance(node, dict) or key not in node:
            errors.append(f"{path} is missing")
            return None
        node = node[key]
    if isinstance(node, bool) or not isinstance(node, (int, float)) or not np.isfinite(node):
        errors.append(f"{path} must be a finite number")
        return None
    if kind is int and int(node) != node:
        errors.append(f"{path} must be an integer")
        return None
    return kind(node)


def validate(raw):
    """Fill defaults and collect violations; never raises on malformed input."""
    errors, warnings = [], []
    if not isinstance(raw, dict):
        return Validation({}, ["config must be a JSON object"], [])
    cfg = _merge(DEFAULTS, raw)
    bad = [k for k, v in DEFAULTS.items() if isinstance(v, dict) and not isinstance(cfg[k], dict)]
    if bad:
        return Validation(cfg, [f"{k} must be an object" for k in bad], [])

    mode = cfg.get("mode")
    if mode not in MODES:
        errors.append(f"mode must be one of {', '.join(MODES)} (got {mode!r})")
    if "seed" not in raw:
        errors.append("seed is required")
    else:
        seed = cfg["seed"]
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            errors.append("seed must be a non-negative integer")

    d = _num(cfg, "dims.d", errors, int)
    e = _num(cfg, "dims.e", errors, int)
    ebar = _num(cfg, "dims.ebar", errors, int)
    if d is not None and d < 1:
        errors.append("dims.d must be ≥ 1")
    if e is not None and e < 1:
        errors.append("dims.e must be ≥ 1")
    if ebar is not None and ebar < 0:
        errors.append("dims.ebar must be ≥ 0")
    T = _num(cfg, "grid.T", errors)
    K = _num(cfg, "grid.K", errors, int)
    if T is not None and T <= 0:
        errors.append("grid.T must be > 0")
    if K is not None and K < 1:
        errors.append("grid.K must be ≥ 1")
    N = _num(cfg, "N", errors, int)
    if N is not None and N < 1:
        errors.append("N must be ≥ 1")
    R = _num(cfg, "sub_resolution", errors, int)
    if R is not None and R < 1:
        errors.append("sub_resolution must be ≥ 1")

    for name in ("b", "sigma", "f", "fprime"):
        entry = cfg["kernels"].get(name)
        path = f"kernels.{name}"
        if not isinstance(entry, dict) or "id" not in entry:
            errors.append(f"{path}.id is missing")
            continue
        if not isinstance(entry["id"], str) or (entry["id"] not in KERNELS and entry["id"] != "zero"):
            errors.append(f"{path}.id '{entry['id']}' is not a known kernel "
                          f"({', '.join(sorted(KERNELS) + ['zero'])})")
        extra = set(entry) - {"id", "scale", "loading", "offset"}
        if extra:
            errors.append(f"{path} has unknown keys {sorted(extra)}")
        if "scale" in entry and not _is_number(entry["scale"]):
            errors.append(f"{path}.scale must be a number")

    drv = cfg["driver"]
    if drv.get("type") not in ("brownian", "smooth"):
        errors.append("driver.type must be 'brownian' or 'smooth'")
    elif drv["type"] == "smooth" and drv.get("fn") not in SMOOTH_DRIVERS:
        errors.append(f"driver.fn must be one of {', '.join(SMOOTH_DRIVERS)}")

    init = cfg["init"]
    if "atoms" in init:
        try:
            atoms = np.asarray(init["atoms"], dtype=float) if isinstance(init["atoms"], list) else None
        except (TypeError, ValueError):
            atoms = None
        if (atoms is None or not np.all(np.isfinite(atoms))
                or (N is not None and d is not None and atoms.size != N * d)):
            errors.append("init.atoms must list N*d numbers")

    params = cfg["params"]
    alpha = _num(cfg, "params.alpha", errors)
    if alpha is not None:
        if not 0 < alpha <= 1:
            errors.append("params.alpha must lie in (0, 1]")
        elif not 1 / 3 < alpha <= 0.5:
            warnings.append(f"params.alpha={alpha} is outside (1/3, 1/2]")
    for key in ("beta", "beta_prime"):
        v = _num(cfg, f"params.{key}", errors)
        if v is not None and not 0 <= v <= 1:
            errors.append(f"params.{key} must lie in [0, 1]")
    m = _num(cfg, "params.m", errors)
    p = _num(cfg, "params.p", errors)
    qs = params.get("q")
    if not isinstance(qs, list) or not qs or any(not _is_number(q) or q < 0 for q in qs):
        errors.append("params.q must be a non-empty list of numbers ≥ 0")
        qs = None
    gamma = _num(cfg, "params.gamma", errors)
    if m is not None and m < 1:
        errors.append("params.m must be ≥ 1")
    # regularity-assumption relations are documentation only
    if m is not None and p is not None and qs is not None:
        if m < 2:
            warnings.append("params.m < 2 is below the supported moment range m ≥ 2")
        if not m >= p >= max([1.0] + list(qs)):
            warnings.append("params do not satisfy m ≥ p ≥ max(1, q)")
    if gamma is not None and alpha is not None and 0 < alpha and not 1 / alpha < gamma <= 3:
        warnings.append("params.gamma is outside (1/alpha, 3]")

    pic = cfg["picard"]
    if not (_is_number(pic.get("tol")) and pic["tol"] > 0):
        errors.append("picard.tol must be > 0")
    if not (_is_int(pic.get("max_iter")) and pic["max_iter"] >= 1):
        errors.append("picard.max_iter must be an integer ≥ 1")
    if pic.get("init") not in ("initial", "zero", "direct"):
        errors.append("picard.init must be 'initial', 'zero' or 'direct'")

    rnd = cfg["randomize"]
    if not (_is_int(rnd.get("S")) and rnd["S"] >= 1):
        errors.append("randomize.S must be an integer ≥ 1")
    cr = rnd.get("classical_resolution")
    if cr is not None and R is not None and (not _is_int(cr) or cr < 1
                                             or max(cr, R) % min(cr, R)):
        errors.append("randomize.classical_resolution must be a positive integer dividing or divisible by "
                      "sub_resolution")
    from .randomize import TEST_FUNCTIONS
    phis = rnd.get("phi")
    if not isinstance(phis, list) or not phis:
        errors.append("randomize.phi must be a non-empty list")
        phis = []
    for phi in phis:
        if not isinstance(phi, str) or phi not in TEST_FUNCTIONS:
            errors.append(f"randomize.phi '{phi}' is not one of {', '.join(TEST_FUNCTIONS)}")

    sw = cfg["sweep"]
    if mode == "sweep":
        if sw.get("base_mode") not in ("rsde", "mkv-direct"):
            errors.append("sweep.base_mode must be 'rsde' or 'mkv-direct'")
        axes = [k for k in ("K", "N", "xi_eps") if sw.get(k)]
        if len(axes) != 1:
            errors.append("sweep needs exactly one non-empty axis among sweep.K, sweep.N, sweep.xi_eps")
        if sw.get("reference") not in ("finest", "exact_linear"):
            errors.append("sweep.reference must be 'finest' or 'exact_linear'")
        for k in ("K", "N"):
            vals = sw.get(k)
            if not isinstance(vals, list) or any(not _is_int(v) or v < 1 for v in vals):
                errors.append(f"sweep.{k} must be a list of integers ≥ 1")
        vals = sw.get("xi_eps")
        if not isinstance(vals, list) or any(not _is_number(v) or v < 0 for v in vals):
            errors.append("sweep.xi_eps must be a list of numbers ≥ 0")

    thr = cfg.get("threads")
    if not _is_int(thr) or thr < 1:
        errors.append("threads must be an integer ≥ 1")

    if mode in ("mkv-direct", "mkv-picard", "randomize", "diagnose") and not errors:
        try:
            build_coefficients(cfg)
        except (KeyError, TypeError, ValueError) as exc:
            errors.append(f"kernels: {exc}")
    return Validation(cfg, errors, warnings)


def build_coefficients(cfg):
    d, e, ebar = cfg["dims"]["d"], cfg["dims"]["e"], cfg["dims"]["ebar"]
    shapes = {"b": (d,), "sigma": (d, ebar), "f": (d, e), "fprime": (d, e, e)}
    ks = {}
    for name, shape in shapes.items():
        entry = cfg["kernels"][name]
        ks[name] = make_kernel(entry["id"], d, shape, scale=float(entry.get("scale", 1.0)),
                               loading=entry.get("loading"), offset=entry.get("offset"))
    return CoefficientSet(ks["b"], ks["sigma"], ks["f"], ks["fprime"])


def build_times(cfg, K=None):
    K = cfg["grid"]["K"] if K is None else K
    return np.linspace(0.0, float(cfg["grid"]["T"]), K + 1)


def smooth_sampler(fn, e, scale=1.0):
    def sampler(t):
        t = np.asarray(t, dtype=float)
        cols = []
        for a in range(e):
            if fn == "sin":
                cols.append(np.sin((a + 1) * t))
            elif fn == "linear":
                cols.append((a + 1) * t)
            elif fn == "poly":
                cols.append(t ** (a + 1))
            else:
                cols.append(np.zeros_like(t))
        return scale * np.stack(cols, axis=-1)
    return sampler


def build_rough_path(cfg, times=None, sample=0):
    times = build_times(cfg) if times is None else times
    drv = cfg["driver"]
    e, R = cfg["dims"]["e"], cfg["sub_resolution"]
    alpha = cfg["params"]["alpha"]
    if drv["type"] == "smooth":
        return lift_smooth(smooth_sampler(drv["fn"], e, float(drv.get("scale", 1.0))), times, R, alpha)
    dt = np.diff(times)
    tape = streams.brownian_increments(cfg["seed"], sample, dt, e, tag="common", sub_resolution=R)
    return ito_lift(tape.reshape(dt.shape[0], R, e), times, alpha)


def build_initial(cfg, N=None):
    from .mkv import initial_atoms
    N = cfg["N"] if N is None else N
    d = cfg["dims"]["d"]
    init = cfg["init"]
    if "atoms" in init:
        return np.asarray(init["atoms"], dtype=float).reshape(-1, d)[:N]
    return initial_atoms(cfg["seed"], N, d, init.get("mean", 0.0), init.get("std", 1.0))
