"""Command line entry point: ``roughmkv {validate,run,sweep,compare,randomize}``.

Exit codes: 0 success, 2 invalid configuration, 3 numerical abort.
"""

import argparse
import csv
import hashlib
import json
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import (build_coefficients, build_initial, build_rough_path, build_times, config_hash, emit,
                     parse, validate)
from .diagnostics import diagnose, moment_norm, stability_report
from .mkv import MKVResult, particle_tapes, picard_solve, simulate_mkv, write_snapshots_jsonl
from .randomize import conditional_law_compare, run_randomization, write_randomize_jsonl
from .roughpath import coarsen, load_text, save_text
from .rsde import BlowUpError, self_measure_fields, solve_rsde, write_trajectory_csv

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3
THREADS_ENV = "ROUGHMKV_THREADS"


def _fmt(v):
    return "%.17g" % v


def _threads(cfg):
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return cfg["threads"]


def _write_json(path, obj):
    with open(path, "w") as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, float) else v for v in row])


# -- pipelines ----------------------------------------------------------------
# each returns a dict of post-hoc checks for the manifest

def _save_mkv(out, cfg, result):
    np.save(out / "Y.npy", result.Y)
    np.save(out / "dB.npy", result.dB)
    save_text(result.rp, out / "rough_path.txt")
    write_snapshots_jsonl(result, out / "snapshots.jsonl", cfg["params"]["q"], cfg["output"]["atoms"])
    if cfg["output"]["trajectories"]:
        for j in range(result.Y.shape[1]):
            _particle_csv(out / f"particle_{j:05d}.csv", result.times, result.Y[:, j])


def _particle_csv(path, times, Y):
    _write_csv(path, ["t"] + [f"Y_{k + 1}" for k in range(Y.shape[1])],
               [[float(t)] + [float(v) for v in row] for t, row in zip(times, Y)])


def _common_shift_check(cfg, result):
    ks = cfg["kernels"]
    y_free = {"zero", "constant", "tanh_z", "mean_shift"}
    if ks["b"]["id"] == "zero" and ks["sigma"]["id"] == "zero" and {ks["f"]["id"], ks["fprime"]["id"]} <= y_free:
        spread = float(np.max(np.ptp(result.Y - result.Y[0], axis=1)))
        return {"common_shift_spread": spread, "common_shift_ok": spread <= 1e-12}
    return {}


def _mkv_inputs(cfg):
    times = build_times(cfg)
    cs = build_coefficients(cfg)
    rp = build_rough_path(cfg, times)
    xi = build_initial(cfg)
    dB = particle_tapes(cfg["seed"], xi.shape[0], times, cs.ebar)
    return cs, rp, xi, dB


def run_rsde(cfg, out):
    cs = build_coefficients(cfg)
    fields = self_measure_fields(cs)
    times = build_times(cfg)
    rp = build_rough_path(cfg, times)
    xi = build_initial(cfg)
    dB = particle_tapes(cfg["seed"], xi.shape[0], times, cs.ebar)
    Y = np.stack([solve_rsde(fields, xi[j], rp, dB[j]).Y for j in range(xi.shape[0])], axis=1)
    result = MKVResult(times, Y, dB, rp)
    np.save(out / "Y.npy", Y)
    save_text(rp, out / "rough_path.txt")
    _write_csv(out / "terminal.csv", ["particle"] + [f"Y_{k + 1}" for k in range(cs.d)],
               [[j] + [float(v) for v in Y[-1, j]] for j in range(Y.shape[1])])
    if cfg["output"]["trajectories"]:
        for j in range(Y.shape[1]):
            _particle_csv(out / f"particle_{j:05d}.csv", times, Y[:, j])
    return {}, result


def run_mkv(cfg, out):
    cs, rp, xi, dB = _mkv_inputs(cfg)
    result = simulate_mkv(cs, rp, xi, dB)
    _save_mkv(out, cfg, result)
    return _common_shift_check(cfg, result), result


def run_picard(cfg, out):
    cs, rp, xi, dB = _mkv_inputs(cfg)
    pc = cfg["picard"]
    result, state = picard_solve(cs, rp, xi, dB, pc["tol"], pc["max_iter"], pc["init"])
    _save_mkv(out, cfg, result)
    _write_json(out / "picard.json", {"iterations": state.k, "converged": state.converged,
                                      "distances": state.distances,
                                      "ratios": [float(r) for r in state.ratios]})
    return {"picard_converged": state.converged}, result


def run_diagnose(cfg, out):
    checks, result = run_mkv(cfg, out)
    cs = build_coefficients(cfg)
    pr = cfg["params"]
    report = diagnose(result, cs, pr["alpha"], pr["beta"], pr["m"], tuple(pr["q"]))
    with open(out / "report.json", "w") as fh:
        fh.write(report.to_json() + "\n")
    return checks, result


def run_randomize_mode(cfg, out):
    cs = build_coefficients(cfg)
    times = build_times(cfg)
    xi = build_initial(cfg)
    rnd = cfg["randomize"]
    run = run_randomization(cs, times, xi, cfg["seed"], rnd["S"], cfg["sub_resolution"],
                            rnd["classical_resolution"], workers=_threads(cfg))
    summary = {}
    with open(out / "randomize.jsonl", "w") as fh:
        for phi in rnd["phi"]:
            rows, summ = conditional_law_compare(run, phi)
            write_randomize_jsonl(rows, times[-1], phi, fh)
            summary[phi] = summ
    _write_json(out / "summary.json", summary)
    return {"max_delta": {k: v["max"] for k, v in summary.items()}}, None


def run_sweep(cfg, out):
    sw = cfg["sweep"]
    base = sw["base_mode"]
    seed = cfg["seed"]
    if sw.get("K"):
        Ks = sorted(sw["K"])
        Kf = Ks[-1]
        fine_times = build_times(cfg, Kf)
        rp_fine = build_rough_path(cfg, fine_times)
        cs = build_coefficients(cfg)
        xi = build_initial(cfg)
        dB_fine = particle_tapes(seed, xi.shape[0], fine_times, cs.ebar)
        terminals = {}
        smooth = cfg["driver"]["type"] == "smooth"
        for K in Ks:
            if Kf % K:
                raise ValueError(f"sweep.K value {K} does not divide the finest K={Kf}")
            idx = np.arange(0, Kf + 1, Kf // K)
            times = fine_times[idx]
            rp = build_rough_path(cfg, times) if smooth else coarsen(rp_fine, idx)
            dB = dB_fine.reshape(xi.shape[0], K, Kf // K, cs.ebar).sum(axis=2)
            if base == "rsde":
                fields = self_measure_fields(cs)
                YT = np.stack([solve_rsde(fields, xi[j], rp, dB[j]).Y[-1] for j in range(xi.shape[0])])
            else:
                YT = simulate_mkv(cs, rp, xi, dB).Y[-1]
            terminals[K] = (YT, rp)
        rows = []
        for K in Ks:
            YT, rp = terminals[K]
            if sw["reference"] == "exact_linear":
                ref = xi * np.exp(rp.x[-1, 0] - rp.x[0, 0])
            else:
                ref = terminals[Kf][0]
            err = moment_norm(YT - ref, cfg["params"]["m"])
            rows.append([K, float(cfg["grid"]["T"]) / K, err])
        _write_csv(out / "sweep.csv", ["K", "h", "error"], rows)
        return {}, None
    if sw.get("N"):
        rows = []
        for N in sorted(sw["N"]):
            sub = dict(cfg, N=N)
            cs, rp, xi, dB = _mkv_inputs(sub)
            YT = simulate_mkv(cs, rp, xi, dB).Y[-1]
            rows.append([N, float(np.mean(YT)), moment_norm(YT, cfg["params"]["m"])])
        _write_csv(out / "sweep.csv", ["N", "mean", "m_norm"], rows)
        return {}, None
    cs, rp, xi, dB = _mkv_inputs(cfg)
    base_run = simulate_mkv(cs, rp, xi, dB)
    pr, dg = cfg["params"], cfg["diagnostics"]
    header, rows = None, []
    v = np.ones_like(xi)
    for eps in sw["xi_eps"]:
        other = simulate_mkv(cs, rp, xi + eps * v, dB)
        rep = stability_report(base_run, other, cs, cs, pr["alpha"], pr["beta"], pr["m"], pr["p"],
                               pr["beta_prime"], tuple(dg["probe_bounds"]), dg["probe_resolution"],
                               dg["probe_times"])
        flat = rep.flat()
        header = header or ["eps"] + sorted(flat)
        rows.append([float(eps)] + [float(flat[k]) for k in sorted(flat)])
    _write_csv(out / "sweep.csv", header, rows)
    return {}, None


PIPELINES = {
    "rsde": run_rsde,
    "mkv-direct": run_mkv,
    "mkv-picard": run_picard,
    "diagnose": run_diagnose,
    "randomize": run_randomize_mode,
    "sweep": run_sweep,
}


def _sha(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def execute(cfg, out_dir=None):
    """Run a validated config; returns ``(exit_code, manifest)``."""
    out = Path(out_dir or cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.json", "w") as fh:
        fh.write(emit(cfg) + "\n")
    manifest = {
        "config_hash": config_hash(cfg),
        "seed": cfg["seed"],
        "mode": cfg["mode"],
        "versions": {"roughmkv": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "started": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    t0 = time.perf_counter()
    code = EXIT_OK
    try:
        checks, _ = PIPELINES[cfg["mode"]](cfg, out)
        manifest["status"] = "ok"
        manifest["partial"] = False
        manifest["checks"] = checks
    except (BlowUpError, FloatingPointError) as exc:
        code = EXIT_NUMERICAL
        manifest["status"] = "numerical_abort"
        manifest["partial"] = True
        manifest["error"] = str(exc)
    manifest["wall_time_s"] = time.perf_counter() - t0
    manifest["files"] = {p.name: _sha(p) for p in sorted(out.iterdir())
                         if p.is_file() and p.name != "manifest.json"}
    _write_json(out / "manifest.json", manifest)
    return code, manifest


def _load(path):
    try:
        return parse(Path(path).read_text())
    except (OSError, ValueError) as exc:
        return exc


def _validated(path, overrides=None):
    raw = _load(path)
    if isinstance(raw, Exception):
        print(f"error: cannot read config: {raw}", file=sys.stderr)
        return None
    if overrides:
        raw = dict(raw, **overrides)
    v = validate(raw)
    for w in v.warnings:
        print(f"warning: {w}", file=sys.stderr)
    for e in v.errors:
        print(f"error: {e}", file=sys.stderr)
    return v


def _load_run(directory):
    d = Path(directory)
    cfg = parse((d / "config.json").read_text())
    Y = np.load(d / "Y.npy")
    dB = np.load(d / "dB.npy")
    rp = load_text(d / "rough_path.txt")
    return cfg, MKVResult(rp.times, Y, dB, rp)


def cmd_validate(args):
    v = _validated(args.config)
    if v is None or not v.ok:
        return EXIT_INVALID
    print(emit(v.config))
    return EXIT_OK


def _cmd_run(args, mode=None):
    v = _validated(args.config, {"mode": mode} if mode else None)
    if v is None or not v.ok:
        return EXIT_INVALID
    code, manifest = execute(v.config, args.out)
    print(json.dumps({"status": manifest["status"], "out": str(args.out or v.config["output"]["dir"])}))
    return code


def cmd_compare(args):
    cfg_a, run_a = _load_run(args.run_a)
    cfg_b, run_b = _load_run(args.run_b)
    cs_a, cs_b = build_coefficients(cfg_a), build_coefficients(cfg_b)
    if cfg_a["kernels"] == cfg_b["kernels"] and cfg_a["dims"] == cfg_b["dims"]:
        cs_b = cs_a
    pr, dg = cfg_a["params"], cfg_a["diagnostics"]
    try:
        rep = stability_report(run_a, run_b, cs_a, cs_b, pr["alpha"], pr["beta"], pr["m"], pr["p"],
                               pr["beta_prime"], tuple(dg["probe_bounds"]), dg["probe_resolution"],
                               dg["probe_times"])
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    text = rep.to_csv() if args.csv else rep.to_json() + "\n"
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="roughmkv", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("validate", help="check a config and print it with defaults filled in")
    s.add_argument("config")
    s.set_defaults(func=cmd_validate)
    for name, mode in (("run", None), ("sweep", "sweep"), ("randomize", "randomize")):
        s = sub.add_parser(name, help=f"execute a scenario{'' if mode is None else f' in {mode} mode'}")
        s.add_argument("config")
        s.add_argument("--out", help="output directory (default: output.dir from the config)")
        s.set_defaults(func=lambda a, m=mode: _cmd_run(a, m))
    s = sub.add_parser("compare", help="stability report between two mkv run directories")
    s.add_argument("run_a")
    s.add_argument("run_b")
    s.add_argument("--csv", action="store_true", help="emit a single-row CSV instead of JSON")
    s.add_argument("--out", help="also write the report to this file")
    s.set_defaults(func=cmd_compare)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
