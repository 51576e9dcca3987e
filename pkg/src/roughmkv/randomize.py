"""Brownian randomization of the rough common noise.

For each common-noise sample the Brownian path ``W`` is lifted to an Itô rough
path and fed to the rough particle solver; the same ``W`` and idiosyncratic
tapes drive a classical Euler scheme with Milstein correction for the common
noise term.  Conditional laws ``Law(Y_t | W)`` are compared through empirical
means of bounded test functions.

Coefficients never receive the rough path as an argument, which is what makes
the randomized solution identifiable with the common-noise equation.
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import streams
from .mkv import MKVResult, mkv_fields, simulate_mkv
from .roughpath import ito_lift
from .rsde import BlowUpError

__all__ = [
    "TEST_FUNCTIONS",
    "RandomizationRun",
    "common_tape",
    "aggregate_tape",
    "sample_common_lift",
    "classical_common_noise_solver",
    "run_randomization",
    "conditional_law_compare",
    "write_randomize_jsonl",
]

# bounded test functions on R^d, applied row-wise
TEST_FUNCTIONS = {
    "one": lambda y: np.ones(y.shape[0]),
    "tanh": lambda y: np.tanh(y.sum(axis=1)),
    "cos": lambda y: np.cos(y).prod(axis=1),
    "bump": lambda y: 1.0 / (1.0 + np.sum(y * y, axis=1)),
}

_SAMPLE_SHIFT = 20  # B stream index = (sample << 20) | particle


def common_tape(times, e, seed, sample=0, sub_resolution=64):
    """Sub-step increments ``(K, R, e)`` of the common Brownian motion for one sample."""
    dt = np.diff(np.asarray(times, dtype=float))
    tape = streams.brownian_increments(seed, sample, dt, e, tag="common", sub_resolution=sub_resolution)
    return tape.reshape(dt.shape[0], int(sub_resolution), e)


def aggregate_tape(tape, sub_resolution):
    """Sum groups of consecutive sub-steps so the tape has ``sub_resolution`` steps per interval."""
    K, R, e = tape.shape
    if R % sub_resolution:
        raise ValueError(f"cannot aggregate {R} sub-steps into {sub_resolution}")
    return tape.reshape(K, sub_resolution, R // sub_resolution, e).sum(axis=2)


def sample_common_lift(times, e, seed, sub_resolution=64, sample=0):
    """Itô lift of one common-noise sample (exact area formula when ``e == 1``)."""
    return ito_lift(common_tape(times, e, seed, sample, sub_resolution), times)


def _wiener_increments(tape):
    # same arithmetic as the first level of ito_lift
    step = tape.sum(axis=1)
    W = np.zeros((tape.shape[0] + 1, tape.shape[2]))
    np.cumsum(step, axis=0, out=W[1:])
    return np.diff(W, axis=0)


def classical_common_noise_solver(cs, times, xi, dB, W_tape):
    """Euler scheme with Milstein correction for ``f dW``, empirical law in every coefficient.

    ``Y+ = Y + b dt + sigma dB + f dW + G : ((dW dW^T - dt I) / 2 + A)``

    with ``A`` the antisymmetric (Lévy area) part of the left-point sub-grid sum
    over ``W_tape`` (zero when ``e == 1``).
    """
    times = np.asarray(times, dtype=float)
    K = times.shape[0] - 1
    W_tape = np.asarray(W_tape, dtype=float)
    if W_tape.ndim == 2:
        W_tape = W_tape[:, None, :]
    e = W_tape.shape[2]
    dW = _wiener_increments(W_tape)
    rel = np.cumsum(W_tape, axis=1) - W_tape
    S = np.einsum("kra,krb->kab", rel, W_tape)
    area = 0.5 * (S - np.swapaxes(S, 1, 2))
    eye = np.eye(e)
    dts = np.diff(times)
    Y = np.empty((K + 1,) + np.shape(xi))
    Y[0] = xi
    for i in range(K):
        b, sigma, f, G = mkv_fields(cs, Y[i], Y[i], times[i])
        dt = dts[i]
        sym = (np.outer(dW[i], dW[i]) - dt * eye) / 2
        second = sym if e == 1 else sym + area[i]
        y = Y[i] + b * dt
        acc = None
        for l in range(sigma.shape[-1]):
            term = sigma[..., l] * dB[:, i, l, None]
            acc = term if acc is None else acc + term
        if acc is not None:
            y = y + acc
        acc = None
        for a in range(e):
            term = f[..., a] * dW[i, a]
            acc = term if acc is None else acc + term
        y = y + acc
        acc = None
        for a in range(e):
            for c in range(e):
                term = G[..., a, c] * second[a, c]
                acc = term if acc is None else acc + term
        y = y + acc
        if not np.all(np.isfinite(y)):
            raise BlowUpError(i, Y[i])
        Y[i + 1] = y
    return Y


@dataclass
class RandomizationRun:
    seed: int
    S: int
    times: np.ndarray
    rough_paths: list = field(default_factory=list)
    rough: list = field(default_factory=list)  # MKVResult per sample
    classical: list = field(default_factory=list)  # (K+1, N, d) per sample


def sample_particle_tapes(seed, sample, N, times, ebar):
    dt = np.diff(np.asarray(times, dtype=float))
    if ebar == 0:
        return np.zeros((N, dt.shape[0], 0))
    return np.stack([streams.brownian_increments(seed, (sample << _SAMPLE_SHIFT) | j, dt, ebar)
                     for j in range(N)])


def run_randomization(cs, times, xi, seed, S, sub_resolution=64, classical_resolution=None, workers=1):
    """Run both pipelines on ``S`` common-noise samples.

    The rough pipeline lifts ``W`` with ``sub_resolution`` sub-steps; the
    classical pipeline reads the Lévy area at ``classical_resolution``
    (default: the same).  Both views come from one tape drawn at the finer
    resolution, so the samples are nested.  Samples are independent jobs and
    run on up to ``workers`` threads; results do not depend on ``workers``.
    """
    classical_resolution = classical_resolution or sub_resolution
    fine = max(sub_resolution, classical_resolution)
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 1:
        xi = xi[:, None]
    run = RandomizationRun(seed, S, np.asarray(times, dtype=float))

    def job(s):
        tape = common_tape(times, cs.e, seed, s, fine)
        dB = sample_particle_tapes(seed, s, xi.shape[0], times, cs.ebar)
        rp = ito_lift(aggregate_tape(tape, sub_resolution), times)
        classical = classical_common_noise_solver(cs, times, xi, dB, aggregate_tape(tape, classical_resolution))
        return rp, simulate_mkv(cs, rp, xi, dB), classical

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(job, range(S)))
    else:
        outputs = [job(s) for s in range(S)]
    for rp, rough, classical in outputs:
        run.rough_paths.append(rp)
        run.rough.append(rough)
        run.classical.append(classical)
    return run


def conditional_law_compare(run, phi, i=-1):
    """Per-sample ``|mean_j phi(Y_rough_j(t_i)) - mean_j phi(Y_classical_j(t_i))|``."""
    phi = TEST_FUNCTIONS[phi] if isinstance(phi, str) else phi
    if len(run.rough) != run.S or len(run.classical) != run.S:
        raise ValueError("run is missing sample outputs")
    rows = []
    for s in range(run.S):
        rough = run.rough[s].Y[i] if isinstance(run.rough[s], MKVResult) else run.rough[s][i]
        rm = float(np.mean(phi(rough)))
        cm = float(np.mean(phi(run.classical[s][i])))
        rows.append({"sample": s, "rough_mean": rm, "classical_mean": cm, "delta": abs(rm - cm)})
    deltas = np.array([r["delta"] for r in rows])
    return rows, {"max": float(deltas.max()), "mean": float(deltas.mean())}


def write_randomize_jsonl(rows, t, phi_id, fh):
    """Append one record per sample to an open text file."""
    for r in rows:
        rec = {"sample": r["sample"], "t": float(t), "phi_id": phi_id, "rough_mean": r["rough_mean"],
               "classical_mean": r["classical_mean"], "delta": r["delta"]}
        fh.write(json.dumps(rec, sort_keys=True) + "\n")
