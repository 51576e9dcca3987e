"""Interacting particles for McKean-Vlasov dynamics driven by a common rough path.

The law argument of every coefficient is the empirical measure of the
ensemble.  Two solution modes are provided:

* direct coupling (:func:`simulate_mkv`): at each step the measure is the
  current ensemble, frozen over the step;
* Picard iteration (:func:`picard_solve`): the measure flow is frozen from the
  previous iterate and the particles solve decoupled rough SDEs.

At the fixed point both modes produce the same discrete system.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import streams
from .coeffs import EmpiricalMeasure, MeasureCache, eval_field, second_level_coeff
from .rsde import BlowUpError, davie_update

__all__ = [
    "ParticleEnsemble",
    "MKVResult",
    "PicardState",
    "particle_tapes",
    "initial_atoms",
    "mkv_fields",
    "step_ensemble",
    "simulate_mkv",
    "picard_solve",
    "snapshot_records",
    "write_snapshots_jsonl",
]


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    """Particle states at grid index ``i`` together with everything needed to advance them."""

    cs: object
    rp: object
    Y: np.ndarray  # (N, d)
    dB: np.ndarray  # (N, K, ebar)
    i: int = 0

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if Y.shape[0] < 1 or Y.shape[1] != self.cs.d:
            raise ValueError(f"states must have shape (N>=1, d={self.cs.d}), got {Y.shape}")
        dB = np.asarray(self.dB, dtype=float)
        if dB.shape != (Y.shape[0], self.rp.K, self.cs.ebar):
            raise ValueError(f"Brownian tapes must have shape {(Y.shape[0], self.rp.K, self.cs.ebar)}, "
                             f"got {dB.shape}")
        if self.rp.e != self.cs.e:
            raise ValueError(f"rough path has e={self.rp.e}, coefficients expect e={self.cs.e}")
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "dB", dB)

    @property
    def N(self):
        return self.Y.shape[0]

    @property
    def t(self):
        return self.rp.times[self.i]


@dataclass
class MKVResult:
    times: np.ndarray
    Y: np.ndarray  # (K+1, N, d)
    dB: np.ndarray  # (N, K, ebar)
    rp: object

    def measure(self, i):
        return EmpiricalMeasure(self.Y[i])

    def particle(self, j):
        return self.Y[:, j, :]


@dataclass
class PicardState:
    k: int = 0
    measure_flow: np.ndarray = None  # (K+1, N, d) atoms frozen in the last iteration
    distances: list = field(default_factory=list)
    converged: bool = False

    @property
    def ratios(self):
        dist = np.asarray(self.distances, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(dist[1:] == 0.0, 0.0, dist[1:] / dist[:-1])


def particle_tapes(seed, N, times, ebar, first_index=0):
    """Brownian increments ``(N, K, ebar)``; particle ``j`` reads its own stream."""
    dt = np.diff(np.asarray(times, dtype=float))
    if ebar == 0:
        return np.zeros((N, dt.shape[0], 0))
    return np.stack([streams.brownian_increments(seed, first_index + j, dt, ebar) for j in range(N)])


def initial_atoms(seed, N, d, mean=0.0, std=1.0):
    """Gaussian initial conditions, one stream per particle."""
    mean = np.broadcast_to(np.asarray(mean, dtype=float), (d,))
    std = np.broadcast_to(np.asarray(std, dtype=float), (d,))
    rows = [mean + std * streams.stream(seed, "initial", j).standard_normal(d) for j in range(N)]
    return np.array(rows)


def mkv_fields(cs, Y, atoms, t):
    """Coefficients ``(b, sigma, f, G)`` for query states ``Y`` against the measure on ``atoms``.

    The per-measure part of ``G`` is computed once and shared by all queries.
    """
    mu = EmpiricalMeasure(atoms)
    cache = MeasureCache(cs, mu, t)
    return (eval_field(cs.b, Y, mu, t), eval_field(cs.sigma, Y, mu, t), eval_field(cs.f, Y, mu, t),
            second_level_coeff(cs, Y, mu, t, cache))


def _advance(cs, rp, Y, atoms, dB_i, i):
    b, sigma, f, G = mkv_fields(cs, Y, atoms, rp.times[i])
    out = davie_update(Y, b, sigma, f, G, rp.dt[i], dB_i, rp.dx_step[i], rp.xx_step[i])
    if not np.all(np.isfinite(out)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(out), axis=1))[0])
        raise BlowUpError(i, Y, f"particle {bad} produced a non-finite state at step {i}")
    return out


def step_ensemble(ens, i=None):
    """Advance the ensemble from ``t_i`` to ``t_{i+1}`` using its own empirical measure."""
    i = ens.i if i is None else i
    if not 0 <= i < ens.rp.K:
        raise IndexError(f"step index {i} outside [0, {ens.rp.K})")
    Y = _advance(ens.cs, ens.rp, ens.Y, ens.Y, ens.dB[:, i, :], i)
    return ParticleEnsemble(ens.cs, ens.rp, Y, ens.dB, i + 1)


def simulate_mkv(cs, rp, xi, dB=None):
    """Direct-coupling particle simulation over the whole grid of ``rp``."""
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 1:
        xi = xi[:, None]
    N = xi.shape[0]
    if dB is None:
        dB = np.zeros((N, rp.K, cs.ebar))
    ens = ParticleEnsemble(cs, rp, xi, dB)
    Y = np.empty((rp.K + 1, N, cs.d))
    Y[0] = ens.Y
    for i in range(rp.K):
        ens = step_ensemble(ens, i)
        Y[i + 1] = ens.Y
    return MKVResult(rp.times, Y, ens.dB, rp)


def _frozen_solve(cs, rp, xi, dB, flow):
    Y = np.empty_like(flow)
    Y[0] = xi
    for i in range(rp.K):
        Y[i + 1] = _advance(cs, rp, Y[i], flow[i], dB[:, i, :], i)
    return Y


def picard_solve(cs, rp, xi, dB=None, tol=1e-10, max_iter=50, init="initial"):
    """Fixed-point iteration on the measure flow.

    ``init`` selects the first frozen flow: ``"initial"`` (atoms stay at
    ``xi``), ``"zero"`` (all atoms at the origin), ``"direct"`` (the direct
    coupling solution) or an explicit ``(K+1, N, d)`` array.  Distances are
    ``max_t max_j |Y^{k+1}_j(t) - Y^k_j(t)|``; iteration stops once one falls
    below ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 1:
        xi = xi[:, None]
    N = xi.shape[0]
    if dB is None:
        dB = np.zeros((N, rp.K, cs.ebar))
    dB = np.asarray(dB, dtype=float)
    shape = (rp.K + 1, N, cs.d)
    if isinstance(init, str):
        if init == "initial":
            flow = np.broadcast_to(xi, shape).copy()
        elif init == "zero":
            flow = np.zeros(shape)
        elif init == "direct":
            flow = simulate_mkv(cs, rp, xi, dB).Y
        else:
            raise ValueError(f"unknown init '{init}'")
    else:
        flow = np.asarray(init, dtype=float).reshape(shape)
    state = PicardState(measure_flow=flow)
    for k in range(max_iter):
        Y = _frozen_solve(cs, rp, xi, dB, flow)
        dist = float(np.max(np.linalg.norm(Y - flow, axis=-1)))
        state.k = k + 1
        state.measure_flow = flow
        state.distances.append(dist)
        flow = Y
        if dist < tol:
            state.converged = True
            break
    return MKVResult(rp.times, flow, dB, rp), state


def snapshot_records(result, qs=(2,), include_atoms=False):
    """Per-time summaries: mean, covariance and ``mean |Y|^q`` for each ``q``."""
    recs = []
    for i, t in enumerate(result.times):
        Y = result.Y[i]
        mean = Y.mean(axis=0)
        cov = np.atleast_2d(np.cov(Y, rowvar=False, bias=True)) if Y.shape[0] > 1 else np.zeros((Y.shape[1],) * 2)
        norms = np.linalg.norm(Y, axis=1)
        rec = {
            "t": float(t),
            "mean": [float(v) for v in mean],
            "cov": [[float(v) for v in row] for row in cov],
            "moments": {str(q): float(np.mean(norms ** q)) for q in qs},
        }
        if include_atoms:
            rec["atoms"] = [[float(v) for v in row] for row in Y]
        recs.append(rec)
    return recs


def _dumps(obj):
    return json.dumps(obj, sort_keys=True, default=lambda v: float(v), allow_nan=False)


def write_snapshots_jsonl(result, path, qs=(2,), include_atoms=False):
    with open(path, "w") as fh:
        for rec in snapshot_records(result, qs, include_atoms):
            fh.write(_dumps(rec) + "\n")
