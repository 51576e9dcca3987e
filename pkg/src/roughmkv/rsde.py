"""Explicit Davie-type scheme for rough SDEs with frozen coefficient fields.

One step from ``t_i`` with all coefficients frozen at the left point::

    y+ = y + b dt + sigma dB + f dX + g : XX

where ``g`` is the full second-level coefficient (``Df f + f'`` for classical
equations, :func:`roughmkv.coeffs.second_level_coeff` for mean-field ones).
"""

import csv
import json
from dataclasses import dataclass

import numpy as np

from .coeffs import EmpiricalMeasure, eval_field, second_level_coeff
from .roughpath import GridRoughPath, coarsen

__all__ = [
    "BlowUpError",
    "FrozenFields",
    "Trajectory",
    "davie_update",
    "davie_step",
    "solve_rsde",
    "remainder_series",
    "self_measure_fields",
    "write_trajectory_csv",
    "write_remainder_jsonl",
]


class BlowUpError(FloatingPointError):
    """Non-finite state; carries the last finite state and the failing step index."""

    def __init__(self, step, last_state, message=None):
        self.step = step
        self.last_state = np.array(last_state, copy=True)
        super().__init__(message or f"non-finite state produced at step {step}")


@dataclass(frozen=True, eq=False)
class FrozenFields:
    """Measure-free coefficient fields ``(t, y) -> value``, batched over leading axes of ``y``."""

    b: callable
    sigma: callable
    f: callable
    g: callable
    d: int
    e: int
    ebar: int

    @classmethod
    def zero(cls, d, e, ebar):
        def z(*shape):
            return lambda t, y: np.zeros(np.shape(y)[:-1] + shape)
        return cls(z(d), z(d, ebar), z(d, e), z(d, e, e), d, e, ebar)


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    Y: np.ndarray
    dB: np.ndarray
    rp: GridRoughPath

    @property
    def K(self):
        return self.times.shape[0] - 1


def _contract_shared(coef, vec):
    """``sum_idx coef[..., idx] * vec[idx]`` over all axes of ``vec``, in row-major order."""
    acc = None
    for idx in np.ndindex(*vec.shape):
        term = coef[(Ellipsis,) + idx] * vec[idx]
        acc = term if acc is None else acc + term
    return acc


def davie_update(y, b, sigma, f, g, dt, dB, dx, xx):
    """Core arithmetic of one scheme step on already evaluated coefficients.

    ``y`` is ``(d,)`` or ``(M, d)``; ``dB`` matches its leading axes; ``dx``
    and ``xx`` are shared by all rows.
    """
    y = np.asarray(y, dtype=float)
    dB = np.asarray(dB, dtype=float)
    dx = np.asarray(dx, dtype=float)
    xx = np.asarray(xx, dtype=float)
    out = y + b * dt
    # sigma: (..., d, ebar) against per-row dB: (..., ebar)
    acc = None
    for l in range(sigma.shape[-1]):
        term = sigma[..., l] * dB[..., l, None]
        acc = term if acc is None else acc + term
    if acc is not None:
        out = out + acc
    out = out + _contract_shared(f, dx)
    out = out + _contract_shared(g, xx)
    return out


def davie_step(y, t, dt, dB, dx, xx, fields):
    """One explicit step; raises :class:`BlowUpError` on a non-finite result."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    y = np.asarray(y, dtype=float)
    out = davie_update(y, fields.b(t, y), fields.sigma(t, y), fields.f(t, y), fields.g(t, y),
                       dt, dB, dx, xx)
    if not np.all(np.isfinite(out)):
        raise BlowUpError(-1, y)
    return out


def _align(rp, times):
    if times is None or (rp.times.shape == np.shape(times) and np.array_equal(rp.times, times)):
        return rp
    idx = np.searchsorted(rp.times, times)
    if np.any(idx >= rp.times.shape[0]) or not np.array_equal(rp.times[np.minimum(idx, rp.K)], times):
        raise ValueError("solver grid must be a subset of the rough path grid")
    return coarsen(rp, idx)


def solve_rsde(fields, y0, rp, dB=None, times=None):
    """Iterate :func:`davie_step` over the grid of ``rp`` (or a coarser sub-grid ``times``).

    ``dB`` holds Brownian increments of shape ``(K, ebar)``; ``None`` means no
    Brownian forcing.
    """
    rp = _align(rp, times)
    if rp.e != fields.e:
        raise ValueError(f"rough path has e={rp.e}, fields expect e={fields.e}")
    K, d = rp.K, fields.d
    dB = np.zeros((K, fields.ebar)) if dB is None else np.asarray(dB, dtype=float).reshape(K, fields.ebar)
    Y = np.empty((K + 1, d))
    Y[0] = np.asarray(y0, dtype=float).reshape(d)
    dts, dxs = rp.dt, rp.dx_step
    for i in range(K):
        try:
            Y[i + 1] = davie_step(Y[i], rp.times[i], dts[i], dB[i], dxs[i], rp.xx_step[i], fields)
        except BlowUpError as exc:
            raise BlowUpError(i, Y[i]) from exc
    return Trajectory(rp.times, Y, dB, rp)


def remainder_series(traj, fields):
    """``R[i, j] = Y_j - Y_i - f(t_i, Y_i) (X_j - X_i)`` for ``i <= j``; zero below the diagonal."""
    Y, x = traj.Y, traj.rp.x
    K = traj.K
    fvals = np.stack([fields.f(traj.times[i], Y[i]) for i in range(K + 1)])
    R = np.zeros((K + 1, K + 1, Y.shape[1]))
    for i in range(K + 1):
        dY = Y[i:] - Y[i]
        dX = x[i:] - x[i]
        R[i, i:] = dY - dX @ fvals[i].T
    return R


def self_measure_fields(cs):
    """Classical fields obtained by evaluating the kernels at the Dirac mass of the state itself."""

    def wrap(fn):
        def field(t, y):
            y = np.asarray(y, dtype=float)
            if y.ndim == 1:
                return fn(y, EmpiricalMeasure(y[None, :]), t)
            return np.stack([fn(row, EmpiricalMeasure(row[None, :]), t) for row in y])
        return field

    return FrozenFields(
        wrap(lambda y, mu, t: eval_field(cs.b, y, mu, t)),
        wrap(lambda y, mu, t: eval_field(cs.sigma, y, mu, t)),
        wrap(lambda y, mu, t: eval_field(cs.f, y, mu, t)),
        wrap(lambda y, mu, t: second_level_coeff(cs, y, mu, t)),
        cs.d, cs.e, cs.ebar,
    )


def _fmt(v):
    return "%.17g" % v


def write_trajectory_csv(traj, path):
    d = traj.Y.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"Y_{k + 1}" for k in range(d)])
        for t, row in zip(traj.times, traj.Y):
            w.writerow([_fmt(t)] + [_fmt(v) for v in row])


def write_remainder_jsonl(R, times, path):
    with open(path, "w") as fh:
        for i in range(R.shape[0]):
            for j in range(i + 1, R.shape[1]):
                rec = {"i": i, "j": j, "s": float(times[i]), "t": float(times[j]),
                       "R": [float(v) for v in R[i, j]]}
                fh.write(json.dumps(rec) + "\n")
