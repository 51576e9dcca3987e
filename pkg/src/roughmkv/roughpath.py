"""Level-2 rough paths sampled on a time grid.

A :class:`GridRoughPath` stores the first level ``X`` at every grid point and
the second level ``XX`` only on consecutive intervals.  Second-level
increments over longer intervals are rebuilt from Chen's relation::

    XX[s,t] = XX[s,u] + XX[u,t] + dX[s,u] (x) dX[u,t]

Tensor convention: ``XX[s,t][a, b]`` approximates ``int_s^t (X^a_r - X^a_s) dX^b_r``.
All norms of vectors and matrices are Euclidean / Frobenius.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "GridRoughPath",
    "HolderReport",
    "lift_smooth",
    "ito_lift",
    "chen_defect",
    "holder_norms",
    "rp_distance",
    "coarsen",
    "save_text",
    "load_text",
    "check_alpha",
]

# pairs are enumerated exhaustively up to this many grid intervals
EXHAUSTIVE_MAX_K = 4096


def check_alpha(alpha, name="alpha"):
    """Reject alpha outside (0, 1]; warn when outside the rough regime (1/3, 1/2]."""
    alpha = float(alpha)
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"{name} must lie in (0, 1], got {alpha}")
    if not 1.0 / 3.0 < alpha <= 0.5:
        warnings.warn(f"{name}={alpha} is outside (1/3, 1/2]; reporting finite-grid values anyway",
                      stacklevel=3)
    return alpha


def _validate_times(times):
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.shape[0] < 2:
        raise ValueError("grid needs at least two points (K >= 1)")
    if not np.all(np.isfinite(times)):
        raise ValueError("grid times must be finite")
    if np.any(np.diff(times) <= 0):
        raise ValueError("grid times must be strictly increasing")
    return times


@dataclass(frozen=True, eq=False)
class GridRoughPath:
    """Discretised two-step rough path.

    Attributes
    ----------
    times : (K+1,) strictly increasing grid.
    x : (K+1, e) first level values.
    xx_step : (K, e, e) second level increments over ``[t_i, t_{i+1}]``.
    alpha_hint : nominal Hölder exponent.
    xx_table : optional (K+1, K+1, e, e) externally supplied two-parameter
        second level.  When present it replaces the Chen reconstruction; this
        is how externally produced data is audited with :func:`chen_defect`.
    """

    times: np.ndarray
    x: np.ndarray
    xx_step: np.ndarray
    alpha_hint: float = 0.5
    xx_table: np.ndarray = None

    def __post_init__(self):
        times = _validate_times(self.times)
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        K = times.shape[0] - 1
        if x.shape[0] != K + 1:
            raise ValueError(f"x has {x.shape[0]} rows, expected {K + 1}")
        e = x.shape[1]
        xx = np.asarray(self.xx_step, dtype=float).reshape(K, e, e)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xx))):
            raise ValueError("rough path values must be finite")
        table = self.xx_table
        if table is not None:
            table = np.asarray(table, dtype=float).reshape(K + 1, K + 1, e, e)
            table.setflags(write=False)
        for arr in (times, x, xx):
            arr.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "xx_step", xx)
        object.__setattr__(self, "xx_table", table)
        object.__setattr__(self, "alpha_hint", float(self.alpha_hint))

    @classmethod
    def from_two_parameter(cls, times, x, xx_table, alpha_hint=0.5):
        """Build from a full table ``xx_table[i, j] = XX[t_i, t_j]`` (only i < j is read)."""
        table = np.asarray(xx_table, dtype=float)
        K = table.shape[0] - 1
        steps = np.stack([table[i, i + 1] for i in range(K)])
        return cls(times, x, steps, alpha_hint, xx_table=table)

    @property
    def K(self):
        return self.times.shape[0] - 1

    @property
    def e(self):
        return self.x.shape[1]

    @property
    def dt(self):
        return np.diff(self.times)

    @property
    def dx_step(self):
        return np.diff(self.x, axis=0)

    def dx(self, i, j):
        return self.x[j] - self.x[i]

    def xx(self, i, j):
        """Second level increment between grid indices ``i <= j``."""
        if not 0 <= i <= j <= self.K:
            raise IndexError(f"need 0 <= i <= j <= {self.K}, got ({i}, {j})")
        if self.xx_table is not None:
            return np.zeros((self.e, self.e)) if i == j else self.xx_table[i, j].copy()
        if i == j:
            return np.zeros((self.e, self.e))
        rel = self.x[i:j] - self.x[i]
        steps = self.dx_step[i:j]
        return self.xx_step[i:j].sum(axis=0) + np.einsum("ka,kb->ab", rel, steps)

    def row(self, i):
        """Increments from ``t_i`` to every later grid point.

        Returns ``(dx, xx)`` with shapes ``(K-i, e)`` and ``(K-i, e, e)``;
        entry ``k`` is the increment over ``[t_i, t_{i+1+k}]``.
        """
        dx = self.x[i + 1:] - self.x[i]
        if self.xx_table is not None:
            return dx, self.xx_table[i, i + 1:].copy()
        rel = self.x[i:-1] - self.x[i]
        terms = self.xx_step[i:] + rel[:, :, None] * self.dx_step[i:][:, None, :]
        return dx, np.cumsum(terms, axis=0)


@dataclass(frozen=True)
class HolderReport:
    dx_alpha: float
    xx_2alpha: float
    triple_norm: float


def _eval_sampler(sampler, t):
    vals = np.asarray(sampler(t), dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    if vals.shape[0] != t.shape[0]:
        # samplers returning (e, n) are accepted too
        vals = vals.T
    return vals


def lift_smooth(sampler, times, sub_resolution=64, alpha_hint=0.5):
    """Geometric lift of a smooth path.

    ``sampler`` maps an array of times to values of shape ``(n,)`` or
    ``(n, e)``.  Each grid interval is split into ``sub_resolution`` pieces and
    the second level is the exact iterated integral of the piecewise-linear
    interpolant, so ``Sym(XX) = dX (x) dX / 2`` holds exactly in exact
    arithmetic and linear samplers are lifted exactly.
    """
    times = _validate_times(times)
    R = int(sub_resolution)
    if R < 1:
        raise ValueError("sub_resolution must be >= 1")
    K = times.shape[0] - 1
    frac = np.arange(R + 1) / R
    sub_t = times[:-1, None] + frac[None, :] * np.diff(times)[:, None]
    sub_t[:, -1] = times[1:]
    vals = _eval_sampler(sampler, sub_t.ravel()).reshape(K, R + 1, -1)
    steps = np.diff(vals, axis=1)
    rel = vals[:, :-1] - vals[:, :1]
    xx = np.einsum("kra,krb->kab", rel, steps) + 0.5 * np.einsum("kra,krb->kab", steps, steps)
    x = np.concatenate([vals[:1, 0], vals[:, -1]], axis=0)
    return GridRoughPath(times, x, xx, alpha_hint)


def ito_lift(increments, times, alpha_hint=0.5):
    """Itô lift of a Brownian path given its sub-step increments.

    ``increments`` has shape ``(K, R, e)`` (or ``(K, e)`` for ``R = 1``).  The
    first level is the running sum at grid points.  For ``e = 1`` the second
    level uses the exact identity ``XX = (dX**2 - dt) / 2``; for ``e > 1`` it is
    the left-point sum ``sum_r (W_r - W_0) (x) dW_r`` over the sub-grid.
    """
    times = _validate_times(times)
    inc = np.asarray(increments, dtype=float)
    K = times.shape[0] - 1
    if inc.ndim == 2:
        inc = inc[:, None, :]
    if inc.ndim != 3 or inc.shape[0] != K:
        raise ValueError(f"expected increments of shape (K={K}, R, e), got {np.shape(increments)}")
    e = inc.shape[2]
    step = inc.sum(axis=1)
    x = np.zeros((K + 1, e))
    np.cumsum(step, axis=0, out=x[1:])
    if e == 1:
        dx = np.diff(x, axis=0)
        xx = ((dx * dx - np.diff(times)[:, None]) / 2)[:, :, None]
    else:
        rel = np.cumsum(inc, axis=1) - inc
        xx = np.einsum("kra,krb->kab", rel, inc)
    return GridRoughPath(times, x, xx, alpha_hint)


def chen_defect(rp, i, u, j):
    """``|XX[i,j] - XX[i,u] - XX[u,j] - dX[i,u] (x) dX[u,j]|`` on grid indices."""
    if not 0 <= i <= u <= j <= rp.K:
        raise IndexError(f"need 0 <= i <= u <= j <= {rp.K}, got ({i}, {u}, {j})")
    gap = rp.xx(i, j) - rp.xx(i, u) - rp.xx(u, j) - np.outer(rp.dx(i, u), rp.dx(u, j))
    return float(np.linalg.norm(gap))


def _rows(K):
    if K <= EXHAUSTIVE_MAX_K:
        return range(K)
    return range(0, K, math.ceil(K / EXHAUSTIVE_MAX_K))


def _ratio_max(num, den):
    # 0/0 := 0
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(num == 0.0, 0.0, num / den)
    return float(r.max()) if r.size else 0.0


def holder_norms(rp, alpha):
    """Finite-grid Hölder norms ``|dX|_alpha``, ``|XX|_{2 alpha}`` and the triple norm."""
    alpha = check_alpha(alpha)
    t = rp.times
    best_dx = best_xx = 0.0
    for i in _rows(rp.K):
        dx, xx = rp.row(i)
        span = t[i + 1:] - t[i]
        best_dx = max(best_dx, _ratio_max(np.linalg.norm(dx, axis=1), span ** alpha))
        best_xx = max(best_xx, _ratio_max(np.linalg.norm(xx, axis=(1, 2)), span ** (2 * alpha)))
    return HolderReport(best_dx, best_xx, best_dx + math.sqrt(best_xx))


def _same_grid(rp, rp_bar):
    if rp.times.shape != rp_bar.times.shape or not np.array_equal(rp.times, rp_bar.times):
        raise ValueError("rough paths live on different grids")
    if rp.e != rp_bar.e:
        raise ValueError(f"rough paths have different dimensions ({rp.e} vs {rp_bar.e})")


def rp_distance(rp, rp_bar, alpha, alpha_prime):
    """``rho_{alpha, alpha'}``: ``|dX - dXbar|_alpha + |XX - XXbar|_{alpha + alpha'}``."""
    _same_grid(rp, rp_bar)
    t = rp.times
    d1 = d2 = 0.0
    for i in _rows(rp.K):
        dx, xx = rp.row(i)
        dxb, xxb = rp_bar.row(i)
        span = t[i + 1:] - t[i]
        d1 = max(d1, _ratio_max(np.linalg.norm(dx - dxb, axis=1), span ** alpha))
        d2 = max(d2, _ratio_max(np.linalg.norm(xx - xxb, axis=(1, 2)), span ** (alpha + alpha_prime)))
    return d1 + d2


def coarsen(rp, indices):
    """Restrict ``rp`` to the grid points ``indices`` using Chen's relation."""
    idx = np.asarray(indices, dtype=int)
    if idx.ndim != 1 or idx.shape[0] < 2 or np.any(np.diff(idx) <= 0) or idx[0] < 0 or idx[-1] > rp.K:
        raise ValueError("indices must be a strictly increasing list of grid indices")
    xx = np.stack([rp.xx(int(a), int(b)) for a, b in zip(idx[:-1], idx[1:])])
    return GridRoughPath(rp.times[idx], rp.x[idx], xx, rp.alpha_hint)


def _fmt(v):
    return "%.17g" % v


def save_text(rp, path):
    """Write the columnar text format (header ``e K alpha``)."""
    lines = [f"{rp.e} {rp.K} {_fmt(rp.alpha_hint)}"]
    for t, row in zip(rp.times, rp.x):
        lines.append(" ".join(_fmt(v) for v in (t, *row)))
    for step in rp.xx_step:
        lines.append(" ".join(_fmt(v) for v in step.ravel()))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_text(path):
    with open(path) as fh:
        rows = [ln.split() for ln in fh if ln.strip()]
    e, K = int(rows[0][0]), int(rows[0][1])
    alpha = float(rows[0][2])
    if len(rows) != 1 + (K + 1) + K:
        raise ValueError(f"{path}: expected {2 * K + 2} lines for e={e}, K={K}, found {len(rows)}")
    pts = np.array([[float(v) for v in r] for r in rows[1:K + 2]])
    xx = np.array([[float(v) for v in r] for r in rows[K + 2:]])
    if pts.shape[1] != e + 1 or xx.shape[1] != e * e:
        raise ValueError(f"{path}: column count does not match e={e}")
    return GridRoughPath(pts[:, 0], pts[:, 1:], xx.reshape(K, e, e), alpha)
