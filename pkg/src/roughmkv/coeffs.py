"""Measure-dependent coefficient fields in kernel form.

A field is ``F(y, mu) = int h(y, z) mu(dz)``, evaluated against the uniform
empirical measure of ``N`` atoms.  Kernels come with analytic derivatives in
both slots, which is all the Lions calculus needs for this family: the Lions
derivative of ``F`` at ``mu`` in direction ``eta`` is ``mean_j D_2 h(y, z_j) eta_j``
and the second Lions derivative vanishes.

Shape conventions, with state dimension ``d``, rough-noise dimension ``e`` and
Brownian dimension ``ebar``:

* ``b``: ``(d,)``, ``sigma``: ``(d, ebar)``, ``f``: ``(d, e)``, ``fprime``: ``(d, e, e)``
* a derivative appends one trailing axis of length ``d``
* second-level coefficients ``G[k, a, b]`` multiply ``XX[a, b]``

Every reduction over atoms runs on the lexicographically sorted atoms and sums
left to right, so results are bitwise invariant under atom permutations.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Kernel",
    "GenericField",
    "EmpiricalMeasure",
    "CoefficientSet",
    "MeasureCache",
    "KERNELS",
    "make_kernel",
    "zero_kernel",
    "eval_field",
    "eval_D1",
    "eval_D2",
    "second_level_coeff",
    "permutation_check",
]


@dataclass(frozen=True, eq=False)
class Kernel:
    """Interaction kernel ``h(y, z, t)`` with its partial derivatives.

    The callables broadcast over leading axes: ``y`` and ``z`` have trailing
    axis ``d``; ``h`` returns ``(..., *shape)``, ``d1h``/``d2h`` return
    ``(..., *shape, d)``.
    """

    h: callable
    d1h: callable
    d2h: callable
    d: int
    shape: tuple
    bound: float = np.inf
    name: str = "custom"

    def __call__(self, y, z, t=0.0):
        return self.h(y, z, t)


@dataclass(frozen=True, eq=False)
class GenericField:
    """Field given directly as ``fn(y, atoms, t)`` with finite-difference derivatives.

    ``fn`` takes a query batch ``(M, d)`` and atoms ``(N, d)`` and returns
    ``(M, *shape)``.  It must be a symmetric function of the atoms.  Second
    Lions derivatives are not represented.
    """

    fn: callable
    d: int
    shape: tuple
    eps: float = 1e-6
    bound: float = np.inf
    name: str = "generic"


def _lex_order(atoms, extra=None):
    keys = [atoms[:, c] for c in range(atoms.shape[1] - 1, -1, -1)]
    if extra is not None:
        flat = extra.reshape(extra.shape[0], -1)
        keys = [flat[:, c] for c in range(flat.shape[1] - 1, -1, -1)] + keys
    return np.lexsort(keys)


class EmpiricalMeasure:
    """Uniform empirical measure on ``N`` atoms in ``R^d``."""

    def __init__(self, atoms):
        atoms = np.array(atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        if atoms.ndim != 2 or atoms.shape[0] < 1:
            raise ValueError("an empirical measure needs at least one atom")
        if not np.all(np.isfinite(atoms)):
            raise ValueError("atoms must be finite")
        atoms.setflags(write=False)
        self.atoms = atoms
        self._order = _lex_order(atoms)
        self.sorted_atoms = atoms[self._order]
        self.sorted_atoms.setflags(write=False)

    @property
    def N(self):
        return self.atoms.shape[0]

    @property
    def d(self):
        return self.atoms.shape[1]

    def permuted(self, perm):
        return EmpiricalMeasure(self.atoms[np.asarray(perm)])

    def sort_with(self, directions):
        """Atoms and per-atom directions, sorted jointly."""
        directions = np.asarray(directions, dtype=float)
        order = _lex_order(self.atoms, directions)
        return self.atoms[order], directions[order]

    def __repr__(self):
        return f"EmpiricalMeasure(N={self.N}, d={self.d})"


def _as_measure(mu):
    return mu if isinstance(mu, EmpiricalMeasure) else EmpiricalMeasure(mu)


def _atom_mean(values):
    # values: (N, ...) with atoms first; sequential left-to-right accumulation
    acc = values[0].copy()
    for v in values[1:]:
        acc += v
    return acc / values.shape[0]


def _queries(y, d):
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    y2 = y.reshape(-1, d) if not single else y[None, :]
    if y2.shape[-1] != d:
        raise ValueError(f"query points have dimension {y.shape[-1]}, expected {d}")
    return y2, single


def _check_dims(k, mu):
    if k.d != mu.d:
        raise ValueError(f"kernel '{k.name}' acts on d={k.d} but the measure has d={mu.d}")


# -- evaluation -------------------------------------------------------------

def _pairwise(fn, yq, atoms, t):
    # (N, M, ...) array of fn(y_m, z_n)
    return fn(yq[None, :, :], atoms[:, None, :], t)


def eval_field(k, y, mu, t=0.0):
    """``mean_j h(y, z_j)`` for a point ``y`` of shape ``(d,)`` or a batch ``(M, d)``."""
    mu = _as_measure(mu)
    _check_dims(k, mu)
    yq, single = _queries(y, k.d)
    if isinstance(k, GenericField):
        out = np.asarray(k.fn(yq, mu.sorted_atoms, t), dtype=float)
    else:
        out = _atom_mean(_pairwise(k.h, yq, mu.sorted_atoms, t))
    return out[0] if single else out


def eval_D1(k, y, mu, t=0.0):
    """Derivative of the field in ``y``: ``mean_j D_1 h(y, z_j)``, trailing axis ``d``."""
    mu = _as_measure(mu)
    _check_dims(k, mu)
    yq, single = _queries(y, k.d)
    if isinstance(k, GenericField):
        cols = []
        for l in range(k.d):
            step = np.zeros(k.d)
            step[l] = k.eps
            up = np.asarray(k.fn(yq + step, mu.sorted_atoms, t), dtype=float)
            dn = np.asarray(k.fn(yq - step, mu.sorted_atoms, t), dtype=float)
            cols.append((up - dn) / (2 * k.eps))
        out = np.stack(cols, axis=-1)
    else:
        out = _atom_mean(_pairwise(k.d1h, yq, mu.sorted_atoms, t))
    return out[0] if single else out


def _directional(D, eta):
    """``sum_l D[n, m, ..., l] * eta[n, l, *extra]`` accumulated in index order.

    ``D``: (N, M, *shape, d); ``eta``: (N, d, *extra) -> (N, M, *shape, *extra).
    Small explicit loops keep the arithmetic independent of batch sizes.
    """
    N, M = D.shape[:2]
    shape = D.shape[2:-1]
    extra = eta.shape[2:]
    acc = None
    for l in range(D.shape[-1]):
        a = D[..., l].reshape((N, M) + shape + (1,) * len(extra))
        b = eta[:, l].reshape((N, 1) + (1,) * len(shape) + extra)
        acc = a * b if acc is None else acc + a * b
    return acc


def eval_D2(k, y, mu, direction, t=0.0):
    """Lions derivative of the field in the measure slot along per-atom directions.

    ``direction`` has shape ``(N, d)`` (or ``(N, d, *extra)``); returns
    ``mean_j D_2 h(y, z_j) . eta_j`` with the ``extra`` axes appended.
    """
    mu = _as_measure(mu)
    _check_dims(k, mu)
    eta = np.asarray(direction, dtype=float)
    if eta.ndim == 1 and mu.d == 1:
        eta = eta[:, None]
    if eta.ndim < 2 or eta.shape[0] != mu.N or eta.shape[1] != mu.d:
        raise ValueError(f"need one direction in R^{mu.d} per atom ({mu.N}), got shape {eta.shape}")
    yq, single = _queries(y, k.d)
    atoms, eta = mu.sort_with(eta)
    if isinstance(k, GenericField):
        out = _generic_d2(k, yq, atoms, eta, t)
    else:
        out = _atom_mean(_directional(_pairwise(k.d2h, yq, atoms, t), eta))
    return out[0] if single else out


def _generic_d2(k, yq, atoms, eta, t):
    extra = eta.shape[2:]
    flat = eta.reshape(eta.shape[0], eta.shape[1], -1)
    cols = []
    for c in range(flat.shape[2]):
        step = k.eps * flat[:, :, c]
        up = np.asarray(k.fn(yq, atoms + step, t), dtype=float)
        dn = np.asarray(k.fn(yq, atoms - step, t), dtype=float)
        cols.append((up - dn) / (2 * k.eps))
    out = np.stack(cols, axis=-1)
    return out.reshape(out.shape[:-1] + extra) if extra else out[..., 0]


class MeasureCache:
    """Per-measure quantities shared by every query point within one step.

    ``m[a] = F_f(z_a, mu)`` (the rough coefficient at each atom) is the
    direction of the Lions-derivative term in the second-level coefficient;
    computing it once per measure keeps the whole step at O(N^2).
    """

    def __init__(self, cs, mu, t=0.0):
        self.mu = _as_measure(mu)
        self.t = t
        self.cs = cs
        # m is a function of the atom, so sorting atoms alone orders both consistently
        self.atoms = self.mu.sorted_atoms
        self.directions = eval_field(cs.f, self.atoms, self.mu, t)  # (N, d, e)


def second_level_coeff(cs, y, mu, t=0.0, cache=None):
    """Second-level coefficient ``D F_f [F_f] + F_fprime`` at ``(y, mu)``.

    With ``h = h_f``::

        G[k,a,b] = sum_l (mean_i D1h[k,b,l](y,z_i)) (mean_j h[l,a](y,z_j))
                   + mean_i sum_l D2h[k,b,l](y,z_i) m[l,a](z_i)
                   + mean_j hprime[k,a,b](y,z_j)

    where ``m(z_i) = mean_j h(z_i, z_j)``.  Returns ``(d, e, e)`` or ``(M, d, e, e)``.
    """
    if cache is None:
        cache = MeasureCache(cs, mu, t)
    mu = cache.mu
    yq, single = _queries(y, cs.d)
    fval = eval_field(cs.f, yq, mu, t)  # (M, d, e)
    d1 = eval_D1(cs.f, yq, mu, t)  # (M, d, e, d)
    g = None
    for l in range(cs.d):
        term = d1[:, :, None, :, l] * fval[:, l, None, :, None]  # [m, k, a, b]
        g = term if g is None else g + term
    if isinstance(cs.f, GenericField):
        d2 = _generic_d2(cs.f, yq, cache.atoms, cache.directions, t)  # [m, k, b, a]
    else:
        D = _pairwise(cs.f.d2h, yq, cache.atoms, t)  # (N, M, d, e, d)
        d2 = _atom_mean(_directional(D, cache.directions))  # [m, k, b, a]
    g = g + np.swapaxes(d2, -1, -2)
    g = g + eval_field(cs.fprime, yq, mu, t)
    return g[0] if single else g


def permutation_check(k, y, mu, perm, t=0.0):
    """Discrepancy between the field at ``mu`` and at the permuted measure (exactly 0)."""
    mu = _as_measure(mu)
    a = eval_field(k, y, mu, t)
    b = eval_field(k, y, mu.permuted(perm), t)
    return float(np.max(np.abs(a - b))) if np.size(a) else 0.0


# -- coefficient sets ---------------------------------------------------------

def zero_kernel(d, shape):
    shape = tuple(shape)

    def h(y, z, t):
        return np.zeros(np.broadcast_shapes(y.shape[:-1], z.shape[:-1]) + shape)

    def dh(y, z, t):
        return np.zeros(np.broadcast_shapes(y.shape[:-1], z.shape[:-1]) + shape + (d,))

    return Kernel(h, dh, dh, d, shape, 0.0, "zero")


@dataclass(frozen=True, eq=False)
class CoefficientSet:
    """Kernels for drift ``b``, Brownian coefficient ``sigma``, rough coefficient ``f``
    and its Gubinelli-type companion ``fprime`` (zero by default)."""

    b: object
    sigma: object
    f: object
    fprime: object = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        d = self.b.d
        if tuple(self.b.shape) != (d,):
            raise ValueError(f"b must have shape ({d},), got {self.b.shape}")
        if len(self.sigma.shape) != 2 or self.sigma.shape[0] != d:
            raise ValueError(f"sigma must have shape ({d}, ebar), got {self.sigma.shape}")
        if len(self.f.shape) != 2 or self.f.shape[0] != d:
            raise ValueError(f"f must have shape ({d}, e), got {self.f.shape}")
        e = self.f.shape[1]
        fp = self.fprime if self.fprime is not None else zero_kernel(d, (d, e, e))
        if tuple(fp.shape) != (d, e, e):
            raise ValueError(f"fprime must have shape ({d}, {e}, {e}), got {fp.shape}")
        for k in (self.sigma, self.f, fp):
            if k.d != d:
                raise ValueError(f"kernel '{k.name}' acts on d={k.d}, expected {d}")
        object.__setattr__(self, "fprime", fp)

    @property
    def d(self):
        return self.b.d

    @property
    def e(self):
        return self.f.shape[1]

    @property
    def ebar(self):
        return self.sigma.shape[1]


# -- built-in kernel library --------------------------------------------------
# Built-ins are h(y, z) = scale * L . phi(y, z) with a componentwise profile
# phi: R^d x R^d -> R^d and a loading tensor L of shape (*shape, d).

def _profile_mean_shift(y, z):
    zz = np.broadcast_to(z, np.broadcast_shapes(y.shape, z.shape))
    return zz, np.zeros_like(zz), np.ones_like(zz)


def _profile_constant(y, z):
    s = np.broadcast_shapes(y.shape, z.shape)
    return np.ones(s), np.zeros(s), np.zeros(s)


def _profile_smooth_attract(y, z):
    th = np.tanh(z - y)
    sech2 = 1.0 - th * th
    return th, -sech2, sech2


def _profile_product_sin(y, z):
    sy, sz = np.sin(y), np.sin(z)
    return sy * sz, np.cos(y) * sz, sy * np.cos(z)


def _profile_tanh_z(y, z):
    th = np.broadcast_to(np.tanh(z), np.broadcast_shapes(y.shape, z.shape))
    return th, np.zeros_like(th), 1.0 - th * th


def _profile_linear_y(y, z):
    yy = np.broadcast_to(y, np.broadcast_shapes(y.shape, z.shape))
    return yy, np.ones_like(yy), np.zeros_like(yy)


# name -> (profile, sup |phi| or None when unbounded)
KERNELS = {
    "mean_shift": (_profile_mean_shift, None),
    "constant": (_profile_constant, 1.0),
    "smooth_attract": (_profile_smooth_attract, 1.0),
    "product_sin": (_profile_product_sin, 1.0),
    "tanh_z": (_profile_tanh_z, 1.0),
    "linear_y": (_profile_linear_y, None),
}


def default_loading(d, shape):
    """``L[k, ..., l] = delta_{kl}``: every column of the codomain carries the profile."""
    shape = tuple(shape)
    L = np.zeros(shape + (d,))
    idx = np.ndindex(*shape[1:]) if len(shape) > 1 else [()]
    for rest in idx:
        for k in range(d):
            L[(k,) + tuple(rest) + (k,)] = 1.0
    return L


def make_kernel(name, d, shape, scale=1.0, loading=None, offset=None):
    """Build a library kernel.

    ``offset`` (codomain-shaped) is added to ``h``; it shifts the field without
    changing derivatives.
    """
    if name == "zero":
        return zero_kernel(d, shape)
    if name not in KERNELS:
        raise KeyError(f"unknown kernel id '{name}' (known: {sorted(KERNELS) + ['zero']})")
    profile, sup = KERNELS[name]
    shape = tuple(int(s) for s in shape)
    L = default_loading(d, shape) if loading is None else np.asarray(loading, dtype=float)
    if L.shape != shape + (d,):
        raise ValueError(f"loading for '{name}' must have shape {shape + (d,)}, got {L.shape}")
    L = scale * L
    off = np.zeros(shape) if offset is None else np.broadcast_to(np.asarray(offset, dtype=float), shape)
    nax = len(shape)

    def _load(phi):
        lead = phi.shape[:-1] + (1,) * nax
        acc = phi[..., 0].reshape(lead) * L[..., 0]
        for l in range(1, d):
            acc = acc + phi[..., l].reshape(lead) * L[..., l]
        return acc

    def h(y, z, t=0.0):
        return _load(profile(y, z)[0]) + off

    def _deriv(slot):
        def dh(y, z, t=0.0):
            dphi = profile(y, z)[slot]
            # componentwise profile: D h[..., c, l] = L[c, l] * dphi_l
            return L * dphi.reshape(dphi.shape[:-1] + (1,) * nax + dphi.shape[-1:])
        return dh

    bound = np.inf if sup is None else float(np.linalg.norm(L.reshape(-1, d), ord=2) * sup * np.sqrt(d)
                                             + np.linalg.norm(off))
    return Kernel(h, _deriv(1), _deriv(2), d, shape, bound, name)
