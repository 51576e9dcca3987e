"""Counter-based random streams.

Every stream is a Philox generator keyed by ``(seed, tag << 32 | index)``, so
the draws of particle ``j`` never depend on how many other particles exist or
in which order streams are created.
"""

import numpy as np

# stream families; the values are part of the reproducibility contract
TAGS = {
    "brownian": 1,  # idiosyncratic noise B, one stream per particle
    "common": 2,  # common noise W, one stream per W-sample
    "initial": 3,  # initial conditions xi, one stream per particle
    "probe": 4,  # diagnostics probes
    "misc": 5,
}

_MASK32 = (1 << 32) - 1


def stream(seed, tag, index=0):
    """Return an independent ``numpy.random.Generator`` for ``(seed, tag, index)``."""
    if seed is None:
        raise ValueError("a seed is required; wall-clock seeding is not supported")
    if isinstance(tag, str):
        tag = TAGS[tag]
    seed = int(seed)
    index = int(index)
    if seed < 0 or index < 0 or index > _MASK32:
        raise ValueError(f"seed and index must be non-negative (index < 2**32), got {seed}, {index}")
    key = np.array([seed & ((1 << 64) - 1), (int(tag) << 32) | index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def brownian_increments(seed, index, dt, dim, tag="brownian", sub_resolution=1):
    """Gaussian increments for one stream on a grid with steps ``dt``.

    Returns an array of shape ``(K, dim)`` when ``sub_resolution == 1`` and
    ``(K, sub_resolution, dim)`` otherwise; sub-step variance is ``dt / R``.
    """
    dt = np.asarray(dt, dtype=float)
    rng = stream(seed, tag, index)
    K = dt.shape[0]
    R = int(sub_resolution)
    z = rng.standard_normal((K, R, dim))
    z *= np.sqrt(dt / R)[:, None, None]
    if R == 1:
        return z[:, 0, :]
    return z
