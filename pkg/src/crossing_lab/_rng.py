"""Counter-based random streams keyed by ``(master_seed, env_index)``.

Every environment owns a Philox key, so environment ``i`` can be drawn
without generating environments ``0..i-1``. The top counter word selects a
stream, which keeps the uniform attached to a given site independent of the
window that happens to be requested.
"""

import numpy as np

_MASK64 = (1 << 64) - 1

STREAM_RIGHT = 0  # sites 0, 1, 2, ...
STREAM_LEFT = 1  # sites -1, -2, ...
STREAM_BOX = 2  # d >= 2 boxes, C order
STREAM_PATHS = 3

# env indices at or above this offset are reserved for pilot runs
PILOT_OFFSET = 1 << 62


def _as_u64(x):
    x = int(x)
    if x < 0:
        raise ValueError(f"seed and index values must be non-negative, got {x}")
    return x & _MASK64


def generator(master_seed, env_index, stream=0):
    """Return a numpy Generator on the keyed stream ``stream``."""
    key = np.array([_as_u64(master_seed), _as_u64(env_index)], dtype=np.uint64)
    counter = np.array([0, 0, 0, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def site_uniforms(master_seed, env_index, lo, hi):
    """Uniforms for sites ``lo..hi`` (inclusive), fixed per site."""
    if lo > hi:
        raise ValueError(f"empty site range [{lo}, {hi}]")
    parts = []
    if lo < 0:
        n_left = -lo
        left = generator(master_seed, env_index, STREAM_LEFT).random(n_left)
        # left[k] belongs to site -(k+1)
        left = left[::-1]
        parts.append(left[: min(hi, -1) - lo + 1])
    if hi >= 0:
        start = max(lo, 0)
        right = generator(master_seed, env_index, STREAM_RIGHT).random(hi + 1)
        parts.append(right[start:])
    return np.concatenate(parts) if len(parts) > 1 else parts[0]


def site_uniforms_batch(master_seed, indices, lo, hi):
    """Stack :func:`site_uniforms` for many environment indices."""
    indices = np.asarray(indices)
    out = np.empty((indices.size, hi - lo + 1))
    for row, idx in enumerate(indices):
        out[row] = site_uniforms(master_seed, int(idx), lo, hi)
    return out


def box_uniforms(master_seed, env_index, shape):
    return generator(master_seed, env_index, STREAM_BOX).random(tuple(shape))


def pilot_index(round_no, k):
    return PILOT_OFFSET + (int(round_no) << 32) + int(k)
