"""Exact one-environment computations for the killed walk in d = 1.

The harmonic system ``h(x) = w(x) (h(x-1) + h(x+1))`` with ``w = exp(-V)/2``
and ``h = 0`` on the left boundary is eliminated from the left:
``h(x) = a(x) h(x+1)`` with ``a(x) = w(x) / (1 - w(x) a(x-1))``. The ratio
``a`` is the probability of reaching ``x+1`` before the boundary, so it stays
in ``[0, 1]`` and ``log h`` is a plain cumulative sum of ``log a``.

The h-transformed chain steps left from ``x`` with probability
``w(x) a(x-1)``. Its expected time to move from ``x`` to ``x+1`` obeys
``c(x) = (1 + w(x) a(x-1) c(x-1)) / (1 - w(x) a(x-1))``, and the
time-weighted vector is ``t(x) = h(x) * sum_{x <= x' < y} c(x')``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from . import _rng
from .potential import Environment, PotentialDistribution, sample_environment

__all__ = [
    "QuenchedSolve",
    "PathSample",
    "solve_block",
    "solve_window",
    "solve_window_adaptive",
    "sample_conditioned_path",
    "path_statistics",
    "write_path_csv",
]

LOG2 = math.log(2.0)


def log_weights(V):
    """``log(exp(-V)/2)``, exact for large ``V`` and ``-inf`` for ``V = inf``."""
    return -np.asarray(V, dtype=float) - LOG2


def sweep(logw):
    """Left-to-right elimination over interior sites.

    ``logw`` has shape ``(..., m)`` and lists the interior sites next to the
    absorbing left boundary. Returns ``(log_a, c, pm)`` of the same shape,
    with ``pm`` the left-step probability of the conditioned chain.
    """
    logw = np.asarray(logw, dtype=float)
    w = np.exp(logw)
    log_a = np.empty_like(logw)
    c = np.empty_like(logw)
    pm = np.empty_like(logw)
    a_prev = np.zeros(logw.shape[:-1])
    c_prev = np.zeros(logw.shape[:-1])
    for j in range(logw.shape[-1]):
        wa = w[..., j] * a_prev
        denom = 1.0 - wa
        log_a[..., j] = logw[..., j] - np.log(denom)
        cj = (1.0 + wa * c_prev) / denom
        c[..., j] = cj
        pm[..., j] = wa
        a_prev = np.exp(log_a[..., j])
        c_prev = cj
    return log_a, c, pm


@dataclass(frozen=True)
class QuenchedSolve:
    """Survival and time-weighted vectors for one environment.

    ``h`` and ``t`` are indexed by site ``lo..hi``; ``hi`` is the target.
    ``kind`` is ``"block"`` (walk confined to ``[0, r]``, no return to 0) or
    ``"window"`` (absorbing boundary at ``lo``, start at 0).
    """

    lo: int
    hi: int
    target: int
    h: np.ndarray = field(repr=False)
    t: np.ndarray = field(repr=False)
    z: float
    t0: float
    log_z: float
    kind: str
    env: Environment = field(repr=False)
    step_left: np.ndarray = field(repr=False)

    @property
    def mean_time(self) -> float | None:
        """Conditioned expected crossing time ``t0 / z``; ``None`` when ``z = 0``."""
        if self.z <= 0:
            return None
        return self.t0 / self.z

    def h_at(self, site: int) -> float:
        return float(self.h[site - self.lo])

    def t_at(self, site: int) -> float:
        return float(self.t[site - self.lo])

    def transition(self, site: int) -> tuple[float, float]:
        """Conditioned (left, right) step probabilities at ``site``."""
        if self.kind == "block" and site == 0:
            return 0.0, 1.0
        pm = float(self.step_left[site - self.lo])
        return pm, 1.0 - pm

    def residuals(self) -> tuple[float, float]:
        """Max relative residual of the ``h`` and ``t`` recursions at interior sites."""
        V = self.env.window(self.lo, self.hi).values
        w = np.exp(-V[1:-1]) / 2.0
        h, t = self.h, self.t
        h_rhs = w * (h[:-2] + h[2:])
        t_rhs = w * (t[:-2] + t[2:] + h[:-2] + h[2:])
        scale_h = np.maximum(np.abs(h[1:-1]), np.abs(h_rhs))
        scale_t = np.maximum(np.abs(t[1:-1]), np.abs(t_rhs))
        with np.errstate(invalid="ignore", divide="ignore"):
            rh = np.where(scale_h > 0, np.abs(h[1:-1] - h_rhs) / scale_h, 0.0)
            rt = np.where(scale_t > 0, np.abs(t[1:-1] - t_rhs) / scale_t, 0.0)
        return float(rh.max(initial=0.0)), float(rt.max(initial=0.0))


def _profiles(log_a, c):
    """``log h`` and ``u = t/h`` on interior sites, target appended (``h=1``)."""
    # h(x) = prod_{x' >= x} a(x'); u(x) = sum_{x' >= x} c(x')
    log_h = np.concatenate([np.cumsum(log_a[::-1])[::-1], [0.0]])
    u = np.concatenate([np.cumsum(c[::-1])[::-1], [0.0]])
    return log_h, u


def solve_block(env: Environment) -> QuenchedSolve:
    """Block solve on ``[0, r]``: walk from 0 that reaches ``r`` before returning to 0."""
    if env.lo != 0:
        raise ValueError(f"block environment must start at site 0, got lo={env.lo}")
    r = env.hi
    if r < 1:
        raise ValueError("block length r must be >= 1")
    V = env.values
    lw0 = float(log_weights(V[0]))
    log_a, c, pm = sweep(log_weights(V[1:r]))
    log_h_int, u_int = _profiles(log_a, c)
    with np.errstate(under="ignore"):
        h = np.concatenate([[0.0], np.exp(log_h_int)])
    u = np.concatenate([[0.0], u_int])
    t = h * u
    # from 0 the first step must go right
    log_z = lw0 + log_h_int[0]
    z = math.exp(log_z) if log_z > -math.inf else 0.0
    t0 = z * (1.0 + u_int[0]) if z > 0 else 0.0
    step_left = np.concatenate([[0.0], pm, [0.0]])
    return QuenchedSolve(0, r, r, h, t, z, t0, log_z, "block", env, step_left)


def solve_window(env: Environment, y: int) -> QuenchedSolve:
    """Window solve on ``[lo, y]`` with ``h(lo) = 0``; start at 0, target ``y``."""
    if env.lo >= 0:
        raise ValueError("window must extend left of 0 (W >= 1)")
    if y < 1:
        raise ValueError("target y must be >= 1")
    if env.hi < y:
        raise ValueError(f"environment ends at {env.hi} < target {y}")
    env = env.window(env.lo, y)
    V = env.values
    log_a, c, pm = sweep(log_weights(V[1:-1]))
    log_h_int, u_int = _profiles(log_a, c)
    with np.errstate(under="ignore"):
        h = np.concatenate([[0.0], np.exp(log_h_int)])
    u = np.concatenate([[0.0], u_int])
    t = h * u
    i0 = -env.lo
    log_z = float(log_h_int[i0 - 1])
    z = math.exp(log_z) if log_z > -math.inf else 0.0
    t0 = float(t[i0]) if z > 0 else 0.0
    step_left = np.concatenate([[0.0], pm, [0.0]])
    return QuenchedSolve(env.lo, y, y, h, t, z, t0, log_z, "window", env, step_left)


def solve_window_adaptive(
    dist: PotentialDistribution,
    y: int,
    master_seed: int,
    env_index: int,
    tol: float = 1e-10,
    w_start: int = 16,
    w_max: int = 1 << 20,
):
    """Double the window until ``z`` changes by less than ``tol`` (relative).

    Returns ``(solve, W, achieved_tol)``. Sites are drawn once per
    ``(master_seed, env_index)`` so enlarging the window never redraws them.
    """
    W = w_start
    prev = solve_window(sample_environment(dist, -W, y, master_seed, env_index), y)
    while True:
        W2 = 2 * W
        cur = solve_window(sample_environment(dist, -W2, y, master_seed, env_index), y)
        if cur.z == 0:
            change = 0.0 if prev.z == 0 else 1.0
        else:
            change = abs(cur.z - prev.z) / cur.z
        if change < tol or W2 >= w_max:
            return cur, W2, change
        prev, W = cur, W2


@dataclass(frozen=True)
class PathSample:
    sites: np.ndarray = field(repr=False)
    tau: int
    local_times: dict = field(repr=False)
    renewal_sites: list = field(repr=False)
    x_y: int | None

    @property
    def target(self) -> int:
        return int(self.sites[-1])


@numba.njit(cache=True)
def _walk_chunk(step_left, lo, pos, target, u, out):
    n = 0
    for k in range(u.shape[0]):
        if pos == target:
            break
        if u[k] < step_left[pos - lo]:
            pos -= 1
        else:
            pos += 1
        out[n] = pos
        n += 1
    return n, pos


def sample_conditioned_path(solve: QuenchedSolve, start: int = 0, seed=0, max_steps=None) -> PathSample:
    """Exact draw from the conditioned path law via the h-transform.

    ``seed`` is an int (keyed stream) or a numpy ``Generator``.
    """
    if not solve.lo <= start <= solve.hi:
        raise ValueError(f"start {start} outside [{solve.lo}, {solve.hi}]")
    block_start = solve.kind == "block" and start == 0
    if not block_start and solve.h_at(start) <= 0:
        raise ValueError(f"h({start}) = 0: no conditioned law from this start")
    if block_start and solve.z <= 0:
        raise ValueError("block weight is zero: no conditioned law")
    if isinstance(seed, np.random.Generator):
        rng = seed
    else:
        rng = _rng.generator(seed, 0, _rng.STREAM_PATHS)
    pieces = [np.array([start], dtype=np.int64)]
    pos = start
    chunk = 4096
    steps = 0
    step_left = np.asarray(solve.step_left, dtype=float)
    while pos != solve.target:
        u = rng.random(chunk)
        buf = np.empty(chunk, dtype=np.int64)
        n, pos = _walk_chunk(step_left, solve.lo, pos, solve.target, u, buf)
        pieces.append(buf[:n])
        steps += n
        if max_steps is not None and steps > max_steps:
            raise RuntimeError(f"path exceeded {max_steps} steps")
        chunk = min(chunk * 2, 1 << 20)
    sites = np.concatenate(pieces)
    return _make_path(sites)


def _make_path(sites) -> PathSample:
    sites = np.asarray(sites, dtype=np.int64)
    lt, ren, xy = _stats(sites)
    return PathSample(sites, int(sites.size - 1), lt, ren, xy)


def _stats(sites):
    y = int(sites[-1])
    before = sites[:-1]
    if before.size:
        lo = int(before.min())
        counts = np.bincount(before - lo)
        local_times = {int(lo + k): int(n) for k, n in enumerate(counts) if n}
    else:
        local_times = {}
    renewal = [x for x in range(0, y + 1) if local_times.get(x, 0) <= 1] if y >= 0 else []
    x_y = renewal[0] if renewal else None
    return local_times, renewal, x_y


def path_statistics(path) -> tuple[dict, list, int | None]:
    """Local times before the final step, renewal sites in ``[0, y]`` and ``X_y``.

    Accepts a :class:`PathSample` or a raw site sequence ending at the target.
    """
    sites = path.sites if isinstance(path, PathSample) else np.asarray(path, dtype=np.int64)
    steps = np.diff(sites)
    if steps.size and np.any(np.abs(steps) != 1):
        raise ValueError("path is not nearest-neighbour")
    return _stats(sites)


def write_path_csv(path: PathSample, fh) -> None:
    writer = csv.writer(fh)
    writer.writerow(["n", "site"])
    for n, s in enumerate(path.sites):
        writer.writerow([n, int(s)])
