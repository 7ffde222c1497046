"""Annealed block tables and crossing-time estimates.

Monte Carlo runs average exact per-environment solves. Environment ``i``
is a pure function of ``(master_seed, i)``, so every column of a block table
and every shifted potential sees the same environments (common random
numbers). An optional importance-sampling :class:`~crossing_lab.potential.Proposal`
reweights environments; plain averaging degenerates when the annealed
measure concentrates on atypical environments.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import _rng
from ._parallel import map_chunks
from .localtime import block_weights
from .potential import PotentialDistribution, Proposal, draw_batch, log_mgf
from .quenched import log_weights, path_statistics, sweep

__all__ = [
    "McEstimate",
    "BlockTable",
    "CrossingEstimate",
    "block_table_mc",
    "block_table_exact",
    "crossing_time_mc",
    "localtime_weight",
    "fit_proposal",
    "block_batch",
    "window_batch",
    "EXACT_BUDGET",
]

EXACT_BUDGET = 10**7


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n_samples: int
    master_seed: int
    ess: float | None = None
    n_excluded: int = 0

    def __float__(self):
        return float(self.mean)


@dataclass
class BlockTable:
    """Annealed ``Z_{0,r}`` and time weights ``A(r)`` for ``r = 1..R``."""

    R: int
    z0: np.ndarray
    a: np.ndarray
    z0_stderr: np.ndarray
    a_stderr: np.ndarray
    mode: str
    n_envs: int | None = None
    master_seed: int | None = None
    ess: float | None = None

    @property
    def r(self) -> np.ndarray:
        return np.arange(1, self.R + 1)

    def truncate(self, R: int) -> "BlockTable":
        if not 1 <= R <= self.R:
            raise ValueError(f"cannot truncate R={self.R} table to {R}")
        return BlockTable(
            R, self.z0[:R].copy(), self.a[:R].copy(), self.z0_stderr[:R].copy(),
            self.a_stderr[:R].copy(), self.mode, self.n_envs, self.master_seed, self.ess,
        )

    def to_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["r", "z0", "z0_stderr", "a", "a_stderr"])
        for i in range(self.R):
            w.writerow([i + 1, repr(float(self.z0[i])), repr(float(self.z0_stderr[i])),
                        repr(float(self.a[i])), repr(float(self.a_stderr[i]))])

    @classmethod
    def from_csv(cls, fh, mode="mc") -> "BlockTable":
        rows = list(csv.DictReader(fh))
        if not rows:
            raise ValueError("empty block table")
        col = lambda k: np.array([float(row[k]) for row in rows])
        r = col("r").astype(int)
        if not np.array_equal(r, np.arange(1, len(rows) + 1)):
            raise ValueError("block table rows must be r = 1..R in order")
        return cls(len(rows), col("z0"), col("a"), col("z0_stderr"), col("a_stderr"), mode)


def block_batch(V):
    """Per-environment block solves for every ``r = 1..R`` at once.

    ``V`` has shape ``(n, R)`` (sites ``0..R-1``). Returns ``log z`` and the
    conditioned mean crossing time ``t0/z``, both ``(n, R)``. The elimination
    runs from the fixed left boundary, so one sweep serves every target.
    """
    V = np.atleast_2d(np.asarray(V, dtype=float))
    n, R = V.shape
    lw = log_weights(V)
    log_a, c, _ = sweep(lw[:, 1:])
    log_h1 = np.concatenate([np.zeros((n, 1)), np.cumsum(log_a, axis=1)], axis=1)
    u1 = np.concatenate([np.zeros((n, 1)), np.cumsum(c, axis=1)], axis=1)
    return lw[:, :1] + log_h1, 1.0 + u1


def window_batch(V, W):
    """Window solves with boundary at ``-W`` for every target ``1..y``.

    ``V`` covers sites ``-W..y-1`` (shape ``(n, W + y)``). Returns ``log z``
    and conditioned mean time ``t0/z`` for targets ``1..y``.
    """
    V = np.atleast_2d(np.asarray(V, dtype=float))
    log_a, c, _ = sweep(log_weights(V[:, 1:]))
    # columns of log_a are sites -W+1 .. y-1; site 0 sits at column W-1
    right = slice(W - 1, None)
    return np.cumsum(log_a[:, right], axis=1), np.cumsum(c[:, right], axis=1)


def _logmeanexp(x, axis=0):
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return np.squeeze(m, axis) + np.log(np.mean(np.exp(x - m), axis=axis))


def _ess(logw):
    logw = np.asarray(logw)
    if not np.any(np.isfinite(logw)):
        return 0.0
    w = np.exp(logw - np.max(logw))
    return float(w.sum() ** 2 / np.sum(w * w))


# ----------------------------------------------------------------------------
# importance sampling


def fit_proposal(
    dist: PotentialDistribution,
    kind: str,
    size: int,
    master_seed: int,
    n_pilot: int = 4000,
    rounds: int = 10,
    W: int = 64,
    smoothing: float = 0.7,
) -> Proposal | None:
    """Cross-entropy fit of a product proposal on sites ``0..size-1``.

    ``kind`` is ``"block"`` (score ``Z^w_{0,size}``) or ``"window"`` (score
    ``Z^w_size`` with the boundary at ``-W``). Pilot environments use
    reserved indices so they never overlap a production run. Returns ``None``
    for degenerate laws.
    """
    if dist.n_atoms == 1:
        return None
    region = (0, size - 1)
    if dist.p_inf > 0:
        probs = np.array(Proposal.open_path(dist, *region).probs)
    else:
        probs = dist.probs.copy()
    finite = ~np.isinf(dist.values)
    for rnd in range(rounds):
        prop = Proposal(region[0], region[1], tuple(probs))
        idx = np.array([_rng.pilot_index(rnd, k) for k in range(n_pilot)], dtype=np.uint64)
        if kind == "block":
            V, llr = draw_batch(dist, 0, size - 1, master_seed, idx, prop)
            lz, _ = block_batch(V)
            logw = lz[:, -1] + llr
            region_vals = V
        elif kind == "window":
            V, llr = draw_batch(dist, -W, size - 1, master_seed, idx, prop)
            lz, _ = window_batch(V, W)
            logw = lz[:, -1] + llr
            region_vals = V[:, W:]
        else:
            raise ValueError(f"unknown proposal kind {kind!r}")
        if not np.any(np.isfinite(logw)):
            break
        w = np.exp(logw - np.max(logw))
        w /= w.sum()
        freq = np.array([(w * np.mean(region_vals == v, axis=1)).sum() for v in dist.values])
        new = smoothing * freq + (1 - smoothing) * probs
        # keep every finite atom reachable
        new = np.where(finite & (dist.probs > 0), np.maximum(new, 1e-3), new)
        probs = new / new.sum()
    return Proposal(region[0], region[1], tuple(float(p) for p in probs))


def _resolve_proposal(proposal, dist, kind, size, master_seed):
    if isinstance(proposal, str):
        if proposal == "auto":
            return fit_proposal(dist, kind, size, master_seed)
        if proposal == "open":
            return Proposal.open_path(dist, 0, size - 1) if dist.p_inf > 0 else None
        raise ValueError(f"unknown proposal {proposal!r}")
    return proposal


# ----------------------------------------------------------------------------
# block tables


def block_table_mc(
    dist: PotentialDistribution,
    R: int,
    n_envs: int,
    master_seed: int,
    proposal=None,
    workers: int = 1,
) -> BlockTable:
    """Monte Carlo block table; environment ``i`` covers sites ``0..R-1``.

    Stderr is the sample standard deviation of the (importance-weighted)
    per-environment terms over ``sqrt(n_envs)``.
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    if n_envs < 2:
        raise ValueError("n_envs must be >= 2")
    proposal = _resolve_proposal(proposal, dist, "block", R, master_seed)

    def work(idx):
        V, llr = draw_batch(dist, 0, R - 1, master_seed, idx, proposal)
        lz, m = block_batch(V)
        return lz + llr[:, None], m

    parts = map_chunks(work, np.arange(n_envs), workers)
    lzw = np.concatenate([p[0] for p in parts])
    m = np.concatenate([p[1] for p in parts])
    with np.errstate(under="ignore"):
        zw = np.exp(lzw)
    tw = zw * m
    sq = math.sqrt(n_envs)
    return BlockTable(
        R,
        zw.mean(axis=0),
        tw.mean(axis=0),
        zw.std(axis=0, ddof=1) / sq,
        tw.std(axis=0, ddof=1) / sq,
        "mc",
        n_envs,
        master_seed,
        _ess(lzw[:, -1]),
    )


def _enumerate_exact(dist, R, chunk=1 << 15):
    k = dist.n_atoms
    total = k**R
    vals = np.asarray(dist.values)
    logp = np.log(np.asarray(dist.probs))
    acc_z = [[] for _ in range(R)]
    acc_a = [[] for _ in range(R)]
    powers = k ** np.arange(R - 1, -1, -1)
    for start in range(0, total, chunk):
        flat = np.arange(start, min(start + chunk, total))
        digits = (flat[:, None] // powers[None, :]) % k
        V = vals[digits]
        w = np.exp(logp[digits].sum(axis=1))
        lz, m = block_batch(V)
        with np.errstate(under="ignore"):
            z = np.exp(lz)
        pz = w @ z
        pa = w @ (z * m)
        for r in range(R):
            acc_z[r].append(pz[r])
            acc_a[r].append(pa[r])
    z0 = np.array([math.fsum(c) for c in acc_z])
    a = np.array([math.fsum(c) for c in acc_a])
    return z0, a


def block_table_exact(dist: PotentialDistribution, R: int, method: str = "enumerate", budget: int = EXACT_BUDGET) -> BlockTable:
    """Exact annealed block table.

    ``method="enumerate"`` sums over all ``k^R`` environments on ``0..R-1``
    (guarded by ``budget``). ``method="localtime"`` uses the local-time
    transfer matrix and has no environment budget.
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    if method == "enumerate":
        if dist.n_atoms**R > budget:
            raise ValueError(
                f"enumeration needs {dist.n_atoms}^{R} = {dist.n_atoms**R} solves, budget is {budget}"
            )
        z0, a = _enumerate_exact(dist, R)
    elif method == "localtime":
        z0, a = block_weights(dist, R)
    else:
        raise ValueError(f"unknown exact method {method!r}")
    zeros = np.zeros(R)
    return BlockTable(R, z0, a, zeros, zeros.copy(), "exact")


# ----------------------------------------------------------------------------
# crossing times


@dataclass(frozen=True)
class CrossingEstimate:
    """Annealed partition function and conditioned mean crossing time."""

    z: McEstimate
    tau: McEstimate
    log_z: float
    y: int
    kind: str
    W: int | None
    window_tol: float | None
    ess: float
    n_zero: int = 0

    @property
    def tau_per_y(self) -> float:
        return self.tau.mean / self.y


def _window_adaptive(dist, y, master_seed, idx, proposal, tol, w_start, w_max):
    W = w_start
    V, llr = draw_batch(dist, -W, y - 1, master_seed, idx, proposal)
    prev, _ = window_batch(V, W)
    while True:
        W2 = 2 * W
        V, llr = draw_batch(dist, -W2, y - 1, master_seed, idx, proposal)
        lz, m = window_batch(V, W2)
        a, b = prev[:, -1], lz[:, -1]
        ok = np.isfinite(b)
        with np.errstate(invalid="ignore", over="ignore"):
            change = float(np.max(np.abs(np.expm1(a[ok] - b[ok])), initial=0.0))
        if change < tol or W2 >= w_max:
            return lz, m, llr, W2, change
        prev, W = lz, W2


BATCH_W_MAX = 1 << 12


def sample_window_logz(dist, y, master_seed, idx, proposal=None, W=None, tol=1e-10, w_start=16, w_max=BATCH_W_MAX):
    """``log z``, ``t0/z`` (for targets ``1..y``) and ``log_lr`` for a chunk of environments.

    Returns ``(log_z, mean_time, log_lr, W, change)``. With ``W=None`` the
    window doubles until ``z`` moves by less than ``tol``, capped at
    ``w_max`` sites (``change`` reports what was reached; laws without
    killing converge only algebraically in ``W``).
    """
    if W is None:
        return _window_adaptive(dist, y, master_seed, idx, proposal, tol, w_start, w_max)
    V, llr = draw_batch(dist, -W, y - 1, master_seed, idx, proposal)
    lz, m = window_batch(V, W)
    return lz, m, llr, W, None


def _ratio_estimate(logw, m, n, seed):
    """Ratio ``sum w m / sum w`` with delta-method stderr, from log weights."""
    ok = np.isfinite(logw)
    if not np.any(ok):
        raise ValueError("every sampled environment has zero weight")
    shift = np.max(logw[ok])
    w = np.where(ok, np.exp(np.where(ok, logw, 0.0) - shift), 0.0)
    x = np.where(ok, w * m, 0.0)
    ratio = x.sum() / w.sum()
    resid = x - ratio * w
    se = math.sqrt(np.sum(resid**2)) / w.sum() * math.sqrt(n / max(n - 1, 1))
    mean_w = w.mean()
    se_w = w.std(ddof=1) / math.sqrt(n)
    log_mean = shift + math.log(mean_w)
    return ratio, se, log_mean, se_w / mean_w if mean_w > 0 else math.inf


def crossing_time_mc(
    dist: PotentialDistribution,
    y: int,
    W: int | None = None,
    n_envs: int = 1000,
    master_seed: int = 0,
    kind: str = "window",
    proposal=None,
    tol: float = 1e-10,
    workers: int = 1,
) -> CrossingEstimate:
    """Annealed ``Z`` and ``E_Q tau_y`` as a ratio of environment averages.

    ``kind="window"`` targets ``Q_y`` (absorbing boundary at ``-W``;
    ``W=None`` doubles from 16 until ``z`` moves by less than ``tol``).
    ``kind="block"`` targets ``Q_{0,y}`` (no return to the origin).
    """
    if y < 1:
        raise ValueError("y must be >= 1")
    if kind not in ("window", "block"):
        raise ValueError(f"unknown kind {kind!r}")
    proposal = _resolve_proposal(proposal, dist, kind, y, master_seed)

    if kind == "block":
        def work(idx):
            V, llr = draw_batch(dist, 0, y - 1, master_seed, idx, proposal)
            lz, m = block_batch(V)
            return lz[:, -1] + llr, m[:, -1], None, None
    else:
        def work(idx):
            lz, m, llr, W_used, change = sample_window_logz(dist, y, master_seed, idx, proposal, W, tol)
            return lz[:, -1] + llr, m[:, -1], W_used, change

    parts = map_chunks(work, np.arange(n_envs), workers)
    logw = np.concatenate([p[0] for p in parts])
    m = np.concatenate([p[1] for p in parts])
    n_zero = int(np.sum(~np.isfinite(logw)))
    ratio, se, log_mean, rel_se_z = _ratio_estimate(logw, m, n_envs, master_seed)
    z_mean = math.exp(log_mean)
    W_used = max((p[2] for p in parts), default=None) if kind == "window" else None
    tol_used = max((p[3] for p in parts if p[3] is not None), default=None) if kind == "window" else None
    return CrossingEstimate(
        McEstimate(z_mean, z_mean * rel_se_z, n_envs, master_seed, _ess(logw)),
        McEstimate(ratio, se, n_envs, master_seed, _ess(logw)),
        log_mean,
        y,
        kind,
        W_used,
        tol_used,
        _ess(logw),
        n_zero,
    )


def localtime_weight(path, dist: PotentialDistribution) -> float:
    """Environment-averaged weight ``exp(-sum_x Lambda_V(l(x)))`` of one path."""
    local_times, _, _ = path_statistics(path)
    if not local_times:
        return 1.0
    ell = np.array(list(local_times.values()), dtype=float)
    total = float(np.sum(log_mgf(dist, ell)))
    return math.exp(-total)
