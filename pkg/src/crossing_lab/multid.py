"""Killed walk on boxes in d >= 2 and the empty-cube decomposition.

On a box ``B`` with absorbing exterior the survival weight solves
``h(x) = w(x) sum_{x' ~ x} h(x')`` with ``w = exp(-V) / (2d)``, ``h = 0``
outside ``B`` and ``h(y) = 1``; the time-weighted companion ``t`` solves the
same system with source ``w(x) sum_{x' ~ x} h(x')``. Both share one sparse
LU factorization.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import ndimage

from . import _rng
from ._parallel import map_chunks
from .annealed import _ess, _ratio_estimate
from .potential import PotentialDistribution, sample_values

__all__ = [
    "BoxSolve",
    "ScanTable",
    "CubeDecomposition",
    "box_solve",
    "sample_box",
    "ballisticity_scan",
    "cube_decompose",
    "pool_histograms",
    "histogram_decreasing",
    "write_histogram_csv",
]


@dataclass(frozen=True)
class BoxSolve:
    """Survival weights ``h`` and time weights ``t`` on a box.

    Arrays are indexed like ``values``; site ``x`` lives at ``x - lo``.
    """

    d: int
    lo: tuple
    target: tuple
    h: np.ndarray = field(repr=False)
    t: np.ndarray = field(repr=False)
    z: float
    t0: float
    values: np.ndarray = field(repr=False)

    @property
    def shape(self):
        return self.values.shape

    @property
    def hi(self):
        return tuple(l + s - 1 for l, s in zip(self.lo, self.shape))

    @property
    def mean_time(self) -> float | None:
        return self.t0 / self.z if self.z > 0 else None

    def _idx(self, site):
        return tuple(int(s) - l for s, l in zip(site, self.lo))

    def h_at(self, site) -> float:
        return float(self.h[self._idx(site)])

    def residual(self) -> float:
        """Max relative residual of the harmonic identity at non-target box sites."""
        w = np.exp(-self.values) / (2 * self.d)
        nb = _neighbour_sum(self.h)
        rhs = w * nb
        mask = np.ones(self.shape, bool)
        mask[self._idx(self.target)] = False
        scale = np.maximum(np.abs(self.h), np.abs(rhs))
        with np.errstate(invalid="ignore", divide="ignore"):
            r = np.where(mask & (scale > 0), np.abs(self.h - rhs) / scale, 0.0)
        return float(r.max())


def _neighbour_sum(a):
    """Sum over the ``2d`` lattice neighbours, zero outside the array."""
    out = np.zeros_like(a)
    for ax in range(a.ndim):
        sl_lo = [slice(None)] * a.ndim
        sl_hi = [slice(None)] * a.ndim
        sl_lo[ax] = slice(0, -1)
        sl_hi[ax] = slice(1, None)
        out[tuple(sl_lo)] += a[tuple(sl_hi)]
        out[tuple(sl_hi)] += a[tuple(sl_lo)]
    return out


def _adjacency(shape):
    """Sparse nearest-neighbour adjacency of a box (C order)."""
    n = int(np.prod(shape))
    idx = np.arange(n).reshape(shape)
    rows, cols = [], []
    for ax in range(len(shape)):
        a = np.take(idx, np.arange(shape[ax] - 1), axis=ax).ravel()
        b = np.take(idx, np.arange(1, shape[ax]), axis=ax).ravel()
        rows += [a, b]
        cols += [b, a]
    rows = np.concatenate(rows) if rows else np.array([], int)
    cols = np.concatenate(cols) if cols else np.array([], int)
    return sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))


def box_solve(values, lo, y, start=None, method: str = "direct", rtol: float = 1e-10, maxiter: int = 10**5) -> BoxSolve:
    """Exact killed-walk solve on the box ``lo + [0, values.shape)``.

    ``y`` is the target site and ``start`` the starting site (default the
    origin); both must lie in the box. ``method="direct"`` factors the
    operator with sparse LU; ``"iterative"`` uses BiCGSTAB to ``rtol``.
    The iterative residual is relative to the whole right-hand side, so an
    exponentially small ``z`` is only resolved by the direct method.
    """
    values = np.asarray(values, dtype=float)
    d = values.ndim
    lo = tuple(int(v) for v in np.atleast_1d(lo))
    y = tuple(int(v) for v in np.atleast_1d(y))
    start = tuple([0] * d) if start is None else tuple(int(v) for v in np.atleast_1d(start))
    if len(lo) != d or len(y) != d or len(start) != d:
        raise ValueError("lo, y and start must have the box dimension")
    if d not in (1, 2, 3):
        raise ValueError("box_solve supports d = 1, 2, 3")
    shape = values.shape
    iy = tuple(a - b for a, b in zip(y, lo))
    i0 = tuple(a - b for a, b in zip(start, lo))
    for i, s in ((iy, "target"), (i0, "start")):
        if any(not 0 <= k < n for k, n in zip(i, shape)):
            raise ValueError(f"{s} outside the box")
    if np.any(np.isnan(values)) or np.any(values < 0):
        raise ValueError("potential values must be >= 0 or inf")
    n = values.size
    ty = np.ravel_multi_index(iy, shape)
    w = (np.exp(-values) / (2 * d)).ravel()
    A0 = _adjacency(shape)
    # h(y) = 1 is known: move its column to the right-hand side
    b = w * A0[:, ty].toarray().ravel()
    A = A0.tolil()
    A[:, ty] = 0
    A = A.tocsr()
    M = (sp.identity(n, format="csr") - sp.diags(w) @ A).tolil()
    M[ty, :] = 0
    M[ty, ty] = 1.0
    b[ty] = 0.0
    M = M.tocsc()
    if method == "direct":
        lu = spla.splu(M)
        solve = lu.solve
    elif method == "iterative":
        def solve(rhs):
            x, info = spla.bicgstab(M, rhs, rtol=rtol, atol=0.0, maxiter=maxiter)
            if info != 0:
                raise RuntimeError(f"iterative solve did not converge (info={info})")
            return x
    else:
        raise ValueError(f"unknown method {method!r}")
    hv = solve(b)
    hv[ty] = 0.0
    hv = np.maximum(hv, 0.0)
    h_full = hv.copy()
    h_full[ty] = 1.0
    src = w * (A0 @ h_full)
    src[ty] = 0.0
    tv = np.maximum(solve(src), 0.0)
    tv[ty] = 0.0
    h = h_full.reshape(shape)
    t = tv.reshape(shape)
    z = float(h[i0])
    t0 = float(t[i0]) if z > 0 else 0.0
    return BoxSolve(d, lo, y, h, t, z, t0, values)


def sample_box(dist: PotentialDistribution, lo, shape, master_seed: int, env_index: int) -> np.ndarray:
    """Potential values on a box; a pure function of ``(master_seed, env_index, shape)``.

    The box origin does not enter the draw: boxes of one shape index the
    same uniforms in C order.
    """
    u = _rng.box_uniforms(master_seed, env_index, shape)
    v, _ = sample_values(dist, u)
    return v


@dataclass
class ScanTable:
    ys: list
    ratio: np.ndarray
    stderr: np.ndarray
    ess: np.ndarray
    n_envs: int
    master_seed: int
    margin: list
    direction: tuple

    def top_octave_increase(self) -> float:
        """``ratio(y_max) / ratio(y_max / 2) - 1`` (interpolated in ``log y``)."""
        ys = np.asarray(self.ys, float)
        y_half = ys[-1] / 2
        if y_half < ys[0]:
            raise ValueError("scan does not span an octave")
        r_half = np.interp(np.log(y_half), np.log(ys), self.ratio)
        return float(self.ratio[-1] / r_half - 1.0)

    def to_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["y", "ratio", "stderr", "ess"])
        for row in zip(self.ys, self.ratio, self.stderr, self.ess):
            w.writerow([int(row[0])] + [repr(float(x)) for x in row[1:]])

    def summary(self) -> dict:
        return {
            "ys": list(self.ys),
            "ratio": [float(x) for x in self.ratio],
            "stderr": [float(x) for x in self.stderr],
            "ess": [float(x) for x in self.ess],
            "n_envs": self.n_envs,
            "master_seed": self.master_seed,
            "margin": list(self.margin),
            "direction": list(self.direction),
            "top_octave_increase": self.top_octave_increase() if len(self.ys) > 1 and self.ys[-1] >= 2 * self.ys[0] else None,
        }


def ballisticity_scan(
    dist: PotentialDistribution,
    direction=(1, 0),
    ys=(10, 14, 20, 28, 40),
    box_margin=None,
    n_envs: int = 200,
    master_seed: int = 0,
    workers: int = 1,
    method: str = "direct",
) -> ScanTable:
    """``E_{Q_y} tau_y / |y|_1`` for ``y = k * direction``, ``k`` in ``ys`` (d = 2).

    The box spans ``margin`` sites beyond the segment ``[0, y]`` in every
    coordinate (default ``2 |y|_1``). The annealed mean is the ratio
    ``E[t0] / E[z]`` over environments.
    """
    direction = tuple(int(v) for v in direction)
    if len(direction) != 2:
        raise ValueError("ballisticity_scan runs in d = 2")
    ys = sorted(int(k) for k in ys)
    ratio, stderr, ess, margins = [], [], [], []
    for k in ys:
        y = np.array(direction) * k
        norm = int(np.abs(y).sum())
        m = 2 * norm if box_margin is None else int(box_margin)
        lo = np.minimum(y, 0) - m
        hi = np.maximum(y, 0) + m
        shape = tuple(int(v) for v in hi - lo + 1)

        def work(idx, lo=lo, y=y, shape=shape):
            lz = np.empty(idx.size)
            mt = np.empty(idx.size)
            for j, i in enumerate(idx):
                s = box_solve(sample_box(dist, lo, shape, master_seed, int(i)), lo, y, method=method)
                lz[j] = math.log(s.z) if s.z > 0 else -math.inf
                mt[j] = s.mean_time if s.z > 0 else 0.0
            return lz, mt

        parts = map_chunks(work, np.arange(n_envs), workers, chunk=16)
        logw = np.concatenate([p[0] for p in parts])
        mt = np.concatenate([p[1] for p in parts])
        r, se, _, _ = _ratio_estimate(logw, mt, n_envs, master_seed)
        ratio.append(r / norm)
        stderr.append(se / norm)
        ess.append(_ess(logw))
        margins.append(m)
    return ScanTable(ys, np.array(ratio), np.array(stderr), np.array(ess), n_envs, master_seed, margins, direction)


@dataclass
class CubeDecomposition:
    """Occupied / empty cubes ``B(q) = L q + [-L/2, L/2)^d`` and empty components."""

    L: int
    kappa: float
    q_lo: tuple
    occupied: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    sizes: np.ndarray
    censored: np.ndarray

    @property
    def n_components(self) -> int:
        return int(self.sizes.size)

    def occupied_set(self) -> set:
        return {tuple(int(a + b) for a, b in zip(q, self.q_lo)) for q in np.argwhere(self.occupied)}

    def component_of(self, q) -> int:
        """Size ``|D|`` of the empty component containing cube ``q`` (0 if occupied)."""
        lab = self.labels[tuple(a - b for a, b in zip(q, self.q_lo))]
        return int(self.sizes[lab - 1]) if lab else 0

    def histogram(self, include_censored: bool = False) -> dict:
        s = self.sizes if include_censored else self.sizes[~self.censored]
        vals, counts = np.unique(s, return_counts=True)
        return {int(v): int(c) for v, c in zip(vals, counts)}


def cube_decompose(values, lo, L: int, kappa: float, target=None) -> CubeDecomposition:
    """Label cubes occupied when ``max V >= kappa`` over their sites (target excluded).

    ``values`` lives on ``lo + [0, shape)``; the box must be a union of whole
    cubes, i.e. ``lo = L q0 - L/2`` and every side a multiple of ``L``. Empty
    cubes are grouped into components by face adjacency; a component is
    censored when it touches the edge of the sampled region.
    """
    values = np.asarray(values, dtype=float)
    d = values.ndim
    lo = tuple(int(v) for v in np.atleast_1d(lo))
    if L < 2 or L % 2:
        raise ValueError("cube side L must be even and >= 2")
    if len(lo) != d:
        raise ValueError("lo must have the box dimension")
    if any(s % L for s in values.shape) or any((l + L // 2) % L for l in lo):
        raise ValueError("box must be a union of whole cubes B(q)")
    v = values.copy()
    if target is not None:
        it = tuple(int(a) - b for a, b in zip(np.atleast_1d(target), lo))
        if all(0 <= k < n for k, n in zip(it, v.shape)):
            v[it] = -math.inf
    nq = tuple(s // L for s in v.shape)
    blocks = v.reshape(sum(((n, L) for n in nq), ()))
    cube_max = blocks.max(axis=tuple(range(1, 2 * d, 2)))
    occupied = cube_max >= kappa
    labels, n = ndimage.label(~occupied)
    sizes = np.bincount(labels.ravel(), minlength=n + 1)[1:]
    edge = np.zeros(occupied.shape, bool)
    for ax in range(d):
        sl = [slice(None)] * d
        sl[ax] = 0
        edge[tuple(sl)] = True
        sl[ax] = -1
        edge[tuple(sl)] = True
    touching = np.unique(labels[edge & (labels > 0)])
    censored = np.zeros(n, bool)
    censored[touching - 1] = True
    q_lo = tuple((l + L // 2) // L for l in lo)
    return CubeDecomposition(L, float(kappa), q_lo, occupied, labels, sizes, censored)


def pool_histograms(decomps, include_censored: bool = False) -> dict:
    out: dict[int, int] = {}
    for dc in decomps:
        for k, c in dc.histogram(include_censored).items():
            out[k] = out.get(k, 0) + c
    return dict(sorted(out.items()))


def histogram_decreasing(hist: dict, min_count: int = 1) -> bool:
    """Counts strictly decreasing in size over sizes ``1..N`` with ``count >= min_count``.

    Sizes are taken as a contiguous run from 1, stopping at the first size
    whose count falls below ``min_count``.
    """
    counts = []
    N = 1
    while hist.get(N, 0) >= min_count and hist.get(N, 0) > 0:
        counts.append(hist[N])
        N += 1
    return len(counts) >= 1 and all(a > b for a, b in zip(counts, counts[1:]))


def write_histogram_csv(hist: dict, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["size", "count"])
    for k, c in sorted(hist.items()):
        w.writerow([k, c])
