"""Lyapunov exponents from window partition functions.

``beta_slope`` is the annealed exponent ``-log E z / y``; ``alpha_quenched``
the quenched one, ``E(-log z) / y``. ``derivative_at_zero`` evaluates the
annealed exponent of the shifted law ``lambda + V`` along a grid with the
same environments at every ``lambda`` and differentiates at ``0+``.

Standard errors of log-means come from a grouped jackknife.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from ._parallel import map_chunks
from .annealed import McEstimate, _ess, _resolve_proposal, sample_window_logz
from .potential import PotentialDistribution

__all__ = [
    "ExponentCurve",
    "beta_slope",
    "alpha_quenched",
    "derivative_at_zero",
    "constant_beta",
    "constant_beta_derivative",
    "jackknife_groups",
]

MIN_Y = 32
N_GROUPS = 100


def constant_beta(lam):
    """Exponent of the constant potential ``lam``: ``arccosh(exp(lam))``."""
    return np.arccosh(np.exp(np.asarray(lam, dtype=float)))


def constant_beta_derivative(lam0):
    """``d/dlam arccosh(exp(lam0 + lam))`` at ``lam = 0``."""
    e = math.exp(lam0)
    return e / math.sqrt(e * e - 1.0)


def jackknife_groups(n: int, groups: int = N_GROUPS):
    """Contiguous index groups for the delete-a-group jackknife."""
    return np.array_split(np.arange(n), min(groups, n))


def _jackknife(stat, logw):
    """Value and jackknife stderr of ``stat(log mean w per column)``.

    ``logw`` is ``(n, k)``; ``stat`` maps a length-``k`` vector of log-means
    to a scalar or vector.
    """
    logw = np.atleast_2d(logw)
    n = logw.shape[0]
    finite = np.isfinite(logw)
    shift = np.where(finite.any(axis=0), np.max(np.where(finite, logw, -np.inf), axis=0), 0.0)
    w = np.where(finite, np.exp(np.where(finite, logw, 0.0) - shift), 0.0)
    total = w.sum(axis=0)
    if np.any(total <= 0):
        raise ValueError("mean z = 0: every environment has zero weight")
    full = np.asarray(stat(shift + np.log(total / n)), dtype=float)
    idx = jackknife_groups(n)
    G = len(idx)
    reps = []
    with np.errstate(divide="ignore"):
        for g in idx:
            s = total - w[g].sum(axis=0)
            reps.append(stat(shift + np.log(s / (n - g.size))))
    reps = np.asarray(reps, dtype=float)
    se = np.sqrt((G - 1) / G * np.sum((reps - reps.mean(axis=0)) ** 2, axis=0))
    return full, se


def _check_y(y):
    if y < MIN_Y:
        raise ValueError(f"y must be >= {MIN_Y}, got {y}")


def _window_logs(dist, y, W, n_envs, master_seed, proposal, tol, workers):
    def work(idx):
        lz, _, llr, W_used, _ = sample_window_logz(dist, y, master_seed, idx, proposal, W, tol)
        return lz[:, -1], llr, W_used

    parts = map_chunks(work, np.arange(n_envs), workers)
    lz = np.concatenate([p[0] for p in parts])
    llr = np.concatenate([p[1] for p in parts])
    return lz, llr, max(p[2] for p in parts)


def beta_slope(
    dist: PotentialDistribution,
    y: int,
    W: int | None = None,
    n_envs: int = 1000,
    master_seed: int = 0,
    proposal=None,
    tol: float = 1e-10,
    workers: int = 1,
) -> McEstimate:
    """Annealed exponent ``-log(mean z) / y`` from window solves.

    ``W=None`` grows the window per chunk until ``z`` is stable to ``tol``.
    ``proposal`` is ``None``, ``"auto"`` (cross-entropy fit), ``"open"`` or
    a :class:`~crossing_lab.potential.Proposal`.
    """
    _check_y(y)
    proposal = _resolve_proposal(proposal, dist, "window", y, master_seed)
    lz, llr, _ = _window_logs(dist, y, W, n_envs, master_seed, proposal, tol, workers)
    logw = lz + llr
    val, se = _jackknife(lambda lm: -lm[0] / y, logw[:, None])
    return McEstimate(float(val), float(se), n_envs, master_seed, _ess(logw))


def alpha_quenched(
    dist: PotentialDistribution,
    y: int,
    W: int | None = None,
    n_envs: int = 1000,
    master_seed: int = 0,
    tol: float = 1e-10,
    workers: int = 1,
) -> McEstimate:
    """Quenched exponent: mean of ``-log z / y``, environments with ``z = 0`` excluded."""
    _check_y(y)
    lz, _, _ = _window_logs(dist, y, W, n_envs, master_seed, None, tol, workers)
    ok = np.isfinite(lz)
    if not np.any(ok):
        raise ValueError("every environment has z = 0")
    x = -lz[ok] / y
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.inf
    return McEstimate(float(x.mean()), se, n_envs, master_seed, None, int((~ok).sum()))


@dataclass
class ExponentCurve:
    """``beta(lambda)`` along a grid plus the right derivative at ``0``."""

    lambdas: np.ndarray
    betas: np.ndarray
    stderr: np.ndarray
    y_used: int
    right_derivative_at_zero: float
    derivative_stderr: float
    n_envs: int
    master_seed: int
    W_used: int | None = None
    inverse_speed: float | None = None

    def monotone_violations(self, k: float = 2.0) -> int:
        """Grid steps where ``beta`` drops by more than ``k`` combined stderrs."""
        d = np.diff(self.betas)
        s = np.hypot(self.stderr[1:], self.stderr[:-1])
        return int(np.sum(d < -k * s))

    def concavity_violations(self, k: float = 2.0) -> int:
        """Interior points whose divided second difference exceeds ``k`` times its stderr."""
        lam, b, s = self.lambdas, self.betas, self.stderr
        bad = 0
        for i in range(1, lam.size - 1):
            h1, h2 = lam[i] - lam[i - 1], lam[i + 1] - lam[i]
            c = np.array([1 / h1, -(1 / h1 + 1 / h2), 1 / h2])
            second = c @ b[i - 1 : i + 2]
            # CRN makes the errors positively correlated; the independent bound is conservative
            noise = math.sqrt(np.sum((c * s[i - 1 : i + 2]) ** 2))
            bad += int(second > k * noise)
        return bad

    def to_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lambda", "beta", "stderr"])
        for lam, b, s in zip(self.lambdas, self.betas, self.stderr):
            w.writerow([repr(float(lam)), repr(float(b)), repr(float(s))])

    def summary(self) -> dict:
        out = {
            "y_used": self.y_used,
            "n_envs": self.n_envs,
            "master_seed": self.master_seed,
            "W_used": self.W_used,
            "right_derivative_at_zero": self.right_derivative_at_zero,
            "derivative_stderr": self.derivative_stderr,
            "inverse_speed": self.inverse_speed,
            "monotone_violations": self.monotone_violations(),
            "concavity_violations": self.concavity_violations(),
        }
        if self.inverse_speed:
            out["relative_difference"] = abs(self.right_derivative_at_zero - self.inverse_speed) / self.inverse_speed
        return out

    def to_json(self, fh) -> None:
        json.dump(self.summary(), fh, indent=2, sort_keys=True)


def derivative_at_zero(
    dist: PotentialDistribution,
    lambda_grid,
    y: int,
    W: int | None = None,
    n_envs: int = 1000,
    master_seed: int = 0,
    proposal=None,
    tol: float = 1e-10,
    workers: int = 1,
    inverse_speed: float | None = None,
) -> ExponentCurve:
    """``beta_{lambda + V}`` on ``lambda_grid`` and its right derivative at 0.

    Every ``lambda`` reuses the same environments (common random numbers):
    the site uniforms, the proposal and the window chosen at ``lambda = 0``
    are shared, only the potential is shifted. The derivative is the
    one-sided difference at the first grid step ``h0`` refined with the
    second step ``h1``: ``(h1 D(h0) - h0 D(h1)) / (h1 - h0)``.
    """
    _check_y(y)
    lam = np.asarray(sorted(set(float(x) for x in lambda_grid)))
    if lam[0] != 0.0 or np.any(lam < 0):
        raise ValueError("lambda grid must start at 0 and be non-negative")
    if lam.size < 4:
        raise ValueError("lambda grid needs 0 and at least 3 positive points")
    if lam[1] > 0.01:
        raise ValueError(f"smallest step h0 = {lam[1]} must be <= 0.01")
    proposal = _resolve_proposal(proposal, dist, "window", y, master_seed)
    shifted = [dist.shifted(l) for l in lam[1:]]

    def work(idx):
        lz0, _, llr, W_used, _ = sample_window_logz(dist, y, master_seed, idx, proposal, W, tol)
        cols = [lz0[:, -1]]
        for d in shifted:
            lz, *_ = sample_window_logz(d, y, master_seed, idx, proposal, W_used)
            cols.append(lz[:, -1])
        return np.column_stack(cols) + llr[:, None], W_used

    parts = map_chunks(work, np.arange(n_envs), workers)
    logw = np.concatenate([p[0] for p in parts])
    W_used = max(p[1] for p in parts)
    h0, h1 = lam[1], lam[2]

    def stat(lm):
        b = -lm / y
        d0 = (b[1] - b[0]) / h0
        d1 = (b[2] - b[0]) / h1
        return np.concatenate([b, [(h1 * d0 - h0 * d1) / (h1 - h0)]])

    val, se = _jackknife(stat, logw)
    return ExponentCurve(
        lam, val[:-1], se[:-1], y, float(val[-1]), float(se[-1]),
        n_envs, master_seed, W_used, inverse_speed,
    )
