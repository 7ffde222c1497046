"""Renewal decomposition of the annealed block weights.

A crossing of ``(0, r)`` without return to 0 splits at its first interior
site visited exactly once. Disjoint blocks see disjoint sites, so under the
annealed law the weights factor::

    Z(r) = sum_{s=1}^{r} zbar(s) Z(r - s),                       Z(0) = 1
    A(r) = sum_{s=1}^{r} nbar(s) Z(r - s) + zbar(s) A(r - s),    A(0) = 0

``zbar`` (renewal-free block weight) and ``nbar`` (its time weight) are
recovered by inverting these triangular systems. The exponent ``beta``
normalizes ``q(r) = exp(beta r) zbar(r)`` to a probability kernel, and the
renewal-reward theorem gives ``1/v = sum g q / sum r q`` with
``g = nbar / zbar`` the mean block crossing time.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .annealed import BlockTable

__all__ = [
    "Deconvolution",
    "RenewalKernel",
    "TailCheck",
    "deconvolve_blocks",
    "convolve_blocks",
    "solve_beta",
    "mass_defect",
    "build_kernel",
    "kernel_tail_check",
]

_EPS = np.finfo(float).eps


class Deconvolution(NamedTuple):
    zbar: np.ndarray
    nbar: np.ndarray
    zbar_err: np.ndarray
    nbar_err: np.ndarray
    clamped: tuple


def _input_errors(table: BlockTable):
    if table.mode == "exact":
        # enumeration sums carry a few ulps per entry
        return 64 * _EPS * np.abs(table.z0), 64 * _EPS * np.abs(table.a)
    return np.asarray(table.z0_stderr, float), np.asarray(table.a_stderr, float)


def deconvolve_blocks(table: BlockTable, clamp_factor: float = 10.0) -> Deconvolution:
    """Invert the first-renewal recursions.

    Negative entries are set to 0 when they lie within ``clamp_factor``
    times the propagated error and reported in ``clamped``; anything more
    negative raises ``ValueError``.
    """
    R = table.R
    Z = np.concatenate([[1.0], np.asarray(table.z0, float)])
    A = np.concatenate([[0.0], np.asarray(table.a, float)])
    eZ, eA = _input_errors(table)
    eZ = np.concatenate([[0.0], eZ])
    eA = np.concatenate([[0.0], eA])
    zbar = np.zeros(R + 1)
    nbar = np.zeros(R + 1)
    ezb = np.zeros(R + 1)
    enb = np.zeros(R + 1)
    exact = table.mode == "exact"
    clamped = []
    for r in range(1, R + 1):
        s = np.arange(1, r)
        tz = zbar[s] * Z[r - s]
        zbar[r] = Z[r] - math.fsum(tz)
        tn = np.concatenate([nbar[s] * Z[r - s], zbar[s] * A[r - s]])
        nbar[r] = A[r] - math.fsum(tn)
        if exact:
            ezb[r] = eZ[r] + np.sum(ezb[s] * Z[r - s] + zbar[s] * eZ[r - s]) + 4 * _EPS * (Z[r] + np.sum(np.abs(tz)))
            enb[r] = (eA[r] + np.sum(enb[s] * Z[r - s] + nbar[s] * eZ[r - s] + ezb[s] * A[r - s] + zbar[s] * eA[r - s])
                      + 4 * _EPS * (A[r] + np.sum(np.abs(tn))))
        else:
            ezb[r] = math.sqrt(eZ[r] ** 2 + np.sum((ezb[s] * Z[r - s]) ** 2 + (zbar[s] * eZ[r - s]) ** 2))
            enb[r] = math.sqrt(eA[r] ** 2 + np.sum((enb[s] * Z[r - s]) ** 2 + (nbar[s] * eZ[r - s]) ** 2
                                                   + (ezb[s] * A[r - s]) ** 2 + (zbar[s] * eA[r - s]) ** 2))
        for arr, err, name in ((zbar, ezb, "zbar"), (nbar, enb, "nbar")):
            if arr[r] < 0:
                if -arr[r] <= clamp_factor * err[r]:
                    arr[r] = 0.0
                    clamped.append((name, r))
                else:
                    raise ValueError(
                        f"{name}({r}) = {arr[r]:.3e} is negative beyond {clamp_factor}x its error {err[r]:.3e}"
                    )
    return Deconvolution(zbar[1:], nbar[1:], ezb[1:], enb[1:], tuple(clamped))


def convolve_blocks(zbar, nbar):
    """Forward recursions: ``(zbar, nbar) -> (Z_{0,r}, A(r))`` for ``r = 1..R``."""
    zbar = np.asarray(zbar, float)
    nbar = np.asarray(nbar, float)
    R = zbar.size
    zb = np.concatenate([[0.0], zbar])
    nb = np.concatenate([[0.0], nbar])
    Z = np.zeros(R + 1)
    A = np.zeros(R + 1)
    Z[0] = 1.0
    for r in range(1, R + 1):
        s = np.arange(1, r + 1)
        Z[r] = math.fsum(zb[s] * Z[r - s])
        A[r] = math.fsum(np.concatenate([nb[s] * Z[r - s], zb[s] * A[r - s]]))
    return Z[1:], A[1:]


def _log_F(beta, log_zbar, r):
    return logsumexp(beta * r + log_zbar)


def solve_beta(zbar, R: int | None = None, beta_cap: float = 1e3) -> float:
    """Root ``beta >= 0`` of ``sum_{r <= R} exp(beta r) zbar(r) = 1``.

    Returns 0 when the truncated kernel already has mass ``>= 1`` at
    ``beta = 0``. Raises ``ValueError`` when ``zbar(1) <= 0`` or the bracket
    cap is reached.
    """
    zbar = np.asarray(zbar, float)
    if R is not None:
        zbar = zbar[:R]
    if zbar.size == 0 or not zbar[0] > 0:
        raise ValueError("solve_beta needs zbar(1) > 0")
    r = np.arange(1, zbar.size + 1)
    pos = zbar > 0
    r, lz = r[pos], np.log(zbar[pos])
    f = lambda b: _log_F(b, lz, r)
    if f(0.0) >= 0.0:
        return 0.0
    hi = 1.0
    while f(hi) < 0.0:
        hi *= 2.0
        if hi > beta_cap:
            raise ValueError(f"F(beta) < 1 at beta = {beta_cap}: R too small")
    beta = brentq(f, 0.0, hi, xtol=1e-15, rtol=4 * _EPS, maxiter=500)
    # one Newton polish on F itself
    q = np.exp(beta * r + lz)
    beta -= (q.sum() - 1.0) / np.sum(r * q)
    return float(beta)


def mass_defect(zbar, beta: float, R: int | None = None) -> float:
    """``1 - sum_{r <= R} exp(beta r) zbar(r)``."""
    zbar = np.asarray(zbar, float)
    if R is not None:
        zbar = zbar[:R]
    r = np.arange(1, zbar.size + 1)
    return 1.0 - math.fsum(np.exp(beta * r) * zbar)


class TailCheck(NamedTuple):
    epsilon_hat: float
    passed: bool


def _tail_fit(q):
    R = q.size
    r = np.arange(1, R + 1)
    sel = (r > R // 2) & (q > 0)
    if sel.sum() < 2:
        return None
    slope, intercept = np.polyfit(r[sel], np.log(q[sel]), 1)
    resid = np.log(q[sel]) - (slope * r[sel] + intercept)
    return float(slope), float(np.sqrt(np.mean(resid**2)))


@dataclass
class RenewalKernel:
    """Renewal kernel ``q``, mean block times ``g`` and the derived speed."""

    R: int
    beta: float
    q: np.ndarray
    g: np.ndarray
    mass_defect: float
    v: float
    zbar: np.ndarray = field(repr=False)
    nbar: np.ndarray = field(repr=False)
    epsilon_hat: float | None = None
    tail_rms: float | None = None
    v_reliable: bool = True
    tail_remainder: float | None = None
    beta_bias: float | None = None

    @property
    def r(self):
        return np.arange(1, self.R + 1)

    @property
    def inverse_speed(self) -> float:
        return 1.0 / self.v

    @property
    def mean_block(self) -> float:
        return float(np.sum(self.r * self.q))

    def to_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["r", "zbar", "nbar", "q", "g"])
        for i in range(self.R):
            g = "" if math.isnan(self.g[i]) else repr(float(self.g[i]))
            w.writerow([i + 1, repr(float(self.zbar[i])), repr(float(self.nbar[i])), repr(float(self.q[i])), g])

    def summary(self) -> dict:
        return {
            "R": self.R,
            "beta": self.beta,
            "v": self.v,
            "inverse_v": self.inverse_speed,
            "mass_defect": self.mass_defect,
            "epsilon_hat": self.epsilon_hat,
            "tail_rms": self.tail_rms,
            "v_reliable": self.v_reliable,
            "tail_remainder": self.tail_remainder,
            "beta_bias": self.beta_bias,
        }

    def to_json(self, fh) -> None:
        json.dump(self.summary(), fh, indent=2, sort_keys=True)


def build_kernel(zbar, nbar, beta: float, R: int | None = None, reliability: float = 0.01) -> RenewalKernel:
    """Assemble ``q``, ``g`` and ``v`` from the deconvolved blocks.

    The tail beyond ``R`` is extrapolated with the fitted exponential rate of
    ``q`` and a cubic envelope for ``g``; ``v`` is flagged unreliable when
    that remainder exceeds ``reliability`` of ``sum g q`` or the fitted tail
    does not decay.
    """
    zbar = np.asarray(zbar, float)
    nbar = np.asarray(nbar, float)
    if R is not None:
        zbar, nbar = zbar[:R], nbar[:R]
    R = zbar.size
    r = np.arange(1, R + 1)
    q = np.exp(beta * r) * zbar
    with np.errstate(invalid="ignore", divide="ignore"):
        g = np.where(zbar > 0, nbar / np.where(zbar > 0, zbar, 1.0), np.nan)
    has = q > 0
    num = math.fsum(r[has] * q[has])
    den = math.fsum(g[has] * q[has])
    v = num / den if den > 0 else math.nan
    fit = _tail_fit(q) if R >= 4 else None
    eps_hat = tail_rms = remainder = bias = None
    reliable = fit is not None
    if fit is not None:
        slope, tail_rms = fit
        eps_hat = -slope
        last = np.flatnonzero(has)[-1]
        if eps_hat > 0:
            k = np.arange(1, 20 * int(math.ceil(1 / eps_hat)) + 200)
            q_tail = q[last] * np.exp(-eps_hat * k)
            g_tail = g[last] * ((r[last] + k) / r[last]) ** 3
            remainder = float(np.sum(q_tail * g_tail))
            reliable = remainder <= reliability * den
            # first-order shift of the root when the missing tail mass is added
            bias = float(np.sum(q_tail) / num)
        else:
            reliable = False
    return RenewalKernel(
        R, float(beta), q, g, mass_defect(zbar, beta), v, zbar, nbar,
        eps_hat, tail_rms, bool(reliable), remainder, bias,
    )


def kernel_tail_check(kernel: RenewalKernel, min_slope: float = -0.01, max_rms: float = 0.5) -> TailCheck:
    """Least-squares fit of ``log q(r)`` over the upper half of ``1..R``.

    Passes when the slope is below ``min_slope`` and the rms residual stays
    under ``max_rms``.
    """
    if kernel.R < 8:
        raise ValueError("tail check needs R >= 8")
    fit = _tail_fit(kernel.q)
    if fit is None:
        raise ValueError("no positive q(r) in the fit range")
    slope, rms = fit
    return TailCheck(-slope, bool(slope < min_slope and rms < max_rms))
