"""Exact annealed weights from edge local times (d = 1).

Averaging over the environment turns the path weight into
``exp(-sum_x Lambda_V(l(x)))``, a function of local times only. A walk from 0
to ``y`` is encoded by its downcrossing counts ``D_x`` of the edges
``(x, x+1)``; site ``x`` is visited ``l = D_{x-1} + D_x + 1`` times and the
number of paths with given counts is a product of binomials (the last exit
from every site points towards the target). Summing over counts is a
transfer-matrix product::

    T[d, e] = C(d + e, d) 2^-(d+e+1) E exp(-(d+e+1) V)

so ``Z_{0,r} = T[0, 0] (T^{r-1})[0, 0]``. Excursions to the left of 0 use
``L[e', e] = C(e + e' - 1, e) 2^-(e+e') E exp(-(e+e') V)`` on upcrossing
counts. Time weights come from carrying the derivative along with the
product (each site contributes its local time to ``tau``).

Counts are truncated at ``dmax``; the truncation is doubled until the
results stop moving.
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln

from .potential import PotentialDistribution, log_mgf

__all__ = ["transfer_matrix", "block_weights", "window_weights", "annealed_beta"]


def _site_factor(dist, ell):
    # exp(-Lambda(l)) = E exp(-l V), vectorized over integer local times
    with np.errstate(over="ignore"):
        return np.exp(-log_mgf(dist, ell.astype(float)))


def transfer_matrix(dist: PotentialDistribution, dmax: int, min_visits: int = 1):
    """Right-of-origin transfer matrix and its local-time companion ``T * l``.

    ``min_visits = 2`` zeroes entries with ``l < 2`` (interior sites of a
    block without renewal points).
    """
    d = np.arange(dmax)[:, None]
    e = np.arange(dmax)[None, :]
    ell = d + e + 1
    log_binom = gammaln(d + e + 1) - gammaln(d + 1) - gammaln(e + 1)
    T = np.exp(log_binom - ell * np.log(2.0)) * _site_factor(dist, ell)
    if min_visits > 1:
        T = np.where(ell >= min_visits, T, 0.0)
    return T, T * ell


def _left_matrix(dist, dmax):
    ep = np.arange(dmax)[:, None]  # upcrossings into the site from the left edge of x+1
    e = np.arange(dmax)[None, :]
    ell = ep + e
    with np.errstate(invalid="ignore"):
        log_binom = gammaln(np.maximum(ell, 1)) - gammaln(e + 1) - gammaln(np.maximum(ep, 1))
    L = np.exp(log_binom - ell * np.log(2.0)) * _site_factor(dist, ell)
    L = np.where(ep >= 1, L, 0.0)
    L[0, 0] = 1.0
    return L, L * ell


def _block_pass(dist, R, dmax, min_visits):
    T, TL = transfer_matrix(dist, dmax, min_visits)
    T0, TL0 = transfer_matrix(dist, dmax, 1)
    first = T0[0, 0]  # site 0 visited once
    z = np.empty(R)
    a = np.empty(R)
    v = np.zeros(dmax)
    v[0] = 1.0
    dv = np.zeros(dmax)
    for r in range(1, R + 1):
        z[r - 1] = first * v[0]
        a[r - 1] = first * (dv[0] + v[0])
        v, dv = v @ T, dv @ T + v @ TL
    return z, a


def _converged(compute, dmax, rtol=1e-13, cap=1 << 13):
    """Run ``compute(dmax)`` with growing truncation until results agree."""
    prev = compute(dmax)
    while True:
        dmax = int(dmax * 1.5)
        cur = compute(dmax)
        old, new = np.concatenate(prev), np.concatenate(cur)
        scale = np.maximum(np.abs(new), 1e-300)
        if np.all(np.abs(new - old) <= rtol * scale) or dmax >= cap:
            return cur
        prev = cur


def block_weights(dist: PotentialDistribution, R: int, constrained: bool = False, dmax=None):
    """Annealed ``Z_{0,r}`` and ``A(r)`` for ``r = 1..R``.

    With ``constrained=True`` every interior site must be visited at least
    twice, giving the renewal-free block weights and their time weights.
    """
    mv = 2 if constrained else 1
    return _converged(lambda dm: _block_pass(dist, R, dm, mv), dmax or max(64, R // 2))


def _window_pass(dist, y, W, dmax):
    T, TL = transfer_matrix(dist, dmax, 1)
    L, LL = _left_matrix(dist, dmax)
    g = np.zeros(dmax)
    g[0] = 1.0
    dg = np.zeros(dmax)
    # sites -W+1 .. -1; site -W is never visited
    n_left = W - 1 if W is not None else None
    k = 0
    while True:
        if n_left is not None and k >= n_left:
            break
        g_new, dg_new = L @ g, L @ dg + LL @ g
        if n_left is None and np.allclose(g_new, g, rtol=1e-15, atol=0) and np.allclose(dg_new, dg, rtol=1e-15, atol=0):
            g, dg = g_new, dg_new
            break
        g, dg = g_new, dg_new
        k += 1
        if n_left is None and k > 1 << 16:
            break
    zs = np.empty(y)
    as_ = np.empty(y)
    v, dv = g, dg
    for yy in range(1, y + 1):
        v, dv = v @ T, dv @ T + v @ TL
        zs[yy - 1] = v[0]
        as_[yy - 1] = dv[0]
    return zs, as_


def window_weights(dist: PotentialDistribution, y: int, W: int | None = None, dmax=None, rtol=1e-11):
    """Annealed ``Z_y`` and time weight ``E E^0(tau_y e^{-sum V})`` for ``y = 1..Y``.

    ``W`` places the absorbing boundary at ``-W`` (``None``: the whole line,
    iterated to convergence). Returns two arrays indexed by ``y - 1``.
    """
    return _converged(lambda dm: _window_pass(dist, y, W, dm), dmax or max(64, y // 2), rtol)


def annealed_beta(dist: PotentialDistribution, dmax: int = 1600) -> float:
    """``-log`` of the spectral radius of the transfer matrix."""
    T, _ = transfer_matrix(dist, dmax, 1)
    # power iteration from the origin state; T is non-negative
    v = np.zeros(dmax)
    v[0] = 1.0
    rates = []
    for k in range(20000):
        v = v @ T
        s = v.sum()
        if s == 0:
            return np.inf
        v /= s
        rates.append(np.log(s))
        if k > 200 and abs(rates[-1] - rates[-101]) < 1e-14:
            break
    return float(-rates[-1])
