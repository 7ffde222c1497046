"""Numerical checks of the model's inequalities and scaling claims.

Each check returns a :class:`CheckReport` carrying its statistic, the
threshold it is compared with, the verdict and everything needed to rerun
it (sizes, seeds). Inequalities are tested with a uniform ``4 sigma`` slack.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from . import _rng
from ._parallel import map_chunks
from .annealed import BATCH_W_MAX, _ess, _ratio_estimate, _resolve_proposal, crossing_time_mc, sample_window_logz
from .localtime import window_weights
from .lyapunov import alpha_quenched, beta_slope
from .potential import INF, Environment, PotentialDistribution, draw_batch, make_distribution, sample_values
from .quenched import path_statistics, sample_conditioned_path, solve_window, solve_window_adaptive

__all__ = [
    "CheckReport",
    "SIGMAS",
    "srw_localtime_tail",
    "check_bias_domination",
    "check_prefactor_bound",
    "check_localtime_geometric",
    "sample_annealed_paths",
    "check_xy_tail",
    "check_xy_trend",
    "crossing_scaling",
    "counterexample_scaling",
    "check_block_inequalities",
    "check_jensen",
    "aggregate_exit_code",
]

SIGMAS = 4.0


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


@dataclass
class CheckReport:
    name: str
    statistic: float
    threshold: float
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def to_json(self, fh) -> None:
        json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    def line(self) -> str:
        verdict = "pass" if self.passed else "FAIL"
        return f"{self.name}: {verdict} (statistic={self.statistic:.6g}, threshold={self.threshold:.6g})"


def aggregate_exit_code(reports) -> int:
    """0 when every report passed, 1 otherwise."""
    return 0 if all(r.passed for r in reports) else 1


# ----------------------------------------------------------------------------
# local times of the simple random walk


def srw_localtime_tail(z: int, x: int, m_max: int) -> np.ndarray:
    """``P^0(l_x(z) > m)`` for ``m = 0..m_max``: visits to ``z`` before hitting ``x > 0``.

    The walk reaches ``z`` before ``x`` with probability 1 (``0 <= z < x``)
    or ``x / (x - z)`` (``z < 0``); each visit is followed by another before
    ``tau_x`` with probability ``1 - 1 / (2 (x - z))``.
    """
    if x <= 0 or z > x:
        raise ValueError("need z <= x and x > 0")
    m = np.arange(m_max + 1)
    if z == x:
        return np.zeros(m.size)
    hit = 1.0 if z >= 0 else x / (x - z)
    return hit * (1.0 - 1.0 / (2.0 * (x - z))) ** m


def _visits_before(sites, z, x):
    hit = np.flatnonzero(sites == x)
    end = hit[0] if hit.size else sites.size
    return int(np.count_nonzero(sites[:end] == z))


def check_bias_domination(
    dist: PotentialDistribution,
    y: int,
    z: int,
    x: int,
    m_max: int,
    n: int,
    seed: int,
    paths_per_env: int = 20,
    tol: float = 1e-10,
    w_max: int = BATCH_W_MAX,
) -> CheckReport:
    """Quenched conditioned tail of ``l_x(z)`` against the free-walk tail.

    For each environment with ``z^omega > 0``, ``paths_per_env`` paths are
    drawn from ``Q_y^omega`` by the h-transform; the per-environment tail
    fractions are averaged and compared to the exact SRW tail at every
    ``m <= m_max``.
    """
    if not z <= x <= y:
        raise ValueError("need z <= x <= y")
    srw = srw_localtime_tail(z, x, m_max)
    rows = []
    for i in range(n):
        solve, _, _ = solve_window_adaptive(dist, y, seed, i, tol=tol, w_max=w_max)
        if solve.z <= 0:
            continue
        rng = _rng.generator(seed, i, _rng.STREAM_PATHS)
        counts = np.array([
            _visits_before(sample_conditioned_path(solve, 0, rng).sites, z, x) for _ in range(paths_per_env)
        ])
        rows.append((counts[:, None] > np.arange(m_max + 1)[None, :]).mean(axis=0))
    if not rows:
        raise ValueError("no environment with positive weight")
    rows = np.array(rows)
    q = rows.mean(axis=0)
    se = rows.std(axis=0, ddof=1) / math.sqrt(len(rows)) if len(rows) > 1 else np.full(q.size, np.inf)
    # an empirical tail of exactly 0 or 1 has zero sample spread; use the binomial floor
    n_paths = len(rows) * paths_per_env
    se = np.maximum(se, 1.0 / n_paths)
    excess = q - srw - SIGMAS * se
    stat = float(np.max(excess))
    return CheckReport(
        "bias_domination",
        stat,
        0.0,
        bool(stat <= 1e-12),
        {"y": y, "z": z, "x": x, "m_max": m_max, "n_envs": n, "n_used": len(rows),
         "paths_per_env": paths_per_env, "seed": seed, "quenched_tail": q, "stderr": se, "srw_tail": srw,
         "dist": dist.to_literal()},
    )


def check_prefactor_bound(dist: PotentialDistribution, y: int, n: int, seed: int, tol: float = 1e-10,
                          workers: int = 1) -> CheckReport:
    """``Q_y(B) <= 2 y P(B)`` for ``B = {V(-1) is the largest atom}``.

    ``Q_y(B)`` is the ratio ``E[z 1_B] / E[z]`` over ``n`` environments.
    """
    top = dist.values[-1]
    p = float(dist.probs[-1])

    def work(idx):
        lz, _, _, _, _ = sample_window_logz(dist, y, seed, idx, None, None, tol)
        v, _ = sample_values(dist, _rng.site_uniforms_batch(seed, idx, -1, -1)[:, 0])
        return lz[:, -1], (v == top).astype(float)

    parts = map_chunks(work, np.arange(n), workers)
    logw = np.concatenate([a for a, _ in parts])
    ind = np.concatenate([b for _, b in parts])
    ratio, se, _, _ = _ratio_estimate(logw, ind, n, seed)
    bound = 2 * y * p
    return CheckReport(
        "prefactor_bound",
        float(ratio),
        bound,
        bool(ratio <= bound + SIGMAS * se),
        {"y": y, "n_envs": n, "seed": seed, "event": "V(-1) = largest atom", "P(B)": p,
         "stderr": se, "ratio_to_bound": ratio / bound, "dist": dist.to_literal()},
    )


def _first_passage_hit(z: int, y: int):
    """Numerical ``P_i(hit z before y)`` for ``i = z..y`` (tridiagonal solve)."""
    n = y - z - 1  # interior sites z+1 .. y-1
    if n == 0:
        return np.array([1.0, 0.0])
    ab = np.zeros((3, n))
    ab[0, 1:] = -0.5
    ab[1, :] = 1.0
    ab[2, :-1] = -0.5
    rhs = np.zeros(n)
    rhs[0] = 0.5  # neighbour z has value 1
    inner = solve_banded((1, 1), ab, rhs)
    return np.concatenate([[1.0], inner, [0.0]])


def check_localtime_geometric(y: int, z: int, m_max: int, rtol: float = 1e-12) -> CheckReport:
    """``P^0(l_y(z) >= m) = (1 - 1/(2(y+|z|)))^(m-1) y/(y+|z|)`` for ``z < 0 < y``.

    The left side is assembled from a numerical first-passage solve: the
    hitting probability of ``z`` from 0 times the return probability to
    ``z`` (left step: certain; right step: from ``z+1``) to the power
    ``m - 1``.
    """
    if not z < 0 < y:
        raise ValueError("need z < 0 < y")
    hit = _first_passage_hit(z, y)
    p0 = hit[-z]
    ret = 0.5 + 0.5 * hit[1]
    m = np.arange(1, m_max + 1)
    numeric = p0 * ret ** (m - 1)
    closed = (1 - 1 / (2 * (y - z))) ** (m - 1) * y / (y - z)
    err = float(np.max(np.abs(numeric - closed) / closed))
    return CheckReport(
        "localtime_geometric", err, rtol, bool(err <= rtol),
        {"y": y, "z": z, "m_max": m_max, "numeric": numeric, "closed_form": closed},
    )


# ----------------------------------------------------------------------------
# annealed path sampling


def sample_annealed_paths(dist, y, n_envs, n_paths, seed, proposal="auto", tol=1e-10, workers=1):
    """Paths from the annealed ``Q_y``: environments resampled by weight, then ``Q_y^omega``.

    ``Q_y(path) = E[z^omega Q_y^omega(path)] / E z``, so drawing environment
    ``i`` with probability proportional to its (importance-weighted) ``z``
    and then a quenched conditioned path is exact up to the finite pool.
    Returns ``(paths, env_values, ess)`` where ``env_values[k]`` lists the
    potential on ``0..y-1`` of the environment behind path ``k``.
    """
    proposal = _resolve_proposal(proposal, dist, "window", y, seed)

    def work(idx):
        lz, _, llr, W, _ = sample_window_logz(dist, y, seed, idx, proposal, None, tol)
        return lz[:, -1] + llr, np.full(idx.size, W)

    parts = map_chunks(work, np.arange(n_envs), workers)
    logw = np.concatenate([a for a, _ in parts])
    Ws = np.concatenate([b for _, b in parts])
    if not np.any(np.isfinite(logw)):
        raise ValueError("too few environments with positive weight")
    w = np.exp(np.where(np.isfinite(logw), logw, -np.inf) - np.max(logw[np.isfinite(logw)]))
    w /= w.sum()
    rng = _rng.generator(seed, 0, _rng.STREAM_PATHS)
    # systematic resampling
    picks = np.searchsorted(np.cumsum(w), (rng.random() + np.arange(n_paths)) / n_paths)
    picks = np.minimum(picks, n_envs - 1)
    paths, envs = [], []
    cache = {}
    for k, i in enumerate(picks):
        i = int(i)
        if i not in cache:
            W = int(Ws[i])
            V, _ = draw_batch(dist, -W, y, seed, np.array([i]), proposal)
            cache[i] = solve_window(Environment(-W, V[0], i), y)
        solve = cache[i]
        prng = _rng.generator(seed, 1 + k, _rng.STREAM_PATHS)
        paths.append(sample_conditioned_path(solve, 0, prng))
        envs.append(solve.env.values[solve.env.values.size - 1 - y : -1])
    return paths, envs, _ess(logw)


def _reasonable_density(dist, envs):
    kappa, K = dist.kappa, dist.K
    if kappa is None:
        return 0.0
    vals = np.concatenate(envs)
    return float(np.mean((vals >= kappa) & (vals <= K)))


def check_xy_tail(dist: PotentialDistribution, y: int, n: int, seed: int, n_envs: int | None = None,
                  proposal="auto", workers: int = 1) -> CheckReport:
    """Tail of the first renewal site ``X_y`` under the annealed ``Q_y``.

    Fits ``log Q_y(X_y > r)`` against ``r``; passes when the slope is
    negative and the survival at ``r = y/2`` is below 0.01. Also reports
    ``E tau_{X_y} / y`` and the density of reasonable sites.
    """
    if y < 64:
        raise ValueError("y must be >= 64")
    paths, envs, ess = sample_annealed_paths(dist, y, n_envs or n, n, seed, proposal, workers=workers)
    xs, tx = [], []
    for p in paths:
        _, _, xy = path_statistics(p)
        xs.append(xy)
        tx.append(int(np.flatnonzero(p.sites == xy)[0]))
    xs = np.array(xs)
    r = np.arange(y + 1)
    surv = (xs[None, :] > r[:, None]).mean(axis=1)
    sel = surv > 0
    if sel.sum() >= 2:
        slope = float(np.polyfit(r[sel], np.log(surv[sel]), 1)[0])
    else:
        slope = -math.inf
    s_half = float(surv[y // 2])
    passed = slope < 0 and s_half < 0.01
    return CheckReport(
        "xy_tail", slope, 0.0, bool(passed),
        {"y": y, "n_paths": n, "seed": seed, "ess": ess, "survival_at_half": s_half,
         "mean_X_y": float(xs.mean()), "mean_tau_X_over_y": float(np.mean(tx)) / y,
         "reasonable_density": _reasonable_density(dist, envs), "survival": surv,
         "dist": dist.to_literal()},
    )


def check_xy_trend(dist: PotentialDistribution, ys, n: int, seed: int, proposal="auto",
                   workers: int = 1) -> CheckReport:
    """``E tau_{X_y} / y`` strictly decreasing along ``ys``."""
    ys = sorted(ys)
    vals = []
    for y in ys:
        rep = check_xy_tail(dist, y, n, seed, proposal=proposal, workers=workers)
        vals.append(rep.details["mean_tau_X_over_y"])
    diffs = np.diff(vals)
    return CheckReport(
        "xy_trend", float(np.max(diffs)), 0.0, bool(np.all(diffs < 0)),
        {"ys": ys, "mean_tau_X_over_y": vals, "n_paths": n, "seed": seed, "dist": dist.to_literal()},
    )


# ----------------------------------------------------------------------------
# crossing-time scaling


def crossing_scaling(
    dist: PotentialDistribution,
    ys,
    n: int,
    seed: int,
    band=(0.9, 1.1),
    measure: str = "window",
    method: str = "mc",
    proposal="open",
    workers: int = 1,
    name: str = "crossing_scaling",
) -> CheckReport:
    """Log-log slope of ``E_Q tau_y`` over ``ys``; passes when it falls in ``band``.

    ``measure`` picks ``Q_y`` (``"window"``) or ``Q_{0,y}`` (``"block"``).
    ``method="exact"`` uses the local-time transfer matrix (window only).
    """
    ys = sorted(int(y) for y in ys)
    if method == "exact":
        if measure != "window":
            raise ValueError("exact scaling is implemented for the window measure")
        z, a = window_weights(dist, ys[-1])
        taus = np.array([a[y - 1] / z[y - 1] for y in ys])
        ses = np.zeros(len(ys))
    elif method == "mc":
        est = [crossing_time_mc(dist, y, n_envs=n, master_seed=seed, kind=measure, proposal=proposal,
                                workers=workers) for y in ys]
        taus = np.array([e.tau.mean for e in est])
        ses = np.array([e.tau.stderr for e in est])
    else:
        raise ValueError(f"unknown method {method!r}")
    slope, intercept = np.polyfit(np.log(ys), np.log(taus), 1)
    lo, hi = band
    return CheckReport(
        name, float(slope), float(lo), bool(lo <= slope <= hi),
        {"band": list(band), "ys": ys, "mean_tau": taus, "stderr": ses, "measure": measure,
         "method": method, "n_envs": n, "seed": seed, "dist": dist.to_literal()},
    )


def counterexample_scaling(p_zero: float, ys, n: int, seed: int, band=(1.8, 2.2), measure: str = "window",
                           method: str = "mc", workers: int = 1) -> CheckReport:
    """Crossing-time exponent of the ``{0 w.p. p_zero, inf otherwise}`` law.

    Environments are drawn conditioned on ``[0, y)`` being finite (any other
    environment has ``z = 0``) and reweighted exactly.
    """
    if not 0 < p_zero < 1:
        raise ValueError("p_zero must lie in (0, 1)")
    dist = make_distribution([(0.0, p_zero), (INF, 1 - p_zero)])
    return crossing_scaling(dist, ys, n, seed, band, measure, method, "open", workers, "counterexample_scaling")


# ----------------------------------------------------------------------------
# block-table and exponent inequalities


def check_block_inequalities(table, deconvolution) -> CheckReport:
    """``A(r) >= r Z_{0,r}`` and ``g(r) >= r`` wherever ``zbar(r) > 0``.

    A crossing of ``(0, r)`` takes at least ``r`` steps. Exact tables are
    compared with a ``1e-12`` relative slack, Monte Carlo tables with
    ``4 sigma``.
    """
    r = np.arange(1, table.R + 1)
    z0, a = np.asarray(table.z0), np.asarray(table.a)
    zb, nb = np.asarray(deconvolution.zbar), np.asarray(deconvolution.nbar)
    if table.mode == "exact":
        slack_a = 1e-12 * np.abs(a)
        slack_n = 1e-12 * np.abs(nb) + deconvolution.nbar_err + r * deconvolution.zbar_err
    else:
        slack_a = SIGMAS * np.hypot(table.a_stderr, r * table.z0_stderr)
        slack_n = SIGMAS * np.hypot(deconvolution.nbar_err, r * deconvolution.zbar_err)
    gap_a = a - r * z0 + slack_a
    ok = zb > 0
    gap_n = np.where(ok, nb - r * zb + slack_n, 0.0)
    worst_a = float(np.min(gap_a))
    worst_n = float(np.min(gap_n))
    with np.errstate(invalid="ignore", divide="ignore"):
        g = np.where(ok, nb / np.where(ok, zb, 1.0), np.nan)
    return CheckReport(
        "block_inequalities", min(worst_a, worst_n), 0.0, bool(worst_a >= 0 and worst_n >= 0),
        {"R": table.R, "mode": table.mode, "a_minus_r_z0_min_gap": worst_a, "g_minus_r_min_gap": worst_n,
         "g": g, "master_seed": table.master_seed, "n_envs": table.n_envs},
    )


def check_jensen(dist: PotentialDistribution, y: int, n: int, seed: int, proposal="auto",
                 workers: int = 1) -> CheckReport:
    """Annealed ``beta`` against quenched ``alpha`` at distance ``y``.

    ``alpha`` averages ``-log z / y`` over environments with ``z > 0``; the
    excluded fraction ``p0`` enters the bound as ``-log(1 - p0) / y`` so that
    the comparison is with the full annealed mean. Passes when
    ``beta <= alpha - log(1 - p0)/y + 3 sigma``.
    """
    b = beta_slope(dist, y, None, n, seed, proposal, workers=workers)
    a = alpha_quenched(dist, y, None, n, seed, workers=workers)
    excl = a.n_excluded / n
    if excl >= 1:
        raise ValueError("every environment has z = 0")
    correction = -math.log1p(-excl) / y
    sigma = math.hypot(b.stderr, a.stderr)
    bound = a.mean + correction
    return CheckReport(
        "jensen", b.mean, bound, bool(b.mean <= bound + 3 * sigma),
        {"y": y, "n_envs": n, "seed": seed, "beta": b.mean, "beta_stderr": b.stderr, "alpha": a.mean,
         "alpha_stderr": a.stderr, "excluded_fraction": excl, "exclusion_correction": correction,
         "beta_ess": b.ess, "dist": dist.to_literal()},
    )
