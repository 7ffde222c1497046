"""Estimator-style wrappers: hyperparameters in ``__init__``, ``fit(dist)``, fitted ``*_`` attributes.

``fit`` accepts a :class:`~crossing_lab.potential.PotentialDistribution` or
a raw atom list ``[[value, prob], ...]``.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .annealed import block_table_exact, block_table_mc, crossing_time_mc
from .lyapunov import alpha_quenched, beta_slope, derivative_at_zero
from .potential import PotentialDistribution, make_distribution
from .renewal import build_kernel, deconvolve_blocks, kernel_tail_check, solve_beta

__all__ = [
    "check_distribution",
    "BlockTableEstimator",
    "RenewalEstimator",
    "LyapunovEstimator",
    "DerivativeEstimator",
    "CrossingTimeEstimator",
    "check_is_fitted",
]


def check_distribution(dist) -> PotentialDistribution:
    """Coerce ``dist`` to a validated :class:`PotentialDistribution`."""
    if isinstance(dist, PotentialDistribution):
        return dist
    if isinstance(dist, dict):
        return make_distribution(dist["atoms"], dist.get("lambda", 0.0))
    return make_distribution(dist)


def _check_mode(mode):
    if mode not in ("exact", "localtime", "mc"):
        raise ValueError(f"mode must be 'exact', 'localtime' or 'mc', got {mode!r}")


class BlockTableEstimator(BaseEstimator):
    """Annealed block table ``Z_{0,r}``, ``A(r)`` for ``r = 1..R``."""

    def __init__(self, R=14, mode="exact", n_envs=10_000, master_seed=None, proposal=None, workers=1):
        self.R = R
        self.mode = mode
        self.n_envs = n_envs
        self.master_seed = master_seed
        self.proposal = proposal
        self.workers = workers

    def _table(self, dist):
        _check_mode(self.mode)
        if self.mode == "mc":
            if self.master_seed is None:
                raise ValueError("master_seed is required for Monte Carlo tables")
            return block_table_mc(dist, self.R, self.n_envs, self.master_seed, self.proposal, self.workers)
        method = "enumerate" if self.mode == "exact" else "localtime"
        return block_table_exact(dist, self.R, method=method)

    def fit(self, dist, y=None):
        self.dist_ = check_distribution(dist)
        self.table_ = self._table(self.dist_)
        return self


class RenewalEstimator(BlockTableEstimator):
    """Renewal kernel, exponent ``beta_`` and speed ``speed_`` from a block table."""

    def fit(self, dist, y=None):
        super().fit(dist)
        self.deconvolution_ = deconvolve_blocks(self.table_)
        self.beta_ = solve_beta(self.deconvolution_.zbar)
        self.kernel_ = build_kernel(self.deconvolution_.zbar, self.deconvolution_.nbar, self.beta_)
        self.speed_ = self.kernel_.v
        self.inverse_speed_ = self.kernel_.inverse_speed
        self.mass_defect_ = self.kernel_.mass_defect
        self.tail_ = kernel_tail_check(self.kernel_) if self.R >= 8 else None
        return self


class LyapunovEstimator(BaseEstimator):
    """Annealed (``beta_``) and optionally quenched (``alpha_``) exponents at distance ``y``."""

    def __init__(self, y=200, W=None, n_envs=10_000, master_seed=None, proposal="auto", quenched=True, workers=1):
        self.y = y
        self.W = W
        self.n_envs = n_envs
        self.master_seed = master_seed
        self.proposal = proposal
        self.quenched = quenched
        self.workers = workers

    def fit(self, dist, y=None):
        if self.master_seed is None:
            raise ValueError("master_seed is required")
        self.dist_ = check_distribution(dist)
        self.beta_estimate_ = beta_slope(self.dist_, self.y, self.W, self.n_envs, self.master_seed,
                                         self.proposal, workers=self.workers)
        self.beta_ = self.beta_estimate_.mean
        if self.quenched:
            self.alpha_estimate_ = alpha_quenched(self.dist_, self.y, self.W, self.n_envs, self.master_seed,
                                                  workers=self.workers)
            self.alpha_ = self.alpha_estimate_.mean
        return self


class DerivativeEstimator(BaseEstimator):
    """``beta(lambda)`` curve and its right derivative at 0 (common random numbers)."""

    def __init__(self, lambda_grid=(0.0, 0.005, 0.01, 0.02, 0.05), y=200, W=None, n_envs=10_000,
                 master_seed=None, proposal="auto", workers=1):
        self.lambda_grid = lambda_grid
        self.y = y
        self.W = W
        self.n_envs = n_envs
        self.master_seed = master_seed
        self.proposal = proposal
        self.workers = workers

    def fit(self, dist, y=None):
        if self.master_seed is None:
            raise ValueError("master_seed is required")
        self.dist_ = check_distribution(dist)
        self.curve_ = derivative_at_zero(self.dist_, self.lambda_grid, self.y, self.W, self.n_envs,
                                         self.master_seed, self.proposal, workers=self.workers)
        self.derivative_ = self.curve_.right_derivative_at_zero
        return self


class CrossingTimeEstimator(BaseEstimator):
    """Annealed ``E_Q tau_y``; ``speed_ = y / E tau_y``."""

    def __init__(self, y=200, kind="block", W=None, n_envs=10_000, master_seed=None, proposal="auto", workers=1):
        self.y = y
        self.kind = kind
        self.W = W
        self.n_envs = n_envs
        self.master_seed = master_seed
        self.proposal = proposal
        self.workers = workers

    def fit(self, dist, y=None):
        if self.master_seed is None:
            raise ValueError("master_seed is required")
        self.dist_ = check_distribution(dist)
        self.estimate_ = crossing_time_mc(self.dist_, self.y, self.W, self.n_envs, self.master_seed, self.kind,
                                          self.proposal, workers=self.workers)
        self.tau_ = self.estimate_.tau.mean
        self.tau_per_y_ = self.estimate_.tau_per_y
        self.speed_ = 1.0 / self.tau_per_y_
        return self
