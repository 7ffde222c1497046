"""I.i.d. potential laws on the lattice and the environments drawn from them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _rng

INF = math.inf

__all__ = [
    "INF",
    "PotentialDistribution",
    "Environment",
    "make_distribution",
    "log_mgf",
    "sample_environment",
    "sample_values",
    "Proposal",
    "draw_batch",
]


@dataclass(frozen=True)
class PotentialDistribution:
    """Finitely supported law of ``V(0)`` plus a constant shift ``lambda_shift``.

    ``atoms`` holds the unshifted ``(value, prob)`` pairs, sorted by value and
    normalized. ``values`` and ``probs`` expose the law actually used, i.e.
    with the shift applied to every finite atom.
    """

    atoms: tuple
    lambda_shift: float = 0.0

    @cached_property
    def values(self) -> np.ndarray:
        v = np.array([a[0] for a in self.atoms], dtype=float) + self.lambda_shift
        v.setflags(write=False)
        return v

    @cached_property
    def probs(self) -> np.ndarray:
        p = np.array([a[1] for a in self.atoms], dtype=float)
        p.setflags(write=False)
        return p

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @cached_property
    def cumprobs(self) -> np.ndarray:
        c = np.cumsum(self.probs)
        c[-1] = 1.0
        return c

    def prob_of(self, predicate) -> float:
        return float(sum(p for v, p in zip(self.values, self.probs) if predicate(v)))

    @property
    def p_zero(self) -> float:
        return self.prob_of(lambda v: v == 0.0)

    @property
    def p_inf(self) -> float:
        return self.prob_of(math.isinf)

    @property
    def p_finite(self) -> float:
        return 1.0 - self.p_inf

    @property
    def satisfies_V(self) -> bool:
        return self.p_zero < 1.0 and self.p_inf < 1.0

    @property
    def satisfies_d1(self) -> bool:
        return self.prob_of(lambda v: 0.0 < v < INF) > 0.0

    @property
    def essinf_zero(self) -> bool:
        # informational only; computed on the unshifted law
        return self.atoms[0][0] == 0.0 and self.atoms[0][1] > 0.0

    @property
    def is_degenerate(self) -> bool:
        return self.n_atoms == 1

    @property
    def kappa(self) -> float | None:
        """Smallest positive finite atom value (``None`` if there is none)."""
        pos = [v for v in self.values if 0.0 < v < INF]
        return min(pos) if pos else None

    @property
    def K(self) -> float | None:
        fin = [v for v in self.values if v < INF]
        return max(fin) if fin else None

    @property
    def max_value(self) -> float:
        return float(self.values[-1])

    def shifted(self, lam: float) -> "PotentialDistribution":
        """Same atoms with ``lam`` added to the shift."""
        return PotentialDistribution(self.atoms, self.lambda_shift + float(lam))

    def conditioned_finite(self) -> "PotentialDistribution":
        """The law conditioned on ``V < inf``."""
        fin = [(v, p) for v, p in self.atoms if not math.isinf(v)]
        if not fin:
            raise ValueError("law has no finite atoms")
        total = sum(p for _, p in fin)
        return PotentialDistribution(
            tuple((v, p / total) for v, p in fin), self.lambda_shift
        )

    def expect_exp(self, t) -> np.ndarray:
        """``E exp(-t V)`` with ``exp(-inf) = 0`` and ``0 * inf = 0``."""
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for v, p in zip(self.values, self.probs):
            if math.isinf(v):
                out = out + np.where(t == 0.0, p, 0.0)
            else:
                out = out + p * np.exp(-t * v)
        return out

    def to_literal(self) -> dict:
        return {
            "atoms": [[v, p] for v, p in self.atoms],
            "lambda": self.lambda_shift,
        }

    def __repr__(self) -> str:
        parts = ", ".join(f"{v:g}:{p:g}" for v, p in self.atoms)
        shift = f", lambda={self.lambda_shift:g}" if self.lambda_shift else ""
        return f"PotentialDistribution({{{parts}}}{shift})"


def make_distribution(atoms, lambda_shift=0.0) -> PotentialDistribution:
    """Validate and normalize an atomic law.

    Atoms with equal values are merged; zero-probability atoms are dropped.
    ``inf`` (float or the string ``"inf"``) marks an absorbing value.
    """
    atoms = list(atoms)
    if not atoms:
        raise ValueError("atom list is empty")
    if lambda_shift < 0 or not math.isfinite(lambda_shift):
        raise ValueError(f"lambda_shift must be a finite non-negative real, got {lambda_shift}")
    merged: dict[float, float] = {}
    for atom in atoms:
        try:
            value, prob = atom
        except (TypeError, ValueError):
            raise ValueError(f"atom {atom!r} is not a (value, prob) pair") from None
        value = INF if isinstance(value, str) and value.strip().lower() in ("inf", "+inf") else float(value)
        prob = float(prob)
        if math.isnan(value) or value < 0:
            raise ValueError(f"atom value must be >= 0, got {value}")
        if math.isnan(prob) or prob < 0:
            raise ValueError(f"atom probability must be >= 0, got {prob}")
        merged[value] = merged.get(value, 0.0) + prob
    total = math.fsum(merged.values())
    if total <= 0:
        raise ValueError("atom probabilities sum to zero")
    norm = tuple(
        (v, p / total) for v, p in sorted(merged.items()) if p > 0
    )
    return PotentialDistribution(norm, float(lambda_shift))


def log_mgf(dist: PotentialDistribution, t):
    """``Lambda_V(t) = -log E exp(-t V(0))`` for ``t >= 0``.

    Returns ``inf`` where the expectation vanishes (all mass at ``inf``).
    Accepts scalars or arrays.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("log_mgf is defined for t >= 0")
    with np.errstate(divide="ignore"):
        out = -np.log(dist.expect_exp(t_arr))
    out = np.where(t_arr == 0.0, 0.0, out)
    return float(out) if np.ndim(t) == 0 else out


@dataclass(frozen=True)
class Environment:
    """Potential values on the integer window ``[lo, hi]``."""

    lo: int
    values: np.ndarray = field(repr=False)
    seed_id: int = 0

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 1 or vals.size == 0:
            raise ValueError("environment values must be a non-empty 1-d array")
        if np.any(np.isnan(vals)) or np.any(vals < 0):
            raise ValueError("potential values must be >= 0 or inf")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def hi(self) -> int:
        return self.lo + self.values.size - 1

    def __len__(self):
        return self.values.size

    def __getitem__(self, site: int) -> float:
        if not self.lo <= site <= self.hi:
            raise IndexError(f"site {site} outside [{self.lo}, {self.hi}]")
        return float(self.values[site - self.lo])

    def window(self, lo: int, hi: int) -> "Environment":
        if lo < self.lo or hi > self.hi or lo > hi:
            raise IndexError(f"[{lo}, {hi}] not inside [{self.lo}, {self.hi}]")
        return Environment(lo, self.values[lo - self.lo : hi - self.lo + 1], self.seed_id)

    def shifted(self, lam: float) -> "Environment":
        return Environment(self.lo, self.values + lam, self.seed_id)


def sample_values(dist: PotentialDistribution, u, proposal=None):
    """Map uniforms to potential values by inverse CDF.

    With ``proposal`` (an array of atom probabilities) the draws come from the
    proposal law and the log likelihood ratio ``log p/p~`` of each draw is
    returned alongside; otherwise the second output is ``None``.
    """
    u = np.asarray(u, dtype=float)
    if proposal is None:
        idx = np.searchsorted(dist.cumprobs, u, side="right")
        np.minimum(idx, dist.n_atoms - 1, out=idx)
        return dist.values[idx], None
    proposal = np.asarray(proposal, dtype=float)
    cum = np.cumsum(proposal)
    cum[-1] = 1.0
    idx = np.searchsorted(cum, u, side="right")
    np.minimum(idx, dist.n_atoms - 1, out=idx)
    with np.errstate(divide="ignore"):
        llr = np.log(dist.probs) - np.log(proposal)
    return dist.values[idx], llr[idx]


def sample_environment(dist, lo, hi, master_seed, env_index) -> Environment:
    """Draw ``V`` on ``[lo, hi]``; a pure function of its arguments."""
    if lo > hi:
        raise ValueError(f"lo={lo} > hi={hi}")
    u = _rng.site_uniforms(master_seed, env_index, lo, hi)
    values, _ = sample_values(dist, u)
    return Environment(int(lo), values, int(env_index))


@dataclass(frozen=True)
class Proposal:
    """Importance-sampling law for the sites ``lo..hi``.

    Sites in the region are drawn from ``probs`` (same atoms as the target
    law); all other sites keep the target law. Atoms given zero proposal
    probability are never drawn, which is exact whenever every environment
    carrying such an atom in the region has zero weight.
    """

    lo: int
    hi: int
    probs: tuple

    @classmethod
    def open_path(cls, dist: PotentialDistribution, lo: int, hi: int) -> "Proposal":
        """Target law conditioned on finite values throughout ``[lo, hi]``."""
        p = np.where(np.isinf(dist.values), 0.0, dist.probs)
        return cls(lo, hi, tuple(p / p.sum()))


def draw_batch(dist, lo, hi, master_seed, indices, proposal=None):
    """Potential values on ``[lo, hi]`` for many environment indices.

    Returns ``(V, log_lr)`` with ``V`` of shape ``(n, hi - lo + 1)`` and the
    per-environment log likelihood ratio (zeros without a proposal).
    """
    u = _rng.site_uniforms_batch(master_seed, indices, lo, hi)
    V, _ = sample_values(dist, u)
    log_lr = np.zeros(u.shape[0])
    if proposal is not None:
        a = max(proposal.lo, lo) - lo
        b = min(proposal.hi, hi) - lo + 1
        if b > a:
            V[:, a:b], llr = sample_values(dist, u[:, a:b], proposal.probs)
            log_lr = llr.sum(axis=1)
    return V, log_lr
