"""Experiment configuration files.

A config is a flat TOML document (no tables)::

    schema = 1
    kind = "renewal"
    atoms = [[0.0, 0.5], [1.0, 0.5]]   # [value, prob]; value may be inf
    lambda = 0.0
    master_seed = 7
    R = 14
    mode = "exact"

``schema`` and ``master_seed`` are mandatory; unknown keys are errors.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .potential import PotentialDistribution, make_distribution

__all__ = ["ConfigError", "ExperimentConfig", "KINDS", "load_config", "parse_config"]

SCHEMA = 1

KINDS = (
    "block_table",
    "renewal",
    "speed",
    "lyapunov",
    "derivative",
    "diagnostics",
    "counterexample",
    "multid_scan",
    "cube_stats",
)

# keys each kind needs (beyond schema, kind, master_seed)
_REQUIRED = {
    "block_table": ("atoms", "R"),
    "renewal": ("atoms", "R"),
    "speed": ("atoms", "R", "y"),
    "lyapunov": ("atoms", "y"),
    "derivative": ("atoms", "y", "lambda_grid"),
    "diagnostics": ("atoms",),
    "counterexample": ("p_zero", "ys"),
    "multid_scan": ("atoms", "ys"),
    "cube_stats": ("atoms", "L", "kappa", "cubes"),
}

_DEFAULTS = {
    "lambda": 0.0,
    "mode": "exact",
    "n_envs": 1000,
    "W": None,
    "proposal": "auto",
    "measure": None,  # per kind: speed -> block, counterexample -> window
    "workers": 1,
    "window_tol": 1e-10,
    "direction": [1, 0],
    "box_margin": None,
    "contrast_atoms": None,
    "method": "mc",
    "paths_per_env": 20,
}

_KNOWN = set(_DEFAULTS) | {"schema", "kind", "master_seed", "atoms", "R", "y", "ys", "lambda_grid", "p_zero", "L",
                           "kappa", "cubes", "output"}


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class ExperimentConfig:
    kind: str
    master_seed: int
    dist: PotentialDistribution | None
    params: dict = field(default_factory=dict)
    source: str | None = None

    def __getitem__(self, key):
        return self.params[key]

    def get(self, key, default=None):
        return self.params.get(key, default)

    def to_dict(self) -> dict:
        out = {"schema": SCHEMA, "kind": self.kind, "master_seed": self.master_seed}
        if self.dist is not None:
            out["atoms"] = [[_num(v), p] for v, p in self.dist.atoms]
            out["lambda"] = self.dist.lambda_shift
        out.update({k: v for k, v in self.params.items() if k not in ("atoms", "lambda")})
        return out


def _num(v):
    return "inf" if isinstance(v, float) and math.isinf(v) else v


def _int(d, key, lo=None):
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{key} must be an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(f"{key} must be >= {lo}, got {v}")
    return v


def _int_list(d, key, lo=None):
    v = d[key]
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{key} must be a non-empty array of integers")
    for x in v:
        if isinstance(x, bool) or not isinstance(x, int) or (lo is not None and x < lo):
            raise ConfigError(f"{key} entries must be integers >= {lo}, got {x!r}")
    return v


def _atoms(raw):
    if not isinstance(raw, list) or not raw:
        raise ConfigError("atoms must be a non-empty array of [value, prob] pairs")
    for a in raw:
        if not (isinstance(a, list) and len(a) == 2):
            raise ConfigError(f"atom {a!r} is not a [value, prob] pair")
        for x in a:
            if isinstance(x, bool) or not isinstance(x, (int, float, str)):
                raise ConfigError(f"atom entry {x!r} is not a number")
    try:
        total = math.fsum(float(a[1]) for a in raw)
    except ValueError:
        raise ConfigError("atom probabilities must be numbers") from None
    if not abs(total - 1.0) <= 1e-9:
        raise ConfigError(f"atom probabilities sum to {total!r}, not 1")
    return raw


def parse_config(text: str, source: str | None = None) -> ExperimentConfig:
    """Parse and validate config text; raises :class:`ConfigError`."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"syntax error: {exc}") from None
    nested = [k for k, v in raw.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"config must be flat; found tables {nested}")
    unknown = sorted(set(raw) - _KNOWN)
    if unknown:
        raise ConfigError(f"unknown keys {unknown}")
    if raw.get("schema") != SCHEMA:
        raise ConfigError(f"schema = {SCHEMA} is required, got {raw.get('schema')!r}")
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}, got {kind!r}")
    if "master_seed" not in raw:
        raise ConfigError("master_seed is required (no default seed)")
    seed = _int(raw, "master_seed", 0)
    missing = [k for k in _REQUIRED[kind] if k not in raw]
    if missing:
        raise ConfigError(f"kind {kind!r} requires {missing}")

    params = dict(_DEFAULTS)
    params.update({k: v for k, v in raw.items() if k not in ("schema", "kind", "master_seed")})

    dist = None
    if "atoms" in raw:
        lam = raw.get("lambda", 0.0)
        if isinstance(lam, bool) or not isinstance(lam, (int, float)):
            raise ConfigError(f"lambda must be a number, got {lam!r}")
        try:
            dist = make_distribution(_atoms(raw["atoms"]), float(lam))
        except ValueError as exc:
            raise ConfigError(f"atoms: {exc}") from None
    if params["contrast_atoms"] is not None:
        try:
            params["contrast_atoms"] = make_distribution(_atoms(params["contrast_atoms"]))
        except ValueError as exc:
            raise ConfigError(f"contrast_atoms: {exc}") from None

    for key, lo in (("R", 1), ("y", 1), ("n_envs", 2), ("workers", 1), ("L", 2), ("cubes", 1),
                    ("paths_per_env", 1)):
        if key in raw:
            params[key] = _int(raw, key, lo)
    if raw.get("W") is not None:
        params["W"] = _int(raw, "W", 1)
    if "ys" in raw:
        params["ys"] = _int_list(raw, "ys", 1)
    if "lambda_grid" in raw:
        g = raw["lambda_grid"]
        if not isinstance(g, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in g):
            raise ConfigError("lambda_grid must be an array of numbers")
        params["lambda_grid"] = [float(x) for x in g]
    if "p_zero" in raw:
        p = raw["p_zero"]
        if isinstance(p, bool) or not isinstance(p, (int, float)) or not 0 < p < 1:
            raise ConfigError(f"p_zero must lie in (0, 1), got {p!r}")
    if "kappa" in raw and (isinstance(raw["kappa"], bool) or not isinstance(raw["kappa"], (int, float))):
        raise ConfigError("kappa must be a number")
    if kind == "cube_stats" and params["L"] % 2:
        raise ConfigError("L must be even")
    if params["mode"] not in ("exact", "localtime", "mc"):
        raise ConfigError(f"mode must be exact, localtime or mc, got {params['mode']!r}")
    if params["measure"] not in (None, "block", "window"):
        raise ConfigError(f"measure must be block or window, got {params['measure']!r}")
    if params["method"] not in ("mc", "exact"):
        raise ConfigError(f"method must be mc or exact, got {params['method']!r}")
    if params["proposal"] not in ("auto", "open", "none"):
        raise ConfigError(f"proposal must be auto, open or none, got {params['proposal']!r}")
    params["proposal"] = None if params["proposal"] == "none" else params["proposal"]
    return ExperimentConfig(kind, seed, dist, params, source)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config(text, str(path))
