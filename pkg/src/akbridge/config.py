"""Protocol configuration: one JSON document with sections beam, space,
limit_state, surrogate, reliability and al, plus a top-level ``seed``.

Seed layout relative to ``seed``: AL initial design ``+0``, candidate pool
``+1``, in-loop subset simulation ``+2``, static design of size n ``+n``,
reference sample ``+REFERENCE_SEED_OFFSET`` and the independent reference
check one above that.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .active_learning import ALConfig, SurrogateConfig
from .beam_sim import BeamConfig, BeamLimitState, LimitStateConfig
from .errors import ConfigError
from .reliability import SubsetConfig
from .sampling import DesignSpace

REFERENCE_SEED_OFFSET = 100_000
SEED_ENV = "AKBRIDGE_SEED"
OUT_ENV = "AKBRIDGE_OUT"
SECTIONS = ("beam", "space", "limit_state", "surrogate", "reliability", "al")


def _strict(cls, section: str, d: dict) -> dict:
    if not isinstance(d, dict):
        raise ConfigError(f"{section}: expected an object")
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"{section}: unknown field(s) {sorted(unknown)}")
    return d


@dataclass(frozen=True)
class ReliabilitySection:
    p0: float = 0.1
    n_per_level: int = 10_000
    max_levels: int = 8
    proposal_std: float = 1.0
    reference_n: int = 10_000
    reference_grid: tuple[int, ...] = (50, 50)
    error_estimator: str = "reference_sample"

    def __post_init__(self):
        if self.error_estimator not in ("reference_sample", "subset"):
            raise ConfigError("reliability.error_estimator must be 'reference_sample' or 'subset'")
        if self.reference_n < 1:
            raise ConfigError("reliability.reference_n must be >= 1")
        object.__setattr__(self, "reference_grid", tuple(int(r) for r in self.reference_grid))
        self.subset(0)  # validates p0, n_per_level, ...

    def subset(self, seed: int) -> SubsetConfig:
        return SubsetConfig(self.p0, self.n_per_level, self.max_levels, self.proposal_std, seed)


@dataclass(frozen=True)
class ALSection:
    eps_pf: float = 0.005
    consecutive_required: int = 3
    max_calls: int = 90
    pool_size: int = 10_000
    pool_scheme: str = "lhs"
    batch: int = 1
    static_sizes: tuple[int, ...] = (10, 25, 40, 50, 60, 70, 90)
    map_resolution: tuple[int, ...] = (200, 200)

    def __post_init__(self):
        object.__setattr__(self, "static_sizes", tuple(int(n) for n in self.static_sizes))
        object.__setattr__(self, "map_resolution", tuple(int(r) for r in self.map_resolution))
        if not self.static_sizes or any(n < 1 for n in self.static_sizes):
            raise ConfigError("al.static_sizes must be a non-empty list of positive integers")
        if list(self.static_sizes) != sorted(self.static_sizes):
            raise ConfigError("al.static_sizes must be ascending")


@dataclass(frozen=True)
class ProtocolConfig:
    beam: BeamConfig = BeamConfig()
    space: DesignSpace = DesignSpace()
    limit_state: LimitStateConfig = LimitStateConfig()
    surrogate: SurrogateConfig = SurrogateConfig()
    reliability: ReliabilitySection = ReliabilitySection()
    al: ALSection = ALSection()
    seed: int = 0

    def __post_init__(self):
        if self.space.dim != self.beam.movable_support_count:
            raise ConfigError(f"space: {self.space.dim} variable(s) but beam.movable_support_count "
                              f"is {self.beam.movable_support_count}")
        if (self.space.lower <= 0).any() or (self.space.upper >= self.beam.total_length).any():
            raise ConfigError("space: variable bounds must lie strictly inside the beam")

    @classmethod
    def from_dict(cls, d: dict) -> "ProtocolConfig":
        if not isinstance(d, dict):
            raise ConfigError("config: expected a JSON object")
        unknown = set(d) - set(SECTIONS) - {"seed"}
        if unknown:
            raise ConfigError(f"config: unknown section(s) {sorted(unknown)}")
        kw = {}
        if "beam" in d:
            kw["beam"] = BeamConfig.from_dict(d["beam"])
        if "space" in d:
            kw["space"] = DesignSpace.from_dict(d["space"])
        if "limit_state" in d:
            kw["limit_state"] = LimitStateConfig.from_dict(d["limit_state"])
        if "surrogate" in d:
            kw["surrogate"] = SurrogateConfig.from_dict(d["surrogate"])
        try:
            if "reliability" in d:
                kw["reliability"] = ReliabilitySection(**_strict(ReliabilitySection, "reliability", d["reliability"]))
            if "al" in d:
                kw["al"] = ALSection(**_strict(ALSection, "al", d["al"]))
            if "seed" in d:
                if not isinstance(d["seed"], int) or isinstance(d["seed"], bool):
                    raise ConfigError("seed: expected an integer")
                kw["seed"] = d["seed"]
        except TypeError as exc:
            raise ConfigError(f"config: {exc}") from None
        return cls(**kw)

    def to_dict(self) -> dict:
        rel = self.reliability
        al = self.al
        return {
            "seed": self.seed,
            "beam": self.beam.to_dict(),
            "space": self.space.to_dict(),
            "limit_state": {"limit_rule": self.limit_state.limit_rule, "fixed_value": self.limit_state.fixed_value},
            "surrogate": self.surrogate.to_dict(),
            "reliability": {"p0": rel.p0, "n_per_level": rel.n_per_level, "max_levels": rel.max_levels,
                            "proposal_std": rel.proposal_std, "reference_n": rel.reference_n,
                            "reference_grid": list(rel.reference_grid), "error_estimator": rel.error_estimator},
            "al": {"eps_pf": al.eps_pf, "consecutive_required": al.consecutive_required,
                   "max_calls": al.max_calls, "pool_size": al.pool_size, "pool_scheme": al.pool_scheme,
                   "batch": al.batch, "static_sizes": list(al.static_sizes),
                   "map_resolution": list(al.map_resolution)},
        }

    # derived objects

    def simulator(self) -> BeamLimitState:
        return BeamLimitState(self.beam, self.limit_state)

    def al_config(self) -> ALConfig:
        a = self.al
        return ALConfig(self.surrogate, a.eps_pf, a.consecutive_required, a.max_calls, a.pool_size,
                        a.pool_scheme, a.batch, self.seed, self.reliability.subset(0))

    @property
    def reference_seed(self) -> int:
        return self.seed + REFERENCE_SEED_OFFSET

    def with_overrides(self, **kw) -> "ProtocolConfig":
        """Apply flat CLI overrides: seed, reference_n, static_sizes, surrogate, eps_pf, max_calls."""
        cfg = self
        if kw.get("seed") is not None:
            cfg = replace(cfg, seed=int(kw["seed"]))
        if kw.get("reference_n") is not None:
            cfg = replace(cfg, reliability=replace(cfg.reliability, reference_n=int(kw["reference_n"])))
        al = {k: kw[k] for k in ("static_sizes", "eps_pf", "max_calls") if kw.get(k) is not None}
        if al:
            cfg = replace(cfg, al=replace(cfg.al, **al))
        if kw.get("surrogate") is not None:
            cfg = replace(cfg, surrogate=replace(cfg.surrogate, kind=kw["surrogate"]))
        return cfg


def load_config(path=None) -> ProtocolConfig:
    """Read a config file (or a run manifest, whose ``config`` entry is used).

    ``AKBRIDGE_SEED`` overrides the seed; no other environment variable is read
    here.
    """
    if path is None:
        cfg = ProtocolConfig()
    else:
        try:
            d = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON in {path}: {exc}") from None
        if isinstance(d, dict) and "manifest_version" in d:
            d = d["config"]
        cfg = ProtocolConfig.from_dict(d)
    env_seed = os.environ.get(SEED_ENV)
    if env_seed is not None:
        try:
            cfg = replace(cfg, seed=int(env_seed))
        except ValueError:
            raise ConfigError(f"seed: {SEED_ENV}={env_seed!r} is not an integer") from None
    return cfg
