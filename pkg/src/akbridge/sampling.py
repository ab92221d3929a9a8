"""Design space, Latin Hypercube / grid / MC samples and the uniform <-> standard-normal map."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from .errors import ConfigError

CDF_EPS = 1e-12


class BoundaryPointWarning(UserWarning):
    """A point sat on (or outside) the bounds and was clamped before the normal transform."""


@dataclass(frozen=True)
class DesignSpace:
    """Independent uniform variables, one ``(name, lower, upper)`` per dimension."""

    variables: tuple[tuple[str, float, float], ...] = (("x1", 3.0, 18.0), ("x2", 23.0, 38.0))

    def __post_init__(self):
        variables = tuple((str(n), float(a), float(b)) for n, a, b in self.variables)
        object.__setattr__(self, "variables", variables)
        if not variables:
            raise ConfigError("space.variables: need at least one variable")
        for name, a, b in variables:
            if not a < b:
                raise ConfigError(f"space.variables: {name} has lower >= upper ({a} >= {b})")
        names = [v[0] for v in variables]
        if len(set(names)) != len(names):
            raise ConfigError("space.variables: duplicate names")

    @property
    def dim(self) -> int:
        return len(self.variables)

    @property
    def names(self) -> list[str]:
        return [v[0] for v in self.variables]

    @property
    def lower(self) -> np.ndarray:
        return np.array([v[1] for v in self.variables])

    @property
    def upper(self) -> np.ndarray:
        return np.array([v[2] for v in self.variables])

    def contains(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        return np.all((X >= self.lower) & (X <= self.upper), axis=1)

    def to_unit(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.lower) / (self.upper - self.lower)

    def from_unit(self, Z) -> np.ndarray:
        return self.lower + np.asarray(Z, dtype=float) * (self.upper - self.lower)

    @classmethod
    def from_dict(cls, d: dict) -> "DesignSpace":
        try:
            variables = tuple((v["name"], v["lower"], v["upper"]) for v in d["variables"])
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"space.variables: expected list of {{name, lower, upper}} ({exc})") from None
        return cls(variables)

    def to_dict(self) -> dict:
        return {"variables": [{"name": n, "lower": a, "upper": b} for n, a, b in self.variables]}


@dataclass(frozen=True)
class SampleSet:
    points: np.ndarray
    seed: int | None = None
    scheme: str = "lhs"
    names: tuple[str, ...] = field(default=())

    def __len__(self):
        return len(self.points)

    def to_csv(self, path) -> None:
        names = self.names or tuple(f"x{i + 1}" for i in range(self.points.shape[1]))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for row in self.points:
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path, scheme: str = "lhs", seed: int | None = None) -> "SampleSet":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        names = tuple(rows[0])
        pts = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(names))
        return cls(pts, seed=seed, scheme=scheme, names=names)


def lhs(n: int, space: DesignSpace, seed: int) -> SampleSet:
    """Latin Hypercube sample: one point per equal-probability stratum per dimension.

    Points are uniform within their stratum and strata are paired across
    dimensions by independent random permutations.
    """
    if n < 1:
        raise ValueError("lhs needs n >= 1")
    rng = np.random.default_rng(seed)
    m = space.dim
    jitter = rng.random((n, m))
    perms = np.column_stack([rng.permutation(n) for _ in range(m)])
    z = (perms + jitter) / n
    return SampleSet(space.from_unit(z), seed=seed, scheme="lhs", names=tuple(space.names))


def mc(n: int, space: DesignSpace, seed: int) -> SampleSet:
    rng = np.random.default_rng(seed)
    z = rng.random((n, space.dim))
    return SampleSet(space.from_unit(z), seed=seed, scheme="mc", names=tuple(space.names))


def grid(space: DesignSpace, resolution) -> SampleSet:
    """Tensor grid including the bounds.

    Row-major order: the last variable varies fastest, so ``(2, 2)`` on
    ``[a1, b1] x [a2, b2]`` gives ``(a1, a2), (a1, b2), (b1, a2), (b1, b2)``.
    """
    resolution = tuple(int(r) for r in np.atleast_1d(resolution))
    if len(resolution) != space.dim:
        raise ValueError(f"resolution needs {space.dim} entries, got {len(resolution)}")
    if any(r < 2 for r in resolution):
        raise ValueError("grid resolution must be >= 2 in every dimension")
    axes = [np.linspace(a, b, r) for (_, a, b), r in zip(space.variables, resolution)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([g.ravel() for g in mesh])
    return SampleSet(pts, seed=None, scheme="grid", names=tuple(space.names))


def normal_cdf(u):
    return special.ndtr(u)


def normal_ppf(p):
    return special.ndtri(p)


def to_standard_normal(x, space: DesignSpace) -> np.ndarray:
    """u_k = Phi^-1((x_k - a_k) / (b_k - a_k)).

    Probabilities outside ``(CDF_EPS, 1 - CDF_EPS)`` are clamped and a
    :class:`BoundaryPointWarning` is issued instead of returning infinities.
    """
    z = space.to_unit(x)
    bad = (z <= CDF_EPS) | (z >= 1.0 - CDF_EPS)
    if np.any(bad):
        warnings.warn(f"{int(np.sum(bad))} coordinate(s) clamped at the design-space boundary",
                      BoundaryPointWarning, stacklevel=2)
        z = np.clip(z, CDF_EPS, 1.0 - CDF_EPS)
    return normal_ppf(z)


def from_standard_normal(u, space: DesignSpace) -> np.ndarray:
    return space.from_unit(normal_cdf(np.asarray(u, dtype=float)))
