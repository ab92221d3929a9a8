"""PC-Kriging: universal Kriging whose trend is an orthonormal Legendre chaos basis.

Uniform inputs on ``[a_k, b_k]`` map affinely to ``u_k`` in ``[-1, 1]`` and the
trend functions are products ``prod_k psi_{alpha_k}(u_k)`` with
``psi_j = sqrt(2j + 1) P_j``, orthonormal under the uniform density 1/2.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kriging
from .kriging import CorrelationSpec, KrigingModel, TrendSpec
from .sampling import DesignSpace


def legendre_orthonormal(k: int, u):
    """psi_k(u) = sqrt(2k+1) P_k(u), P_k from the three-term recurrence."""
    if k < 0:
        raise ValueError("degree must be >= 0")
    u = np.asarray(u, dtype=float)
    p_prev, p = np.ones_like(u), u
    if k == 0:
        return p_prev
    for j in range(1, k):
        p_prev, p = p, ((2 * j + 1) * u * p - j * p_prev) / (j + 1)
    return math.sqrt(2 * k + 1) * p


def legendre_table(max_degree: int, u) -> np.ndarray:
    """psi_0..psi_max_degree at ``u``; the new axis is last."""
    u = np.asarray(u, dtype=float)
    out = np.empty(u.shape + (max_degree + 1,))
    out[..., 0] = 1.0
    if max_degree >= 1:
        out[..., 1] = u
    for j in range(1, max_degree):
        out[..., j + 1] = ((2 * j + 1) * u * out[..., j] - j * out[..., j - 1]) / (j + 1)
    return out * np.sqrt(2 * np.arange(max_degree + 1) + 1)


@dataclass(frozen=True)
class MultiIndexSet:
    indices: tuple[tuple[int, ...], ...]
    truncation: int

    def __len__(self):
        return len(self.indices)


def multi_index_set(m: int, p: int) -> MultiIndexSet:
    """All alpha in N^m with |alpha|_1 <= p, graded-lexicographic order.

    Within one total degree the indices are sorted in decreasing lexicographic
    order, e.g. degree 2 in 2D gives ``(2, 0), (1, 1), (0, 2)``.
    """
    if m < 1 or p < 0:
        raise ValueError("need m >= 1 and p >= 0")
    out = []
    for d in range(p + 1):
        out.extend(sorted(_compositions(d, m), reverse=True))
    return MultiIndexSet(tuple(out), p)


def _compositions(total, parts):
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def pce_basis(u, indices) -> np.ndarray:
    """Basis matrix ``(n, len(indices))`` at points ``u`` in ``[-1, 1]^m``."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    idx = np.asarray(indices, dtype=int)
    table = legendre_table(int(idx.max()) if idx.size else 0, u)  # (n, m, deg+1)
    cols = np.ones((u.shape[0], len(idx)))
    for k in range(u.shape[1]):
        cols *= table[:, k, idx[:, k]]
    return cols


def pck_trend(x, space: DesignSpace, basis: MultiIndexSet) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    u = 2.0 * space.to_unit(x) - 1.0
    F = pce_basis(u, basis.indices)
    return F[0] if x.ndim == 1 else F


class PCKModel:
    """Kriging model with a (possibly truncated) Legendre chaos trend."""

    def __init__(self, kriging_model: KrigingModel, basis: MultiIndexSet, truncated: bool):
        self.kriging = kriging_model
        self.basis = basis
        self.truncated = truncated

    @property
    def coefficients(self) -> dict:
        return {a: float(b) for a, b in zip(self.basis.indices, self.kriging.beta)}

    @property
    def n(self):
        return self.kriging.n

    @property
    def X(self):
        return self.kriging.X

    @property
    def y(self):
        return self.kriging.y

    @property
    def sigma2(self):
        return self.kriging.sigma2

    def predict(self, X, return_raw_variance: bool = False):
        return self.kriging.predict(X, return_raw_variance)

    def __call__(self, X):
        return self.kriging(X)

    def to_dict(self) -> dict:
        d = self.kriging.to_dict()
        d["type"] = "pck"
        d["multi_indices"] = [list(a) for a in self.basis.indices]
        d["pce_degree"] = self.basis.truncation
        d["truncated"] = self.truncated
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PCKModel":
        km = KrigingModel.from_dict(d)
        basis = MultiIndexSet(tuple(tuple(a) for a in d["multi_indices"]), int(d["pce_degree"]))
        return cls(km, basis, bool(d["truncated"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")


def fit_pck(X, y, space: DesignSpace, p: int = 4, corr: CorrelationSpec = CorrelationSpec(),
            optimize_theta: bool = True) -> PCKModel:
    """Fit PC-Kriging with a total-degree-``p`` Legendre trend.

    When the full basis has more than ``n - 1`` terms it is cut to the first
    ``n - 1`` indices in graded-lex order and ``truncated`` is set.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, m = X.shape
    full = multi_index_set(m, p)
    truncated = len(full) > n - 1
    basis = MultiIndexSet(full.indices[: max(n - 1, 1)], p) if truncated else full
    trend = TrendSpec("pce_legendre", p, basis.indices)
    km = kriging.fit(X, y, trend, corr, bounds=(space.lower, space.upper), optimize_theta=optimize_theta)
    return PCKModel(km, basis, truncated)
