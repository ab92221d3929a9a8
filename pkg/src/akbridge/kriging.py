"""Universal Kriging with a polynomial trend and a separable Matern correlation.

The model is ``g(x) = f(x)^T beta + Z(x)`` with ``Z`` a zero-mean Gaussian
process of variance ``sigma2`` and correlation ``R(x, x'; theta)``. Inputs are
mapped to ``[0, 1]^m`` with fixed bounds before anything else happens, so the
correlation lengths ``theta`` live in that normalized space.

``beta`` and ``sigma2`` have closed forms given ``theta`` (generalized least
squares); ``theta`` maximizes the concentrated (profile) log-likelihood

    -n/2 * log(sigma2_hat(theta)) - 1/2 * log det R(theta)

using a few bounded Nelder-Mead runs in log10-space. All solves go through
the Cholesky factor of ``R``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from itertools import combinations_with_replacement
from pathlib import Path

import numpy as np
from scipy import linalg, optimize

from .errors import ConfigError, IllConditioned, RankDeficientTrend

NUGGET_LADDER = (0.0, 1e-12, 1e-10, 1e-8, 1e-6, 1e-4)
MAX_CONDITION = 1e12
LOGLIK_CAP = 1e10


@dataclass(frozen=True)
class TrendSpec:
    """Regression basis. ``indices`` pins an explicit multi-index list (PCE trend)."""

    kind: str = "polynomial_additive"
    degree: int = 4
    indices: tuple[tuple[int, ...], ...] | None = None

    def __post_init__(self):
        if self.kind not in ("polynomial_additive", "polynomial_total_degree", "pce_legendre"):
            raise ConfigError(f"surrogate.trend: unknown kind {self.kind!r}")
        if self.degree < 0:
            raise ConfigError("surrogate.trend: degree must be >= 0")
        if self.indices is not None:
            object.__setattr__(self, "indices", tuple(tuple(int(a) for a in al) for al in self.indices))

    def size(self, m: int) -> int:
        if self.indices is not None:
            return len(self.indices)
        if self.kind == "polynomial_additive":
            return 1 + m * self.degree
        return math.comb(m + self.degree, self.degree)


@dataclass(frozen=True)
class CorrelationSpec:
    nu: float = 2.5
    theta: tuple[float, ...] | None = None
    theta_bounds: tuple[float, float] = (1e-2, 1e2)
    nugget: float = 0.0
    n_starts: int = 8
    max_evals: int = 200

    def __post_init__(self):
        if self.nu not in (0.5, 1.5, 2.5):
            raise ConfigError(f"surrogate.nu must be one of 0.5, 1.5, 2.5 (got {self.nu})")
        lo, hi = self.theta_bounds
        if not 0 < lo < hi:
            raise ConfigError("surrogate.theta_bounds must satisfy 0 < lower < upper")
        if not 0.0 <= self.nugget <= 1e-4:
            raise ConfigError("surrogate.nugget must lie in [0, 1e-4]")
        if self.theta is not None:
            object.__setattr__(self, "theta", tuple(float(t) for t in self.theta))
            if any(t <= 0 for t in self.theta):
                raise ConfigError("surrogate.theta must be > 0")


def trend_basis(z, spec: TrendSpec) -> np.ndarray:
    """Regression functions at normalized points ``z`` (shape ``(n, m)`` or ``(m,)``).

    Additive: ``[1, z1..z1^d, ..., zm..zm^d]``. Total degree: all monomials of
    total degree <= d, graded order. PCE: Legendre products on ``2z - 1``.
    """
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    z = np.atleast_2d(z)
    n, m = z.shape
    if spec.kind == "pce_legendre":
        from .pck import multi_index_set, pce_basis

        indices = spec.indices if spec.indices is not None else multi_index_set(m, spec.degree).indices
        F = pce_basis(2.0 * z - 1.0, indices)
    elif spec.indices is not None:
        F = np.column_stack([np.prod(z ** np.array(al), axis=1) for al in spec.indices])
    elif spec.kind == "polynomial_additive":
        cols = [np.ones(n)]
        for k in range(m):
            for d in range(1, spec.degree + 1):
                cols.append(z[:, k] ** d)
        F = np.column_stack(cols)
    else:
        cols = [np.ones(n)]
        for d in range(1, spec.degree + 1):
            for combo in combinations_with_replacement(range(m), d):
                cols.append(np.prod(z[:, combo], axis=1))
        F = np.column_stack(cols)
    return F[0] if single else F


def matern_1d(t, nu: float):
    """Matern correlation of scaled distance ``t = |h| / theta``."""
    t = np.abs(t)
    if nu == 0.5:
        return np.exp(-t)
    if nu == 1.5:
        s = math.sqrt(3.0) * t
        return (1.0 + s) * np.exp(-s)
    if nu == 2.5:
        s = math.sqrt(5.0) * t
        return (1.0 + s + s * s / 3.0) * np.exp(-s)
    raise ValueError(f"unsupported nu {nu}")


def matern(h, theta, nu: float = 2.5):
    """Separable Matern correlation; ``h`` has the dimension on its last axis."""
    h = np.asarray(h, dtype=float)
    theta = np.asarray(theta, dtype=float)
    return np.prod(matern_1d(h / theta, nu), axis=-1)


def _corr_matrix(D, theta, nu):
    # D: (m, n, n) absolute coordinate differences
    R = np.ones(D.shape[1:])
    for k in range(D.shape[0]):
        R *= matern_1d(D[k] / theta[k], nu)
    return R


def _cross_corr(z_query, z_train, theta, nu):
    r = np.ones((z_query.shape[0], z_train.shape[0]))
    for k in range(z_train.shape[1]):
        r *= matern_1d((z_query[:, k, None] - z_train[None, :, k]) / theta[k], nu)
    return r


def _pairwise(z):
    return np.abs(z.T[:, :, None] - z.T[:, None, :])


def _cholesky_with_nugget(R, min_nugget=0.0):
    ladder = [min_nugget] + [v for v in NUGGET_LADDER if v > min_nugget]
    n = R.shape[0]
    eye = np.eye(n)
    for nug in ladder:
        try:
            L = linalg.cholesky(R + nug * eye, lower=True, check_finite=False)
        except linalg.LinAlgError:
            continue
        d = np.diag(L)
        # (max/min pivot)^2 is a cheap lower bound on cond(R)
        if d.min() > 0 and (d.max() / d.min()) ** 2 <= MAX_CONDITION:
            return L, nug
    raise IllConditioned(f"correlation matrix not factorizable with nugget <= {ladder[-1]}")


@dataclass
class _GLS:
    L: np.ndarray
    nugget: float
    beta: np.ndarray
    sigma2: float
    G: np.ndarray  # R-factor of L^-1 F, so F^T R^-1 F = G^T G
    Ft: np.ndarray
    alpha: np.ndarray  # R^-1 (y - F beta)
    logdet: float


def _gls(D, F, y, theta, nu, min_nugget=0.0) -> _GLS:
    n, p = F.shape
    if n <= p:
        raise RankDeficientTrend(f"{n} observations cannot support a {p}-term trend (need n >= {p + 1})")
    R = _corr_matrix(D, theta, nu)
    L, nug = _cholesky_with_nugget(R, min_nugget)
    Ft = linalg.solve_triangular(L, F, lower=True, check_finite=False)
    yt = linalg.solve_triangular(L, y, lower=True, check_finite=False)
    Q, G = np.linalg.qr(Ft)
    gd = np.abs(np.diag(G))
    if gd.min() <= 1e-10 * max(gd.max(), 1e-300):
        raise RankDeficientTrend("F^T R^-1 F is singular for this design and trend")
    beta = linalg.solve_triangular(G, Q.T @ yt, check_finite=False)
    res = yt - Ft @ beta
    sigma2 = float(res @ res) / n
    if sigma2 <= 1e-24 * float(yt @ yt) / n:
        sigma2 = 0.0  # trend reproduces the data up to rounding
    alpha = linalg.solve_triangular(L, res, lower=True, trans="T", check_finite=False)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    return _GLS(L, nug, beta, sigma2, G, Ft, alpha, logdet)


def _loglik_from(gls: _GLS, n: int) -> float:
    if gls.sigma2 <= 0.0:
        return LOGLIK_CAP
    return min(LOGLIK_CAP, -0.5 * n * math.log(gls.sigma2) - 0.5 * gls.logdet)


def profile_loglik(theta, z, y, trend: TrendSpec, nu: float = 2.5, min_nugget: float = 0.0) -> float:
    """Concentrated log-likelihood at correlation lengths ``theta`` (normalized inputs ``z``)."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    y = np.asarray(y, dtype=float)
    gls = _gls(_pairwise(z), trend_basis(z, trend), y, np.asarray(theta, dtype=float), nu, min_nugget)
    return _loglik_from(gls, len(y))


@dataclass(frozen=True)
class Prediction:
    mean: np.ndarray
    variance: np.ndarray

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variance)


@dataclass
class KrigingModel:
    """Fitted universal Kriging model; immutable by convention after :func:`fit`."""

    trend: TrendSpec
    corr: CorrelationSpec
    theta: np.ndarray
    beta: np.ndarray
    sigma2: float
    nugget: float
    lower: np.ndarray
    upper: np.ndarray
    X: np.ndarray
    y: np.ndarray
    loglik: float = float("nan")
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self._z = (self.X - self.lower) / (self.upper - self.lower)
        F = trend_basis(self._z, self.trend)
        self._gls = _gls(_pairwise(self._z), F, self.y, self.theta, self.corr.nu, self.nugget)
        # keep the stored coefficients authoritative (they come from the same computation)
        self._gls.beta = self.beta

    @property
    def n(self) -> int:
        return len(self.y)

    def normalize(self, X) -> np.ndarray:
        return (np.atleast_2d(np.asarray(X, dtype=float)) - self.lower) / (self.upper - self.lower)

    def predict(self, X, return_raw_variance: bool = False) -> Prediction:
        """Posterior mean and variance at physical points ``X``.

        Points outside the normalization bounds are predicted all the same;
        :meth:`is_extrapolation` flags them. Variance is clamped at zero unless
        ``return_raw_variance`` is set.
        """
        z = self.normalize(X)
        g = self._gls
        r = _cross_corr(z, self._z, self.theta, self.corr.nu)
        f = trend_basis(z, self.trend)
        mean = f @ self.beta + r @ g.alpha
        rt = linalg.solve_triangular(g.L, r.T, lower=True, check_finite=False)
        u = g.Ft.T @ rt - f.T
        v = linalg.solve_triangular(g.G, u, trans="T", check_finite=False)
        raw = self.sigma2 * (1.0 - np.sum(rt * rt, axis=0) + np.sum(v * v, axis=0))
        var = raw if return_raw_variance else np.maximum(raw, 0.0)
        return Prediction(mean, var)

    def is_extrapolation(self, X) -> np.ndarray:
        z = self.normalize(X)
        return np.any((z < 0.0) | (z > 1.0), axis=1)

    def __call__(self, X) -> np.ndarray:
        """Posterior mean, so a fitted model can stand in for the simulator."""
        return self.predict(X).mean

    def to_dict(self) -> dict:
        return {
            "type": "kriging",
            "trend": {"kind": self.trend.kind, "degree": self.trend.degree,
                      "indices": None if self.trend.indices is None else [list(a) for a in self.trend.indices]},
            "corr": {"family": "matern", "nu": self.corr.nu, "theta_bounds": list(self.corr.theta_bounds),
                     "nugget": self.corr.nugget, "n_starts": self.corr.n_starts,
                     "max_evals": self.corr.max_evals},
            "theta": self.theta.tolist(),
            "beta": self.beta.tolist(),
            "sigma2": self.sigma2,
            "nugget": self.nugget,
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "X": self.X.tolist(),
            "y": self.y.tolist(),
            "loglik": self.loglik,
            "info": self.info,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KrigingModel":
        t = d["trend"]
        trend = TrendSpec(t["kind"], t["degree"], None if t.get("indices") is None else tuple(map(tuple, t["indices"])))
        c = d["corr"]
        corr = CorrelationSpec(nu=c["nu"], theta_bounds=tuple(c["theta_bounds"]), nugget=c["nugget"],
                               n_starts=c["n_starts"], max_evals=c["max_evals"])
        return cls(trend, corr, np.array(d["theta"]), np.array(d["beta"]), float(d["sigma2"]),
                   float(d["nugget"]), np.array(d["lower"]), np.array(d["upper"]),
                   np.array(d["X"], dtype=float).reshape(len(d["y"]), -1), np.array(d["y"], dtype=float),
                   float(d.get("loglik", float("nan"))), dict(d.get("info", {})))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")


def start_points(m: int, n_starts: int, bounds) -> np.ndarray:
    """Deterministic stratified starts in log10(theta): a rank-1 lattice over stratum centres."""
    lo, hi = np.log10(bounds[0]), np.log10(bounds[1])
    centres = (np.arange(n_starts) + 0.5) / n_starts
    odd = [1, 3, 5, 7, 9, 11, 13, 15, 17, 19]
    cols = []
    for k in range(m):
        step = odd[k % len(odd)]
        while math.gcd(step, n_starts) != 1:
            step += 2
        cols.append(centres[(np.arange(n_starts) * step) % n_starts])
    return lo + np.column_stack(cols) * (hi - lo)


def fit(X, y, trend: TrendSpec = TrendSpec(), corr: CorrelationSpec = CorrelationSpec(),
        bounds=None, optimize_theta: bool = True) -> KrigingModel:
    """Fit a Kriging model to design ``X`` (n, m) and responses ``y``.

    ``bounds`` is ``(lower, upper)`` for the input normalization; defaults to
    the data range. With ``optimize_theta=False`` the lengths in ``corr.theta``
    are used as given.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.size:
        raise ValueError("X and y lengths differ")
    n, m = X.shape
    if bounds is None:
        lower, upper = X.min(axis=0), X.max(axis=0)
        upper = np.where(upper > lower, upper, lower + 1.0)
    else:
        lower, upper = (np.asarray(b, dtype=float) for b in bounds)
    p = trend.size(m)
    if n <= p:
        raise RankDeficientTrend(f"{n} observations cannot support a {p}-term trend (need n >= {p + 1})")

    z = (X - lower) / (upper - lower)
    D = _pairwise(z)
    F = trend_basis(z, trend)

    def neg_ll(log_theta):
        try:
            gls = _gls(D, F, y, 10.0 ** np.asarray(log_theta), corr.nu, corr.nugget)
        except IllConditioned:
            return np.inf
        return -_loglik_from(gls, n)

    info = {}
    if optimize_theta:
        lb, ub = np.log10(corr.theta_bounds[0]), np.log10(corr.theta_bounds[1])
        starts = start_points(m, corr.n_starts, corr.theta_bounds)
        best_x, best_f = None, np.inf
        start_values = []
        for s in starts:
            f0 = neg_ll(s)
            start_values.append(float(-f0) if np.isfinite(f0) else None)
            res = optimize.minimize(neg_ll, s, method="Nelder-Mead", bounds=[(lb, ub)] * m,
                                    options={"maxfev": corr.max_evals, "xatol": 1e-4, "fatol": 1e-9})
            cand_x, cand_f = (res.x, res.fun) if res.fun <= f0 else (s, f0)
            if cand_f < best_f:
                best_x, best_f = cand_x, cand_f
        if best_x is None or not np.isfinite(best_f):
            raise IllConditioned("no admissible correlation length found in theta_bounds")
        theta = 10.0 ** np.asarray(best_x)
        info["start_loglik"] = start_values
    else:
        if corr.theta is None or len(corr.theta) != m:
            raise ConfigError(f"fixed theta needs {m} values")
        theta = np.asarray(corr.theta, dtype=float)

    gls = _gls(D, F, y, theta, corr.nu, corr.nugget)
    loglik = _loglik_from(gls, n)
    return KrigingModel(trend, corr, theta, gls.beta, gls.sigma2, gls.nugget, lower, upper,
                        X.copy(), y.copy(), loglik, info)


def load_model(path):
    """Load a Kriging or PC-Kriging model saved as JSON."""
    d = json.loads(Path(path).read_text())
    if d.get("type") == "pck":
        from .pck import PCKModel

        return PCKModel.from_dict(d)
    return KrigingModel.from_dict(d)


def with_theta(corr: CorrelationSpec, theta) -> CorrelationSpec:
    return replace(corr, theta=tuple(float(t) for t in theta))
