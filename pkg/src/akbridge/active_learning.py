"""Active-learning reliability loop (U-function enrichment) and the static-DoE sweep.

Loop: LHS initial design of ``max(2m, 10)`` points -> fit surrogate -> pf by
subset simulation on the surrogate mean -> stop when the relative pf change
stays below ``eps_pf`` for ``consecutive_required`` iterations (or the call
budget is spent) -> otherwise add the candidate-pool point with the smallest
``U = |mu| / sigma`` and refit.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import kriging
from .errors import ConfigError, PoolExhausted, RankDeficientTrend, SimulatorError
from .kriging import CorrelationSpec, TrendSpec
from .pck import fit_pck
from .reliability import ReliabilityEstimate, SubsetConfig, relative_error, subset_pf
from .sampling import DesignSpace, SampleSet, lhs, mc

EXCLUSION_TOL = 1e-9
RESOLVED_STD = 1e-12

# seed offsets relative to ALConfig.seed
POOL_SEED_OFFSET = 1
SUBSET_SEED_OFFSET = 2


@dataclass(frozen=True)
class SurrogateConfig:
    kind: str = "kriging"
    trend: TrendSpec = TrendSpec()
    corr: CorrelationSpec = CorrelationSpec()
    pce_degree: int = 4

    def __post_init__(self):
        if self.kind not in ("kriging", "pck"):
            raise ConfigError(f"surrogate.kind must be 'kriging' or 'pck' (got {self.kind!r})")

    @classmethod
    def from_dict(cls, d: dict) -> "SurrogateConfig":
        d = dict(d)
        allowed = {"kind", "trend_kind", "trend_degree", "nu", "theta_bounds", "nugget", "n_starts",
                   "max_evals", "pce_degree"}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"surrogate: unknown field(s) {sorted(unknown)}")
        trend = TrendSpec(d.pop("trend_kind", "polynomial_additive"), int(d.pop("trend_degree", 4)))
        corr_keys = {k: d.pop(k) for k in ("nu", "theta_bounds", "nugget", "n_starts", "max_evals") if k in d}
        if "theta_bounds" in corr_keys:
            corr_keys["theta_bounds"] = tuple(corr_keys["theta_bounds"])
        return cls(kind=d.get("kind", "kriging"), trend=trend, corr=CorrelationSpec(**corr_keys),
                   pce_degree=int(d.get("pce_degree", 4)))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "trend_kind": self.trend.kind, "trend_degree": self.trend.degree,
                "nu": self.corr.nu, "theta_bounds": list(self.corr.theta_bounds), "nugget": self.corr.nugget,
                "n_starts": self.corr.n_starts, "max_evals": self.corr.max_evals, "pce_degree": self.pce_degree}


def fit_surrogate(X, y, space: DesignSpace, cfg: SurrogateConfig):
    if cfg.kind == "pck":
        return fit_pck(X, y, space, cfg.pce_degree, cfg.corr)
    return kriging.fit(X, y, cfg.trend, cfg.corr, bounds=(space.lower, space.upper))


@dataclass(frozen=True)
class ALConfig:
    surrogate: SurrogateConfig = SurrogateConfig()
    eps_pf: float = 0.005
    consecutive_required: int = 3
    max_calls: int = 90
    pool_size: int = 10_000
    pool_scheme: str = "lhs"
    batch: int = 1
    seed: int = 0
    subset: SubsetConfig = SubsetConfig()
    initial_size: int | None = None

    def __post_init__(self):
        if not self.eps_pf > 0:
            raise ConfigError("al.eps_pf must be > 0")
        if self.batch < 1:
            raise ConfigError("al.batch must be >= 1")
        if self.consecutive_required < 1:
            raise ConfigError("al.consecutive_required must be >= 1")
        if self.pool_scheme not in ("lhs", "mc"):
            raise ConfigError("al.pool_scheme must be 'lhs' or 'mc'")


def initial_doe_size(m: int) -> int:
    if m < 1:
        raise ValueError("dimension must be >= 1")
    return max(2 * m, 10)


def u_function(mean, variance, sigma2: float | None = None) -> np.ndarray:
    """Deviation number |mu| / sigma; points with negligible std get +inf."""
    mean = np.asarray(mean, dtype=float)
    std = np.sqrt(np.maximum(np.asarray(variance, dtype=float), 0.0))
    scale = RESOLVED_STD * (math.sqrt(sigma2) if sigma2 else 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        U = np.abs(mean) / std
    return np.where(std < scale, np.inf, U)


def exclusion_mask(pool: np.ndarray, doe: np.ndarray, tol: float = EXCLUSION_TOL) -> np.ndarray:
    """True for pool rows within ``tol`` (max-norm) of any design point."""
    mask = np.zeros(len(pool), dtype=bool)
    for x in np.atleast_2d(doe):
        mask |= np.max(np.abs(pool - x), axis=1) <= tol
    return mask


def select_next(model, pool, exclusions=None, k: int = 1):
    """Indices, points and U values of the ``k`` pool points with smallest U.

    Ties resolve to the lowest pool index. Points already in the design
    (``exclusions``) are never returned.
    """
    pool = np.atleast_2d(np.asarray(pool.points if isinstance(pool, SampleSet) else pool, dtype=float))
    pred = model.predict(pool)
    U = u_function(pred.mean, pred.variance, model.sigma2)
    return select_from_u(U, pool, exclusions, k)


def select_from_u(U, pool, exclusions=None, k: int = 1):
    U = np.array(U, dtype=float)
    candidates = np.ones(len(U), dtype=bool)
    if exclusions is not None and len(exclusions):
        candidates &= ~exclusion_mask(pool, exclusions)
    if not candidates.any():
        raise PoolExhausted("every candidate point is already in the design")
    idx = np.flatnonzero(candidates)
    order = idx[np.argsort(U[idx], kind="stable")][:k]
    return order, pool[order], U[order]


def relative_changes(pf_history) -> list[float]:
    """|pf_i - pf_{i-1}| / pf_i for i >= 1; ``None``/NaN entries make both neighbours unusable."""
    out = []
    for prev, cur in zip(pf_history[:-1], pf_history[1:]):
        if prev is None or cur is None or (isinstance(prev, float) and math.isnan(prev)) \
                or (isinstance(cur, float) and math.isnan(cur)):
            out.append(math.inf)
        elif cur == 0.0:
            out.append(0.0 if prev == 0.0 else math.inf)
        else:
            out.append(abs(cur - prev) / cur)
    return out


def converged(pf_history, eps_pf: float, k: int = 3) -> bool:
    if len(pf_history) <= k:
        return False
    return all(c <= eps_pf for c in relative_changes(pf_history)[-k:])


@dataclass
class TraceRecord:
    iteration: int
    n_calls: int
    pf: float
    rel_change: float | None
    x_next: tuple | None
    u_next: float | None
    levels: int = 1
    max_levels_exceeded: bool = False
    pf_val: float | None = None
    E_pf: float | None = None


@dataclass
class LearningTrace:
    records: list = field(default_factory=list)
    status: str = "running"

    def pf_history(self) -> list:
        return [math.nan if r.max_levels_exceeded else r.pf for r in self.records]

    @property
    def n_calls(self) -> int:
        return self.records[-1].n_calls if self.records else 0

    def to_csv(self, path, names) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iter", "n_calls", "pf", "rel_change"] + [f"{n}_next" for n in names]
                       + ["u_next", "levels", "max_levels_exceeded", "pf_val", "E_pf"])
            for r in self.records:
                xs = [""] * len(names) if r.x_next is None else [repr(float(v)) for v in r.x_next]
                w.writerow([r.iteration, r.n_calls, repr(r.pf), _fmt(r.rel_change)] + xs
                           + [_fmt(r.u_next), r.levels, str(r.max_levels_exceeded).lower(),
                              _fmt(r.pf_val), _fmt(r.E_pf)])


def _fmt(v):
    if v is None:
        return ""
    v = float(v)
    return "inf" if math.isinf(v) else repr(v)


@dataclass
class ALResult:
    model: object
    estimate: ReliabilityEstimate
    trace: LearningTrace
    X: np.ndarray
    y: np.ndarray


def _call(simulator, X):
    try:
        return np.asarray(simulator(X), dtype=float)
    except SimulatorError:
        raise
    except Exception as exc:  # noqa: BLE001
        raise SimulatorError(np.atleast_2d(X)[0], exc) from exc


def run(simulator, space: DesignSpace, cfg: ALConfig = ALConfig(), validation=None,
        pf_ref: float | None = None) -> ALResult:
    """Run the enrichment loop until pf stabilizes or ``max_calls`` is reached.

    ``validation`` is an optional callable ``model -> (pf_val, E_pf)`` recorded
    per iteration; it never influences the loop. Without it, a given
    ``pf_ref`` yields ``E_pf`` from the subset estimate. If a fit or a
    simulator call fails the exception carries the trace so far as
    ``exc.trace``.
    """
    m = space.dim
    n0 = cfg.initial_size or initial_doe_size(m)
    if cfg.max_calls < n0:
        raise ConfigError(f"al.max_calls ({cfg.max_calls}) is below the initial design size ({n0})")
    X = lhs(n0, space, cfg.seed).points
    y = _call(simulator, X)
    sampler = lhs if cfg.pool_scheme == "lhs" else mc
    pool = sampler(cfg.pool_size, space, cfg.seed + POOL_SEED_OFFSET).points
    sub_cfg = replace(cfg.subset, seed=cfg.seed + SUBSET_SEED_OFFSET)

    trace = LearningTrace()
    it = 0
    try:
        while True:
            it += 1
            model = fit_surrogate(X, y, space, cfg.surrogate)
            est = subset_pf(model, space, sub_cfg)
            rec = TraceRecord(it, len(y), est.pf, None, None, None, est.levels, est.max_levels_exceeded)
            if validation is not None:
                rec.pf_val, rec.E_pf = validation(model)
            elif pf_ref:
                rec.E_pf = relative_error(est.pf, pf_ref)
            trace.records.append(rec)
            hist = trace.pf_history()
            if len(hist) >= 2:
                rec.rel_change = relative_changes(hist)[-1]
            if converged(hist, cfg.eps_pf, cfg.consecutive_required):
                trace.status = "converged"
                break
            if len(y) >= cfg.max_calls:
                trace.status = "budget_exhausted"
                break
            k = min(cfg.batch, cfg.max_calls - len(y))
            _, x_new, u_new = select_next(model, pool, X, k)
            rec.x_next = tuple(float(v) for v in x_new[0])
            rec.u_next = float(u_new[0])
            y_new = _call(simulator, x_new)
            X = np.vstack([X, x_new])
            y = np.concatenate([y, y_new])
    except Exception as exc:
        exc.trace = trace
        raise
    return ALResult(model, est, trace, X, y)


@dataclass
class StaticRow:
    n: int
    pf: float | None
    E_pf: float | None
    calls: int
    status: str = "ok"
    reason: str = ""
    pf_val: float | None = None
    E_pf_val: float | None = None


def static_study(simulator, space: DesignSpace, sizes, surrogate_cfg: SurrogateConfig, pf_ref: float | None,
                 subset_cfg: SubsetConfig = SubsetConfig(), seed: int = 0, validation=None) -> list[StaticRow]:
    """One independent LHS design per size (seed ``seed + n``), fit, subset pf, E_pf."""
    sizes = list(sizes)
    if sizes != sorted(sizes):
        raise ConfigError("static sizes must be ascending")
    rows = []
    for n in sizes:
        X = lhs(n, space, seed + n).points
        y = _call(simulator, X)
        try:
            model = fit_surrogate(X, y, space, surrogate_cfg)
        except RankDeficientTrend as exc:
            rows.append(StaticRow(n, None, None, n, "failed", f"RankDeficientTrend: {exc}"))
            continue
        est = subset_pf(model, space, subset_cfg)
        e = relative_error(est.pf, pf_ref) if pf_ref else None
        row = StaticRow(n, est.pf, e, n)
        if validation is not None:
            row.pf_val, row.E_pf_val = validation(model)
        rows.append(row)
    return rows


def trace_as_dicts(trace: LearningTrace) -> list[dict]:
    return [asdict(r) for r in trace.records]
