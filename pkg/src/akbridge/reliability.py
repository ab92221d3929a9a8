"""Failure-probability estimators: crude (LHS) Monte Carlo and subset simulation.

An *evaluator* is any callable mapping an ``(n, m)`` array of design points
to ``n`` limit-state values; ``g <= 0`` is failure. Subset simulation runs in
standard-normal space and maps samples back through the design space's
isoprobabilistic transform (or feeds ``u`` straight to the evaluator when no
space is given).
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, SimulatorError, ZeroReference
from .sampling import DesignSpace, SampleSet, from_standard_normal, lhs


@dataclass
class ReliabilityEstimate:
    pf: float
    cov: float
    n_evals: int
    method: str
    seed: int | None = None
    levels: int = 1
    thresholds: list = field(default_factory=list)
    max_levels_exceeded: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        if not math.isfinite(self.cov):
            d["cov"] = "inf"
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ReliabilityEstimate":
        d = dict(d)
        d["cov"] = float(d["cov"])
        return cls(**d)


@dataclass(frozen=True)
class SubsetConfig:
    p0: float = 0.1
    n_per_level: int = 1000
    max_levels: int = 8
    proposal_std: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.p0 < 1.0:
            raise ConfigError("reliability.p0 must lie in (0, 1)")
        if self.n_per_level * self.p0 < 10:
            raise ConfigError("reliability: n_per_level * p0 must be >= 10")
        if self.max_levels < 1:
            raise ConfigError("reliability.max_levels must be >= 1")
        if not self.proposal_std > 0:
            raise ConfigError("reliability.proposal_std must be > 0")


def mc_cov(pf: float, n: int) -> float:
    return math.sqrt((1.0 - pf) / (n * pf)) if pf > 0 else math.inf


def mc_pf(evaluator, space: DesignSpace, n: int, seed: int) -> ReliabilityEstimate:
    """pf = #{g <= 0} / n over an LHS sample of size ``n``."""
    X = lhs(n, space, seed).points
    g = np.asarray(evaluator(X), dtype=float)
    pf = float(np.mean(g <= 0.0))
    return ReliabilityEstimate(pf, mc_cov(pf, n), n, "mc", seed)


def _evaluate_chunk(args):
    simulator, X = args
    rows = []
    for x in X:
        if hasattr(simulator, "evaluate"):
            q, g = simulator.evaluate(x)
        else:
            q, g = math.nan, float(np.asarray(simulator(np.atleast_2d(x)))[0])
        rows.append((q, g))
    return rows


def evaluate_batch(simulator, X, threads: int = 1, chunk: int = 250) -> tuple[np.ndarray, np.ndarray]:
    """(q, g) for every row of ``X``, in input order regardless of ``threads``."""
    X = np.atleast_2d(X)
    chunks = [X[i:i + chunk] for i in range(0, len(X), chunk)]
    if threads > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(_evaluate_chunk, [(simulator, c) for c in chunks]))
    else:
        parts = [_evaluate_chunk((simulator, c)) for c in chunks]
    rows = [r for p in parts for r in p]
    q = np.array([r[0] for r in rows], dtype=float)
    g = np.array([r[1] for r in rows], dtype=float)
    return q, g


@dataclass
class ReferenceTable:
    samples: SampleSet
    q: np.ndarray
    g: np.ndarray

    @property
    def failed(self) -> np.ndarray:
        return self.g <= 0.0

    def to_csv(self, path) -> None:
        names = list(self.samples.names)
        with open(path, "w") as fh:
            fh.write(",".join(names + ["q", "g", "failed"]) + "\n")
            for x, q, g in zip(self.samples.points, self.q, self.g):
                vals = [repr(float(v)) for v in x] + [repr(float(q)), repr(float(g)), str(bool(g <= 0.0)).lower()]
                fh.write(",".join(vals) + "\n")

    @classmethod
    def from_csv(cls, path) -> "ReferenceTable":
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            rows = [line.strip().split(",") for line in fh if line.strip()]
        m = len(header) - 3
        pts = np.array([[float(v) for v in r[:m]] for r in rows]).reshape(-1, m)
        q = np.array([float(r[m]) for r in rows])
        g = np.array([float(r[m + 1]) for r in rows])
        return cls(SampleSet(pts, scheme="lhs", names=tuple(header[:m])), q, g)


def build_reference(simulator, space: DesignSpace, n: int = 10_000, seed: int = 0,
                    threads: int = 1) -> tuple[ReliabilityEstimate, ReferenceTable]:
    """Brute-force reference study: ``n`` LHS simulator runs, pf = N_f / n."""
    samples = lhs(n, space, seed)
    q, g = evaluate_batch(simulator, samples.points, threads)
    pf = float(np.mean(g <= 0.0))
    est = ReliabilityEstimate(pf, mc_cov(pf, n), n, "mc", seed)
    return est, ReferenceTable(samples, q, g)


def _chain_gamma(indicator: np.ndarray) -> float:
    """Correlation factor of the conditional-probability estimator (chains x steps)."""
    n_chains, T = indicator.shape
    p = indicator.mean()
    var = p * (1.0 - p)
    if var <= 0.0 or T < 2:
        return 0.0
    gamma = 0.0
    for k in range(1, T):
        r_k = np.mean(indicator[:, :-k] * indicator[:, k:]) - p * p
        gamma += 2.0 * (1.0 - k / T) * (r_k / var)
    return max(gamma, 0.0)


def subset_pf(evaluator, space: DesignSpace | None, cfg: SubsetConfig = SubsetConfig(),
              dim: int | None = None) -> ReliabilityEstimate:
    """Subset simulation with modified-Metropolis chains (componentwise Gaussian proposals).

    Each level's threshold is the ``p0``-quantile of the current responses; the
    ``floor(p0 * n_per_level)`` lowest samples seed Markov chains that refill
    the level. Chains keep their state when a candidate leaves the current
    failure domain. Every chain draws from its own stream seeded by
    ``(seed, level, chain)``, so results do not depend on evaluation order.

    With ``space=None`` the evaluator receives standard-normal points of
    dimension ``dim`` directly.
    """
    N = cfg.n_per_level
    n_seeds = int(math.floor(cfg.p0 * N))
    lengths = np.full(n_seeds, N // n_seeds)
    lengths[: N % n_seeds] += 1
    max_len = int(lengths.max())

    def g_of(u):
        x = u if space is None else from_standard_normal(u, space)
        return np.asarray(evaluator(x), dtype=float)

    if space is None and dim is None:
        raise ValueError("dim is required when no design space is given")
    m = space.dim if space is not None else dim
    rng = np.random.default_rng([cfg.seed, 0])
    U = rng.standard_normal((N, m))
    G = g_of(U)
    n_evals = N
    thresholds: list[float] = []
    cov2 = 0.0
    indicator = None

    for level in range(1, cfg.max_levels + 1):
        order = np.argsort(G, kind="stable")
        b = 0.5 * (G[order[n_seeds - 1]] + G[order[n_seeds]])
        if b <= 0.0:
            frac = float(np.mean(G <= 0.0))
            pf = cfg.p0 ** (level - 1) * frac
            if frac > 0:
                if indicator is None:
                    cov2 += (1.0 - frac) / (frac * N)
                else:
                    ind = np.array([[gg <= 0.0 for gg in row] for row in indicator])
                    cov2 += (1.0 - frac) / (frac * N) * (1.0 + _chain_gamma(ind))
            cov = math.sqrt(cov2) if pf > 0 else math.inf
            return ReliabilityEstimate(pf, cov, n_evals, "subset", cfg.seed, level, thresholds)
        if level == cfg.max_levels or (thresholds and b >= thresholds[-1]):
            break
        thresholds.append(float(b))
        if indicator is None:
            cov2 += (1.0 - cfg.p0) / (cfg.p0 * N)
        else:
            ind = np.array([[gg <= b for gg in row] for row in indicator])
            cov2 += (1.0 - cfg.p0) / (cfg.p0 * N) * (1.0 + _chain_gamma(ind))

        cur_u = U[order[:n_seeds]].copy()
        cur_g = G[order[:n_seeds]].copy()
        props, accs = [], []
        for c in range(n_seeds):
            crng = np.random.default_rng([cfg.seed, level, c])
            props.append(crng.standard_normal((max_len - 1, m)) * cfg.proposal_std)
            accs.append(crng.random((max_len - 1, m)))
        props = np.stack(props)
        accs = np.stack(accs)

        chain_u = [[cur_u[c].copy()] for c in range(n_seeds)]
        chain_g = [[cur_g[c]] for c in range(n_seeds)]
        for step in range(max_len - 1):
            active = lengths > step + 1
            cand = cur_u + props[:, step]
            ratio = np.exp(-0.5 * (cand * cand - cur_u * cur_u))
            take = accs[:, step] < ratio
            xi = np.where(take, cand, cur_u)
            moved = np.any(take, axis=1) & active
            if np.any(moved):
                g_new = g_of(xi[moved])
                n_evals += int(moved.sum())
                ok = g_new <= b
                idx = np.flatnonzero(moved)[ok]
                cur_u[idx] = xi[idx]
                cur_g[idx] = g_new[ok]
            for c in np.flatnonzero(active):
                chain_u[c].append(cur_u[c].copy())
                chain_g[c].append(cur_g[c])
        U = np.array([u for ch in chain_u for u in ch])
        G = np.array([g for ch in chain_g for g in ch])
        common = int(lengths.min())
        indicator = [ch[:common] for ch in chain_g]

    bound = cfg.p0 ** cfg.max_levels
    return ReliabilityEstimate(bound, math.inf, n_evals, "subset", cfg.seed, len(thresholds) + 1,
                               thresholds, max_levels_exceeded=True)


def reference_validator(table: ReferenceTable, pf_ref: float | None = None):
    """``model -> (pf, E_pf)`` classifying the reference sample with the surrogate mean.

    Using the very points behind ``pf_ref`` removes sampling noise from the
    comparison, so E_pf reflects misclassification by the surrogate only.
    """
    pts = table.samples.points
    ref = float(np.mean(table.failed)) if pf_ref is None else pf_ref

    def validate(model):
        pf = float(np.mean(np.asarray(model(pts)) <= 0.0))
        return pf, relative_error(pf, ref)

    return validate


def relative_error(pf: float, pf_ref: float) -> float:
    """E_Pf = |pf_ref - pf| / pf_ref."""
    if not pf_ref > 0:
        raise ZeroReference("reference failure probability is zero; relative error undefined")
    return abs(pf_ref - pf) / pf_ref


__all__ = [
    "ReliabilityEstimate", "SubsetConfig", "ReferenceTable", "SimulatorError",
    "mc_pf", "build_reference", "subset_pf", "relative_error", "evaluate_batch", "reference_validator",
]
