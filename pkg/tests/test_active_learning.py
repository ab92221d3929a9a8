import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from akbridge import kriging
from akbridge.active_learning import (ALConfig, SurrogateConfig, converged, exclusion_mask, fit_surrogate,
                                      initial_doe_size, relative_changes, run, select_from_u, select_next,
                                      static_study, u_function)
from akbridge.config import load_config
from akbridge.errors import ConfigError, PoolExhausted, SimulatorError
from akbridge.kriging import TrendSpec
from akbridge.reliability import SubsetConfig
from akbridge.sampling import DesignSpace, grid, lhs

UNIT2 = DesignSpace((("x1", 0.0, 1.0), ("x2", 0.0, 1.0)))
CONFIG = Path(__file__).resolve().parents[1] / "configs" / "default.json"


def linear(X):
    return X[:, 0] - 0.5


def curved(X):
    return 0.8 - X[:, 0] ** 2 - 0.6 * X[:, 1] + 0.2 * np.sin(6 * X[:, 1])


# ---------------------------------------------------------------- small operations

@pytest.mark.parametrize("m, n", [(1, 10), (2, 10), (6, 12)])
def test_initial_size(m, n):
    assert initial_doe_size(m) == n


def test_u_function_examples():
    U = u_function([0.0, 2.0, 0.3], [0.25, 1.0, 1e-30])
    assert U[0] == 0.0 and U[1] == 2.0 and math.isinf(U[2])


def test_u_guard_scales_with_process_variance():
    assert math.isinf(u_function([0.3], [1e-21], sigma2=1e4)[0])
    assert math.isfinite(u_function([0.3], [1e-21], sigma2=1e-12)[0])


def test_tie_goes_to_lowest_index():
    pool = np.arange(8.0).reshape(4, 2)
    idx, x, u = select_from_u([3.1, 0.2, 0.2, 5.0], pool)
    assert idx[0] == 1 and np.array_equal(x[0], pool[1]) and u[0] == 0.2


def test_single_point_pool_and_exhaustion():
    pool = np.array([[0.3, 0.4]])
    assert select_from_u([7.0], pool)[0][0] == 0
    with pytest.raises(PoolExhausted):
        select_from_u([7.0], pool, exclusions=pool + 1e-10)


def test_exclusion_tolerance():
    pool = np.array([[0.0, 0.0], [0.5, 0.5], [0.5, 0.5 + 2e-9]])
    assert exclusion_mask(pool, np.array([[0.5, 0.5]])).tolist() == [False, True, False]


def test_selection_brackets_the_predicted_zero():
    X = np.linspace(0, 1, 7)[:, None]
    y = np.tanh(4 * (X[:, 0] - 0.43))
    model = kriging.fit(X, y, TrendSpec("polynomial_additive", 1))
    pool = np.linspace(0, 1, 1001)[:, None]
    mu = model(pool)
    k = np.flatnonzero(np.sign(mu[:-1]) != np.sign(mu[1:]))
    assert len(k) == 1
    _, x, _ = select_next(model, pool)
    assert pool[k[0], 0] <= x[0, 0] <= pool[k[0] + 1, 0]


def test_convergence_examples():
    assert converged([0.10, 0.1004, 0.10041, 0.10041], 0.005, 3)
    assert not converged([0.10, 0.12, 0.1201, 0.1201], 0.005, 3)
    assert not converged([0.1, 0.1, 0.1], 0.005, 3)
    changes = relative_changes([0.10, 0.1004, 0.10041, 0.10041])
    assert changes == pytest.approx([0.0004 / 0.1004, 1e-5 / 0.10041, 0.0], abs=1e-12)


def test_zero_pf_rule():
    assert converged([0.0, 0.0, 0.0, 0.0], 0.005, 3)
    assert not converged([0.1, 0.0, 0.0, 0.0], 0.005, 3)
    assert not converged([0.1, 0.1, float("nan"), 0.1, 0.1], 0.005, 3)


@settings(max_examples=50)
@given(st.lists(st.floats(1e-4, 1.0), min_size=1, max_size=12), st.floats(1e-4, 0.1))
def test_constant_tail_converges(prefix, eps):
    hist = prefix + [prefix[-1]] * 3
    assert converged(hist, eps, 3)


def test_config_validation():
    with pytest.raises(ConfigError):
        ALConfig(eps_pf=0.0)
    with pytest.raises(ConfigError):
        ALConfig(batch=0)
    with pytest.raises(ConfigError):
        SurrogateConfig(kind="svm")
    with pytest.raises(ConfigError):
        run(linear, UNIT2, ALConfig(max_calls=5))


def test_surrogate_config_roundtrip():
    cfg = SurrogateConfig(kind="pck", pce_degree=3)
    assert SurrogateConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        SurrogateConfig.from_dict({"kernel": "rbf"})


# ---------------------------------------------------------------- loop

def test_linear_simulator_converges_quickly():
    res = run(linear, UNIT2, ALConfig())
    assert res.trace.status == "converged"
    assert res.trace.n_calls <= 20
    assert abs(res.estimate.pf - 0.5) <= 3 * res.estimate.cov * res.estimate.pf


def test_budget_equal_to_initial_design():
    res = run(linear, UNIT2, ALConfig(max_calls=10))
    assert res.trace.status == "budget_exhausted"
    assert len(res.trace.records) == 1 and res.trace.n_calls == 10


def small_cfg(**kw):
    base = ALConfig(max_calls=22, pool_size=2000, subset=SubsetConfig(n_per_level=500),
                    surrogate=SurrogateConfig(corr=kriging.CorrelationSpec(n_starts=3, max_evals=80)))
    return replace(base, **kw)


@pytest.fixture(scope="module")
def curved_run():
    cfg = small_cfg()
    return cfg, run(curved, UNIT2, cfg)


def test_call_accounting_and_no_repeats(curved_run):
    cfg, res = curved_run
    recs = res.trace.records
    assert [r.n_calls for r in recs] == list(range(10, 10 + len(recs)))
    assert len(res.y) == res.trace.n_calls
    assert len(np.unique(res.X.round(12), axis=0)) == len(res.X)
    assert recs[0].rel_change is None and all(r.rel_change is not None for r in recs[1:])
    assert np.array_equal(res.y, curved(res.X))


def test_selected_point_minimises_u(curved_run):
    cfg, res = curved_run
    pool = lhs(cfg.pool_size, UNIT2, cfg.seed + 1).points
    for rec in res.trace.records:
        if rec.x_next is None:
            continue
        n = rec.n_calls
        model = fit_surrogate(res.X[:n], res.y[:n], UNIT2, cfg.surrogate)
        pred = model.predict(pool)
        U = u_function(pred.mean, pred.variance, model.sigma2)
        U[exclusion_mask(pool, res.X[:n])] = np.inf
        assert rec.u_next == pytest.approx(U.min(), rel=1e-9)
        assert np.allclose(rec.x_next, res.X[n])


def test_loop_is_deterministic(curved_run):
    cfg, res = curved_run
    again = run(curved, UNIT2, cfg)
    assert again.trace == res.trace


def test_batch_enrichment_accounting():
    res = run(curved, UNIT2, small_cfg(batch=3, max_calls=19))
    assert [r.n_calls for r in res.trace.records] == list(range(10, 10 + 3 * len(res.trace.records), 3))[: len(
        res.trace.records)]
    assert res.trace.n_calls <= 19


def test_pck_loop_runs():
    res = run(curved, UNIT2, small_cfg(surrogate=SurrogateConfig(kind="pck", corr=kriging.CorrelationSpec(
        n_starts=3, max_evals=80))))
    assert res.trace.status in ("converged", "budget_exhausted")
    assert type(res.model).__name__ == "PCKModel"


def test_simulator_failure_keeps_trace():
    calls = {"n": 0}

    def flaky(X):
        calls["n"] += len(X)
        if calls["n"] > 12:
            raise RuntimeError("solver diverged")
        return linear(X)

    with pytest.raises(SimulatorError) as info:
        run(flaky, UNIT2, small_cfg(eps_pf=1e-9))
    assert len(info.value.trace.records) >= 1


def test_trace_csv_schema(tmp_path, curved_run):
    _, res = curved_run
    res.trace.to_csv(tmp_path / "t.csv", UNIT2.names)
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0].startswith("iter,n_calls,pf,rel_change,x1_next,x2_next,u_next")
    assert len(lines) == len(res.trace.records) + 1


# ---------------------------------------------------------------- static sweep

def test_static_sweep_rows_and_failures():
    sizes = [4, 10, 40]
    rows = static_study(linear, UNIT2, sizes, SurrogateConfig(), 0.5, SubsetConfig())
    assert [r.n for r in rows] == sizes
    assert rows[0].status == "failed" and "RankDeficientTrend" in rows[0].reason
    assert rows[2].E_pf <= rows[1].E_pf + 3 * 0.05
    assert static_study(linear, UNIT2, [], SurrogateConfig(), 0.5) == []


# ---------------------------------------------------------------- built-in beam

@pytest.fixture(scope="module")
def beam_run():
    cfg = load_config(CONFIG)
    return run(cfg.simulator(), cfg.space, cfg.al_config())


def test_u_concentrates_near_the_limit_state(beam_run):
    us = [r.u_next for r in beam_run.trace.records if r.u_next is not None][3:]
    assert us and np.mean(np.array(us) <= 2.0) >= 0.9


def test_beam_run_classifies_like_the_simulator(beam_run):
    cfg = load_config(CONFIG)
    pts = grid(cfg.space, (25, 25)).points
    agree = np.mean((beam_run.model(pts) <= 0) == (cfg.simulator()(pts) <= 0))
    assert agree > 0.97
