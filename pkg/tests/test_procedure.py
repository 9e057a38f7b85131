import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corrstop.linalg import DesignData
from corrstop.nulldist import pvalue_iid
from corrstop.procedure import SelectionConfig, SelectionTrace, replay_trace, run_selection
from corrstop.selectors import EventKind, Method, entry_order
from corrstop.testing import TestMode

seeds = st.integers(0, 2**32 - 1)


def signal_data(seed, n=60, p=40, corr=0.0, scale=1.0):
    rng = np.random.default_rng(seed)
    x = np.sqrt(1 - corr) * rng.standard_normal((n, p)) + np.sqrt(corr) * rng.standard_normal((n, 1))
    beta = np.zeros(p)
    beta[:3] = scale * np.array([3.0, -1.5, 2.0])
    return DesignData.from_arrays(x, x @ beta + 2.0 * rng.standard_normal(n))


def test_config_validation():
    with pytest.raises(ValueError):
        SelectionConfig(gamma=1.0)
    with pytest.raises(ValueError):
        SelectionConfig(gamma=-0.1)
    with pytest.raises(ValueError):
        SelectionConfig(permutation_q=0)
    cfg = SelectionConfig(method="lasso", test_mode="perm")
    assert cfg.method is Method.LASSO and cfg.test_mode is TestMode.PERMUTATION


def test_null_selection_probability():
    hits = 0
    reps = 2000
    for i in range(reps):
        rng = np.random.default_rng([31, i])
        d = DesignData.from_arrays(rng.standard_normal((50, 200)), rng.standard_normal(50))
        trace = run_selection(d, SelectionConfig(method="lars", gamma=0.05, test_mode="iid"))
        hits += bool(trace.final_active)
    assert abs(hits / reps - 0.05) <= 0.02


def test_first_step_uses_centered_vectors():
    d = signal_data(1)
    trace = run_selection(d, SelectionConfig(test_mode="iid"))
    xc = d.x - d.x.mean(axis=0)
    yc = d.y - d.y.mean()
    r = np.abs(xc.T @ yc) / (np.linalg.norm(xc, axis=0) * np.linalg.norm(yc))
    assert trace.steps[0].statistics.r_max == pytest.approx(r.max(), rel=1e-12)


@pytest.mark.parametrize("method", list(Method))
def test_gamma_near_one_runs_to_cap(method):
    rng = np.random.default_rng(2)
    d = DesignData.from_arrays(rng.standard_normal((12, 30)), rng.standard_normal(12))
    trace = run_selection(d, SelectionConfig(method=method, gamma=1 - 1e-9, test_mode="iid"))
    assert trace.stop_reason in ("step_cap", "exhausted")
    assert max(r.step for r in trace.tested) == d.n - 2


def test_gamma_zero_gives_empty_model():
    trace = run_selection(signal_data(3), SelectionConfig(gamma=0.0))
    assert trace.final_active == () and trace.stop_reason == "p_value"
    assert len(trace.steps) == 1 and not trace.steps[0].accepted


@settings(max_examples=15)
@given(seeds, st.sampled_from(list(Method)))
def test_entry_order_is_prefix_of_path(seed, method):
    d = signal_data(seed, corr=0.2)
    trace = run_selection(d, SelectionConfig(method=method, gamma=0.2, test_mode="iid"))
    accepted = [(EventKind(r.event), r.variable) for r in trace.steps if r.accepted]
    path = entry_order(d, method)
    assert accepted == path[: len(accepted)]


@settings(max_examples=15)
@given(seeds, st.sampled_from([Method.FSR, Method.LARS]))
def test_monotone_in_gamma(seed, method):
    d = signal_data(seed, scale=0.3)
    sets = [set(run_selection(d, SelectionConfig(method=method, gamma=g, test_mode="iid")).final_active)
            for g in (0.01, 0.05, 0.2, 0.5)]
    assert all(a <= b for a, b in zip(sets, sets[1:]))


def test_s_equals_active_size():
    d = signal_data(4)
    trace = run_selection(d, SelectionConfig(method="lars", gamma=0.5, test_mode="iid"))
    assert len(trace.tested) >= 3
    for r in trace.tested:
        st_ = r.statistics
        s = r.step - 1
        assert len(r.active_after) == s + int(r.accepted)
        expected = pvalue_iid(st_.r_max, s + st_.inactive_count, d.n, s)
        assert r.p_value == pytest.approx(float(expected), rel=1e-12)


def test_final_active_matches_last_accepted():
    d = signal_data(5)
    for method in Method:
        trace = run_selection(d, SelectionConfig(method=method, test_mode="iid"))
        acc = [r for r in trace.steps if r.accepted]
        assert trace.final_active == (acc[-1].active_after if acc else ())
        assert set(trace.final_coefficients) == set(trace.final_active)
        assert all(r.p_value <= 0.05 for r in trace.tested if r.accepted)


def test_fsr_final_coefficients_are_ols():
    d = signal_data(6)
    trace = run_selection(d, SelectionConfig(method="fsr", test_mode="iid"))
    act = list(trace.final_active)
    design = np.column_stack([np.ones(d.n), d.x[:, act]])
    coef = np.linalg.lstsq(design, d.y, rcond=None)[0]
    np.testing.assert_allclose([trace.final_coefficients[j] for j in act], coef[1:], atol=1e-9)
    assert trace.intercept == pytest.approx(coef[0])


def test_recovers_strong_signal():
    d = signal_data(7, n=100, p=200)
    for method in Method:
        trace = run_selection(d, SelectionConfig(method=method, gamma=0.01))
        assert set(trace.final_active) == {0, 1, 2}


def test_auto_mode_uses_equicorr_on_correlated_design():
    trace = run_selection(signal_data(8, n=100, p=200, corr=0.3), SelectionConfig())
    assert trace.rho_hat == pytest.approx(0.3, abs=0.1)
    assert {r.mode for r in trace.tested} <= {"equicorr", "iid"}
    assert trace.tested[0].mode == "equicorr"


def test_replay_true_and_perturbed_false():
    d = signal_data(9)
    trace = run_selection(d, SelectionConfig(method="lasso", gamma=0.3))
    assert replay_trace(d, trace)
    steps = list(trace.steps)
    i = next(i for i, r in enumerate(steps) if r.p_value is not None)
    steps[i] = replace(steps[i], p_value=steps[i].p_value + 1e-3)
    assert not replay_trace(d, replace(trace, steps=tuple(steps)))


def test_replay_permutation_seed_sensitivity():
    d = signal_data(10, n=40, p=30, scale=0.4)
    cfg = SelectionConfig(test_mode="perm", permutation_q=99, seed=1, gamma=0.5)
    trace = run_selection(d, cfg)
    assert replay_trace(d, trace)
    assert not replay_trace(d, trace, replace(cfg, seed=2))


def test_json_round_trip_byte_identical():
    d = signal_data(11)
    trace = run_selection(d, SelectionConfig(method="lasso", gamma=0.5))
    text = trace.to_json()
    again = SelectionTrace.from_json(text)
    assert again.to_json() == text
    assert json.loads(text)["final_active"] == list(trace.final_active)


def test_csv_columns():
    trace = run_selection(signal_data(12), SelectionConfig(gamma=0.3))
    lines = trace.to_csv().splitlines()
    assert lines[0] == "k,event_kind,variable,p_value,mode,R,U,V,T,accepted"
    assert len(lines) == len(trace.steps) + 1


def _drop_data():
    rng = np.random.default_rng(173)
    x = 0.5 * rng.standard_normal((20, 4)) + np.sqrt(0.75) * rng.standard_normal((20, 1))
    y = x @ np.array([3.0, -2.0, 1.0, 0.0]) + 0.5 * rng.standard_normal(20)
    return DesignData.from_arrays(x, y)


def test_drop_events_untested():
    d = _drop_data()
    trace = run_selection(d, SelectionConfig(method="lasso", gamma=1 - 1e-9, test_mode="iid"))
    drops = [r for r in trace.steps if r.event == "drop"]
    assert drops
    for r in drops:
        assert r.p_value is None and r.statistics is None and r.variable not in r.active_after
    assert replay_trace(d, trace)


def test_duplicate_column_skipped_and_logged():
    rng = np.random.default_rng(13)
    x = rng.standard_normal((40, 6))
    x[:, 5] = x[:, 0]
    y = 3 * x[:, 0] + 2 * x[:, 1] + 0.1 * rng.standard_normal(40)
    trace = run_selection(DesignData.from_arrays(x, y), SelectionConfig(method="fsr", gamma=0.5, test_mode="iid"))
    assert not {0, 5} <= set(trace.final_active)
