import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybrid_dfo.errors import ConfigError, RoundBudgetExhausted, ZeroPredictedDecrease
from hybrid_dfo.interp_model import InterpolationSet, QuadraticModel, is_poised
from hybrid_dfo.objective import EvaluationLedger, make_problem
from hybrid_dfo.trust_region import (
    IterClass,
    TrState,
    TrustRegionConfig,
    acceptance_ratio,
    build_sample_set,
    cauchy_point,
    classify,
    criticality_radius,
    criticality_step,
    resolve_npt,
    sample_offsets,
    solve_subproblem,
    update_radius,
)


def _model(g, H):
    g = np.asarray(g, dtype=float)
    return QuadraticModel(np.zeros(len(g)), 0.0, g, np.asarray(H, dtype=float))


def _cauchy_bound(g, H, delta):
    gn = np.linalg.norm(g)
    hn = np.linalg.norm(H, 2)
    return 0.5 * gn * min(delta, gn / hn if hn > 0 else math.inf)


def test_subproblem_examples():
    s = solve_subproblem(_model([1, 0], np.zeros((2, 2))), 1.0)
    np.testing.assert_allclose(s, [-1, 0], atol=1e-12)
    np.testing.assert_array_equal(solve_subproblem(_model([0, 0], np.eye(2)), 1.0), [0, 0])
    m = _model([2, 0], 4 * np.eye(2))
    s = solve_subproblem(m, 10.0)
    np.testing.assert_allclose(s, [-0.5, 0], atol=1e-12)
    dec = m.step_value(np.zeros(2)) - m.step_value(s)
    assert dec == pytest.approx(0.5)
    assert dec >= _cauchy_bound(m.g, m.H, 10.0) - 1e-14


def test_cauchy_point_on_negative_curvature():
    s = cauchy_point(np.array([1.0, 0]), -np.eye(2), 2.0)
    np.testing.assert_allclose(s, [-2, 0])


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**31 - 1), st.floats(1e-4, 1e3),
       st.sampled_from(["pd", "indef", "zero", "neg"]))
def test_cauchy_decrease_property(n, seed, delta, kind):
    r = np.random.default_rng(seed)
    g = r.normal(size=n) * 10 ** r.uniform(-3, 3)
    A = r.normal(size=(n, n))
    H = {"pd": A @ A.T, "indef": A + A.T, "zero": np.zeros((n, n)), "neg": -A @ A.T}[kind]
    m = _model(g, H)
    s = solve_subproblem(m, delta)
    assert np.linalg.norm(s) <= delta * (1 + 1e-12)
    dec = m.step_value(np.zeros(n)) - m.step_value(s)
    assert dec >= _cauchy_bound(g, H, delta) * (1 - 1e-10)


def test_acceptance_ratio_examples():
    assert acceptance_ratio(10, 10, 10, 9) == 0
    assert acceptance_ratio(10, 8, 10, 9) == 2
    m = _model([1, 2], np.eye(2))
    s = np.array([0.1, -0.3])
    f = lambda v: m.step_value(v)  # model is its own objective
    assert acceptance_ratio(f(np.zeros(2)), f(s), m.step_value(np.zeros(2)), m.step_value(s)) == 1
    with pytest.raises(ZeroPredictedDecrease):
        acceptance_ratio(1, 0, 1, 1)


def test_update_radius_examples():
    cfg = TrustRegionConfig(delta_max=1.5)
    assert update_radius(0.9, 1.0, IterClass.SUCCESSFUL, cfg) == 1.5
    assert update_radius(0.3, 1.0, IterClass.ACCEPTABLE, cfg) == 0.5
    assert update_radius(0.01, 1.0, IterClass.UNSUCCESSFUL, cfg) == 0.5
    assert update_radius(None, 1.0, IterClass.MODEL_IMPROVING, cfg) == 1.0


def test_classify():
    cfg = TrustRegionConfig()
    assert classify(0.9, False, cfg) is IterClass.SUCCESSFUL
    assert classify(0.3, True, cfg) is IterClass.ACCEPTABLE
    assert classify(0.3, False, cfg) is IterClass.MODEL_IMPROVING
    assert classify(0.01, True, cfg) is IterClass.UNSUCCESSFUL
    assert classify(None, True, cfg) is IterClass.UNSUCCESSFUL


@pytest.mark.parametrize("kw", [dict(eta0=0.8, eta1=0.5), dict(gamma_inc=1.0),
                                dict(gamma_dec=1.0), dict(mu=0.01, beta=0.1),
                                dict(omega=1.0), dict(delta0=1e4),
                                dict(delta_min=float("nan"))])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        TrustRegionConfig(**kw)


def test_criticality_radius_formula():
    assert criticality_radius(0.5**2, 0.6, 0.1) == 0.25


def test_npt_and_offsets():
    assert resolve_npt("cross", 4) == 9
    assert resolve_npt("determined", 4) == 15
    assert resolve_npt(6, 4) == 6
    with pytest.raises(ConfigError):
        resolve_npt(3, 4)
    off = sample_offsets(3, 0.5, 10)
    assert off.shape == (9, 3)
    np.testing.assert_allclose(np.linalg.norm(off, axis=1), 0.5)


def _state(x, delta, g):
    n = len(x)
    Y = InterpolationSet(x, np.array([x]), np.array([0.0]), delta)
    m = QuadraticModel(np.array(x, dtype=float), 0.0, np.asarray(g, dtype=float), np.zeros((n, n)))
    return TrState(np.array(x, dtype=float), 0.0, delta, m, Y)


def test_criticality_not_triggered():
    st_ = _state([1.0, 1.0], 1.0, [10.0, 0.0])
    out = criticality_step(st_, make_problem("sphere", 2), EvaluationLedger(), TrustRegionConfig())
    assert out is st_


def test_criticality_refits_stale_model():
    from hybrid_dfo.objective import ObjectiveProblem
    prob = ObjectiveProblem("half_sphere", 2, lambda x: 0.5 * float(x @ x), np.zeros(2))
    x = np.array([0.3, 0.4])
    st_ = _state(x, 1.0, [1e-5, 0.0])
    st_.f = prob(x)
    cfg = TrustRegionConfig()
    out = criticality_step(st_, prob, EvaluationLedger(), cfg)
    np.testing.assert_allclose(out.model.g, x, atol=1e-10)
    # round 1 at 1.0 fails (1 > 0.5), round 2 at 0.5 passes
    assert out.delta == pytest.approx(0.5)
    assert out.delta <= cfg.mu * np.linalg.norm(out.model.g) + 1e-12
    assert out.last_class is IterClass.CRITICALITY_REDUCE
    assert is_poised(out.yset)
    np.testing.assert_array_equal(out.x, x)


def test_criticality_round_budget():
    prob = make_problem("sphere", 2)
    st_ = _state([0.0, 0.0], 1.0, [0.0, 0.0])
    with pytest.raises(RoundBudgetExhausted) as ei:
        criticality_step(st_, prob, EvaluationLedger(), TrustRegionConfig(), max_rounds=4)
    assert ei.value.state.delta == pytest.approx(0.125)


def test_build_sample_set_mirrors_at_bounds():
    from hybrid_dfo.objective import ObjectiveProblem
    prob = ObjectiveProblem("box", 2, lambda x: float(x @ x), np.zeros(2), None,
                            np.array([[0.0, 1.0], [0.0, 1.0]]))
    led = EvaluationLedger()
    Y = build_sample_set(prob, led, np.zeros(2), 0.0, 0.5, 5)
    assert is_poised(Y)
    assert np.all(Y.points >= 0)
