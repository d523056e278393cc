import logging

import numpy as np
import pytest

from app.backend.model.var_model import VarModel, default_initial_state
from app.backend.oracle.bellman import random_model
from app.backend.oracle.quadrature import gauss_hermite_expectation
from app.backend.strategy.risk_free import RiskFreeCurve
from app.backend.strategy.rules import (
    build_rule,
    evaluate_rule,
    export_rule,
    iid_moments,
    import_rule,
    weights_iid,
    weights_last,
    weights_no_predictors,
)
from app.backend.utils.errors import DataError, UsageError, ZeroWealthError


@pytest.fixture
def counterexample_model():
    nu = np.array([0.004, 0.001])
    sigma = np.array([[4e-4, 2e-4], [2e-4, 3e-4]])
    return VarModel(nu, np.zeros((2, 2)), sigma, k=1, p=1)


############ Risk-free curve ############

def test_risk_free_curve_products():
    rf = RiskFreeCurve([0.01, 0.02, 0.03])
    assert rf.gross(2) == pytest.approx(1.02)
    assert rf.discount(0) == pytest.approx(1.02 * 1.03)
    assert rf.discount(2) == 1.0
    assert rf.growth() == pytest.approx(1.01 * 1.02 * 1.03)
    with pytest.raises(UsageError):
        rf.rate(4)
    with pytest.raises(UsageError):
        RiskFreeCurve([-1.5])


def test_risk_free_from_file(tmp_path):
    path = tmp_path / "rf.txt"
    path.write_text("# weekly\n0.001\n0.002, 0.003\n")
    rf = RiskFreeCurve.from_file(path, 2)
    np.testing.assert_array_equal(rf.rates, [0.001, 0.002])
    with pytest.raises(DataError):
        RiskFreeCurve.from_file(path, 5)


############ Last period ############

def test_weights_last_matches_direct_solve(two_asset_model):
    y = np.array([0.01, -0.02])
    w = weights_last(two_asset_model, y, 0.001, alpha=3.0, wealth=2.0)
    excess = two_asset_model.nu + two_asset_model.phi @ y - 0.001
    expected = np.linalg.solve(two_asset_model.sigma(1), excess) / 6.0
    np.testing.assert_allclose(w, expected, rtol=1e-12)


def test_weights_last_first_order_condition():
    rng = np.random.default_rng(5)
    for _ in range(100):
        k, p = int(rng.integers(1, 4)), int(rng.integers(0, 3))
        model = random_model(k, p, rng)
        y = rng.normal(0.0, 0.02, size=model.n)
        alpha, wealth, rf = rng.uniform(0.5, 5.0), rng.uniform(0.5, 2.0), rng.uniform(0.0, 0.002)
        w = weights_last(model, y, rf, alpha, wealth)
        excess = model.nu + model.phi @ y - rf
        grad = alpha * wealth * model.asset_covariance(1) @ w - excess
        assert np.linalg.norm(grad) / np.linalg.norm(excess) < 1e-10


def test_weights_last_zero_wealth(two_asset_model):
    with pytest.raises(ZeroWealthError):
        weights_last(two_asset_model, np.zeros(2), 0.0, 1.0, 0.0)


def test_horizon_one_rule_is_last_period_rule(weekly_model):
    y0 = default_initial_state(weekly_model)
    rule = build_rule(weekly_model, 0.0005, 2.0, 1)
    w, _ = evaluate_rule(rule, 0, y0, 1.5)
    np.testing.assert_allclose(w, weights_last(weekly_model, y0, 0.0005, 2.0, 1.5), rtol=1e-10)


############ Variant agreement ############

def test_general_equals_stacked_form_without_predictors(two_asset_model):
    general = build_rule(two_asset_model, 0.0004, 2.0, 4, "general")
    theorem = build_rule(two_asset_model, 0.0004, 2.0, 4, "theorem")
    np.testing.assert_allclose(general.A, theorem.A, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(general.d, theorem.d, rtol=1e-9, atol=1e-12)


def test_general_equals_no_predictor_form_with_varying_rates():
    rng = np.random.default_rng(41)
    for _ in range(50):
        k = int(rng.integers(1, 4))
        horizon = int(rng.integers(1, 7))
        model = random_model(k, 0, rng)
        rf = RiskFreeCurve(rng.uniform(0.0, 0.002, size=horizon))
        alpha, wealth = float(rng.uniform(0.5, 5.0)), float(rng.uniform(0.5, 2.0))
        rule = build_rule(model, rf, alpha, horizon, "general")
        y = rng.normal(0.0, 0.02, size=k)
        for tau in range(horizon):
            closed = weights_no_predictors(model, y, rf, alpha, wealth, tau, horizon)
            np.testing.assert_allclose(rule.weights(tau, y, wealth), closed, rtol=1e-12, atol=1e-12 * np.max(np.abs(closed)))


def test_no_predictor_form_reduces_to_iid_without_dynamics():
    rng = np.random.default_rng(42)
    for _ in range(50):
        k = int(rng.integers(1, 4))
        horizon = int(rng.integers(1, 7))
        base = random_model(k, 0, rng)
        model = VarModel(base.nu_tilde, np.zeros((k, k)), base.sigma(1), k=k, p=0)
        rate = float(rng.uniform(0.0, 0.002))
        alpha, wealth = float(rng.uniform(0.5, 5.0)), float(rng.uniform(0.5, 2.0))
        y = rng.normal(0.0, 0.02, size=k)
        for tau in range(horizon):
            w = weights_no_predictors(model, y, rate, alpha, wealth, tau, horizon)
            iid = weights_iid(model.nu, model.sigma(1), rate, alpha, wealth, tau, horizon)
            np.testing.assert_allclose(w, iid, rtol=1e-12, atol=1e-12 * np.max(np.abs(iid)))


def test_no_predictor_form_rejects_predictors(weekly_model):
    with pytest.raises(UsageError):
        weights_no_predictors(weekly_model, np.zeros(5), 0.0, 1.0, 1.0, 0, 2)


def test_iid_rule_is_state_free_and_proportional(weekly_model):
    rule = build_rule(weekly_model, 0.0005, 2.0, 5, "iid")
    assert not rule.A.any()
    for tau in range(5):
        np.testing.assert_allclose(rule.d[tau], rule.d[0])
    a0 = rule.dollars(0, np.zeros(5))
    a3 = rule.dollars(3, np.ones(5))
    np.testing.assert_allclose(a0 * rule.D[0], a3 * rule.D[3])


def test_iid_dollars_shrink_with_discounting(weekly_model):
    rule = build_rule(weekly_model, 0.001, 2.0, 6, "iid")
    sizes = np.array([np.linalg.norm(rule.dollars(tau, np.zeros(5))) for tau in range(6)])
    assert np.all(rule.D[:-1] > rule.D[1:])
    assert np.all(sizes[:-1] <= sizes[1:])
    assert np.all(sizes <= sizes[-1])


def test_rule_dollars_are_affine_in_state(weekly_model, rng):
    rule = build_rule(weekly_model, 0.0005, 0.8, 4)
    y = rng.normal(0.0, 0.02, size=5)
    h = 0.01
    for tau in range(4):
        base = rule.dollars(tau, y)
        slopes = np.column_stack([(rule.dollars(tau, y + h * e) - base) / h for e in np.eye(5)])
        expected = rule.A[tau] / (rule.alpha * rule.D[tau])
        np.testing.assert_allclose(slopes, expected, rtol=1e-7, atol=1e-9 * np.max(np.abs(expected)))


def test_iid_moments_fall_back_to_innovations():
    model = VarModel(np.array([0.001]), np.array([[1.01]]), np.array([[1e-4]]), k=1, p=0)
    mu, sigma = iid_moments(model)
    np.testing.assert_allclose(mu, [0.001])
    np.testing.assert_allclose(sigma, [[1e-4]])
    with pytest.raises(UsageError):
        iid_moments(model, "sample")


def test_nopred_with_predictors_uses_asset_block(weekly_model, caplog):
    with caplog.at_level(logging.WARNING):
        rule = build_rule(weekly_model, 0.0005, 2.0, 3, "nopred")
    assert "asset block" in caplog.text
    block = build_rule(weekly_model.asset_block(), 0.0005, 2.0, 3, "nopred")
    np.testing.assert_allclose(rule.A[:, :, :4], block.A)
    assert not rule.A[:, :, 4].any()
    np.testing.assert_allclose(rule.d, block.d)


def test_unknown_variant(two_asset_model):
    with pytest.raises(UsageError):
        build_rule(two_asset_model, 0.0, 1.0, 2, "kelly")


############ Predictors: exact recursion vs stacked-state form ############

def test_stacked_form_differs_from_exact_with_predictors(counterexample_model):
    general = build_rule(counterexample_model, 0.0, 1.0, 2, "general")
    theorem = build_rule(counterexample_model, 0.0, 1.0, 2, "theorem")
    assert general.d[0, 0] == pytest.approx(10.0, rel=1e-12)
    assert theorem.d[0, 0] == pytest.approx(12.5, rel=1e-12)
    np.testing.assert_allclose(general.d[1], theorem.d[1])


############ Value function ############

def test_value_at_last_decision(asset_predictor_model):
    rf = RiskFreeCurve([0.001, 0.002, 0.0015])
    rule = build_rule(asset_predictor_model, rf, 2.0, 3)
    y = np.array([0.01, 0.02])
    W = 1.3
    excess = asset_predictor_model.nu + asset_predictor_model.phi @ y - 0.0015
    sigma = asset_predictor_model.asset_covariance(3)
    expected = -np.exp(-2.0 * 1.0015 * W - 0.5 * excess @ np.linalg.solve(sigma, excess))
    assert rule.value(2, y, W) == pytest.approx(expected, rel=1e-10)


def _continuation(model, rule, tau, y, wealth, dollars):
    r = rule.rf.rate(tau + 1)

    def next_value(points):
        next_wealth = wealth * (1.0 + r) + (points[:, : model.k] - r) @ dollars
        return np.array([rule.value(tau + 1, yy, ww) for yy, ww in zip(points, next_wealth)])

    mean = model.nu_tilde + model.phi_tilde @ y
    return gauss_hermite_expectation(next_value, mean, model.sigma(tau + 1), nodes=20)


def test_value_function_satisfies_bellman_equation(asset_predictor_model):
    model = asset_predictor_model
    rule = build_rule(model, RiskFreeCurve([0.001, 0.002, 0.0015]), 2.0, 3)
    y, W = np.array([0.004, -0.01]), 0.8
    for tau in range(2):
        a = rule.dollars(tau, y)
        assert _continuation(model, rule, tau, y, W, a) == pytest.approx(rule.value(tau, y, W), rel=1e-9)


def test_rule_dollars_maximize_continuation(asset_predictor_model):
    model = asset_predictor_model
    rule = build_rule(model, 0.001, 2.0, 3)
    y, W = np.array([0.004, -0.01]), 1.0
    a = rule.dollars(0, y)
    best = _continuation(model, rule, 0, y, W, a)
    for h in (-0.1, 0.1):
        assert _continuation(model, rule, 0, y, W, a + h) < best


def test_value_needs_general_rule(two_asset_model):
    rule = build_rule(two_asset_model, 0.0, 1.0, 2, "iid")
    with pytest.raises(UsageError):
        rule.value(0, np.zeros(2), 1.0)


############ Evaluation and export ############

def test_zero_wealth_keeps_dollars_defined(weekly_model):
    rule = build_rule(weekly_model, 0.0005, 2.0, 2)
    y = np.zeros(5)
    assert np.all(np.isfinite(rule.dollars(0, y)))
    with pytest.raises(ZeroWealthError):
        evaluate_rule(rule, 0, y, 0.0)
    with pytest.raises(UsageError):
        rule.dollars(2, y)


def test_dollars_are_vectorized(weekly_model, rng):
    rule = build_rule(weekly_model, 0.0005, 2.0, 3)
    states = rng.normal(0.0, 0.02, size=(7, 5))
    stacked = rule.dollars(1, states)
    for i, y in enumerate(states):
        np.testing.assert_allclose(stacked[i], rule.dollars(1, y))


def test_export_import_round_trip(weekly_model):
    rule = build_rule(weekly_model, RiskFreeCurve([0.001, 0.0005, 0.002]), 2.5, 3)
    restored = import_rule(export_rule(rule))
    assert restored.variant == "general"
    assert restored.alpha == 2.5
    np.testing.assert_array_equal(restored.A, rule.A)
    np.testing.assert_array_equal(restored.d, rule.d)
    np.testing.assert_array_equal(restored.D, rule.D)
    np.testing.assert_array_equal(restored.rf.rates, rule.rf.rates)


def test_import_rejects_truncated_table(weekly_model):
    text = export_rule(build_rule(weekly_model, 0.0, 1.0, 2))
    with pytest.raises(DataError):
        import_rule("\n".join(text.splitlines()[:-3]))
