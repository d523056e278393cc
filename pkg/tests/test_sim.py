import io

import numpy as np
import pandas as pd
import pytest

from app.backend.sim.ecdf import Ecdf, central_band, compare, format_ecdf_csv, format_samples_csv
from app.backend.sim.wealth import SimulationConfig, simulate_wealth
from app.backend.strategy.risk_free import RiskFreeCurve
from app.backend.strategy.rules import PortfolioRule, build_rule
from app.backend.utils.errors import HorizonMismatchError, NumericalError, UsageError


def _zero_rule(model, horizon, rf):
    rf = RiskFreeCurve.coerce(rf, horizon)
    return PortfolioRule(
        "general",
        1.0,
        horizon,
        rf,
        np.zeros((horizon, model.k, model.n)),
        np.zeros((horizon, model.k)),
        np.array([rf.discount(tau) for tau in range(horizon)]),
    )


############ ECDF ############

def test_ecdf_steps():
    F = Ecdf([3.0, 1.0, 2.0, 2.0])
    assert F(0.5) == 0.0
    assert F(2.0) == 0.75
    assert F.below(2.0) == 0.25
    assert F(3.0) == 1.0
    assert F.quantile(0.5) == 2.0
    assert F.quantile(0.0) == 1.0
    assert F.interval_probability(2.0, 3.0) == 0.75
    assert F.median == 2.0


def test_ecdf_at_sample_points_is_rank_over_n():
    samples = np.random.default_rng(5).normal(1.0, 0.2, 1001)
    F = Ecdf(samples)
    ranks = np.arange(1, F.n + 1)
    np.testing.assert_array_equal(F(F.samples), ranks / F.n)
    ties = Ecdf([5.0, 5.0, 5.0, 7.0])
    np.testing.assert_array_equal(ties(ties.samples), [0.75, 0.75, 0.75, 1.0])
    assert ties(4.99) == 0.0


def test_central_band_holds_a_quarter_of_its_own_samples():
    F = Ecdf(np.arange(1.0, 9.0))
    assert central_band(F) == (3.0, 5.0)
    assert F.interval_probability(*central_band(F)) == 3 / 8
    x = np.random.default_rng(2).normal(0.0, 1.0, 2000)
    assert Ecdf(x).interval_probability(*central_band(Ecdf(x))) == 501 / 2000


def test_ecdf_rejects_bad_samples():
    with pytest.raises(UsageError):
        Ecdf([])
    with pytest.raises(NumericalError):
        Ecdf([1.0, np.nan])


def test_compare_identical_samples():
    a = Ecdf(np.linspace(0.5, 1.5, 101))
    report = compare(a, a, probes=[(0.8, 1.2)], loss_threshold=1.0)
    assert report.below_fraction == 0.0
    assert report.at_or_below_fraction == 1.0
    assert report.probes[0].probabilities["a"] == report.probes[0].probabilities["b"]


def test_compare_shifted_samples():
    x = np.random.default_rng(0).normal(1.0, 0.1, 500)
    report = compare(Ecdf(x), Ecdf(x + 1.0), loss_threshold=1.0, labels=("rule", "shifted"))
    assert report.below_fraction == 0.0
    assert report.reverse_below_fraction > 0.5
    assert report.at_or_below_above_quantile < 1.0
    assert report.loss_probability["shifted"] == 0.0
    assert report.bankruptcy_probability == {"rule": 0.0, "shifted": 0.0}


def test_ecdf_csv_layout():
    text = format_ecdf_csv({"general": Ecdf(np.arange(1000.0))})
    frame = pd.read_csv(io.StringIO(text))
    assert list(frame.columns) == ["strategy", "x", "F"]
    assert len(frame) == 512
    assert frame["F"].iloc[-1] == 1.0
    assert frame["F"].is_monotonic_increasing
    exact = pd.read_csv(io.StringIO(format_ecdf_csv({"general": Ecdf([2.0, 1.0])}, exact=True)))
    assert exact["x"].tolist() == [1.0, 2.0]


def test_samples_csv_flags():
    text = format_samples_csv({"general": np.array([1.0, np.inf])}, {"general": np.array([False, True])})
    frame = pd.read_csv(io.StringIO(text))
    assert frame["general_flagged"].tolist() == [0, 1]


############ Wealth paths ############

def test_zero_rule_grows_at_cash_rate(asset_predictor_model):
    rf = [0.001, 0.002, 0.003]
    config = SimulationConfig(repetitions=100, horizon=3, alpha=1.0, w0=2.0, rf=rf, seed=1)
    paths = simulate_wealth(asset_predictor_model, _zero_rule(asset_predictor_model, 3, rf), config)
    np.testing.assert_allclose(paths.terminal["general"], 2.0 * 1.001 * 1.002 * 1.003, rtol=1e-15)


def test_zero_rule_without_interest_keeps_wealth(asset_predictor_model):
    config = SimulationConfig(repetitions=10, horizon=4, alpha=1.0, w0=1.7, rf=0.0)
    paths = simulate_wealth(asset_predictor_model, _zero_rule(asset_predictor_model, 4, 0.0), config)
    assert np.all(paths.terminal["general"] == 1.7)


def test_one_period_wealth_by_hand(asset_predictor_model):
    rule = build_rule(asset_predictor_model, 0.001, 2.0, 1)
    config = SimulationConfig(repetitions=5, horizon=1, alpha=2.0, w0=1.0, y0=[0.01, 0.0], rf=0.001, keep_paths=True)
    paths = simulate_wealth(asset_predictor_model, {"general": rule}, config)
    a = rule.dollars(0, np.array([0.01, 0.0]))
    expected = 1.001 + (paths.states[:, 1, :1] - 0.001) @ a
    np.testing.assert_allclose(paths.terminal["general"], expected, rtol=1e-14)
    np.testing.assert_allclose(paths.dollars["general"][:, 0], np.broadcast_to(a, (5, 1)))


def test_wealth_identity_along_paths(weekly_model):
    rule = build_rule(weekly_model, 0.0005, 2.0, 4)
    config = SimulationConfig(repetitions=50, horizon=4, alpha=2.0, rf=0.0005, keep_paths=True, seed=3)
    paths = simulate_wealth(weekly_model, rule, config)
    W, a, Y = paths.wealth["general"], paths.dollars["general"], paths.states
    for t in range(1, 5):
        expected = W[:, t - 1] * 1.0005 + np.sum(a[:, t - 1] * (Y[:, t, :4] - 0.0005), axis=1)
        np.testing.assert_allclose(W[:, t], expected, rtol=1e-13)


def test_simulation_is_deterministic_across_threads(weekly_model):
    rules = {name: build_rule(weekly_model, 0.0005, 2.0, 3, name) for name in ("general", "iid")}
    base = dict(repetitions=10_000, horizon=3, alpha=2.0, rf=0.0005, seed=42, block_size=1024)
    one = simulate_wealth(weekly_model, rules, SimulationConfig(threads=1, **base))
    three = simulate_wealth(weekly_model, rules, SimulationConfig(threads=3, **base))
    again = simulate_wealth(weekly_model, rules, SimulationConfig(threads=1, **base))
    for name in rules:
        np.testing.assert_array_equal(one.terminal[name], three.terminal[name])
        np.testing.assert_array_equal(one.terminal[name], again.terminal[name])
    assert one.common_random_numbers


def test_common_random_numbers_share_states(weekly_model):
    config = SimulationConfig(repetitions=20, horizon=2, alpha=2.0, rf=0.0005, keep_paths=True)
    both = simulate_wealth(weekly_model, {n: build_rule(weekly_model, 0.0005, 2.0, 2, n) for n in ("general", "iid")}, config)
    alone = simulate_wealth(weekly_model, build_rule(weekly_model, 0.0005, 2.0, 2, "general"), config)
    np.testing.assert_array_equal(both.states, alone.states)
    assert not alone.common_random_numbers


def test_horizon_mismatch(weekly_model):
    config = SimulationConfig(repetitions=10, horizon=3, alpha=2.0)
    with pytest.raises(HorizonMismatchError):
        simulate_wealth(weekly_model, build_rule(weekly_model, 0.0, 2.0, 2), config)


def test_unknown_strategy_rejected():
    with pytest.raises(ValueError):
        SimulationConfig(horizon=2, alpha=1.0, strategies=["momentum"])


def test_general_rule_mean_wealth_near_closed_form_scale(weekly_model):
    rule = build_rule(weekly_model, 0.0005, 2.0, 2)
    paths = simulate_wealth(weekly_model, rule, SimulationConfig(repetitions=20_000, horizon=2, alpha=2.0, rf=0.0005, seed=9))
    curve = paths.ecdf("general")
    assert curve.n == 20_000
    assert curve.mean > 1.0005**2


@pytest.mark.slow
def test_full_replication_prefers_general_rule(weekly_model):
    rules = {name: build_rule(weekly_model, 0.0005, 0.8, 52, name) for name in ("general", "iid")}
    config = SimulationConfig(repetitions=100_000, horizon=52, alpha=0.8, rf=0.0005, seed=0)
    paths = simulate_wealth(weekly_model, rules, config)
    utility = {name: np.mean(-np.exp(-0.8 * paths.ecdf(name).samples)) for name in rules}
    assert utility["general"] > utility["iid"]
    assert paths.flagged_count("general") == 0


@pytest.mark.slow
def test_replication_grid_without_interest(weekly_model):
    for alpha in (0.8, 2.0):
        previous = {"general": 1.0, "iid": 1.0}
        for horizon in (13, 26, 52, 104):
            rules = {name: build_rule(weekly_model, 0.0, alpha, horizon, name) for name in ("general", "iid")}
            config = SimulationConfig(repetitions=100_000, horizon=horizon, alpha=alpha, rf=0.0, seed=0)
            paths = simulate_wealth(weekly_model, rules, config)
            a, b = paths.ecdf("general"), paths.ecdf("iid")
            report = compare(a, b, probes=[central_band(a)], loss_threshold=1.0, labels=("general", "iid"), upper_quantile=0.5)
            assert report.at_or_below_above_quantile >= 0.9, (horizon, alpha)
            if (horizon, alpha) == (104, 0.8):
                band = report.probes[0].probabilities
                assert band["general"] - band["iid"] >= 0.10
            for name in ("general", "iid"):
                assert report.loss_probability[name] <= previous[name], (name, horizon, alpha)
            previous = report.loss_probability
