import io

import numpy as np
import pytest
from scipy.stats import ks_2samp

from conftest import VG_PARAMS, W
from gmwb_hedging.adjoint import (adjoint_density_error, build_adjoint, empirical_weight_from_adjoint,
                                  gamma_kernel_checks, guarantee_value_via_adjoint, ks_bound, ks_distance,
                                  price_put_on_contribution_fund, price_via_adjoint, sample_adjoint_fund,
                                  sample_adjoint_withdrawal_fund)
from gmwb_hedging.contract import GuaranteeSpec
from gmwb_hedging.errors import ToleranceError, ValidationError
from gmwb_hedging.models import BlackScholesModel, VarianceGammaModel
from gmwb_hedging.montecarlo import MCConfig, estimate, gross_returns, mc_guarantee_value, \
    mc_put_on_contribution_fund, uniform_chunks
from gmwb_hedging.weights import WeightCurve, value_from_weights, weight_curves

SAMPLES = MCConfig(20_000, seed=21)
PRICE = MCConfig(100_000, seed=0, antithetic=True)


def test_bs_constant_vol_is_self_adjoint(bs30_n5):
    adj = build_adjoint(bs30_n5, 5)
    assert max(adjoint_density_error(bs30_n5, adj, t) for t in range(5)) < 1e-8


def test_time_dependent_bs_reverses_periods():
    base = BlackScholesModel([0.2, 0.3, 0.4])
    adj = build_adjoint(base, 3)
    xi = np.linspace(-1.0, 1.0, 201)
    for t in range(3):
        assert np.allclose(adj.log_return_density(t, xi), base.log_return_density(2 - t, xi), atol=1e-10)


def test_vg_adjoint_reverses_skew(vg_n5):
    adj = build_adjoint(vg_n5, 5)
    base_third = vg_n5.table(0).moments()[2]
    adj_third = adj.table(0).moments()[2]
    assert base_third < 0 < adj_third
    assert base_third == pytest.approx(-0.001429, rel=1e-3)
    assert adj_third == pytest.approx(0.001176, rel=1e-3)


def test_adjoint_densities_are_martingale_densities(vg_n5):
    adj = build_adjoint(vg_n5, 5)
    for t in range(5):
        assert adj.table(t).mass == pytest.approx(1.0, abs=1e-5)
        assert adj.table(t).mean_return == pytest.approx(1.0, abs=1e-5)


def test_adjoint_of_adjoint_is_base(vg_n5):
    twice = build_adjoint(build_adjoint(vg_n5, 5), 5)
    xi = np.linspace(-0.8, 0.6, 301)
    assert np.max(np.abs(twice.log_return_density(0, xi) - vg_n5.log_return_density(0, xi))) < 1e-12


@pytest.mark.parametrize("model", [BlackScholesModel(0.3, n_periods=3),
                                   VarianceGammaModel(**VG_PARAMS, n_periods=3)], ids=["bs", "vg"])
def test_gamma_kernel_report(model):
    report = gamma_kernel_checks(model)
    assert report["passed"]
    assert report["chapman_kolmogorov"] < 1e-4


def test_sampled_adjoint_is_martingale(vg_n5):
    adj = build_adjoint(vg_n5, 5)
    res = estimate(adj, 5, MCConfig(100_000, seed=3), lambda r: (np.prod(r, axis=0), {}))
    assert abs(res.value - 1.0) <= 3 * res.std_error


def test_sampled_adjoint_returns_follow_reversed_periods():
    base = BlackScholesModel([0.15, 0.35])
    adj = build_adjoint(base, 2)
    u = next(uniform_chunks(MCConfig(8000, seed=1), 2))
    v = next(uniform_chunks(MCConfig(8000, seed=2), 2))
    adj_returns, base_returns = gross_returns(adj, u), gross_returns(base, v)
    assert ks_2samp(adj_returns[0], base_returns[1]).pvalue > 0.01
    assert ks_2samp(adj_returns[0], base_returns[0]).pvalue < 1e-6


def test_fund_sampling_trivial_cases():
    adj = build_adjoint(BlackScholesModel(1e-9, n_periods=5), 5)
    assert np.all(sample_adjoint_fund(adj, W, 0, SAMPLES).samples == W)
    for t in range(1, 5):
        assert np.allclose(sample_adjoint_fund(adj, W, t, SAMPLES).samples, (t + 1) * W, rtol=1e-6)
    with pytest.raises(ValidationError):
        sample_adjoint_fund(adj, W, 5, SAMPLES)


def test_fund_mean_identity(bs30_n5):
    dist = sample_adjoint_fund(build_adjoint(bs30_n5, 5), W, 4, SAMPLES)
    assert abs(dist.mean - 50.0) <= 3 * dist.std_error


def test_empirical_weights_match_quadrature(bs30_n5, curves_bs30_n5):
    dist = sample_adjoint_fund(build_adjoint(bs30_n5, 5), W, 4, SAMPLES)
    assert ks_distance(dist.samples, curves_bs30_n5[0]) < ks_bound(dist.samples.size)
    hist = dist.histogram(0, buckets=50)
    assert hist.rule == "midpoint" and hist.grid.size == 50
    assert hist.mass == pytest.approx(1.0, rel=1e-12)
    assert abs(hist.mean - 50.0) <= 3 * dist.std_error + (hist.grid[1] - hist.grid[0])


def test_empirical_weight_atom_case():
    curve = empirical_weight_from_adjoint(np.full(5000, W), 4)
    assert curve.atom == (W, 1.0)
    with pytest.raises(ValidationError):
        empirical_weight_from_adjoint(np.ones(10), 0)


def test_empirical_distribution_csv(bs30_n5):
    dist = sample_adjoint_fund(build_adjoint(bs30_n5, 5), W, 2, SAMPLES)
    text = dist.to_csv(period=2)
    back = WeightCurve.from_csv(io.StringIO(text), rule="midpoint")
    assert back.period == 2 and back.grid.size == 50


def test_price_via_adjoint(bs30_n5, curves_bs30_n5):
    spec = GuaranteeSpec.from_moneyness(1.0, 5, W)
    res = guarantee_value_via_adjoint(bs30_n5, spec, PRICE)
    static = value_from_weights(bs30_n5, curves_bs30_n5[0], spec.initial_capital)
    assert res.value == pytest.approx(static, rel=5e-3)
    adj = build_adjoint(bs30_n5, 5, W)
    assert price_via_adjoint(bs30_n5, adj, 1e6, 0, SAMPLES).value < 1e-12
    with pytest.raises(ToleranceError):
        price_via_adjoint(bs30_n5, adj, 50.0, 0, MCConfig(1000), max_std_error=1e-6)
    with pytest.raises(ValidationError):
        price_via_adjoint(bs30_n5, build_adjoint(bs30_n5, 5), 50.0)


def test_price_via_adjoint_at_later_date(bs30_n5, curves_bs30_n5):
    adj = build_adjoint(bs30_n5, 5, W)
    res = price_via_adjoint(bs30_n5, adj, 25.0, 2, PRICE)
    assert abs(res.value - value_from_weights(bs30_n5, curves_bs30_n5[2], 25.0)) <= 3 * res.std_error


def test_put_on_contribution_fund(bs25_n2):
    weights = price_put_on_contribution_fund(bs25_n2, 10.0, 20.0, 2)
    assert weights.value == pytest.approx(2.2223352774660947, rel=1e-6)
    dual = price_put_on_contribution_fund(bs25_n2, 10.0, 20.0, 2, method="adjoint", config=PRICE)
    direct = mc_put_on_contribution_fund(bs25_n2, 10.0, 20.0, 2, PRICE)
    assert abs(dual.value - weights.value) <= 3 * dual.std_error
    assert abs(direct.value - weights.value) <= 3 * direct.std_error


def test_put_on_contribution_fund_limits():
    # deep in the money and nearly deterministic: K - E[Y] = 45 - 30
    calm = BlackScholesModel(0.01, n_periods=3)
    assert price_put_on_contribution_fund(calm, 10.0, 45.0, 3).value == pytest.approx(15.0, abs=1e-6)
    flat = BlackScholesModel(1e-9, n_periods=3)
    with pytest.raises(ToleranceError):
        price_put_on_contribution_fund(flat, 10.0, 45.0, 3)
    small = price_put_on_contribution_fund(BlackScholesModel(0.25, n_periods=2), 10.0, 1e-3, 2).value
    assert small == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValidationError):
        price_put_on_contribution_fund(flat, 10.0, 0.0, 3)


def test_duality_round_trip(bs25_n2):
    # guarantee -> adjoint contribution fund -> its adjoint withdrawal fund gives back the base fund
    adj = build_adjoint(bs25_n2, 2, W)
    back = build_adjoint(adj, 2)
    withdrawal = sample_adjoint_withdrawal_fund(back, 20.0, W, 1, SAMPLES)
    direct = sample_adjoint_withdrawal_fund(adj, 20.0, W, 1, SAMPLES)
    assert np.allclose(withdrawal.samples, direct.samples, rtol=1e-6)
    guarantee = guarantee_value_via_adjoint(bs25_n2, GuaranteeSpec.from_moneyness(1.0, 2, W), PRICE)
    put = price_put_on_contribution_fund(bs25_n2, W, 20.0, 2, method="adjoint", config=PRICE)
    assert abs(guarantee.value - put.value) <= 3 * (guarantee.std_error + put.std_error)


def test_adjoint_needs_independent_returns():
    class Markov:
        satisfies_A2 = False
    with pytest.raises(ValidationError):
        build_adjoint(Markov(), 3)


def test_nonzero_rate_adjoint_is_normalized_and_drifts_down():
    with pytest.warns(UserWarning):
        adj = build_adjoint(BlackScholesModel(0.3, rate=0.01, n_periods=2), 2)
    assert adj.table(0).mass == pytest.approx(1.0, abs=1e-8)
    assert adj.table(0).mean_return == pytest.approx(np.exp(-0.01), abs=1e-8)


@pytest.mark.slow
@pytest.mark.parametrize("moneyness", [0.7, 1.0, 1.3])
def test_quarterly_vg_guarantee_against_direct_simulation(moneyness):
    model = VarianceGammaModel(**VG_PARAMS, dt=0.25, n_periods=40)
    spec = GuaranteeSpec.from_moneyness(moneyness, 40, 2.5, dt=0.25)
    adj = guarantee_value_via_adjoint(model, spec, PRICE)
    mc = mc_guarantee_value(model, spec, PRICE)
    assert abs(adj.value - mc.value) <= 3 * np.hypot(adj.std_error, mc.std_error)
