"""Acceptance gate: one test per criterion, each prints a PASS/FAIL line."""
import itertools
import math
import time

import numpy as np

from conftest import VG_PARAMS, W, record_acceptance
from gmwb_hedging.adjoint import (adjoint_density_error, build_adjoint, gamma_kernel_checks,
                                  guarantee_value_via_adjoint, price_put_on_contribution_fund)
from gmwb_hedging.contract import GuaranteeSpec
from gmwb_hedging.markov import backward_markov_value
from gmwb_hedging.models import BlackScholesModel, VarianceGammaModel
from gmwb_hedging.montecarlo import MCConfig, guarantee_claims, gross_returns, mc_guarantee_value, \
    mc_put_on_contribution_fund, mc_rollup_value, uniform_chunks
from gmwb_hedging.rollup import build_rollup_coefficients, rollup_guarantee_value, rollup_value
from gmwb_hedging.sensitivities import net_volga_after_varswap_hedge
from gmwb_hedging.weights import replication_residuals, value_from_weights, weight_curves

MC = MCConfig(n_paths=100_000, seed=0, antithetic=True)


def test_criterion_1_weight_curve_laws():
    model = BlackScholesModel(0.3, 1.0, 0.0, 5)
    start = time.perf_counter()
    curves = weight_curves(model, W, 5)
    elapsed = time.perf_counter() - start
    mass_err = max(abs(c.mass - 1.0) for c in curves)
    mean_err = max(abs(c.mean - (5 - c.period) * W) for c in curves)
    variances = [float(c.variance) for c in curves]
    spreading = all(a > b for a, b in zip(variances, variances[1:]))
    ok = mass_err <= 1e-6 and mean_err <= 0.01 and spreading and elapsed < 5.0
    record_acceptance(1, ok, f"mass err {mass_err:.1e}, mean err {mean_err:.1e}, "
                             f"variances {[round(v, 3) for v in variances]}, {elapsed:.2f}s")
    assert ok


def test_criterion_2_weights_match_monte_carlo():
    cases = [("BS 0.25 N=2", BlackScholesModel(0.25, 1.0, 0.0, 2), 2),
             ("BS 0.3 N=5", BlackScholesModel(0.3, 1.0, 0.0, 5), 5),
             ("VG N=5", VarianceGammaModel(**VG_PARAMS, dt=1.0, n_periods=5), 5)]
    start = time.perf_counter()
    worst, failures = 0.0, []
    for name, model, n in cases:
        g0 = weight_curves(model, W, n)[0]
        for moneyness in (0.7, 1.0, 1.3):
            spec = GuaranteeSpec.from_moneyness(moneyness, n, W)
            static = value_from_weights(model, g0, spec.initial_capital)
            mc = mc_guarantee_value(model, spec, MC)
            z = abs(static - mc.value) / mc.std_error
            worst = max(worst, z)
            if z > 3.0:
                failures.append((name, moneyness, z))
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 60.0
    record_acceptance(2, ok, f"worst gap {worst:.2f} SE over 9 cells, {elapsed:.1f}s")
    assert ok, failures


def test_criterion_3_three_pipelines_agree():
    model = BlackScholesModel(0.3, 1.0, 0.0, 5)
    spec = GuaranteeSpec.from_moneyness(1.0, 5, W)
    weights = value_from_weights(model, weight_curves(model, W, 5)[0], spec.initial_capital)
    adjoint = guarantee_value_via_adjoint(model, spec, MC)
    markov = backward_markov_value(model, spec, n_zeta=3).value
    values = {"weights": (weights, 0.0), "adjoint": (adjoint.value, adjoint.std_error), "markov": (markov, 0.0)}
    ok = True
    for (_, (a, sa)), (_, (b, sb)) in itertools.combinations(values.items(), 2):
        tol = max(3.0 * math.hypot(sa, sb), 5e-3 * max(abs(a), abs(b)))
        ok &= abs(a - b) <= tol
    record_acceptance(3, ok, "  ".join(f"{k} {v:.5f}" for k, (v, _) in values.items()))
    assert ok


def test_criterion_4_replication_identity():
    model = BlackScholesModel(0.3, 1.0, 0.0, 5)
    curves = weight_curves(model, W, 5)
    spots = np.linspace(0.5, 120.0, 50)
    worst = max(float(np.max(np.abs(replication_residuals(model, curves, t, spots, W)))) for t in range(1, 6))
    ok = worst <= 1e-4 * W
    record_acceptance(4, ok, f"max residual {worst:.2e} (bound {1e-4 * W:.0e})")
    assert ok


def test_criterion_5_boundary_conditions():
    model = BlackScholesModel(0.25, 1.0, 0.0, 2)
    spec = GuaranteeSpec.from_moneyness(1.0, 2, W)
    result = backward_markov_value(model, spec, n_zeta=3)
    report = result.reports[1]
    surface = result.surfaces[0]
    linear = surface.u <= W
    row = surface.row(spec.initial_capital)
    linear_ok = np.allclose(row[linear], 2 * W - surface.u[linear], atol=1e-12)
    ok = all(r["passed"] for r in report.values()) and linear_ok
    record_acceptance(5, ok, "  ".join(f"{k} {r['error']:.1e}" for k, r in report.items()))
    assert ok


def test_criterion_6_gamma_adjoint_kernels():
    bs = BlackScholesModel(0.3, 1.0, 0.0, 5)
    vg = VarianceGammaModel(**VG_PARAMS, dt=1.0, n_periods=5)
    kernels = [gamma_kernel_checks(bs), gamma_kernel_checks(vg)]
    adj_bs, adj_vg = build_adjoint(bs, 5), build_adjoint(vg, 5)
    martingale = max(abs(a.table(t).mean_return - 1.0) for a in (adj_bs, adj_vg) for t in range(5))
    self_adjoint = max(adjoint_density_error(bs, adj_bs, t) for t in range(5))
    skew_base = vg.table(0).moments()[2]
    skew_adj = adj_vg.table(4).moments()[2]
    ok = (all(k["passed"] for k in kernels) and martingale <= 1e-5 and self_adjoint < 1e-8
          and skew_base < 0 < skew_adj)
    worst_kernel = max(max(v for key, v in k.items() if key != "passed") for k in kernels)
    record_acceptance(6, ok, f"kernel err {worst_kernel:.1e}, martingale {martingale:.1e}, "
                             f"self-adjoint {self_adjoint:.1e}, skew {skew_base:.2e} -> {skew_adj:.2e}")
    assert ok


def test_criterion_7_rollup():
    model = BlackScholesModel(0.3, 1.0, 0.0, 5)
    checks = {}
    spec = GuaranteeSpec.from_moneyness(1.0, 5, W, rollup_rate=0.0)
    coeffs = build_rollup_coefficients(model, spec)
    xs = np.linspace(5.0, 80.0, 16)
    terminal = max(abs(rollup_value(model, coeffs, W, x, 4).value - float(model.put(4, W, x))) for x in xs)
    checks["terminal"] = bool(terminal == 0.0)
    homog = max(abs(rollup_value(model, coeffs, 2 * W, 2 * x, t).value
                    - 2 * rollup_value(model, coeffs, W, x, t).value)
                / rollup_value(model, coeffs, W, x, t).value for x in (20.0, 50.0) for t in range(5))
    checks["homogeneity"] = bool(homog <= 1e-9)
    plain = value_from_weights(model, weight_curves(model, W, 5)[0], spec.initial_capital)
    huge = GuaranteeSpec(spec.schedule, spec.initial_capital, rollup_rate=1.0 / (1e3 * 5) - 1.0)  # A_t >= 1000 N
    limit = rollup_guarantee_value(model, huge).value
    checks["large_base_limit"] = bool(abs(limit - plain) <= 0.01 * plain)
    worst_z = 0.0
    for moneyness in (0.7, 1.0, 1.3):
        s = GuaranteeSpec.from_moneyness(moneyness, 5, W, rollup_rate=0.0)
        static = rollup_guarantee_value(model, s).value
        mc = mc_rollup_value(model, s, MC)
        worst_z = max(worst_z, abs(static - mc.value) / mc.std_error)
    checks["mc_oracle"] = bool(worst_z <= 3.0)
    u = next(uniform_chunks(MCConfig(8192, seed=3), 5))
    returns = gross_returns(model, u)
    with_rollup = guarantee_claims(spec, returns)[0]
    without = guarantee_claims(GuaranteeSpec(spec.schedule, spec.initial_capital), returns)[0]
    checks["dominates_plain"] = bool(np.all(with_rollup >= without - 1e-12))
    ok = all(checks.values())
    record_acceptance(7, ok, f"{checks}, homogeneity {homog:.1e}, limit {limit:.5f} vs {plain:.5f}, "
                             f"worst MC gap {worst_z:.2f} SE")
    assert ok


def test_criterion_8_put_on_contribution_fund():
    model = BlackScholesModel(0.25, 1.0, 0.0, 2)
    weights = price_put_on_contribution_fund(model, 10.0, 20.0, 2).value
    mc = mc_put_on_contribution_fund(model, 10.0, 20.0, 2, MC)
    ok = abs(weights - mc.value) <= 3.0 * mc.std_error
    record_acceptance(8, ok, f"weights {weights:.5f}, MC {mc.value:.5f} +- {mc.std_error:.4f}")
    assert ok


def test_criterion_9_volga_sign_pattern():
    results = {}
    for n in (2, 5):
        model = BlackScholesModel(0.3, 1.0, 0.0, n)
        for moneyness in (1.0, 0.6):
            spec = GuaranteeSpec.from_moneyness(moneyness, n, W)
            results[(n, moneyness)] = net_volga_after_varswap_hedge(model, spec).net_volga
    ok = all(results[(n, 1.0)] > 0 > results[(n, 0.6)] for n in (2, 5))
    record_acceptance(9, ok, "  ".join(f"N={n} m={m}: {v:+.4f}" for (n, m), v in results.items()))
    assert ok
