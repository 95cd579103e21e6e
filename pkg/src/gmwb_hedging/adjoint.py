"""Reverse gamma-adjoint of an independent-returns model and fund duality.

Period t of the adjoint asset has log-return density

    q~_t(xi) = exp(-xi) q_{N-t-1}(-xi),

so option gammas of the base model are transition densities of the adjoint
run backwards in time. A contribution fund driven by the adjoint,
Y_0 = w and Y_{t+1} = Y_t R~_{t+1} + w, has Y_t distributed as g_{N-t-1},
which prices the withdrawal guarantee as V_t = E[P_t(Y_{N-t-1} | X_t)].
Conversely a put on a contribution fund is priced by a withdrawal fund on
the adjoint.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson
from scipy.stats import kstest

from .errors import ToleranceError, ValidationError
from .models.base import ExponentialLevyModel
from .montecarlo import MCConfig, PricingResult, estimate, gross_returns, uniform_chunks
from .weights import WeightCurve, _kernel_apply, _tail_mass, value_from_weights

NORMALIZATION_TOL = 1e-5
MASS_TOL = 1e-6
KERNEL_TOL = 1e-4
MIN_HISTOGRAM_SAMPLES = 1000


class AdjointModel(ExponentialLevyModel):
    """Model whose period-t log-return density is exp(-xi) q_{N-t-1}(-xi)."""

    def __init__(self, base, n_periods, withdrawal=None):
        super().__init__()
        self.base = base
        self.n_periods = int(n_periods)
        self.withdrawal = withdrawal
        self.dt = base.dt
        self.rate = 0.0

    def __repr__(self):
        return f"AdjointModel({self.base!r}, n_periods={self.n_periods})"

    def base_period(self, t):
        return self.n_periods - t - 1

    def _table_key(self, t, t_end):
        if t_end != t + 1:
            raise ValueError("adjoint densities are defined per single period")
        return (t,)

    def log_return_density(self, t, xi, t_end=None):
        self._table_key(t, self._check_period(t, t_end))
        xi = np.asarray(xi, dtype=float)
        df = self.base.discount_factor(self.base_period(t))
        with np.errstate(over="ignore"):
            return df * np.exp(-xi) * self.base.log_return_density(self.base_period(t), -xi)

    def _log_return_scale(self, t, t_end):
        m, v, _ = self.base.table(self.base_period(t)).moments()
        return -m - v, math.sqrt(v)


def build_adjoint(model, n_periods=None, withdrawal=None):
    """Reverse gamma-adjoint of ``model`` over ``n_periods`` periods.

    ``withdrawal`` is the contribution of the dual fund used for pricing.

    Each adjoint density is checked to integrate to one and to have unit
    mean gross return within NORMALIZATION_TOL.
    """
    if not getattr(model, "satisfies_A2", False):
        raise ValidationError("model", "the adjoint needs independent returns with tabulated densities")
    n = n_periods if n_periods is not None else model.n_periods
    if n is None or n < 1:
        raise ValidationError("n_periods", "number of periods is required")
    if model.rate != 0.0:
        warnings.warn("adjoint under a non-zero rate is experimental; its returns drift at minus the rate",
                      stacklevel=2)
    adj = AdjointModel(model, n, withdrawal)
    for t in range(n):
        tab = adj.table(t)
        if abs(tab.mass - 1.0) > NORMALIZATION_TOL:
            raise ToleranceError(f"adjoint density of period {t} has mass {tab.mass:.8f}")
        # discounted gammas integrate to one; the mean gross return is then the discount factor
        df = model.discount_factor(adj.base_period(t))
        if abs(tab.mean_return - df) > NORMALIZATION_TOL:
            raise ToleranceError(f"adjoint period {t}: E[R] = {tab.mean_return:.8f}, expected {df:.8f}")
    return adj


def adjoint_density_error(model, adjoint, t, n_points=4001):
    """Sup-norm distance between the period-t densities of adjoint and base."""
    lo, hi = model.support(t)
    xi = np.linspace(lo, hi, n_points)
    return float(np.max(np.abs(adjoint.log_return_density(t, xi) - model.log_return_density(t, xi))))


def gamma_kernel_checks(model, t=0, strikes=(0.5, 1.0, 2.0), pairs=((1.0, 1.0), (0.8, 1.3), (1.5, 0.9)),
                        n_points=8001, tol=KERNEL_TOL):
    """Gamma kernels as transition densities in the spot.

    Checks int Gamma(K|s) ds = 1 and int s Gamma(K|s) ds = K, and the
    two-step composition int Gamma_{t+1}(k|m) Gamma_t(m|k') dm =
    Gamma_{t,t+2}(k|k') on sampled (k, k').
    """
    lo, hi = model.support(t)
    x = np.linspace(lo, hi, n_points)
    report = {"mass": [], "first_moment": [], "chapman_kolmogorov": []}
    for k in strikes:
        s = k * np.exp(-x)  # ds = s dx
        gam = model.gamma(t, k, s) * s
        report["mass"].append(abs(simpson(gam, x=x) - 1.0))
        report["first_moment"].append(abs(simpson(s * gam, x=x) - k) / k)
    if model.n_periods is None or t + 2 <= model.n_periods:
        lo2, hi2 = model.support(t, t + 2)
        y = np.linspace(lo2 - (hi - lo), hi2 + (hi - lo), 2 * n_points + 1)
        for k, kp in pairs:
            m = kp * np.exp(-y)
            integrand = model.gamma(t + 1, k, m) * model.gamma(t, m, kp) * m
            composed = simpson(integrand, x=y)
            direct = float(model.gamma(t, k, kp, t_end=t + 2))
            report["chapman_kolmogorov"].append(abs(composed - direct) / max(direct, 1e-12))
    report = {key: max(vals) if vals else 0.0 for key, vals in report.items()}
    report["passed"] = all(v <= tol for v in report.values())
    return report


@dataclass(eq=False)
class EmpiricalFundDistribution:
    """Samples of an adjoint-driven fund after ``n_steps`` steps."""

    samples: np.ndarray
    n_steps: int
    amount: float
    seed: int | None = None

    @property
    def mean(self):
        return float(np.mean(self.samples))

    @property
    def std_error(self):
        return float(np.std(self.samples, ddof=1) / math.sqrt(self.samples.size)) if self.samples.size > 1 else 0.0

    def histogram(self, period, buckets=50):
        return empirical_weight_from_adjoint(self.samples, period, buckets)

    def to_csv(self, path_or_buffer=None, period=0, buckets=50):
        return self.histogram(period, buckets).to_csv(path_or_buffer)


def _fund_paths(adjoint, start, amount, sign, n_steps, config):
    """All fund samples X_{n} for X_{s+1} = X_s R~ + sign * amount, X_0 = start."""
    if n_steps == 0:
        return np.full(config.n_paths, float(start))
    out = []
    for u in uniform_chunks(config, n_steps):
        blocks = [u, 1.0 - u] if config.antithetic else [u]
        for block in blocks:
            ret = gross_returns(adjoint, block)
            x = np.full(ret.shape[1], float(start))
            for s in range(n_steps):
                x = x * ret[s] + sign * amount
            out.append(x)
    return np.concatenate(out)


def sample_adjoint_fund(adjoint, w, n_steps, config: MCConfig = MCConfig()):
    """Contribution fund Y_0 = w, Y_{s+1} = Y_s R~_{s+1} + w sampled to Y_{n_steps}."""
    if not 0 <= n_steps <= adjoint.n_periods - 1:
        raise ValidationError("n_steps", f"must lie in [0, {adjoint.n_periods - 1}]")
    return EmpiricalFundDistribution(_fund_paths(adjoint, w, w, 1.0, n_steps, config), n_steps, w, config.seed)


def sample_adjoint_withdrawal_fund(adjoint, start, p, n_steps, config: MCConfig = MCConfig()):
    """Withdrawal fund X_0 = start, X_{s+1} = X_s R~_{s+1} - p on the adjoint."""
    if not 0 <= n_steps <= adjoint.n_periods - 1:
        raise ValidationError("n_steps", f"must lie in [0, {adjoint.n_periods - 1}]")
    return EmpiricalFundDistribution(_fund_paths(adjoint, start, p, -1.0, n_steps, config), n_steps, p, config.seed)


def _adjoint_estimate(adjoint, start, amount, sign, n_steps, config, terminal, max_std_error):
    if n_steps == 0:
        return PricingResult(float(terminal(np.array([float(start)]))[0]), 0.0, config.n_paths, config.seed)

    def payoff(ret):
        x = np.full(ret.shape[1], float(start))
        for s in range(n_steps):
            x = x * ret[s] + sign * amount
        return terminal(x), {}

    res = estimate(adjoint, n_steps, config, payoff)
    if max_std_error is not None and res.std_error > max_std_error:
        raise ToleranceError(f"standard error {res.std_error:.3g} above requested {max_std_error:.3g}; "
                             "increase n_paths")
    return res


def price_via_adjoint(model, adjoint, fund_value, t=0, config: MCConfig = MCConfig(), max_std_error=None):
    """V_t = E~[P_t(Y_{N-t-1} | X_t)] by sampling the adjoint contribution fund."""
    if not fund_value > 0:
        raise ValidationError("fund_value", "fund must not be depleted (X_t > 0)")
    n, w = adjoint.n_periods, adjoint.withdrawal
    if w is None:
        raise ValidationError("adjoint", "built without a withdrawal amount")
    return _adjoint_estimate(adjoint, w, w, 1.0, n - t - 1, config,
                             lambda y: model.put(t, y, fund_value), max_std_error)


def guarantee_value_via_adjoint(model, spec, config: MCConfig = MCConfig(), max_std_error=None):
    """V_0 of the plain guarantee through the adjoint contribution fund."""
    adj = build_adjoint(model, spec.n_periods, spec.withdrawal)
    return price_via_adjoint(model, adj, spec.initial_capital, 0, config, max_std_error)


def empirical_weight_from_adjoint(samples, period, buckets=50, min_samples=MIN_HISTOGRAM_SAMPLES):
    """Histogram density of adjoint fund samples as a WeightCurve."""
    samples = np.asarray(samples, dtype=float)
    if samples.size < min_samples:
        raise ValidationError("samples", f"need at least {min_samples} samples, got {samples.size}")
    lo, hi = float(samples.min()), float(samples.max())
    if hi - lo <= 1e-12 * max(abs(lo), 1.0):
        return WeightCurve.point_mass(period, lo)
    counts, edges = np.histogram(samples, bins=buckets, range=(lo, hi))
    width = edges[1] - edges[0]
    centers = 0.5 * (edges[1:] + edges[:-1])
    return WeightCurve(period, centers, counts / (samples.size * width), rule="midpoint")


def ks_distance(samples, curve: WeightCurve):
    """Kolmogorov-Smirnov statistic of samples against the curve's CDF."""
    return float(kstest(np.asarray(samples, dtype=float), curve.cdf).statistic)


def ks_bound(n):
    """Critical KS distance 1.63 / sqrt(n)."""
    return 1.63 / math.sqrt(n)


def contribution_weight_curves(model, p, strike, n_periods, n_points=2001, tail_target=1e-10):
    """Put weights of a put on a contribution fund, g~_{N-1} = delta_K back to g~_0.

    g~_t(k) = int Gamma_{t+1}(k' | k + p) g~_{t+1}(k') dk' on k in [0, k_max].
    """
    curves = [WeightCurve.point_mass(n_periods - 1, strike)]
    for t in range(n_periods - 2, -1, -1):
        src = curves[-1]
        scale = src.mass
        cut = 2.0 * (src.upper + p)
        for _ in range(200):
            if _tail_mass(model, src.period, src, cut) < tail_target * scale:
                break
            cut *= 1.2
        grid = np.linspace(0.0, cut - p, n_points)
        dens = np.clip(_kernel_apply(model, src.period, src, grid + p), 0.0, None)
        curve = WeightCurve(t, grid, dens)
        # exact mass over spots [p, cut] from put deltas; a gap means the kernel is not resolved
        expected = _tail_mass(model, src.period, src, p) - _tail_mass(model, src.period, src, grid[-1] + p)
        if abs(curve.mass - expected) > MASS_TOL * scale:
            raise ToleranceError(f"contribution weight g~_{t}: mass {curve.mass:.8f}, expected {expected:.8f}; "
                                 "the kernel is not resolved on the strike grid")
        curves.append(curve)
    return curves[::-1]


def price_put_on_contribution_fund(model, p, strike, n_periods, method="weights",
                                   config: MCConfig = MCConfig(), n_points=2001):
    """Put (K - Y_{N-})^+ on the contribution fund with Y_0 = p.

    ``method="weights"`` integrates the backward weights against puts on
    Y_0 = p; ``method="adjoint"`` averages P_0(X_{N-1} | p) over an adjoint
    withdrawal fund started at K with withdrawals p.
    """
    if not strike > 0:
        raise ValidationError("strike", "must be positive")
    if not p > 0:
        raise ValidationError("contribution", "must be positive")
    if method == "weights":
        curve = contribution_weight_curves(model, p, strike, n_periods, n_points)[0]
        return PricingResult(value_from_weights(model, curve, p), None, None, None,
                             {"weight_mass": curve.mass})
    if method == "adjoint":
        adj = build_adjoint(model, n_periods)
        return _adjoint_estimate(adj, strike, p, -1.0, n_periods - 1, config,
                                 lambda x: model.put(0, np.maximum(x, 0.0), p), None)
    raise ValidationError("method", f"unknown method {method!r}")
