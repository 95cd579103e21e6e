"""Black-Scholes model with deterministic per-period volatilities."""
from __future__ import annotations

import math

import numpy as np
from scipy.stats import norm

from ..errors import ValidationError
from .base import ExponentialLevyModel


def _d1_d2(strike, spot, total_vol, df=1.0):
    strike = np.asarray(strike, dtype=float)
    spot = np.asarray(spot, dtype=float)
    if np.any(strike < 0):
        raise ValidationError("strike", "must be non-negative")
    forward = spot / df
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = np.log(forward / strike) / total_vol + 0.5 * total_vol
    return strike, spot, d1, d1 - total_vol


def bs_put(strike, spot, total_vol, df=1.0):
    strike, spot, d1, d2 = _d1_d2(strike, spot, total_vol, df)
    val = df * strike * norm.cdf(-d2) - spot * norm.cdf(-d1)
    return np.where(strike > 0, np.maximum(val, 0.0), 0.0)


def bs_call(strike, spot, total_vol, df=1.0):
    strike, spot, d1, d2 = _d1_d2(strike, spot, total_vol, df)
    return np.where(strike > 0, spot * norm.cdf(d1) - df * strike * norm.cdf(d2), spot)


def bs_delta(strike, spot, total_vol, df=1.0):
    """Spot delta of the put."""
    strike, _, d1, _ = _d1_d2(strike, spot, total_vol, df)
    return np.where(strike > 0, -norm.cdf(-d1), 0.0)


def bs_gamma(strike, spot, total_vol, df=1.0):
    strike, spot, d1, _ = _d1_d2(strike, spot, total_vol, df)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = norm.pdf(d1) / (spot * total_vol)
    return np.where((strike > 0) & (spot > 0), g, 0.0)


def bs_dstrike_put(strike, spot, total_vol, df=1.0):
    _, _, _, d2 = _d1_d2(strike, spot, total_vol, df)
    return df * norm.cdf(-d2)


def bs_d2strike_put(strike, spot, total_vol, df=1.0):
    strike, _, _, d2 = _d1_d2(strike, spot, total_vol, df)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = df * norm.pdf(d2) / (strike * total_vol)
    return np.where(strike > 0, g, 0.0)


def bs_gamma_dvol(strike, spot, vol, dt, df=1.0):
    """First derivative of the gamma in the annualized volatility."""
    total = vol * math.sqrt(dt)
    _, _, d1, d2 = _d1_d2(strike, spot, total, df)
    return (d1 * d2 - 1.0) * bs_gamma(strike, spot, total, df) / vol


def bs_gamma_d2vol(strike, spot, vol, dt, df=1.0):
    """Second derivative of the gamma in the annualized volatility."""
    total = vol * math.sqrt(dt)
    _, _, d1, d2 = _d1_d2(strike, spot, total, df)
    a = d1 * d2
    poly = 2.0 + a**2 - 3.0 * a - d1**2 - d2**2
    return poly * bs_gamma(strike, spot, total, df) / vol**2


class BlackScholesModel(ExponentialLevyModel):
    """Lognormal returns; ``vols`` is one annualized volatility or one per period.

    The volatility of period t applies over (T_t, T_{t+1}].
    """

    def __init__(self, vols=0.3, dt=1.0, rate=0.0, n_periods=None):
        super().__init__()
        if np.ndim(vols) == 0:
            self.vols = float(vols)
        else:
            self.vols = tuple(float(v) for v in vols)
            if n_periods is None:
                n_periods = len(self.vols)
            elif n_periods > len(self.vols):
                raise ValidationError("vols", f"{len(self.vols)} volatilities for {n_periods} periods")
        if min(np.atleast_1d(self.vols)) <= 0:
            raise ValidationError("vols", "volatilities must be positive")
        if not dt > 0:
            raise ValidationError("dt", "must be positive")
        self.dt = float(dt)
        self.rate = float(rate)
        self.n_periods = n_periods

    def __repr__(self):
        return f"BlackScholesModel(vols={self.vols!r}, dt={self.dt}, rate={self.rate})"

    def vol(self, t):
        if isinstance(self.vols, float):
            return self.vols
        return self.vols[t]

    def with_vol(self, t, vol):
        """Copy with the period-t volatility replaced."""
        n = self.n_periods if self.n_periods is not None else t + 1
        vols = [self.vol(u) for u in range(n)]
        vols[t] = vol
        return BlackScholesModel(vols, self.dt, self.rate, self.n_periods)

    @property
    def constant_vol(self):
        return isinstance(self.vols, float) or len(set(self.vols)) == 1

    def total_vol(self, t, t_end=None):
        t_end = self._check_period(t, t_end)
        return math.sqrt(sum(self.vol(u) ** 2 for u in range(t, t_end)) * self.dt)

    def _table_key(self, t, t_end):
        return (self.total_vol(t, t_end), t_end - t)

    def _log_return_scale(self, t, t_end):
        v = self.total_vol(t, t_end)
        return self.rate * self.dt * (t_end - t) - 0.5 * v * v, v

    def log_return_density(self, t, xi, t_end=None):
        t_end = self._check_period(t, t_end)
        v = self.total_vol(t, t_end)
        mean = self.rate * self.dt * (t_end - t) - 0.5 * v * v
        return norm.pdf(np.asarray(xi, dtype=float), loc=mean, scale=v)

    def sample_log_returns(self, t, u):
        v = self.total_vol(t)
        return self.rate * self.dt - 0.5 * v * v + v * norm.ppf(u)

    def _args(self, t, t_end):
        return self.total_vol(t, t_end), self.discount_factor(t, t_end)

    def put(self, t, strike, spot, t_end=None):
        return bs_put(strike, spot, *self._args(t, t_end))

    def call(self, t, strike, spot, t_end=None):
        return bs_call(strike, spot, *self._args(t, t_end))

    def delta(self, t, strike, spot, t_end=None):
        return bs_delta(strike, spot, *self._args(t, t_end))

    def gamma(self, t, strike, spot, t_end=None):
        return bs_gamma(strike, spot, *self._args(t, t_end))

    def dstrike_put(self, t, strike, spot, t_end=None):
        return bs_dstrike_put(strike, spot, *self._args(t, t_end))

    def d2strike_put(self, t, strike, spot, t_end=None):
        return bs_d2strike_put(strike, spot, *self._args(t, t_end))

    def gamma_dvol(self, t, strike, spot):
        return bs_gamma_dvol(strike, spot, self.vol(t), self.dt, self.discount_factor(t))

    def gamma_d2vol(self, t, strike, spot):
        return bs_gamma_d2vol(strike, spot, self.vol(t), self.dt, self.discount_factor(t))

    def return_variance(self, t):
        v = self.total_vol(t)
        growth = math.exp(self.rate * self.dt)
        return growth**2 * (math.exp(v * v) - 1.0)
