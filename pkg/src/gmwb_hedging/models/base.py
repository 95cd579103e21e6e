"""One-factor model interface and density-table machinery for Lévy models.

A model prices one-period vanilla options: ``put(t, strike, spot)`` is the
value at T_t of a put expiring at T_{t+1}. Passing ``t_end`` prices the
composite period (T_t, T_{t_end}] where the model supports it.
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod

import numpy as np
from scipy.integrate import cumulative_simpson, cumulative_trapezoid, simpson
from scipy.interpolate import CubicSpline

from ..errors import ToleranceError

DENSITY_CUTOFF = 1e-12
PRICING_TABLE_POINTS = 2**14 + 1
SAMPLING_TABLE_POINTS = 4096


class OneFactorModel(ABC):
    """Put/call values and their spot and strike derivatives, per period.

    Subclasses implement ``put``, ``delta``, ``gamma``, ``dstrike_put``,
    ``d2strike_put`` and ``log_return_density``. Calls follow from put-call
    parity with the flat discount rate.
    """

    satisfies_A1 = True
    satisfies_A2 = False
    rate = 0.0
    dt = 1.0
    n_periods = None

    def discount_factor(self, t, t_end=None):
        t_end = t + 1 if t_end is None else t_end
        return math.exp(-self.rate * self.dt * (t_end - t))

    def _check_period(self, t, t_end=None):
        t_end = t + 1 if t_end is None else t_end
        if t < 0 or t_end <= t:
            raise ValueError(f"invalid period ({t}, {t_end}]")
        if self.n_periods is not None and t_end > self.n_periods:
            raise ValueError(f"period ({t}, {t_end}] beyond model horizon of {self.n_periods} periods")
        return t_end

    @abstractmethod
    def put(self, t, strike, spot, t_end=None): ...

    @abstractmethod
    def delta(self, t, strike, spot, t_end=None): ...

    @abstractmethod
    def gamma(self, t, strike, spot, t_end=None): ...

    @abstractmethod
    def dstrike_put(self, t, strike, spot, t_end=None): ...

    @abstractmethod
    def d2strike_put(self, t, strike, spot, t_end=None): ...

    @abstractmethod
    def log_return_density(self, t, xi, t_end=None): ...

    def call(self, t, strike, spot, t_end=None):
        strike = np.asarray(strike, dtype=float)
        spot = np.asarray(spot, dtype=float)
        df = self.discount_factor(t, t_end)
        return self.put(t, strike, spot, t_end) + spot - strike * df

    def call_delta(self, t, strike, spot, t_end=None):
        return self.delta(t, strike, spot, t_end) + 1.0

    def sampling_table(self, t):
        """Inverse-CDF table of the period-t log-return, shared by all samplers."""
        raise NotImplementedError(f"{type(self).__name__} does not provide log-return sampling")

    def sample_log_returns(self, t, u):
        """Period-t log-returns from uniforms by inversion."""
        return self.sampling_table(t)(u)


def find_support(density, center, scale, cutoff=DENSITY_CUTOFF, max_steps=400):
    """Interval outside of which ``density`` stays below ``cutoff``.

    Walks outwards from ``center`` in steps of ``scale`` starting at five
    scales, then refines each end by bisection.
    """
    def edge(direction):
        inner = center + direction * 5.0 * scale
        for _ in range(max_steps):
            outer = inner + direction * scale
            if density(np.array([outer]))[0] < cutoff and density(np.array([inner]))[0] < cutoff:
                break
            inner = outer
        else:
            raise ToleranceError("log-return density tail does not decay below the cutoff")
        # back off towards the center while still below the cutoff
        lo, hi = center, inner
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if density(np.array([mid]))[0] < cutoff:
                hi = mid
            else:
                lo = mid
        return hi

    return edge(-1.0), edge(1.0)


class LogReturnTable:
    """Tabulated log-return density with cumulative integrals.

    ``F(x) = int_{-inf}^x q`` and ``G(x) = int_{-inf}^x e^u q(u) du`` give
    undiscounted put prices per unit spot: E[(m - R)^+] = m F(ln m) - G(ln m).
    """

    def __init__(self, xi, q):
        self.xi = np.asarray(xi, dtype=float)
        self.q = np.clip(np.asarray(q, dtype=float), 0.0, None)
        self.lo, self.hi = self.xi[0], self.xi[-1]
        self.cdf = cumulative_simpson(self.q, x=self.xi, initial=0.0)
        self.gcdf = cumulative_simpson(np.exp(self.xi) * self.q, x=self.xi, initial=0.0)
        self.mass = float(self.cdf[-1])
        self.mean_return = float(self.gcdf[-1])
        self._q = CubicSpline(self.xi, self.q, extrapolate=False)
        self._F = CubicSpline(self.xi, self.cdf, extrapolate=False)
        self._G = CubicSpline(self.xi, self.gcdf, extrapolate=False)

    @classmethod
    def from_density(cls, density, lo, hi, n_points=PRICING_TABLE_POINTS):
        xi = np.linspace(lo, hi, n_points)
        return cls(xi, density(xi))

    def _eval(self, spline, x, below, above):
        x = np.asarray(x, dtype=float)
        out = np.where(x <= self.lo, below, above)
        inside = (x > self.lo) & (x < self.hi)
        if np.any(inside):
            out = np.array(out, dtype=float)
            out[inside] = spline(x[inside])
        return out

    def density(self, x):
        return np.clip(self._eval(self._q, x, 0.0, 0.0), 0.0, None)

    def F(self, x):
        return self._eval(self._F, x, 0.0, self.mass)

    def G(self, x):
        return self._eval(self._G, x, 0.0, self.mean_return)

    def moments(self):
        """Mean, variance and third central moment of the log-return."""
        w = self.q / self.mass
        m = _simpson(self.xi * w, self.xi)
        c = self.xi - m
        return m, _simpson(c**2 * w, self.xi), _simpson(c**3 * w, self.xi)


def _simpson(y, x):
    return float(simpson(y, x=x))


class InverseCDFSampler:
    """Maps uniforms to log-returns by linear interpolation of a tabulated CDF."""

    def __init__(self, density, lo, hi, n_points=SAMPLING_TABLE_POINTS):
        self.xi = np.linspace(lo, hi, n_points)
        q = np.clip(density(self.xi), 0.0, None)
        cdf = cumulative_trapezoid(q, self.xi, initial=0.0)
        self.raw_mass = float(cdf[-1])
        self.cdf = cdf / cdf[-1]

    def __call__(self, u):
        return np.interp(u, self.cdf, self.xi)


class ExponentialLevyModel(OneFactorModel):
    """Model with independent log-returns described by per-period densities.

    Prices and Greeks follow from the density through the A2 representation
    P(K | s) = DF * (K F(ln K/s) - s G(ln K/s)).
    """

    satisfies_A2 = True

    def __init__(self):
        self._tables = {}
        self._samplers = {}

    @abstractmethod
    def log_return_density(self, t, xi, t_end=None): ...

    @abstractmethod
    def _log_return_scale(self, t, t_end):
        """Rough (center, standard deviation) of the log-return for range search."""

    def _table_key(self, t, t_end):
        return (t, t_end)

    def support(self, t, t_end=None):
        t_end = self._check_period(t, t_end)
        center, scale = self._log_return_scale(t, t_end)
        return find_support(lambda x: self.log_return_density(t, x, t_end), center, scale)

    def table(self, t, t_end=None) -> LogReturnTable:
        t_end = self._check_period(t, t_end)
        key = self._table_key(t, t_end)
        if key not in self._tables:
            lo, hi = self.support(t, t_end)
            self._tables[key] = LogReturnTable.from_density(
                lambda x: self.log_return_density(t, x, t_end), lo, hi
            )
        return self._tables[key]

    def sampling_table(self, t):
        self._check_period(t)
        key = self._table_key(t, t + 1)
        if key not in self._samplers:
            lo, hi = self.support(t)
            self._samplers[key] = InverseCDFSampler(lambda x: self.log_return_density(t, x), lo, hi)
        return self._samplers[key]

    def _log_moneyness(self, strike, spot):
        strike = np.asarray(strike, dtype=float)
        spot = np.asarray(spot, dtype=float)
        with np.errstate(divide="ignore"):
            return strike, spot, np.log(strike / spot)

    def put(self, t, strike, spot, t_end=None):
        tab = self.table(t, t_end)
        k, s, x = self._log_moneyness(strike, spot)
        df = self.discount_factor(t, t_end)
        val = df * (k * tab.F(x) - s * tab.G(x))
        return np.where(k > 0, np.maximum(val, 0.0), 0.0)

    def delta(self, t, strike, spot, t_end=None):
        tab = self.table(t, t_end)
        _, _, x = self._log_moneyness(strike, spot)
        return -self.discount_factor(t, t_end) * tab.G(x)

    def gamma(self, t, strike, spot, t_end=None):
        tab = self.table(t, t_end)
        k, s, x = self._log_moneyness(strike, spot)
        with np.errstate(divide="ignore", invalid="ignore"):
            g = self.discount_factor(t, t_end) * k / s**2 * tab.density(x)
        return np.where((s > 0) & (k > 0), g, 0.0)

    def dstrike_put(self, t, strike, spot, t_end=None):
        tab = self.table(t, t_end)
        _, _, x = self._log_moneyness(strike, spot)
        return self.discount_factor(t, t_end) * tab.F(x)

    def d2strike_put(self, t, strike, spot, t_end=None):
        tab = self.table(t, t_end)
        k, _, x = self._log_moneyness(strike, spot)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(k > 0, self.discount_factor(t, t_end) * tab.density(x) / k, 0.0)

    def return_variance(self, t):
        """Variance of the gross return R over period t."""
        tab = self.table(t)
        e2 = _simpson(np.exp(2 * tab.xi) * tab.q, tab.xi)
        return e2 - tab.mean_return**2
