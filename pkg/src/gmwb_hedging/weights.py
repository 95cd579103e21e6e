"""Put-weight functions of the semi-static hedge and the guarantee value.

Under independent returns the hedge held over (T_t, T_{t+1}] is a strip of
puts with strikes k >= w weighted by g_t(k). The curves are built backwards:

    g_{N-1} = delta_w,
    g_t(k)  = int Gamma_{t+1}(k' | k - w) g_{t+1}(k') dk',

and the guarantee value at T_t is V_t = int g_t(k) P_t(k | X_t) dk.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from scipy.integrate import simpson
from scipy.interpolate import CubicSpline

from .errors import ToleranceError, ValidationError

DEFAULT_POINTS = 2001
MASS_TOL = 1e-6
MEAN_RTOL = 1e-4
TAIL_TOL = 1e-5
TAIL_TARGET = 1e-10
REFINE_TOL = 1e-7  # Simpson vs trapezoid mass gap that triggers grid doubling
MAX_REFINEMENTS = 4
_ROW_BLOCK = 256


def simpson_weights(grid):
    """Composite Simpson weights on a uniform grid with an odd number of nodes."""
    n = len(grid)
    if n < 3 or n % 2 == 0:
        raise ValueError("Simpson's rule needs an odd number (>= 3) of nodes")
    h = (grid[-1] - grid[0]) / (n - 1)
    wts = np.full(n, 2.0)
    wts[1::2] = 4.0
    wts[0] = wts[-1] = 1.0
    return wts * h / 3.0


@dataclass(eq=False)
class WeightCurve:
    """Density g_t over put strikes, optionally with a point mass.

    ``rule`` selects the quadrature over ``grid``: ``"simpson"`` for uniform
    odd grids, ``"midpoint"`` for histogram buckets whose centers are the grid.
    """

    period: int
    grid: np.ndarray
    density: np.ndarray
    atom: Optional[tuple] = None
    rule: str = "simpson"
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.density = np.asarray(self.density, dtype=float)
        if self.grid.shape != self.density.shape:
            raise ValidationError("density", "grid and density lengths differ")
        if self.grid.size and np.any(np.diff(self.grid) <= 0):
            raise ValidationError("grid", "strikes must be strictly increasing")
        if self.rule == "simpson" and self.grid.size:
            self.quad_weights = simpson_weights(self.grid)
        elif self.rule == "midpoint":
            if self.grid.size > 1:
                h = self.grid[1] - self.grid[0]
            else:
                h = self.diagnostics.get("bucket_width", 1.0)
            self.quad_weights = np.full(self.grid.size, h)
        elif not self.grid.size:
            self.quad_weights = np.zeros(0)
        else:
            raise ValidationError("rule", f"unknown quadrature rule {self.rule!r}")

    @classmethod
    def point_mass(cls, period, location, mass=1.0):
        return cls(period, np.zeros(0), np.zeros(0), atom=(float(location), float(mass)))

    def integrate(self, values, atom_value=0.0):
        """Quadrature of ``values`` (sampled on the grid) against the curve."""
        total = float(np.dot(self.quad_weights * self.density, values)) if self.grid.size else 0.0
        if self.atom is not None:
            total += self.atom[1] * atom_value
        return total

    def expect(self, func):
        """Integral of func(k) g(k) dk, atom included."""
        atom_value = func(np.array([self.atom[0]]))[0] if self.atom is not None else 0.0
        values = func(self.grid) if self.grid.size else np.zeros(0)
        return self.integrate(values, atom_value)

    @property
    def mass(self):
        return self.expect(np.ones_like)

    @property
    def mean(self):
        return self.expect(lambda k: k)

    @property
    def variance(self):
        m = self.mean / self.mass
        return self.expect(lambda k: (k - m) ** 2) / self.mass

    @property
    def upper(self):
        edges = [self.grid[-1]] if self.grid.size else []
        if self.atom is not None:
            edges.append(self.atom[0])
        return max(edges)

    def call_payoff(self, x):
        """int (k - x)^+ g(k) dk, exact against a cubic interpolant of g."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        if self.grid.size and self.rule == "simpson":
            if not hasattr(self, "_splines"):
                self._splines = (CubicSpline(self.grid, self.density),
                                 CubicSpline(self.grid, self.grid * self.density))
            g_sp, kg_sp = self._splines
            hi = self.grid[-1]
            lo = np.clip(x, self.grid[0], hi)
            flat_lo, flat_x = np.ravel(lo), np.ravel(x)
            vals = np.array([kg_sp.integrate(a, hi) - xi * g_sp.integrate(a, hi)
                             for a, xi in zip(flat_lo, flat_x)])
            out = out + vals.reshape(x.shape)
        elif self.grid.size:
            k = self.grid[None, :]
            out = out + (np.maximum(k - np.atleast_1d(x)[:, None], 0.0) @ (self.quad_weights * self.density)).reshape(x.shape)
        if self.atom is not None:
            out = out + self.atom[1] * np.maximum(self.atom[0] - x, 0.0)
        return out

    def cdf(self, x):
        """Cumulative mass up to x (trapezoid between nodes, atom as a step)."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        if self.grid.size:
            if self.rule == "midpoint":
                h = self.quad_weights[0]
                cum = np.concatenate([[0.0], np.cumsum(self.density * h)])
                edges = np.concatenate([self.grid - h / 2, [self.grid[-1] + h / 2]])
            else:
                seg = 0.5 * (self.density[1:] + self.density[:-1]) * np.diff(self.grid)
                cum = np.concatenate([[0.0], np.cumsum(seg)])
                edges = self.grid
            out = out + np.interp(x, edges, cum, left=0.0, right=cum[-1])
        if self.atom is not None:
            out = out + self.atom[1] * (x >= self.atom[0])
        return out

    def to_csv(self, path_or_buffer=None):
        buf = io.StringIO()
        buf.write(f"# period,{self.period}\n")
        if self.atom is not None:
            buf.write(f"# atom,{self.atom[0]!r},{self.atom[1]!r}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["strike", "weight"])
        for k, g in zip(self.grid, self.density):
            writer.writerow([repr(float(k)), repr(float(g))])
        text = buf.getvalue()
        if path_or_buffer is None:
            return text
        if hasattr(path_or_buffer, "write"):
            path_or_buffer.write(text)
        else:
            with open(path_or_buffer, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path_or_buffer, rule="simpson"):
        if hasattr(path_or_buffer, "read"):
            lines = path_or_buffer.read().splitlines()
        else:
            with open(path_or_buffer) as fh:
                lines = fh.read().splitlines()
        period, atom, rows = 0, None, []
        for line in lines:
            if line.startswith("#"):
                parts = [p.strip() for p in line[1:].split(",")]
                if parts[0] == "atom":
                    atom = (float(parts[1]), float(parts[2]))
                elif parts[0] == "period":
                    period = int(parts[1])
            elif line and not line.startswith("strike"):
                k, g = line.split(",")
                rows.append((float(k), float(g)))
        grid = np.array([r[0] for r in rows])
        dens = np.array([r[1] for r in rows])
        return cls(period, grid, dens, atom=atom, rule=rule)


def _require_levy(model):
    if not getattr(model, "satisfies_A2", False):
        raise ValidationError("model", "weight recursion needs independent returns (positive-homogeneous option prices)")


def _inverse_return_moment(model, t):
    """E[1/R] over period t, the second moment of the adjoint return."""
    tab = model.table(t)
    return float(simpson(np.exp(-tab.xi) * tab.q, x=tab.xi))


def default_grid(model, w, source, n_points=DEFAULT_POINTS):
    """Uniform strike grid for the curve one step before ``source``.

    Starts from [w, w + mean + 10 std] and widens the upper end until the
    truncated tail mass is below TAIL_TARGET.
    """
    kernel_period = source.period
    inv = _inverse_return_moment(model, kernel_period)
    prev_mean = source.mean
    mean = w + prev_mean
    second = w * w + 2 * w * prev_mean + source.expect(lambda k: k * k) * inv
    std = math.sqrt(max(second - mean * mean, 0.0))
    cut = mean + 10.0 * std
    for _ in range(200):
        if _tail_mass(model, kernel_period, source, cut) < TAIL_TARGET:
            break
        cut *= 1.2
    return np.linspace(w, w + cut, n_points)


def _kernel_apply(model, kernel_period, source, spots, kernel=None):
    """int Gamma(k' | s) g(k') dk' for each spot s (atom included).

    ``kernel(t, strike, spot)`` replaces the model gamma, e.g. by its
    volatility derivative.
    """
    kernel = kernel or model.gamma
    out = np.zeros(spots.size)
    has_grid = source.grid.size > 0
    if has_grid:
        weighted = source.quad_weights * source.density
        strikes = source.grid[None, :]
    for start in range(0, spots.size, _ROW_BLOCK):
        s = spots[start:start + _ROW_BLOCK]
        if has_grid:
            out[start:start + s.size] = kernel(kernel_period, strikes, s[:, None]) @ weighted
        if source.atom is not None:
            loc, mass = source.atom
            out[start:start + s.size] += mass * kernel(kernel_period, loc, s)
    return out


def _tail_mass(model, kernel_period, source, cut):
    """Mass of the next curve beyond strike w + cut, from put deltas."""
    tail = 0.0
    if source.grid.size:
        tail += source.integrate(-model.delta(kernel_period, source.grid, cut))
    if source.atom is not None:
        tail += source.atom[1] * float(-model.delta(kernel_period, source.atom[0], cut))
    return tail


def _check_curve(curve, n_periods, w, check, strict, model):
    expected_mean = (n_periods - curve.period) * w
    mass, mean = curve.mass, curve.mean
    curve.diagnostics.update(mass_error=mass - 1.0, mean_error=mean - expected_mean,
                             expected_mean=expected_mean)
    if strict and mass > 0:
        curve.density = curve.density / mass
        curve.diagnostics["renormalized_by"] = mass
        mass, mean = curve.mass, curve.mean
    if not check or model.rate != 0.0:
        return curve
    if abs(mass - 1.0) > MASS_TOL:
        raise ToleranceError(f"g_{curve.period}: mass {mass:.10f} deviates from 1 by more than {MASS_TOL}")
    if abs(mean - expected_mean) > MEAN_RTOL * expected_mean:
        raise ToleranceError(f"g_{curve.period}: mean {mean:.8f} deviates from {expected_mean} beyond {MEAN_RTOL} relative")
    if curve.diagnostics.get("tail_mass", 0.0) > TAIL_TOL:
        raise ToleranceError(f"g_{curve.period}: grid truncation leaves tail mass {curve.diagnostics['tail_mass']:.2e}")
    return curve


def terminal_weight(model, w, n_periods, grid=None, n_points=DEFAULT_POINTS, check=True, strict=False):
    """g_{N-2}(k) = Gamma_{N-1}(w | k - w), the two-period weight function."""
    if n_periods < 2:
        raise ValidationError("n_periods", "terminal weight needs at least two periods")
    return recurse_weight(model, WeightCurve.point_mass(n_periods - 1, w), w, n_periods,
                          grid=grid, n_points=n_points, check=check, strict=strict)


def recurse_weight(model, g_next, w, n_periods, grid=None, n_points=DEFAULT_POINTS, check=True, strict=False):
    """One backward step g_{t+1} -> g_t."""
    _require_levy(model)
    t = g_next.period - 1
    if t < 0:
        raise ValidationError("g_next", "cannot step before period 0")
    kernel_period = g_next.period
    adaptive = grid is None
    for level in range(MAX_REFINEMENTS + 1 if adaptive else 1):
        if adaptive:
            grid = default_grid(model, w, g_next, (n_points - 1) * 2**level + 1)
        grid = np.asarray(grid, dtype=float)
        if grid[0] < w:
            raise ValidationError("grid", "strike grid must start at or above w")
        dens = _kernel_apply(model, kernel_period, g_next, grid - w)
        if grid[0] == w:
            dens[0] = 0.0
        curve = WeightCurve(t, grid, np.clip(dens, 0.0, None))
        # a cusp in the kernel (variance gamma over short periods) shows up as a Simpson/trapezoid gap
        gap = abs(curve.mass - np.trapezoid(curve.density, grid))
        if gap <= REFINE_TOL:
            break
    curve.diagnostics.update(n_points=grid.size, quadrature_gap=gap)
    curve.diagnostics["tail_mass"] = _tail_mass(model, kernel_period, g_next, grid[-1] - w)
    return _check_curve(curve, n_periods, w, check, strict, model)


def weight_curves(model, w, n_periods, grids=None, n_points=DEFAULT_POINTS, check=True, strict=False):
    """All weight curves [g_0, ..., g_{N-1}] with g_{N-1} the atom at w.

    ``grids`` maps period -> strike grid to reuse a fixed discretization,
    e.g. across volatility bumps.
    """
    _require_levy(model)
    grids = grids or {}
    curves = [WeightCurve.point_mass(n_periods - 1, w)]
    for t in range(n_periods - 2, -1, -1):
        curves.append(recurse_weight(model, curves[-1], w, n_periods, grid=grids.get(t),
                                     n_points=n_points, check=check, strict=strict))
    return curves[::-1]


def value_from_weights(model, curve, fund_value):
    """V_t = int g_t(k) P_t(k | X_t) dk for one or several fund values X_t > 0."""
    x = np.asarray(fund_value, dtype=float)
    if np.any(x <= 0):
        raise ValidationError("fund_value", "fund must not be depleted (X_t > 0)")
    t = curve.period
    flat = np.atleast_1d(x)
    out = np.empty(flat.size)
    for i, xi in enumerate(flat):
        puts = model.put(t, curve.grid, xi) if curve.grid.size else np.zeros(0)
        atom_put = float(model.put(t, curve.atom[0], xi)) if curve.atom is not None else 0.0
        out[i] = curve.integrate(puts, atom_put)
    return out.reshape(x.shape) if x.ndim else float(out[0])


def expired_portfolio_value(curve, zeta_prev, spot):
    """Payout at T_t of the put strip bought at T_{t-1}: int g (k - zeta S_t)^+ dk."""
    x = zeta_prev * np.asarray(spot, dtype=float)
    out = curve.call_payoff(x)
    return out if x.ndim else float(out)


def hedge_positions(curve, fund_value):
    """Put strip of the hedge: rows (strike, quantity) for the quadrature nodes."""
    rows = [(float(k), float(q)) for k, q in zip(curve.grid, curve.quad_weights * curve.density) if q > 0]
    if curve.atom is not None:
        rows.append((curve.atom[0], curve.atom[1]))
    return rows


def replication_residuals(model, curves, t, fund_values_pre, w):
    """Expired-ladder payout minus (claim + cost of the next ladder) at T_t.

    ``fund_values_pre`` are the pre-withdrawal fund values zeta_{t-1} S_t.
    """
    n = len(curves)
    held = curves[t - 1]
    x_pre = np.asarray(fund_values_pre, dtype=float)
    lhs = expired_portfolio_value(held, 1.0, x_pre)
    x_t = x_pre - w
    rhs = np.maximum(-x_t, 0.0)
    if t < n:
        alive = x_t > 0
        rhs = rhs + np.where(alive, 0.0, (n - t) * w)
        if np.any(alive):
            rhs[alive] += value_from_weights(model, curves[t], x_t[alive])
    return lhs - rhs
