"""Backward recursion of the guarantee value for one-factor Markov models.

Only vanilla put prices as functions of the spot are required. The value at
T_t depends on the spot S_t and on zeta_{t-1} = X_{t-1} / S_{t-1}. Surfaces
are stored in the pre-withdrawal fund coordinate u = zeta_{t-1} S_t, which
pins the kink of V_t at u = w for every zeta:

    u <= w :  V_t = (N - t + 1) w - u
    u >  w :  V_t = int P_t(k | S_t) d^2/dk^2 V_{t+1}(k | zeta_t) dk,
              zeta_t = zeta_{t-1} - w / S_t.

The integral runs over k >= w / zeta_t and is truncated at the top of the
grid, where the boundary terms of the partial integration are kept.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .contract import GuaranteeSpec
from .errors import BoundaryConditionError, ValidationError
from .weights import simpson_weights

_ROW_BLOCK = 128


@dataclass(eq=False)
class ValueSurface:
    """V_t sampled on u = zeta_{t-1} S_t (columns) for each zeta_{t-1} (rows)."""

    period: int
    u: np.ndarray
    zeta: np.ndarray
    values: np.ndarray
    withdrawal: float
    n_periods: int
    report: dict = field(default_factory=dict)

    @property
    def step(self):
        return self.u[1] - self.u[0]

    @property
    def kink_index(self):
        return int(round(self.withdrawal / self.step))

    def row(self, zeta):
        """Values at one zeta by linear interpolation between rows."""
        if len(self.zeta) == 1:
            return self.values[0]
        z = np.clip(zeta, self.zeta[0], self.zeta[-1])
        i = int(np.clip(np.searchsorted(self.zeta, z) - 1, 0, len(self.zeta) - 2))
        frac = (z - self.zeta[i]) / (self.zeta[i + 1] - self.zeta[i])
        return (1 - frac) * self.values[i] + frac * self.values[i + 1]

    def spot_slice(self, zeta):
        """(S grid, V(S | zeta), dV/dS, d2V/dS2) for one zeta_{t-1}."""
        vals = self.row(zeta)
        d1 = np.gradient(vals, self.step)
        return self.u / zeta, vals, zeta * d1, zeta**2 * second_derivative(vals, self.step, self.kink_index)

    def value(self, spot, zeta):
        return float(np.interp(zeta * spot, self.u, self.row(zeta)))


def second_derivative(values, h, kink):
    """d2/du2 on a uniform grid: zero left of the kink, one-sided at the edges."""
    v = np.asarray(values, dtype=float)
    out = np.zeros_like(v)
    out[kink + 1:-1] = (v[kink + 2:] - 2 * v[kink + 1:-1] + v[kink:-2]) / h**2
    out[kink] = (2 * v[kink] - 5 * v[kink + 1] + 4 * v[kink + 2] - v[kink + 3]) / h**2
    out[-1] = (2 * v[-1] - 5 * v[-2] + 4 * v[-3] - v[-4]) / h**2
    return out


def _end_slope(v, h):
    return (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * h)


def _interp_rows(zeta_grid, rows, z):
    """Rows of ``rows`` (per zeta node) linearly interpolated at each z."""
    if len(zeta_grid) == 1:
        return np.broadcast_to(rows[0], (len(z), rows.shape[1]))
    zc = np.clip(z, zeta_grid[0], zeta_grid[-1])
    i = np.clip(np.searchsorted(zeta_grid, zc) - 1, 0, len(zeta_grid) - 2)
    frac = ((zc - zeta_grid[i]) / (zeta_grid[i + 1] - zeta_grid[i]))[:, None]
    return (1 - frac) * rows[i] + frac * rows[i + 1]


def _interp_values(zeta_grid, vals, z):
    if len(zeta_grid) == 1:
        return np.full(len(z), vals[0])
    return np.interp(np.clip(z, zeta_grid[0], zeta_grid[-1]), zeta_grid, vals)


def _expectation(model, t, nxt: ValueSurface, zeta_next, spot):
    """E_t[V_{t+1}] for pairs (zeta_t, S_t) given the next surface."""
    u, h, kw = nxt.u, nxt.step, nxt.kink_index
    d2 = np.array([second_derivative(r, h, kw) for r in nxt.values])
    v_top = nxt.values[:, -1]
    slope_top = np.array([_end_slope(r, h) for r in nxt.values])
    nodes = u[kw:]
    quad = simpson_weights(nodes)
    out = np.empty(len(zeta_next))
    for start in range(0, len(out), _ROW_BLOCK):
        z = zeta_next[start:start + _ROW_BLOCK]
        s = spot[start:start + _ROW_BLOCK]
        curv = _interp_rows(nxt.zeta, d2, z)[:, kw:]
        strikes = nodes[None, :] / z[:, None]
        puts = model.put(t, strikes, s[:, None])
        body = (puts * curv) @ quad * z
        k_top = u[-1] / z
        edge = (_interp_values(nxt.zeta, v_top, z) * model.dstrike_put(t, k_top, s)
                - z * _interp_values(nxt.zeta, slope_top, z) * model.put(t, k_top, s))
        out[start:start + len(z)] = body + edge
    return out


def _terminal_surface(model, u, zeta, w, n):
    t = n - 1
    vals = np.empty((len(zeta), len(u)))
    alive = u > w
    for i, z in enumerate(zeta):
        vals[i] = 2 * w - u
        ua = u[alive]
        z_next = z * (ua - w) / ua
        vals[i, alive] = z_next * model.put(t, w / z_next, ua / z)
    return ValueSurface(t, u, zeta, vals, w, n)


def _step_surface(model, t, nxt, u, zeta, w, n):
    vals = np.empty((len(zeta), len(u)))
    alive = u > w
    ua = u[alive]
    for i, z in enumerate(zeta):
        vals[i] = (n - t + 1) * w - u
        vals[i, alive] = _expectation(model, t, nxt, z * (ua - w) / ua, ua / z)
    return ValueSurface(t, u, zeta, vals, w, n)


def verify_boundary_conditions(surface: ValueSurface, zeta, raise_on_fail=True):
    """Check the boundary and smoothness conditions of V_t(. | zeta).

    V(0) = (N - t + 1) w and V'(0) = -zeta; V and V' continuous at
    S = w / zeta (right-hand limits extrapolated from the smooth branch);
    V(S_max) and S_max V'(S_max) negligible against w.
    """
    w, n, t = surface.withdrawal, surface.n_periods, surface.period
    h, kw = surface.step, surface.kink_index
    vals = surface.row(zeta)
    # cubic through the first four nodes strictly right of the kink, evaluated at u = w
    fit = np.polynomial.Polynomial.fit(np.arange(1, 5), vals[kw + 1:kw + 5], 3)
    v_right = fit(0.0)
    slope_right = fit.deriv()(0.0) / h
    checks = {
        "value_at_zero": (abs(vals[0] - (n - t + 1) * w), 1e-6 * w),
        "slope_at_zero": (abs(zeta * (vals[1] - vals[0]) / h + zeta), 1e-8 * zeta),
        "value_continuity": (abs(v_right - (n - t) * w), 1e-6 * w),
        "slope_continuity": (abs(zeta * slope_right + zeta), 1e-3 * zeta),
        "value_at_top": (abs(vals[-1]), 1e-4 * w),
        "decay_at_top": (abs(surface.u[-1] * _end_slope(vals, h)), 1e-4 * w),
    }
    report = {k: {"error": float(e), "tolerance": float(tol), "passed": bool(e <= tol)}
              for k, (e, tol) in checks.items()}
    failed = [k for k, r in report.items() if not r["passed"]]
    if failed and raise_on_fail:
        raise BoundaryConditionError(f"boundary conditions violated at T_{t}: {', '.join(failed)}", t, report)
    return report


@dataclass
class MarkovResult:
    value: float
    surfaces: list
    history: list
    reports: dict


def _u_grid(w, u_max, per_w):
    h = w / per_w
    n_right = int(math.ceil((u_max - w) / h))
    n_right += n_right % 2  # odd node count on [w, u_max] for Simpson
    return np.arange(per_w + n_right + 1) * h


def _solve(model, spec, per_w, u_max, zeta, verify):
    n, w, x0 = spec.n_periods, spec.withdrawal, spec.initial_capital
    u = _u_grid(w, u_max, per_w)
    surface = _terminal_surface(model, u, zeta, w, n)
    surfaces = [surface]
    reports = {}
    for t in range(n - 1, 0, -1):
        if t < n - 1:
            surface = _step_surface(model, t, surfaces[-1], u, zeta, w, n)
            surfaces.append(surface)
        reports[t] = verify_boundary_conditions(surface, zeta[-1], raise_on_fail=verify)
        surface.report = reports[t]
    if n == 1:
        value = float(model.put(0, w, x0))
    else:
        value = float(_expectation(model, 0, surfaces[-1], np.array([x0]), np.array([1.0]))[0])
    return value, surfaces[::-1], reports


def backward_markov_value(model, spec: GuaranteeSpec, per_w=5, u_max=None, n_zeta=9,
                          zeta_floor=1e-3, rtol=1e-3, max_levels=4, verify=True):
    """Guarantee value V_0 from value surfaces, refined by halving the u-step.

    The zeta grid is geometric on [zeta_floor X_0, X_0]; smaller zeta_t are
    clamped to the lowest row. Refinement stops once V_0 moves by less than
    ``rtol`` relative.
    """
    if not getattr(model, "satisfies_A1", False):
        raise ValidationError("model", "surface recursion needs a one-factor Markov model")
    if spec.rollup_rate is not None:
        raise ValidationError("spec", "surface recursion covers the plain guarantee only")
    x0, w, n = spec.initial_capital, spec.withdrawal, spec.n_periods
    if u_max is None:
        u_max = 20.0 * max(x0, n * w)
    if u_max <= 4 * w:
        raise ValidationError("u_max", "grid must extend well beyond the withdrawal amount")
    zeta = np.geomspace(zeta_floor * x0, x0, n_zeta) if n_zeta > 1 else np.array([x0])
    history = []
    for level in range(max_levels):
        value, surfaces, reports = _solve(model, spec, per_w * 2**level, u_max, zeta, False)
        history.append(value)
        if level and abs(history[-1] - history[-2]) <= rtol * abs(history[-1]):
            break
    if verify:
        # coarse levels are allowed to miss; only the accepted surfaces must pass
        for surface in surfaces:
            verify_boundary_conditions(surface, zeta[-1], raise_on_fail=True)
    return MarkovResult(value, surfaces, history, reports)
