"""Semi-static hedge of the withdrawal guarantee with a roll-up (ratchet).

In units of the current withdrawal level the value before the next return is

    V_t(1, x) = a_t [1 + C_t(1 + A_{t+1} | x) / A_{t+1}]
              + b_t P_t(1 + A_{t+1} | x)
              + int_1^{1 + A_{t+1}} P_t(k | x) g_t(k) dk,

with a_t = V_{t+1}(1, A_{t+1}), b_t = -d/dx V_{t+1}(1, A_{t+1}) and
g_t(k) = d^2/dx^2 V_{t+1}(1, k - 1). Here b_t is the quantity of the put
struck at the roll-up point, so the hedge is long b_t puts.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .contract import GuaranteeSpec, guarantee_base
from .errors import ToleranceError, ValidationError
from .montecarlo import PricingResult
from .weights import WeightCurve, _kernel_apply, _tail_mass

DEFAULT_POINTS = 1001
TAIL_TARGET = 1e-10
NEGATIVE_TOL = 1e-10


def rollup_withdrawal_update(w_prev, fund_value, base):
    """w_t = max(w_{t-1}, X_t / A_t); an infinite base never ratchets."""
    if not w_prev > 0:
        raise ValidationError("w_prev", "must be positive")
    if math.isinf(base):
        return float(w_prev)
    return max(float(w_prev), fund_value / base)


@dataclass(eq=False)
class RollupCoefficients:
    period: int
    alpha: float
    beta: float
    weight: WeightCurve
    base_next: float  # A_{t+1}
    diagnostics: dict = field(default_factory=dict)

    @property
    def roll_strike(self):
        return 1.0 + self.base_next


def _unit_value(model, c: RollupCoefficients, x, order=0):
    """d^order/dx^order of V_t(1, x) from the representation."""
    t = c.period
    greek = {0: (model.call, model.put), 1: (model.call_delta, model.delta), 2: (model.gamma, model.gamma)}[order]
    call, put = greek
    x = np.asarray(x, dtype=float)
    val = np.zeros_like(x)
    if order == 0:
        val = val + c.alpha
    if math.isfinite(c.base_next) and (c.alpha or c.beta):
        val = val + c.alpha / c.base_next * call(t, c.roll_strike, x) + c.beta * put(t, c.roll_strike, x)
    strip = c.weight
    flat = np.atleast_1d(x)
    out = np.empty(flat.size)
    for i, xi in enumerate(flat):
        vals = put(t, strip.grid, xi) if strip.grid.size else np.zeros(0)
        atom_val = float(put(t, strip.atom[0], xi)) if strip.atom is not None else 0.0
        out[i] = strip.integrate(vals, atom_val)
    return val + out.reshape(x.shape)


def build_rollup_coefficients(model, spec: GuaranteeSpec, n_points=DEFAULT_POINTS):
    """Backward recursion for (a_t, b_t, g_t), t = N-1 down to 0."""
    if not getattr(model, "satisfies_A2", False):
        raise ValidationError("model", "roll-up hedge needs independent returns")
    n = spec.n_periods
    coeffs = [RollupCoefficients(n - 1, 0.0, 0.0, WeightCurve.point_mass(n - 1, 1.0), math.inf)]
    for t in range(n - 2, -1, -1):
        nxt = coeffs[-1]
        a_next = guarantee_base(t + 1, spec)
        x_roll = a_next
        alpha = float(_unit_value(model, nxt, x_roll, 0))
        beta = -float(_unit_value(model, nxt, x_roll, 1))
        jump = nxt.alpha / nxt.base_next + nxt.beta if math.isfinite(nxt.base_next) else 0.0
        src = nxt.weight
        if jump:
            extra = WeightCurve.point_mass(src.period, nxt.roll_strike, jump)
        # truncate where the kernel image of g_{t+1} (and the roll-point atom) has negligible mass
        cut = 1.0 + a_next
        tail = lambda c: _tail_mass(model, t + 1, src, c - 1.0) + (
            jump * float(-model.delta(t + 1, nxt.roll_strike, c - 1.0)) if jump else 0.0)
        cap = 2.0 * (src.upper + 1.0)
        while tail(cap) > TAIL_TARGET and cap < cut:
            cap *= 1.2
        upper = min(cut, cap)
        grid = np.linspace(1.0, upper, n_points)
        dens = _kernel_apply(model, t + 1, src, grid - 1.0)
        if jump:
            dens += _kernel_apply(model, t + 1, extra, grid - 1.0)
        dens[0] = 0.0
        if dens.min() < -NEGATIVE_TOL:
            raise ToleranceError(f"roll-up weight g_{t} negative: {dens.min():.3e}")
        curve = WeightCurve(t, grid, np.clip(dens, 0.0, None))
        diag = {"tail_mass": tail(upper) if upper < cut else 0.0, "truncated": upper < cut,
                "clipped_min": float(min(dens.min(), 0.0))}
        coeffs.append(RollupCoefficients(t, alpha, beta, curve, a_next, diag))
    return coeffs[::-1]


@dataclass
class HedgePortfolio:
    period: int
    positions: list  # (leg_type, strike or None, quantity)
    value: float

    def to_csv(self, path_or_buffer=None):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["leg_type", "strike", "quantity"])
        for leg, strike, qty in self.positions:
            writer.writerow([leg, "" if strike is None else repr(float(strike)), repr(float(qty))])
        text = buf.getvalue()
        if path_or_buffer is None:
            return text
        if hasattr(path_or_buffer, "write"):
            path_or_buffer.write(text)
        else:
            with open(path_or_buffer, "w", newline="") as fh:
                fh.write(text)
        return text


def rollup_value(model, coeffs, withdrawal_level, fund_value, t):
    """Value and hedge of V_t(w_t, X_t) for X_t > 0 at the current level w_t."""
    if not fund_value > 0:
        raise ValidationError("fund_value", "fund must not be depleted (X_t > 0)")
    if not withdrawal_level > 0:
        raise ValidationError("withdrawal_level", "must be positive")
    c = coeffs[t]
    w, x = float(withdrawal_level), float(fund_value)
    positions = []
    if math.isfinite(c.base_next):
        k_roll = w * c.roll_strike
        positions += [("cash", None, c.alpha * w),
                      ("call", k_roll, c.alpha / c.base_next),
                      ("put", k_roll, c.beta)]
    strip = c.weight
    for k, q in zip(strip.grid, strip.quad_weights * strip.density):
        if q > 0:
            positions.append(("put_strip_node", w * k, q))
    if strip.atom is not None:
        positions.append(("put_strip_node", w * strip.atom[0], strip.atom[1]))
    value = 0.0
    for leg, strike, qty in positions:
        if leg == "cash":
            value += qty
        elif leg == "call":
            value += qty * float(model.call(t, strike, x))
        else:
            value += qty * float(model.put(t, strike, x))
    return HedgePortfolio(t, positions, value)


def rollup_guarantee_value(model, spec: GuaranteeSpec, n_points=DEFAULT_POINTS):
    """V_0 of the roll-up guarantee with initial level w_0 = w."""
    coeffs = build_rollup_coefficients(model, spec, n_points)
    port = rollup_value(model, coeffs, spec.withdrawal, spec.initial_capital, 0)
    return PricingResult(port.value, None, None, None,
                         {"alpha": [c.alpha for c in coeffs], "beta": [c.beta for c in coeffs]})


def value_after_withdrawal(model, coeffs, spec, w_prev, fund_value, t):
    """V^R_t(w_{t-1}, X_t) including the ratchet at T_t and depletion cases."""
    n = spec.n_periods
    if fund_value <= 0:
        return (n - t) * w_prev - fund_value
    level = rollup_withdrawal_update(w_prev, fund_value, guarantee_base(t, spec))
    if t == n:
        return 0.0
    return rollup_value(model, coeffs, level, fund_value, t).value
