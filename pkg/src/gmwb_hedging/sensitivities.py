"""Forward vega and volga of the guarantee under Black-Scholes.

The volatility of period s enters V_0 only through the kernel Gamma_s that
produces g_{s-1}. Differentiating that kernel once or twice in the
volatility and propagating the result through the remaining (linear)
recursion steps gives the forward vega and volga of V_0.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .contract import GuaranteeSpec
from .errors import ValidationError
from .models.black_scholes import BlackScholesModel
from .weights import WeightCurve, _kernel_apply, value_from_weights, weight_curves

FD_BUMP = 1e-3


def _per_period_model(model, n):
    if not isinstance(model, BlackScholesModel):
        raise ValidationError("model", "forward vega/volga are defined for the Black-Scholes model only")
    return BlackScholesModel([model.vol(u) for u in range(n)], model.dt, model.rate, n)


def _safe_kernel(fn):
    def kernel(t, strike, spot):
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            return np.nan_to_num(fn(t, strike, spot), nan=0.0, posinf=0.0, neginf=0.0)
    return kernel


def _propagate(model, curves, target, kernel):
    """Derivative of g_0 when the kernel of period ``target`` is replaced."""
    w = curves[0].grid[0]
    src = curves[target]
    grid = curves[target - 1].grid
    dens = _kernel_apply(model, target, src, grid - w, kernel=_safe_kernel(kernel))
    dens[0] = 0.0
    for t in range(target - 2, -1, -1):
        src = WeightCurve(t + 1, grid, dens)
        grid = curves[t].grid
        dens = _kernel_apply(model, t + 1, src, grid - w)
        dens[0] = 0.0
    return WeightCurve(0, grid, dens)


def forward_vega_volga(model, spec: GuaranteeSpec, target, method="analytic", bump=FD_BUMP, curves=None):
    """(vega, volga) of V_0 in the volatility of period ``target``.

    ``method="analytic"`` differentiates the gamma kernel; ``"fd"`` bumps the
    volatility by +-``bump`` and revalues on frozen strike grids.
    """
    n = spec.n_periods
    if not 1 <= target <= n - 1:
        raise ValidationError("target", f"forward period must lie in [1, {n - 1}]")
    model = _per_period_model(model, n)
    w, x0 = spec.withdrawal, spec.initial_capital
    if curves is None:
        curves = weight_curves(model, w, n)
    if method == "analytic":
        vega = value_from_weights(model, _propagate(model, curves, target, model.gamma_dvol), x0)
        volga = value_from_weights(model, _propagate(model, curves, target, model.gamma_d2vol), x0)
        return vega, volga
    if method == "fd":
        grids = {c.period: c.grid for c in curves if c.grid.size}
        sig = model.vol(target)

        def value(vol):
            bumped = model.with_vol(target, vol)
            g0 = weight_curves(bumped, w, n, grids=grids, check=False)[0]
            return value_from_weights(bumped, g0, x0)

        v0, up, dn = value(sig), value(sig + bump), value(sig - bump)
        return (up - dn) / (2 * bump), (up - 2 * v0 + dn) / bump**2
    raise ValidationError("method", f"unknown method {method!r}")


@dataclass
class VolgaReport:
    moneyness: float
    vols: list
    vega: list = field(default_factory=list)
    volga: list = field(default_factory=list)

    @property
    def vega_total(self):
        return float(sum(self.vega))

    @property
    def volga_total(self):
        return float(sum(self.volga))

    @property
    def net_volga(self):
        """Residual volga after hedging each forward vega with a variance swap."""
        return float(sum(v / s - g for v, s, g in zip(self.vega, self.vols, self.volga)))

    def row(self):
        return [self.moneyness, self.vega_total, self.volga_total, self.net_volga]


def net_volga_after_varswap_hedge(model, spec: GuaranteeSpec, method="analytic"):
    """Forward vega/volga per period 1..N-1 and the net volga."""
    n = spec.n_periods
    model = _per_period_model(model, n)
    curves = weight_curves(model, spec.withdrawal, n)
    report = VolgaReport(spec.moneyness, [model.vol(s) for s in range(1, n)])
    for s in range(1, n):
        vega, volga = forward_vega_volga(model, spec, s, method, curves=curves)
        report.vega.append(vega)
        report.volga.append(volga)
    return report


def reports_to_csv(reports, path_or_buffer=None):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["moneyness", "vega_total", "volga_total", "net_volga"])
    for r in reports:
        writer.writerow([repr(float(x)) for x in r.row()])
    text = buf.getvalue()
    if path_or_buffer is not None:
        if hasattr(path_or_buffer, "write"):
            path_or_buffer.write(text)
        else:
            with open(path_or_buffer, "w", newline="") as fh:
                fh.write(text)
    return text
