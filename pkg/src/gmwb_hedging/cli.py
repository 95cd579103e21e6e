"""Command-line front end driven by an INI run configuration.

Example configuration::

    [model]
    kind = black_scholes
    vol = 0.3

    [guarantee]
    n_periods = 5
    withdrawal = 10
    moneyness = 1.0

    [numerics]
    mc_paths = 100000
    seed = 7

Exit codes: 0 success, 1 invalid input, 2 numerical tolerance breached.
"""
from __future__ import annotations

import argparse
import configparser
import itertools
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .adjoint import adjoint_density_error, build_adjoint, gamma_kernel_checks, guarantee_value_via_adjoint
from .contract import GuaranteeSpec, Schedule
from .errors import BoundaryConditionError, ToleranceError, ValidationError
from .markov import backward_markov_value
from .models import BlackScholesModel, VarianceGammaModel
from .montecarlo import MCConfig, PricingResult, mc_guarantee_value
from .rollup import HedgePortfolio, build_rollup_coefficients, rollup_guarantee_value, rollup_value
from .sensitivities import net_volga_after_varswap_hedge, reports_to_csv
from .weights import hedge_positions, replication_residuals, value_from_weights, weight_curves

EXIT_OK, EXIT_VALIDATION, EXIT_TOLERANCE = 0, 1, 2


def _floats(text):
    return [float(x) for x in str(text).replace(";", ",").split(",") if x.strip()]


@dataclass
class RunConfig:
    model: object
    spec: GuaranteeSpec
    mc: MCConfig
    weight_points: int
    markov_per_w: int
    markov_zeta: int
    moneyness_list: list
    maturities: list
    out: Path

    @classmethod
    def load(cls, path, out=None, seed=None):
        parser = configparser.ConfigParser()
        if path is not None:
            if not Path(path).is_file():
                raise ValidationError("config", f"file not found: {path}")
            parser.read(path)
        for section in ("model", "guarantee", "numerics", "output"):
            if not parser.has_section(section):
                parser.add_section(section)
        g, num = parser["guarantee"], parser["numerics"]
        n = g.getint("n_periods", 5)
        dt = g.getfloat("dt", 1.0)
        model = _model_from(parser["model"], dt, n)
        w = g.getfloat("withdrawal", 10.0)
        rollup = g.getfloat("rollup_rate") if "rollup_rate" in g else None
        if "initial_capital" in g:
            spec = GuaranteeSpec(Schedule(n, dt, w), g.getfloat("initial_capital"), rollup)
        else:
            moneyness = g.getfloat("moneyness", 1.0)
            if not moneyness > 0:
                raise ValidationError("moneyness", "must be positive")
            spec = GuaranteeSpec.from_moneyness(moneyness, n, w, dt, rollup)
        mc = MCConfig(num.getint("mc_paths", 100_000),
                      seed if seed is not None else num.getint("seed", 0),
                      num.getboolean("antithetic", True))
        return cls(
            model, spec, mc,
            num.getint("weight_points", 2001),
            num.getint("markov_per_w", 5),
            num.getint("markov_zeta", 3),
            _floats(num.get("moneyness_list", "0.6,0.8,1.0,1.2,1.4")),
            [int(x) for x in _floats(num.get("maturities", str(n)))],
            Path(out or parser["output"].get("directory", "out")),
        )


def _model_from(section, dt, n):
    kind = section.get("kind", "black_scholes")
    rate = section.getfloat("rate", 0.0)
    if kind == "black_scholes":
        vols = _floats(section.get("vol", "0.3"))
        return BlackScholesModel(vols[0] if len(vols) == 1 else vols, dt, rate, n)
    if kind == "variance_gamma":
        for key in ("sigma", "nu", "theta"):
            if key not in section:
                raise ValidationError(key, "variance-gamma parameters must be given explicitly")
        return VarianceGammaModel(section.getfloat("sigma"), section.getfloat("nu"),
                                  section.getfloat("theta"), dt, rate, n)
    raise ValidationError("kind", f"unknown model kind {kind!r}")


def _write(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _price(cfg: RunConfig, pipeline):
    m, spec = cfg.model, cfg.spec
    if pipeline == "weights":
        if spec.rollup_rate is not None:
            return rollup_guarantee_value(m, spec)
        g0 = weight_curves(m, spec.withdrawal, spec.n_periods, n_points=cfg.weight_points)[0]
        return PricingResult(value_from_weights(m, g0, spec.initial_capital),
                             breakdown={"weight_mass": g0.mass, "weight_mean": g0.mean})
    if spec.rollup_rate is not None:
        raise ValidationError("pipeline", f"pipeline {pipeline!r} covers the plain guarantee only")
    if pipeline == "adjoint":
        return guarantee_value_via_adjoint(m, spec, cfg.mc)
    if pipeline == "markov":
        res = backward_markov_value(m, spec, per_w=cfg.markov_per_w, n_zeta=cfg.markov_zeta)
        return PricingResult(res.value, breakdown={"refinement_history": res.history})
    raise ValidationError("pipeline", f"unknown pipeline {pipeline!r}")


def cmd_price(cfg, pipeline):
    names = ["weights", "adjoint", "markov"] if pipeline == "all" else [pipeline]
    results = {}
    for name in names:
        res = _price(cfg, name)
        res.breakdown["pipeline"] = name
        results[name] = res
        _write(cfg.out / f"price_{name}.json", res.to_json() + "\n")
    if pipeline == "all":
        vals = [r.value for r in results.values()]
        gap = max(abs(a - b) / max(abs(a), abs(b)) for a, b in itertools.combinations(vals, 2))
        summary = {"values": {k: r.value for k, r in results.items()}, "max_pairwise_relative_difference": gap}
        _write(cfg.out / "price_all.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_weights(cfg):
    spec = cfg.spec
    for c in weight_curves(cfg.model, spec.withdrawal, spec.n_periods, n_points=cfg.weight_points):
        _write(cfg.out / f"weights_t{c.period}.csv", c.to_csv())
    return EXIT_OK


def cmd_hedge(cfg, period):
    spec, m = cfg.spec, cfg.model
    if not 0 <= period < spec.n_periods:
        raise ValidationError("period", f"must lie in [0, {spec.n_periods - 1}]")
    if spec.rollup_rate is not None:
        coeffs = build_rollup_coefficients(m, spec)
        port = rollup_value(m, coeffs, spec.withdrawal, spec.initial_capital, period)
    else:
        curve = weight_curves(m, spec.withdrawal, spec.n_periods, n_points=cfg.weight_points)[period]
        rows = hedge_positions(curve, spec.initial_capital)
        port = HedgePortfolio(period, [("put_strip_node", k, q) for k, q in rows], 0.0)
    _write(cfg.out / f"hedge_t{period}.csv", port.to_csv())
    return EXIT_OK


def cmd_sensitivities(cfg):
    spec = cfg.spec
    reports = [net_volga_after_varswap_hedge(
        cfg.model, GuaranteeSpec.from_moneyness(mn, spec.n_periods, spec.withdrawal, spec.schedule.dt))
        for mn in cfg.moneyness_list]
    _write(cfg.out / "sensitivities.csv", reports_to_csv(reports))
    return EXIT_OK


def cmd_verify(cfg):
    """Run the invariant suites on the configured model and contract."""
    m, spec = cfg.model, cfg.spec
    n, w = spec.n_periods, spec.withdrawal
    plain = GuaranteeSpec(spec.schedule, spec.initial_capital)
    checks, details = {}, {}
    curves = weight_curves(m, w, n, n_points=cfg.weight_points, check=False)
    if m.rate == 0.0:
        checks["weight_mass"] = max(abs(c.mass - 1.0) for c in curves) <= 1e-6
        checks["weight_mean"] = all(abs(c.mean - (n - c.period) * w) <= 1e-4 * (n - c.period) * w for c in curves)
    grid = np.linspace(0.05 * w, 6.0 * n * w, 50)
    worst = max(float(np.max(np.abs(replication_residuals(m, curves, t, grid, w)))) for t in range(1, n + 1))
    checks["replication"] = worst <= 1e-4 * w
    details["replication_max_residual"] = worst
    if n >= 2:
        checks["gamma_kernels"] = gamma_kernel_checks(m)["passed"]
    adj = build_adjoint(m, n)  # raises on a non-normalized or non-martingale adjoint density
    if isinstance(m, BlackScholesModel) and m.constant_vol:
        checks["self_adjoint"] = adjoint_density_error(m, adj, 0) < 1e-8
    if n >= 2:
        try:
            backward_markov_value(m, plain, per_w=cfg.markov_per_w, n_zeta=cfg.markov_zeta)
            checks["boundary_conditions"] = True
        except BoundaryConditionError as exc:
            checks["boundary_conditions"] = False
            details["boundary_conditions"] = str(exc)
    v0 = value_from_weights(m, curves[0], spec.initial_capital)
    mc = mc_guarantee_value(m, plain, cfg.mc)
    checks["mc_oracle"] = abs(v0 - mc.value) <= 3 * mc.std_error
    details.update(weights_value=v0, mc_value=mc.value, mc_std_error=mc.std_error)
    if spec.rollup_rate is not None:
        coeffs = build_rollup_coefficients(m, spec)
        x = spec.initial_capital
        unit = rollup_value(m, coeffs, w, x, 0).value
        checks["rollup_homogeneity"] = abs(rollup_value(m, coeffs, 2 * w, 2 * x, 0).value - 2 * unit) <= 1e-9 * unit
        checks["rollup_terminal_put"] = rollup_value(m, coeffs, w, x, n - 1).value == float(m.put(n - 1, w, x))
    checks = {k: bool(v) for k, v in checks.items()}
    report = {"checks": checks, **details}
    _write(cfg.out / "verify.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    for name, ok in checks.items():
        print(f"{name}: {'pass' if ok else 'FAIL'}")
    return EXIT_OK if all(checks.values()) else EXIT_TOLERANCE


def cmd_compare_mc(cfg):
    """Static-hedge value against direct simulation per (maturity, moneyness)."""
    spec, m = cfg.spec, cfg.model
    rows = ["n_periods,moneyness,static_value,mc_value,mc_std_error,within_tolerance"]
    ok_all = True
    for n in cfg.maturities:
        model = _model_like(m, n)
        curves = weight_curves(model, spec.withdrawal, n, n_points=cfg.weight_points)
        for mn in cfg.moneyness_list:
            s = GuaranteeSpec.from_moneyness(mn, n, spec.withdrawal, spec.schedule.dt)
            static = value_from_weights(model, curves[0], s.initial_capital)
            mc = mc_guarantee_value(model, s, cfg.mc)
            ok = abs(static - mc.value) <= max(3 * mc.std_error, 5e-3 * abs(mc.value))
            ok_all &= ok
            rows.append(f"{n},{mn!r},{static!r},{mc.value!r},{mc.std_error!r},{str(ok).lower()}")
    _write(cfg.out / "compare_mc.csv", "\n".join(rows) + "\n")
    return EXIT_OK if ok_all else EXIT_TOLERANCE


def _model_like(model, n):
    if isinstance(model, BlackScholesModel):
        vols = model.vols if isinstance(model.vols, float) else model.vols[:n]
        return BlackScholesModel(vols, model.dt, model.rate, n)
    return VarianceGammaModel(model.sigma, model.nu, model.theta, model.dt, model.rate, n)


def build_parser():
    parser = argparse.ArgumentParser(prog="gmwb-hedge", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run configuration")
    common.add_argument("--out", help="output directory (overrides [output] directory)")
    common.add_argument("--seed", type=int, help="Monte Carlo seed (overrides [numerics] seed)")
    sub = parser.add_subparsers(dest="command", required=True)
    price = sub.add_parser("price", parents=[common], help="guarantee value as JSON")
    price.add_argument("--pipeline", choices=["weights", "adjoint", "markov", "all"], default="weights")
    sub.add_parser("weights", parents=[common], help="weight curves as CSV")
    hedge = sub.add_parser("hedge", parents=[common], help="hedge portfolio at one roll date")
    hedge.add_argument("--period", type=int, default=0)
    sub.add_parser("sensitivities", parents=[common], help="forward vega/volga per moneyness")
    sub.add_parser("verify", parents=[common], help="run invariant checks")
    sub.add_parser("compare-mc", parents=[common], help="static hedge versus simulation")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config, args.out, args.seed)
        if args.command == "price":
            return cmd_price(cfg, args.pipeline)
        if args.command == "weights":
            return cmd_weights(cfg)
        if args.command == "hedge":
            return cmd_hedge(cfg, args.period)
        if args.command == "sensitivities":
            return cmd_sensitivities(cfg)
        if args.command == "verify":
            return cmd_verify(cfg)
        return cmd_compare_mc(cfg)
    except (ValidationError, configparser.Error, ValueError) as exc:
        if isinstance(exc, ToleranceError):
            print(f"tolerance breach: {exc}", file=sys.stderr)
            return EXIT_TOLERANCE
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ToleranceError as exc:
        print(f"tolerance breach: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE


if __name__ == "__main__":
    sys.exit(main())
