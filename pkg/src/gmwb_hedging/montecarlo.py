"""Reproducible Monte Carlo oracle for withdrawal guarantees.

Uniforms come from counter-based Philox streams: chunk ``c`` of a run with
seed ``s`` uses key ``s | (c << 64)``, so results depend only on the seed
and the chunk size, never on scheduling. Chunk sums are reduced in chunk
order.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .contract import GuaranteeSpec, guarantee_base
from .errors import ValidationError

_U_EPS = 1e-16


@dataclass(frozen=True)
class MCConfig:
    n_paths: int = 100_000
    seed: int = 0
    antithetic: bool = False
    chunk_size: int = 8192

    def __post_init__(self):
        if int(self.n_paths) != self.n_paths or self.n_paths < 100:
            raise ValidationError("n_paths", f"need at least 100 paths, got {self.n_paths!r}")
        if self.antithetic and self.n_paths % 2:
            raise ValidationError("n_paths", "antithetic sampling needs an even path count")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed", "must be an unsigned 64-bit integer")
        if self.chunk_size < 1:
            raise ValidationError("chunk_size", "must be positive")

    @property
    def n_draws(self):
        """Independent draws: path pairs under antithetic sampling."""
        return self.n_paths // 2 if self.antithetic else self.n_paths


@dataclass
class PricingResult:
    value: float
    std_error: float | None = None
    n_paths: int | None = None
    seed: int | None = None
    breakdown: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def philox_stream(seed, chunk):
    return np.random.Generator(np.random.Philox(key=int(seed) | (int(chunk) << 64)))


def uniform_chunks(config: MCConfig, n_periods):
    """Yield (n_periods, m) uniform blocks, one per chunk, in order."""
    remaining, chunk = config.n_draws, 0
    while remaining > 0:
        m = min(config.chunk_size, remaining)
        u = philox_stream(config.seed, chunk).random((n_periods, m))
        yield np.clip(u, _U_EPS, 1.0 - _U_EPS)
        remaining -= m
        chunk += 1


def gross_returns(model, uniforms):
    """Map a (periods, m) uniform block to gross returns, period by period."""
    out = np.empty_like(uniforms)
    for t in range(uniforms.shape[0]):
        out[t] = np.exp(model.sample_log_returns(t, uniforms[t]))
    return out


def estimate(model, n_periods, config: MCConfig, payoff):
    """Mean and standard error of ``payoff(gross_returns) -> (values, extras)``.

    Under antithetic sampling the standard error is that of the pair means.
    Extras are per-path arrays averaged into the breakdown.
    """
    total = total_sq = 0.0
    extras_sum = {}
    for u in uniform_chunks(config, n_periods):
        vals, extras = payoff(gross_returns(model, u))
        if config.antithetic:
            vals_b, extras_b = payoff(gross_returns(model, 1.0 - u))
            vals = 0.5 * (vals + vals_b)
            extras = {k: 0.5 * (extras[k] + extras_b[k]) for k in extras}
        total += float(np.sum(vals))
        total_sq += float(np.sum(vals * vals))
        for k, v in extras.items():
            extras_sum[k] = extras_sum.get(k, 0.0) + np.sum(v, axis=-1)
    n = config.n_draws
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0) * n / (n - 1)
    breakdown = {k: (v / n).tolist() if np.ndim(v) else float(v / n) for k, v in extras_sum.items()}
    return PricingResult(mean, math.sqrt(var / n), config.n_paths, config.seed, breakdown)


def guarantee_claims(spec: GuaranteeSpec, returns, discount_rate=0.0, dt=None):
    """Discounted guarantee claims along paths of gross returns.

    ``returns`` has shape (N, m). The withdrawal level ratchets to X_t / A_t
    when a roll-up rate is set; with A_t infinite this is the plain contract.
    Returns (total, per-period claims, depletion indicator), all discounted.
    """
    n = spec.n_periods
    returns = np.asarray(returns, dtype=float)
    if returns.shape[0] != n:
        raise ValidationError("returns", f"expected {n} periods of returns, got {returns.shape[0]}")
    dt = spec.schedule.dt if dt is None else dt
    m = returns.shape[1]
    x = np.full(m, float(spec.initial_capital))
    level = np.full(m, float(spec.withdrawal))
    alive = np.ones(m, dtype=bool)
    claims = np.zeros((n, m))
    for t in range(1, n + 1):
        x_new = x * returns[t - 1] - level
        newly = alive & (x_new <= 0)
        claims[t - 1] = np.where(alive, np.where(newly, -x_new, 0.0), level)
        alive &= ~newly
        x = np.where(alive, x_new, 0.0)
        if t < n:
            base = guarantee_base(t, spec)
            if math.isfinite(base):
                level = np.where(alive, np.maximum(level, x / base), level)
    disc = np.exp(-discount_rate * dt * np.arange(1, n + 1))[:, None]
    claims *= disc
    return claims.sum(axis=0), claims, ~alive


def mc_guarantee_value(model, spec: GuaranteeSpec, config: MCConfig = MCConfig()):
    """Guarantee value V_0 by simulation (roll-up applied when specified)."""

    def payoff(returns):
        total, claims, depleted = guarantee_claims(spec, returns, model.rate, model.dt)
        return total, {"expected_claims_by_period": claims, "depletion_probability": depleted.astype(float)}

    return estimate(model, spec.n_periods, config, payoff)


def mc_rollup_value(model, spec: GuaranteeSpec, config: MCConfig = MCConfig()):
    """Roll-up guarantee value by simulation; the ratchet uses w_0 = w."""
    if spec.rollup_rate is None:
        raise ValidationError("rollup_rate", "contract has no roll-up feature")
    return mc_guarantee_value(model, spec, config)


def mc_plain_value(model, spec: GuaranteeSpec, config: MCConfig = MCConfig()):
    """Value of the contract with its roll-up feature removed."""
    plain = GuaranteeSpec(spec.schedule, spec.initial_capital, None)
    return mc_guarantee_value(model, plain, config)


def mc_put_on_contribution_fund(model, contribution, strike, n_periods, config: MCConfig = MCConfig()):
    """Put (K - Y_{N-1} R_N)^+ on the fund Y_0 = p, Y_{t+1} = Y_t R + p."""
    if not contribution > 0:
        raise ValidationError("contribution", "must be positive")
    df = math.exp(-model.rate * model.dt * n_periods)

    def payoff(returns):
        y = np.full(returns.shape[1], float(contribution))
        for t in range(n_periods - 1):
            y = y * returns[t] + contribution
        return df * np.maximum(strike - y * returns[-1], 0.0), {}

    return estimate(model, n_periods, config, payoff)


def mc_vanilla_put(model, strike, maturity_periods=1, config: MCConfig = MCConfig(), spot=1.0):
    """Put on S_T, T = T_{maturity_periods}, by sampling: a sampler self-test."""
    df = model.discount_factor(0, maturity_periods)

    def payoff(returns):
        return df * np.maximum(strike - spot * np.prod(returns, axis=0), 0.0), {}

    return estimate(model, maturity_periods, config, payoff)
