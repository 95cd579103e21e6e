"""Withdrawal-guarantee contract data and fund dynamics.

Money is in currency units and time in years. Interest rates are zero in
the base regime, so all fund recursions are undiscounted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class Schedule:
    """Equidistant withdrawal calendar T_1 < ... < T_N."""

    n_periods: int
    dt: float
    withdrawal: float

    def __post_init__(self):
        if int(self.n_periods) != self.n_periods or self.n_periods < 1:
            raise ValidationError("n_periods", f"must be a positive integer, got {self.n_periods!r}")
        if not self.dt > 0:
            raise ValidationError("dt", f"must be positive, got {self.dt!r}")
        if not self.withdrawal > 0:
            raise ValidationError("withdrawal", f"must be positive, got {self.withdrawal!r}")

    @property
    def maturity(self) -> float:
        return self.n_periods * self.dt

    @property
    def annualized_rate(self) -> float:
        return self.withdrawal / self.dt


@dataclass(frozen=True)
class GuaranteeSpec:
    schedule: Schedule
    initial_capital: float
    rollup_rate: Optional[float] = None

    def __post_init__(self):
        if not self.initial_capital > 0:
            raise ValidationError("initial_capital", f"must be positive, got {self.initial_capital!r}")
        if self.rollup_rate is not None and not self.rollup_rate > -1:
            raise ValidationError("rollup_rate", f"must exceed -1, got {self.rollup_rate!r}")

    @property
    def n_periods(self) -> int:
        return self.schedule.n_periods

    @property
    def withdrawal(self) -> float:
        return self.schedule.withdrawal

    @property
    def moneyness(self) -> float:
        """Total guaranteed withdrawals over initial capital."""
        return self.n_periods * self.withdrawal / self.initial_capital

    def with_capital(self, initial_capital):
        return replace(self, initial_capital=initial_capital)

    @classmethod
    def from_moneyness(cls, moneyness, n_periods, withdrawal, dt=1.0, rollup_rate=None):
        schedule = Schedule(n_periods, dt, withdrawal)
        return cls(schedule, n_periods * withdrawal / moneyness, rollup_rate)


@dataclass(frozen=True)
class FundState:
    """Fund after the withdrawal at period ``period``.

    ``spot`` is the asset price S_t (S_0 = 1) so that zeta = X_t / S_t can be
    tracked alongside the fund value.
    """

    period: int
    fund_value: float
    spot: float = 1.0
    depleted: bool = False

    @property
    def zeta(self) -> float:
        return self.fund_value / self.spot

    def before_withdrawal(self, w):
        """X_{t-} = X_t + w."""
        return self.fund_value + w

    @classmethod
    def initial(cls, x0):
        if not x0 > 0:
            raise ValidationError("initial_capital", f"must be positive, got {x0!r}")
        return cls(0, float(x0), 1.0, False)


def step_fund(state: FundState, gross_return: float, w: float) -> FundState:
    """Advance the withdrawal fund by one period: X' = X * R - w."""
    if not gross_return > 0:
        raise ValidationError("gross_return", f"must be positive, got {gross_return!r}")
    x = state.fund_value * gross_return - w
    return FundState(
        period=state.period + 1,
        fund_value=x,
        spot=state.spot * gross_return,
        depleted=state.depleted or x <= 0,
    )


def depletion_time(x0, returns: Sequence[float], w):
    """First period with X_t <= 0 (or None) and the fund path X_0..X_N."""
    returns = np.asarray(returns, dtype=float)
    if returns.ndim != 1 or returns.size == 0:
        raise ValidationError("returns", "need a non-empty sequence of gross returns")
    state = FundState.initial(x0)
    path = [state.fund_value]
    tau = None
    for r in returns:
        state = step_fund(state, r, w)
        path.append(state.fund_value)
        if tau is None and state.depleted:
            tau = state.period
    return tau, np.array(path)


def fund_value_closed_form(x0, spots, w):
    """X_t = S_t (X_0 - w sum_{u<=t} 1/S_u) for spot path S_1..S_N (S_0 = 1)."""
    spots = np.asarray(spots, dtype=float)
    return spots * (x0 - w * np.cumsum(1.0 / spots))


def claim_amount(t, tau, fund_value_at_t, w):
    """Guarantee payment due at T_t given the depletion time."""
    if t == 0 or tau is None or tau > t:
        return 0.0
    if tau <= t - 1:
        return float(w)
    return max(-float(fund_value_at_t), 0.0)


def total_claims(tau, fund_value_at_tau, w, n_periods):
    """w (N - tau)^+ + X_tau^- 1{tau <= N}."""
    if tau is None or tau > n_periods:
        return 0.0
    return w * max(n_periods - tau, 0) + max(-fund_value_at_tau, 0.0)


def step_contribution_fund(y, gross_return, p):
    """Multi-contribution fund step: Y' = Y * R + p."""
    if not gross_return > 0:
        raise ValidationError("gross_return", f"must be positive, got {gross_return!r}")
    return y * gross_return + p


def contribution_fund_closed_form(p, spots):
    """Y_t = p S_t sum_{u=0}^t 1/S_u for spots S_0..S_t."""
    spots = np.asarray(spots, dtype=float)
    return p * spots * np.cumsum(1.0 / spots)


def guarantee_base(t, spec: GuaranteeSpec) -> float:
    """Discounted count A_t of unit withdrawals after T_t at the roll-up rate.

    A_N is +inf so that no roll-up happens at maturity. Without a roll-up
    feature every A_t is +inf.
    """
    n = spec.n_periods
    if not 0 <= t <= n:
        raise ValidationError("t", f"must lie in [0, {n}], got {t}")
    if spec.rollup_rate is None or t == n:
        return math.inf
    r = spec.rollup_rate
    if r <= -1:
        raise ValidationError("rollup_rate", f"must exceed -1, got {r}")
    return math.fsum((1.0 + r) ** (-(u - t)) for u in range(t + 1, n + 1))
