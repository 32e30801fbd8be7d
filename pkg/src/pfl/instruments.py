"""Trade definitions, pathwise valuation and termsheet cashflows.

Swaps are valued from closed-form one-factor bond prices. The floating
coupon of a period is fixed at the period start from the model curve on that
path (simple rate over the period), so each termsheet flow is known from the
path state at the previous payment date.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .errors import ConfigurationError, UnsupportedInstrumentError
from .market_models import GBM, TIME_TOL, PathSet, ShortRate1F


class FlowKind(str, enum.Enum):
    TF = "TF"  # termsheet
    CSA = "CSA"  # variation margin
    SF = "SF"  # settlement
    IM = "IM"  # initial margin


@dataclass(frozen=True)
class SwapSpec:
    notional: float
    fixed_rate: float
    direction: str = "pay_fixed"
    start: float = 0.0
    maturity: float = 10.0
    frequency: int = 1
    asset_class = "interest_rate"

    def __post_init__(self):
        if self.direction not in ("pay_fixed", "receive_fixed"):
            raise ConfigurationError(f"unknown swap direction {self.direction!r}")
        if not self.notional > 0:
            raise ConfigurationError("swap notional must be > 0")
        if not (self.maturity > self.start >= 0):
            raise ConfigurationError("swap requires maturity > start >= 0")
        if self.frequency < 1:
            raise ConfigurationError("payment frequency must be >= 1 per year")
        n = (self.maturity - self.start) * self.frequency
        if abs(n - round(n)) > 1e-9:
            raise ConfigurationError("swap tenor must be a whole number of periods")

    @property
    def sign(self) -> float:
        return 1.0 if self.direction == "pay_fixed" else -1.0

    @property
    def accrual(self) -> float:
        return 1.0 / self.frequency

    @property
    def payment_times(self) -> np.ndarray:
        n = int(round((self.maturity - self.start) * self.frequency))
        return self.start + self.accrual * np.arange(1, n + 1)

    @property
    def fixing_times(self) -> np.ndarray:
        return self.payment_times - self.accrual

    @property
    def flow_times(self) -> np.ndarray:
        return self.payment_times


@dataclass(frozen=True)
class ForwardSpec:
    """Long ``notional`` units of the GBM asset at ``strike``, settled at maturity."""

    notional: float
    strike: float
    maturity: float
    asset_class = "equity"

    def __post_init__(self):
        if not self.maturity > 0:
            raise ConfigurationError("forward maturity must be > 0")

    @property
    def flow_times(self) -> np.ndarray:
        return np.array([self.maturity])

    @property
    def fixing_times(self) -> np.ndarray:
        return np.array([], dtype=float)


Trade = Union[SwapSpec, ForwardSpec]


@dataclass(frozen=True)
class Portfolio:
    trades: tuple
    netting_set: str = "NS1"

    def __post_init__(self):
        object.__setattr__(self, "trades", tuple(self.trades))

    @property
    def flow_times(self) -> np.ndarray:
        times = np.concatenate([t.flow_times for t in self.trades] + [np.array([])])
        return np.unique(times)

    @property
    def fixing_times(self) -> np.ndarray:
        times = np.concatenate([t.fixing_times for t in self.trades] + [np.array([])])
        return np.unique(times)

    def scaled(self, factor: float) -> "Portfolio":
        """Same trades with every notional multiplied by ``factor``."""
        out = []
        for t in self.trades:
            if isinstance(t, SwapSpec):
                out.append(SwapSpec(t.notional * factor, t.fixed_rate, t.direction, t.start, t.maturity, t.frequency))
            else:
                out.append(ForwardSpec(t.notional * factor, t.strike, t.maturity))
        return Portfolio(tuple(out), self.netting_set)


@dataclass(frozen=True)
class FlowEvent:
    time: float
    amount: float  # + = received by the bank
    kind: FlowKind

    def __post_init__(self):
        object.__setattr__(self, "kind", FlowKind(self.kind))


@dataclass(frozen=True, eq=False)
class FlowLeg:
    """One scheduled flow across all paths."""

    time: float
    kind: FlowKind
    amounts: np.ndarray  # (n_paths,)


def _require_short_rate(model, what: str) -> ShortRate1F:
    if not isinstance(model, ShortRate1F):
        raise UnsupportedInstrumentError(f"{what} requires a ShortRate1F model, got {type(model).__name__}")
    return model


def _require_gbm(model, what: str) -> GBM:
    if not isinstance(model, GBM):
        raise UnsupportedInstrumentError(f"{what} requires a GBM model, got {type(model).__name__}")
    return model


def par_rate(model, maturity: float, frequency: int = 1, start: float = 0.0) -> float:
    """Fixed rate giving zero initial value for a swap on the model's t = 0 curve."""
    m = _require_short_rate(model, "par_rate")
    probe = SwapSpec(1.0, 0.0, "pay_fixed", start, maturity, frequency)
    pay = probe.payment_times
    p = m.zcb(pay, m.r0)
    p_start = m.zcb(start, m.r0)
    return float((p_start - p[-1]) / (probe.accrual * p.sum()))


def _gross_accrual(model: ShortRate1F, tau: float, r):
    return 1.0 / model.zcb(tau, r)


def _swap_value(swap: SwapSpec, model: ShortRate1F, t_cut: float, t_eval: float, x, fixing_state: Callable):
    """Value at ``t_eval`` (state ``x``) of the swap flows paid after ``t_cut``.

    Flows in (t_cut, t_eval] count at face value. A period whose fixing lies in
    (t_cut, t_eval] is fixed from ``x``; one fixed at or before ``t_cut`` uses
    the path's own fixing via ``fixing_state``. With t_cut == t_eval this is the
    ordinary post-flow value.
    """
    x = np.asarray(x, dtype=float)
    tau = swap.accrual
    total = np.zeros_like(x)
    for pay, fix in zip(swap.payment_times, swap.fixing_times):
        if pay <= t_cut + TIME_TOL:
            continue
        disc = 1.0 if pay <= t_eval + TIME_TOL else model.zcb(pay - t_eval, x)
        if fix <= t_cut + TIME_TOL:
            floating = (_gross_accrual(model, tau, fixing_state(fix)) - 1.0) * disc
        elif fix <= t_eval + TIME_TOL:
            floating = (_gross_accrual(model, tau, x) - 1.0) * disc
        else:
            floating = model.zcb(fix - t_eval, x) - disc
        total = total + floating - swap.fixed_rate * tau * disc
    return swap.notional * swap.sign * total


def _forward_value(fwd: ForwardSpec, t_cut: float, x):
    x = np.asarray(x, dtype=float)
    if fwd.maturity <= t_cut + TIME_TOL:
        return np.zeros_like(x)
    return fwd.notional * (x - fwd.strike)


def trade_value(trade: Trade, paths: PathSet, t: float) -> np.ndarray:
    return frozen_trade_value(trade, paths, t, t, paths.state_at(t))


def frozen_trade_value(trade: Trade, paths: PathSet, t_cut: float, t_eval: float, x) -> np.ndarray:
    if isinstance(trade, SwapSpec):
        model = _require_short_rate(paths.model, "swap valuation")
        return _swap_value(trade, model, t_cut, t_eval, x, paths.state_at)
    _require_gbm(paths.model, "forward valuation")
    return _forward_value(trade, t_cut, x)


def value(portfolio: Portfolio, paths: PathSet, t: float) -> np.ndarray:
    """Post-flow portfolio value at grid time ``t`` on every path."""
    total = np.zeros(paths.n_paths)
    for trade in portfolio.trades:
        total = total + trade_value(trade, paths, t)
    return total


def frozen_value(portfolio: Portfolio, paths: PathSet, t_cut: float, t_eval: float, x) -> np.ndarray:
    """Portfolio as seen at ``t_cut`` revalued at ``t_eval`` in state ``x``,
    with flows in between counted at face value (cash-inclusive P&L basis)."""
    total = 0.0
    for trade in portfolio.trades:
        total = total + frozen_trade_value(trade, paths, t_cut, t_eval, x)
    return np.asarray(total, dtype=float)


def value_profile(portfolio: Portfolio, paths: PathSet) -> np.ndarray:
    """(n_dates, n_paths) matrix of post-flow values on the path grid."""
    return np.stack([value(portfolio, paths, t) for t in paths.grid.points])


def flow_schedule(portfolio: Portfolio, paths: PathSet) -> list:
    """Every termsheet/settlement flow up to the grid end, as FlowLeg rows.

    Swap legs are reported separately (fixed and floating), forward settlements
    as SF flows.
    """
    end = paths.grid.points[-1] + TIME_TOL
    legs = []
    for trade in portfolio.trades:
        if isinstance(trade, SwapSpec):
            model = _require_short_rate(paths.model, "swap flows")
            tau = trade.accrual
            for pay, fix in zip(trade.payment_times, trade.fixing_times):
                if pay > end:
                    break
                fixed = np.full(paths.n_paths, -trade.sign * trade.notional * trade.fixed_rate * tau)
                floating = trade.sign * trade.notional * (_gross_accrual(model, tau, paths.state_at(fix)) - 1.0)
                legs.append(FlowLeg(float(pay), FlowKind.TF, fixed))
                legs.append(FlowLeg(float(pay), FlowKind.TF, floating))
        else:
            _require_gbm(paths.model, "forward flows")
            if trade.maturity <= end:
                amt = trade.notional * (paths.state_at(trade.maturity) - trade.strike)
                legs.append(FlowLeg(float(trade.maturity), FlowKind.SF, amt))
    legs.sort(key=lambda leg: leg.time)
    return legs


def flows_in_window(portfolio: Portfolio, window: Sequence[float], paths: PathSet, path: int) -> list:
    """FlowEvents of path ``path`` with time in the half-open window (t1, t2]."""
    t1, t2 = window
    if not t1 < t2:
        raise ConfigurationError(f"window requires t1 < t2, got ({t1}, {t2})")
    return [
        FlowEvent(leg.time, float(leg.amounts[path]), leg.kind)
        for leg in flow_schedule(portfolio, paths)
        if t1 + TIME_TOL < leg.time <= t2 + TIME_TOL
    ]
