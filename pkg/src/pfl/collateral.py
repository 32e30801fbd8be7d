"""Variation margin, initial margin and the conditional-on-default exposure.

Sign conventions: portfolio values and flow amounts are from the bank's side
(+ = owed to / received by the bank). A positive VM balance is collateral held
by the bank. IM is posted by the counterparty only; IM the bank posts is
segregated and never part of its exposure.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError
from .instruments import FlowKind, Portfolio, flow_schedule, frozen_value, value_profile
from .market_models import (
    TIME_TOL,
    ModelSpec,
    PathSet,
    business_days,
    conditional_sample,
    conditional_value_quantile,
)


@dataclass(frozen=True)
class CSATerms:
    threshold: float = 0.0
    minimum_transfer_amount: float = 0.0
    independent_amount: float = 0.0
    call_frequency_days: int = 1
    mpor_days: int = 10
    flow_netting: bool = False

    def __post_init__(self):
        for name in ("threshold", "minimum_transfer_amount", "independent_amount"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"CSA {name} must be >= 0")
        if not (self.mpor_days >= self.call_frequency_days >= 1):
            raise ConfigurationError("CSA requires mpor >= call frequency >= 1 business day")

    @property
    def mpor_years(self) -> float:
        return business_days(self.mpor_days)


@dataclass(frozen=True)
class ScheduleRow:
    asset_class: str
    low: float  # remaining maturity bucket is (low, high]
    high: float
    percent: float

    def __post_init__(self):
        if self.percent < 0:
            raise ConfigurationError("schedule percentage must be >= 0")
        if not self.high > self.low:
            raise ConfigurationError("schedule bucket needs high > low")


DEFAULT_SCHEDULE = (
    ScheduleRow("interest_rate", 0.0, 2.0, 1.0),
    ScheduleRow("interest_rate", 2.0, 5.0, 2.0),
    ScheduleRow("interest_rate", 5.0, math.inf, 4.0),
)


def load_schedule_table(path) -> tuple:
    """Read a schedule CSV with columns asset_class, bucket_low_years,
    bucket_high_years, percent ('inf' allowed as the upper bound)."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        expected = {"asset_class", "bucket_low_years", "bucket_high_years", "percent"}
        if set(reader.fieldnames or ()) != expected:
            raise ConfigurationError(f"{path}: schedule columns must be {sorted(expected)}")
        for rec in reader:
            rows.append(
                ScheduleRow(
                    rec["asset_class"].strip(),
                    float(rec["bucket_low_years"]),
                    float(rec["bucket_high_years"]),
                    float(rec["percent"]),
                )
            )
    if not rows:
        raise ConfigurationError(f"{path}: empty schedule table")
    return tuple(rows)


@dataclass(frozen=True)
class IMTerms:
    mode: str = "none"
    schedule: tuple = DEFAULT_SCHEDULE
    q: float = 0.99
    horizon_days: int = 10
    stress_multiplier: float = 1.0
    model: Optional[ModelSpec] = None  # margin model; None = the simulation model

    def __post_init__(self):
        if self.mode not in ("none", "schedule", "quantile"):
            raise ConfigurationError(f"unknown IM mode {self.mode!r}")
        if not 0 < self.q < 1:
            raise ConfigurationError("IM quantile must lie in (0, 1)")
        if self.horizon_days <= 0:
            raise ConfigurationError("IM horizon must be > 0 business days")
        if self.stress_multiplier < 1:
            raise ConfigurationError("IM stress multiplier must be >= 1")
        object.__setattr__(self, "schedule", tuple(self.schedule))

    @property
    def horizon_years(self) -> float:
        return business_days(self.horizon_days)


@dataclass(frozen=True)
class DeltaVector:
    """Business days before default of a party's last flow of each kind."""

    tf: float
    csa: float
    sf: float
    im: float

    def offset(self, kind: FlowKind) -> float:
        return {FlowKind.TF: self.tf, FlowKind.CSA: self.csa, FlowKind.SF: self.sf, FlowKind.IM: self.im}[
            FlowKind(kind)
        ]

    def validate(self, mpor_days: float) -> None:
        for name in ("tf", "csa", "sf", "im"):
            v = getattr(self, name)
            if not 0 <= v <= mpor_days:
                raise ConfigurationError(f"delta offset {name}={v} outside [0, {mpor_days}]")


def classical_plus(mpor_days: float) -> tuple:
    """Default (bank, counterparty) timing: the counterparty stops every flow at
    the start of the MPOR; the bank keeps paying TF/SF until default but stops
    CSA transfers at the MPOR start."""
    bank = DeltaVector(tf=0, csa=mpor_days, sf=0, im=mpor_days)
    cpty = DeltaVector(tf=mpor_days, csa=mpor_days, sf=mpor_days, im=mpor_days)
    return bank, cpty


def vm_balance(V, csa: CSATerms, prior_balance):
    """New collateral balance after a margin call against value ``V``."""
    V = np.asarray(V, dtype=float)
    prior = np.asarray(prior_balance, dtype=float)
    target = np.sign(V) * np.maximum(np.abs(V) - csa.threshold, 0.0) + csa.independent_amount
    moves = np.abs(target - prior) >= csa.minimum_transfer_amount
    out = np.where(moves, target, prior)
    return out if out.ndim else float(out)


def vm_path(values: np.ndarray, times: np.ndarray, csa: CSATerms) -> np.ndarray:
    """VM balances along each path, calling on grid dates at most every
    ``call_frequency_days`` business days. Row k is the balance after the call
    at ``times[k]``."""
    out = np.empty_like(values)
    bal = np.zeros(values.shape[1])
    last_call = -math.inf
    step = business_days(csa.call_frequency_days)
    for k, t in enumerate(times):
        if t - last_call >= step - TIME_TOL:
            bal = vm_balance(values[k], csa, bal)
            last_call = t
        out[k] = bal
    return out


def im_schedule(portfolio: Portfolio, terms: IMTerms, t: float) -> float:
    """Schedule IM: absolute notional times the bucket percentage for every live
    trade, with no offsetting between trades."""
    total = 0.0
    for trade in portfolio.trades:
        remaining = trade.maturity - t
        if remaining <= TIME_TOL:
            continue
        for row in terms.schedule:
            if row.asset_class == trade.asset_class and row.low < remaining <= row.high:
                total += abs(trade.notional) * row.percent / 100.0
                break
        else:
            raise ConfigurationError(
                f"no IM schedule bucket for {trade.asset_class} with remaining maturity {remaining:.4f}y"
            )
    return total


NESTED_SAMPLES = 1000
_MONOTONE_PROBES = 5


def im_quantile(paths: PathSet, portfolio: Portfolio, terms: IMTerms, t: float, state=None) -> np.ndarray:
    """Quantile IM at grid time ``t``: max(0, q-quantile of the cash-inclusive
    value change over the IM horizon), conditional on each path's state, under
    ``terms.model`` (default: the simulation model) with vol stressed by
    ``terms.stress_multiplier``.

    Uses the closed-form conditional state quantile wherever the revalued
    portfolio is monotone in the state; other paths fall back to a nested
    simulation of NESTED_SAMPLES conditional draws.
    """
    model = paths.model if terms.model is None else terms.model
    if type(model) is not type(paths.model):
        raise ConfigurationError("IM model must be of the same family as the simulation model")
    h = terms.horizon_years
    x = paths.state_at(t) if state is None else np.asarray(state, dtype=float)
    v0 = frozen_value(portfolio, paths, t, t, x)
    q = terms.q
    levels = np.linspace(1.0 - q, q, _MONOTONE_PROBES) if q > 0.5 else np.linspace(q, 1.0 - q, _MONOTONE_PROBES)
    dv = np.stack(
        [
            frozen_value(portfolio, paths, t, t + h, conditional_value_quantile(model, x, h, lv, terms.stress_multiplier))
            - v0
            for lv in levels
        ]
    )
    steps = np.diff(dv, axis=0)
    scale = np.max(np.abs(dv), axis=0) + 1.0
    tol = 1e-12 * scale
    increasing = np.all(steps >= -tol, axis=0)
    decreasing = np.all(steps <= tol, axis=0)
    monotone = increasing | decreasing
    # for a monotone map the q-quantile of dV is attained at one end of the probe range
    if q > 0.5:
        quant = np.maximum(dv[0], dv[-1])
    else:
        quant = np.minimum(dv[0], dv[-1])
    if not np.all(monotone):
        idx = np.flatnonzero(~monotone)
        rng = np.random.default_rng([paths.seed, int(round(t * 1e6))])
        z = rng.standard_normal(NESTED_SAMPLES)
        from .metrics import empirical_quantile

        for p in idx:
            xs = conditional_sample(model, x[p], h, z, terms.stress_multiplier)
            sub = frozen_value(portfolio, _single_path(paths, p), t, t + h, xs) - v0[p]
            quant[p] = empirical_quantile(sub, q)
    return np.maximum(quant, 0.0)


class _SinglePathView:
    """Read-only view of one path that broadcasts its fixings."""

    def __init__(self, paths: PathSet, p: int):
        self.model = paths.model
        self.seed = paths.seed
        self._paths = paths
        self._p = p

    def state_at(self, t):
        return self._paths.state_at(t)[self._p]


def _single_path(paths: PathSet, p: int):
    return _SinglePathView(paths, p)


def im_profile(paths: PathSet, portfolio: Portfolio, terms: Optional[IMTerms]) -> np.ndarray:
    """(n_dates, n_paths) IM posted by the counterparty at each grid date."""
    shape = (paths.n_dates, paths.n_paths)
    if terms is None or terms.mode == "none":
        return np.zeros(shape)
    out = np.empty(shape)
    for i, t in enumerate(paths.grid.points):
        if terms.mode == "schedule":
            out[i] = im_schedule(portfolio, terms, t)
        else:
            out[i] = im_quantile(paths, portfolio, terms, t)
    return out


@dataclass
class CollateralContext:
    """Precomputed values, margin balances and flows for one simulation, from
    which the conditional exposure at any grid date is assembled."""

    paths: PathSet
    portfolio: Portfolio
    csa: Optional[CSATerms]
    im_terms: Optional[IMTerms]
    deltas: Optional[tuple] = None
    values: np.ndarray = field(init=False)
    vm: Optional[np.ndarray] = field(init=False, default=None)
    im: Optional[np.ndarray] = field(init=False, default=None)
    legs: list = field(init=False, default_factory=list)

    def __post_init__(self):
        self.values = value_profile(self.portfolio, self.paths)
        if self.csa is None:
            return
        if self.deltas is None:
            self.deltas = classical_plus(self.csa.mpor_days)
        for d in self.deltas:
            d.validate(self.csa.mpor_days)
        self.vm = vm_path(self.values, self.paths.grid.points, self.csa)
        self.im = im_profile(self.paths, self.portfolio, self.im_terms)
        self.legs = flow_schedule(self.portfolio, self.paths)

    def exposure(self, i: int) -> np.ndarray:
        """V(portfolio, t_i, delta_B, delta_C) on every path, before flooring."""
        V = self.values[i]
        if self.csa is None:
            return V.copy()
        grid = self.paths.grid
        t = grid.points[i]
        bank, cpty = self.deltas
        start = t - self.csa.mpor_years
        if start < grid.points[0] - TIME_TOL:
            # period of risk reaches back before the first date: inception balances
            k0 = 0
        else:
            k0 = grid.find(start)
            if k0 is None:
                raise ConfigurationError(
                    f"grid lacks the MPOR companion date {start:.10f} for t={t:.10f}"
                )
        balance = self.vm[k0]

        cut_c_csa = t - business_days(cpty.csa)
        cut_b_csa = t - business_days(bank.csa)
        for j in range(k0 + 1, i + 1):
            s = grid.points[j]
            if s > max(cut_c_csa, cut_b_csa) + TIME_TOL:
                break
            proposed = vm_balance(self.values[j], self.csa, balance)
            move = proposed - balance
            allowed = ((move > 0) & (s <= cut_c_csa + TIME_TOL)) | ((move < 0) & (s <= cut_b_csa + TIME_TOL))
            balance = np.where(allowed, proposed, balance)

        j_im = max(grid.index_at_or_before(t - business_days(cpty.im)), k0)
        im_held = self.im[j_im]

        unpaid = np.zeros_like(V)
        for leg in self.legs:
            s = leg.time
            if not (start + TIME_TOL < s <= t + TIME_TOL):
                continue
            paid_by_cpty = s <= t - business_days(cpty.offset(leg.kind)) + TIME_TOL
            paid_by_bank = s <= t - business_days(bank.offset(leg.kind)) + TIME_TOL
            if self.csa.flow_netting and leg.kind in (FlowKind.TF, FlowKind.SF):
                # a trade flow settles net against the other side's same-day CSA transfer
                paid_by_cpty = paid_by_cpty and s <= cut_b_csa + TIME_TOL
                paid_by_bank = paid_by_bank and s <= cut_c_csa + TIME_TOL
            amt = leg.amounts
            paid = np.where(amt > 0, paid_by_cpty, paid_by_bank)
            unpaid = unpaid + np.where(paid, 0.0, amt)
        return V - balance - im_held + unpaid


def conditional_exposure(
    paths: PathSet,
    t: float,
    portfolio: Portfolio,
    csa: Optional[CSATerms],
    im_terms: Optional[IMTerms] = None,
    deltas: Optional[Sequence] = None,
) -> np.ndarray:
    """Conditional-on-default portfolio value at grid time ``t`` on every path."""
    ctx = CollateralContext(paths, portfolio, csa, im_terms, tuple(deltas) if deltas else None)
    return ctx.exposure(paths.grid.index(t))
