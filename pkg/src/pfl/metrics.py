"""Limit metrics computed from an exposure cube: PFE, PFL, aPFL and paPFL,
together with the loss-side inputs (LGD, incurred CVA, credit protection).

Quantiles use the conservative upper order statistic at rank ceil(q n).
Expected shortfall is the mean of the worst ceil((1 - q) n) floored values,
summed with ``math.fsum`` so results do not depend on summation order.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

import numpy as np

from .errors import ConfigurationError, InputError
from .exposure import ExposureCube
from .market_models import TIME_TOL, MeasureConfig, PathSet, ShortRate1F, TimeGrid


def _exact(q: float) -> Fraction:
    # q as written (0.95, not 0.9499999999999999556) so ranks are exact
    return Fraction(repr(float(q)))


def quantile_rank(q: float, n: int) -> int:
    """1-based rank ceil(q n) of the upper empirical quantile."""
    return max(1, math.ceil(_exact(q) * n))


def tail_size(q: float, n: int) -> int:
    """Number of samples in the ES tail block, ceil((1 - q) n)."""
    return max(1, math.ceil((1 - _exact(q)) * n))


def _check_q(q: float) -> None:
    if not 0 < q < 1:
        raise InputError(f"quantile level must lie in (0, 1), got {q}")


def _as_samples(samples) -> np.ndarray:
    arr = np.asarray(samples, dtype=float).ravel()
    if arr.size == 0:
        raise InputError("samples must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise InputError("samples must be finite")
    return arr


def empirical_quantile(samples, q: float) -> float:
    _check_q(q)
    arr = _as_samples(samples)
    k = quantile_rank(q, arr.size)
    return float(np.partition(arr, k - 1)[k - 1])


def expected_shortfall(samples, q: float) -> float:
    _check_q(q)
    arr = _as_samples(samples)
    k = tail_size(q, arr.size)
    block = np.partition(arr, arr.size - k)[arr.size - k :]
    return math.fsum(block.tolist()) / k


def _row_quantiles(matrix: np.ndarray, q: float) -> np.ndarray:
    k = quantile_rank(q, matrix.shape[1])
    return np.partition(matrix, k - 1, axis=1)[:, k - 1].copy()


def _row_shortfalls(matrix: np.ndarray, q: float) -> np.ndarray:
    n = matrix.shape[1]
    k = tail_size(q, n)
    block = np.partition(matrix, n - k, axis=1)[:, n - k :]
    return np.array([math.fsum(row) / k for row in block.tolist()])


# -- loss given default -------------------------------------------------------


@dataclass(frozen=True)
class ConstantLGD:
    lgd: float

    def __post_init__(self):
        if not 0 <= self.lgd <= 1:
            raise ConfigurationError("LGD must lie in [0, 1]")

    def per_date(self, grid: TimeGrid) -> np.ndarray:
        return np.full(len(grid), float(self.lgd))

    def describe(self) -> str:
        return f"constant {self.lgd!r}"


@dataclass(frozen=True)
class TermStructureLGD:
    """Right-continuous step function: lgd(t) is the value of the last step
    starting at or before t (the first value before the first step)."""

    steps: tuple

    def __post_init__(self):
        steps = tuple((float(t), float(v)) for t, v in self.steps)
        if not steps:
            raise ConfigurationError("term-structure LGD needs at least one step")
        if any(not 0 <= v <= 1 for _, v in steps):
            raise ConfigurationError("LGD must lie in [0, 1]")
        if any(b[0] <= a[0] for a, b in zip(steps, steps[1:])):
            raise ConfigurationError("LGD step times must increase")
        object.__setattr__(self, "steps", steps)

    def at(self, t) -> np.ndarray:
        times = np.array([s[0] for s in self.steps])
        vals = np.array([s[1] for s in self.steps])
        idx = np.searchsorted(times, np.asarray(t, dtype=float) + TIME_TOL, side="right") - 1
        return vals[np.clip(idx, 0, None)]

    def per_date(self, grid: TimeGrid) -> np.ndarray:
        return self.at(grid.points)

    def describe(self) -> str:
        return "term structure " + ", ".join(f"{t!r}:{v!r}" for t, v in self.steps)


@dataclass(frozen=True, eq=False)
class CorrelatedLGD:
    """lgd(t, path) = clamp(base + beta * z(t, path), 0, 1) with z the path's
    standardised state driver, shape (n_dates, n_paths)."""

    base: float
    beta: float
    driver: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not 0 <= self.base <= 1:
            raise ConfigurationError("base LGD must lie in [0, 1]")

    @classmethod
    def from_paths(cls, base: float, beta: float, paths: PathSet, grid: Optional[TimeGrid] = None) -> "CorrelatedLGD":
        """Driver rows taken at the dates of ``grid`` (default: the path grid)."""
        z = paths.standardized_driver().T
        if grid is not None:
            z = z[[paths.grid.index(t) for t in grid.points]]
        return cls(base, beta, z)

    def per_path(self, cube: ExposureCube) -> np.ndarray:
        if self.driver.shape != cube.raw.shape:
            raise ConfigurationError(
                f"LGD driver shape {self.driver.shape} does not match cube {cube.raw.shape}"
            )
        return np.clip(self.base + self.beta * self.driver, 0.0, 1.0)

    def describe(self) -> str:
        return f"correlated base {self.base!r} beta {self.beta!r}"


LGDModel = Union[ConstantLGD, TermStructureLGD, CorrelatedLGD]


def mean_lgd(lgd: LGDModel, cube: ExposureCube) -> np.ndarray:
    if isinstance(lgd, CorrelatedLGD):
        return lgd.per_path(cube).mean(axis=1)
    return lgd.per_date(cube.grid)


# -- credit inputs --------------------------------------------------------------


@dataclass(frozen=True)
class IncurredCVA:
    x: float

    def __post_init__(self):
        if self.x < 0:
            raise ConfigurationError("incurred CVA must be >= 0")

    def __float__(self) -> float:
        return float(self.x)


@dataclass(frozen=True)
class CreditCurve:
    """Single-quote curve with flat hazard spread / lgd (spread as a decimal rate)."""

    cds_spread: float
    lgd: float

    def __post_init__(self):
        if self.cds_spread < 0:
            raise ConfigurationError("CDS spread must be >= 0")
        if not 0 < self.lgd <= 1:
            raise ConfigurationError("credit-curve LGD must lie in (0, 1]")

    @classmethod
    def from_bps(cls, spread_bps: float, lgd: float) -> "CreditCurve":
        return cls(spread_bps / 10_000.0, lgd)

    @property
    def hazard(self) -> float:
        return self.cds_spread / self.lgd

    def survival(self, t):
        return np.exp(-self.hazard * np.asarray(t, dtype=float))


def _discount_factors(grid: TimeGrid, measure: Optional[MeasureConfig], model) -> np.ndarray:
    if measure is None or measure.discounting == "none":
        return np.ones(len(grid))
    if not isinstance(model, ShortRate1F):
        raise ConfigurationError("inverse_discount needs a short-rate model for the initial curve")
    return model.zcb(grid.points, model.r0)


def _cva_terms(cube, curve, lgd, measure, model) -> np.ndarray:
    t = cube.grid.points
    epe = cube.floored.mean(axis=1)
    surv = curve.survival(t)
    default_prob = np.zeros_like(t)
    default_prob[1:] = surv[:-1] - surv[1:]
    if t[0] > TIME_TOL:
        default_prob[0] = 1.0 - surv[0]
    return mean_lgd(lgd, cube) * epe * default_prob * _discount_factors(cube.grid, measure, model)


def incurred_cva(
    cube: ExposureCube,
    curve: CreditCurve,
    lgd: LGDModel,
    measure: Optional[MeasureConfig] = None,
    model=None,
) -> IncurredCVA:
    """Incurred CVA X = sum_i lgd_i EPE(t_i) [S(t_{i-1}) - S(t_i)], computed once
    at t = 0 and held constant."""
    return IncurredCVA(math.fsum(_cva_terms(cube, curve, lgd, measure, model).tolist()))


def forward_cva_profile(
    cube: ExposureCube,
    curve: CreditCurve,
    lgd: LGDModel,
    measure: Optional[MeasureConfig] = None,
    model=None,
) -> np.ndarray:
    """Time-zero expected forward CVA remaining after each date: the share of X
    attributable to dates strictly after t_i. Equals X at t = 0 and 0 at the end."""
    terms = _cva_terms(cube, curve, lgd, measure, model)
    tail = np.concatenate((np.cumsum(terms[::-1])[::-1][1:], [0.0]))
    return np.maximum(tail, 0.0)


@dataclass(frozen=True, eq=False)
class ProtectionProfile:
    grid: TimeGrid
    y: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        if y.shape != (len(self.grid),):
            raise ConfigurationError("protection profile must have one value per grid date")
        if np.any(y < 0):
            raise ConfigurationError("protection must be >= 0")
        y.setflags(write=False)
        object.__setattr__(self, "y", y)

    def __add__(self, other: "ProtectionProfile") -> "ProtectionProfile":
        if other.grid != self.grid:
            raise ConfigurationError("protection profiles on different grids")
        return ProtectionProfile(self.grid, self.y + other.y)

    @classmethod
    def none(cls, grid: TimeGrid) -> "ProtectionProfile":
        return cls(grid, np.zeros(len(grid)))


def protection_profile(notional: float, maturity: float, lgd: float, grid: TimeGrid) -> ProtectionProfile:
    """Bought CDS protection: lgd * notional up to and including maturity, 0 after."""
    if notional < 0:
        raise ConfigurationError("CDS notional must be >= 0")
    if not 0 <= lgd <= 1:
        raise ConfigurationError("LGD must lie in [0, 1]")
    y = np.where(grid.points <= maturity + TIME_TOL, lgd * notional, 0.0)
    return ProtectionProfile(grid, y)


# -- profiles -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Profile:
    grid: TimeGrid
    values: np.ndarray
    kind: str
    q: float
    lgd: str = ""
    incurred_cva: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def stem(self) -> str:
        return f"{self.kind.lower()}_q{self.q!r}"

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t_years", "value"])
            for t, v in zip(self.grid.points, self.values):
                w.writerow([repr(float(t)), repr(float(v))])

    def to_dict(self) -> dict:
        return {
            "metric": self.kind,
            "q": self.q,
            "lgd": self.lgd,
            "incurred_cva": self.incurred_cva,
            "t_years": [float(t) for t in self.grid.points],
            "values": [float(v) for v in self.values],
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "Profile":
        with open(path) as fh:
            d = json.load(fh)
        return cls(TimeGrid(d["t_years"]), d["values"], d["metric"], d["q"], d.get("lgd", ""), d.get("incurred_cva", 0.0))


def _shift_per_date(cube: ExposureCube, shift) -> np.ndarray:
    s = np.asarray(float(shift) if isinstance(shift, IncurredCVA) else shift, dtype=float)
    s = np.broadcast_to(s, (cube.n_dates,)).astype(float)
    if np.any(s < 0):
        raise ConfigurationError("loss shifts (incurred CVA, protection) must be >= 0")
    return s


def _loss_profile(cube: ExposureCube, lgd: LGDModel, shift: np.ndarray, q: float) -> np.ndarray:
    """Per-date ES of max(lgd * V - shift, 0).

    For LGD constant across paths on a date the loss is evaluated in the
    factorised form lgd * max(V - shift / lgd, 0), which makes the
    independence factorisation and the zero-shift reductions exact.
    """
    _check_q(q)
    if isinstance(lgd, CorrelatedLGD):
        losses = np.maximum(lgd.per_path(cube) * cube.raw - shift[:, None], 0.0)
        return _row_shortfalls(losses, q)
    l = lgd.per_date(cube.grid)
    live = l > 0
    scaled_shift = np.divide(shift, l, out=np.zeros_like(shift), where=live)
    excess = np.maximum(cube.raw - scaled_shift[:, None], 0.0)
    return np.where(live, l * _row_shortfalls(excess, q), 0.0)


def pfe_profile(cube: ExposureCube, q: float) -> Profile:
    _check_q(q)
    return Profile(cube.grid, _row_quantiles(cube.floored, q), "PFE", q)


def pfl_profile(cube: ExposureCube, lgd: LGDModel, q: float) -> Profile:
    vals = _loss_profile(cube, lgd, np.zeros(cube.n_dates), q)
    return Profile(cube.grid, vals, "PFL", q, lgd.describe())


def apfl_profile(cube: ExposureCube, lgd: LGDModel, x, q: float) -> Profile:
    """PFL of losses reduced by incurred CVA ``x`` (IncurredCVA, scalar or a
    per-date forward-CVA array)."""
    shift = _shift_per_date(cube, x)
    vals = _loss_profile(cube, lgd, shift, q)
    return Profile(cube.grid, vals, "aPFL", q, lgd.describe(), float(shift[0]))


def papfl_profile(cube: ExposureCube, lgd: LGDModel, x, y: ProtectionProfile, q: float) -> Profile:
    """aPFL with existing protection y(t) also taken off each path's loss."""
    if y.grid != cube.grid:
        raise ConfigurationError("protection profile grid differs from the cube grid")
    xs = _shift_per_date(cube, x)
    shift = _shift_per_date(cube, xs + y.y)
    vals = _loss_profile(cube, lgd, shift, q)
    return Profile(cube.grid, vals, "paPFL", q, lgd.describe(), float(xs[0]))


def epe_profile(cube: ExposureCube) -> np.ndarray:
    return cube.floored.mean(axis=1)


def pfl_pfe_ratio(pfl: Profile, pfe: Profile) -> np.ndarray:
    """(PFL - PFE) / PFE per date; NaN where PFE is zero."""
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(pfe.values > 0, (pfl.values - pfe.values) / np.where(pfe.values > 0, pfe.values, 1.0), np.nan)
