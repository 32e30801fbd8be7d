"""Seeded Monte Carlo market states and their closed-form conditional laws.

Two dynamics are supported:

* ``GBM``: geometric Brownian motion for a single asset level.
* ``ShortRate1F``: Gaussian one-factor short rate (Ornstein-Uhlenbeck /
  Vasicek) whose mean-reversion level equals the initial flat zero rate.

Paths are sampled with the exact transition law on the grid, so sample
moments can be checked against closed forms without discretisation bias.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.stats import norm

from .errors import ConfigurationError

BUSINESS_DAYS_PER_YEAR = 252
TIME_TOL = 1e-9

# paths per RNG stream; path p always draws from stream p // PATH_BLOCK
PATH_BLOCK = 4096


def business_days(n: float) -> float:
    """Convert a business-day count to a year fraction."""
    return n / BUSINESS_DAYS_PER_YEAR


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing year fractions, first point >= 0."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).ravel()
        if pts.size == 0:
            raise ConfigurationError("time grid must contain at least one point")
        if not np.all(np.isfinite(pts)):
            raise ConfigurationError("time grid contains non-finite points")
        if pts[0] < 0.0:
            raise ConfigurationError(f"time grid starts before 0: {pts[0]}")
        if np.any(np.diff(pts) <= 0.0):
            raise ConfigurationError("time grid must be strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, end: float, step: float) -> "TimeGrid":
        if step <= 0 or end <= 0:
            raise ConfigurationError("grid end and step must be positive")
        n = int(math.floor(end / step + TIME_TOL))
        pts = step * np.arange(n + 1)
        if end - pts[-1] > TIME_TOL:
            pts = np.append(pts, end)
        return cls(pts)

    def __len__(self) -> int:
        return self.points.size

    def __eq__(self, other) -> bool:
        return isinstance(other, TimeGrid) and np.array_equal(self.points, other.points)

    def __hash__(self) -> int:
        return hash(self.points.tobytes())

    def merged(self, extra) -> "TimeGrid":
        """Union with ``extra`` points; near-duplicates (within TIME_TOL) collapse
        onto the existing point."""
        pts = list(self.points)
        for t in np.atleast_1d(np.asarray(extra, dtype=float)):
            if t < 0:
                continue
            if not np.any(np.abs(self.points - t) <= TIME_TOL) and not any(
                abs(p - t) <= TIME_TOL for p in pts
            ):
                pts.append(float(t))
        return TimeGrid(np.sort(np.array(pts)))

    def find(self, t: float) -> Optional[int]:
        """Index of the grid point equal to ``t`` (within TIME_TOL), else None."""
        i = int(np.searchsorted(self.points, t - TIME_TOL))
        if i < self.points.size and abs(self.points[i] - t) <= TIME_TOL:
            return i
        return None

    def index(self, t: float) -> int:
        i = self.find(t)
        if i is None:
            raise ConfigurationError(f"time {t!r} is not a grid point")
        return i

    def index_at_or_before(self, t: float) -> int:
        """Last index with points[i] <= t (within tolerance); -1 if none."""
        return int(np.searchsorted(self.points, t + TIME_TOL, side="right")) - 1


@dataclass(frozen=True)
class GBM:
    spot: float
    drift: float
    vol: float

    def __post_init__(self):
        if not self.spot > 0:
            raise ConfigurationError(f"GBM spot must be > 0, got {self.spot}")
        if self.vol < 0:
            raise ConfigurationError(f"GBM vol must be >= 0, got {self.vol}")

    @property
    def initial_state(self) -> float:
        return self.spot

    def scaled(self, stress_multiplier: float) -> "GBM":
        return GBM(self.spot, self.drift, self.vol * stress_multiplier)


@dataclass(frozen=True)
class ShortRate1F:
    """dr = a (r0 - r) dt + sigma dW, started at r0."""

    mean_reversion: float
    vol: float
    r0: float

    def __post_init__(self):
        if not self.mean_reversion > 0:
            raise ConfigurationError("mean reversion must be > 0")
        if self.vol < 0:
            raise ConfigurationError(f"short-rate vol must be >= 0, got {self.vol}")

    @property
    def initial_state(self) -> float:
        return self.r0

    def scaled(self, stress_multiplier: float) -> "ShortRate1F":
        return ShortRate1F(self.mean_reversion, self.vol * stress_multiplier, self.r0)

    def mean(self, t, r=None):
        r = self.r0 if r is None else r
        decay = np.exp(-self.mean_reversion * np.asarray(t, dtype=float))
        return self.r0 + (r - self.r0) * decay

    def std(self, t):
        a = self.mean_reversion
        t = np.asarray(t, dtype=float)
        return self.vol * np.sqrt(-np.expm1(-2.0 * a * t) / (2.0 * a))

    def bond_b(self, tau):
        a = self.mean_reversion
        return -np.expm1(-a * np.asarray(tau, dtype=float)) / a

    def zcb(self, tau, r):
        """Zero-coupon bond price for maturity ``tau`` years ahead at short rate ``r``."""
        a, s, theta = self.mean_reversion, self.vol, self.r0
        tau = np.asarray(tau, dtype=float)
        b = self.bond_b(tau)
        log_a = (theta - s * s / (2.0 * a * a)) * (b - tau) - s * s * b * b / (4.0 * a)
        return np.exp(log_a - b * r)


ModelSpec = Union[GBM, ShortRate1F]


@dataclass(frozen=True)
class MeasureConfig:
    """``none`` keeps time-t values undiscounted; ``inverse_discount`` additionally
    discounts expected exposures by the initial model curve in CVA sums."""

    discounting: str = "none"

    def __post_init__(self):
        if self.discounting not in ("none", "inverse_discount"):
            raise ConfigurationError(f"unknown discounting {self.discounting!r}")


@dataclass(frozen=True, eq=False)
class PathSet:
    model: ModelSpec
    grid: TimeGrid
    seed: int
    states: np.ndarray  # (n_paths, n_dates)
    antithetic: bool = False
    _driver: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def n_dates(self) -> int:
        return self.states.shape[1]

    def state_at(self, t: float) -> np.ndarray:
        """State vector at time ``t``; the model's initial state at t = 0 even when
        0 is not itself a grid point."""
        i = self.grid.find(t)
        if i is not None:
            return self.states[:, i]
        if abs(t) <= TIME_TOL:
            return np.full(self.n_paths, self.model.initial_state)
        raise ConfigurationError(f"time {t!r} is not on the simulation grid")

    def standardized_driver(self) -> np.ndarray:
        """Per-path, per-date standard normal equivalent of the state.

        GBM: (log(S_t/S_0) - (mu - sigma^2/2) t) / (sigma sqrt t); short rate:
        (r_t - E r_t) / sd(r_t). Zero where the state is deterministic.
        """
        if "z" in self._driver:
            return self._driver["z"]
        t = self.grid.points
        m = self.model
        if isinstance(m, GBM):
            sd = m.vol * np.sqrt(t)
            centred = np.log(self.states / m.spot) - (m.drift - 0.5 * m.vol**2) * t
        else:
            sd = m.std(t)
            centred = self.states - m.mean(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(sd > 0, centred / np.where(sd > 0, sd, 1.0), 0.0)
        z.setflags(write=False)
        self._driver["z"] = z
        return z


def _block_normals(seed: int, block: int, rows: int, cols: int, antithetic: bool) -> np.ndarray:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(block,))
    rng = np.random.Generator(np.random.Philox(ss))
    if not antithetic:
        return rng.standard_normal((rows, cols))
    base = rng.standard_normal(((rows + 1) // 2, cols))
    z = np.empty((rows, cols))
    z[0::2] = base
    z[1::2] = -base[: rows // 2]
    return z


def _evolve(model: ModelSpec, dt: np.ndarray, z: np.ndarray) -> np.ndarray:
    if isinstance(model, GBM):
        incr = (model.drift - 0.5 * model.vol**2) * dt + model.vol * np.sqrt(dt) * z
        return model.spot * np.exp(np.cumsum(incr, axis=1))
    a, theta = model.mean_reversion, model.r0
    decay = np.exp(-a * dt)
    sd = model.vol * np.sqrt(-np.expm1(-2.0 * a * dt) / (2.0 * a))
    out = np.empty_like(z)
    r = np.full(z.shape[0], model.r0)
    for k in range(z.shape[1]):
        r = theta + (r - theta) * decay[k] + sd[k] * z[:, k]
        out[:, k] = r
    return out


def generate_paths(
    model: ModelSpec,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    antithetic: bool = False,
    threads: Optional[int] = None,
) -> PathSet:
    """Sample ``n_paths`` paths of the model state on ``grid``.

    Each block of PATH_BLOCK paths owns an independent Philox stream keyed by
    (seed, block index), so results do not depend on ``threads`` or on how
    many further paths are requested.
    """
    if not isinstance(grid, TimeGrid):
        raise ConfigurationError("grid must be a TimeGrid")
    if int(n_paths) < 1:
        raise ConfigurationError(f"n_paths must be >= 1, got {n_paths}")
    if seed < 0 or seed >= 2**64:
        raise ConfigurationError("seed must be a non-negative 64-bit integer")
    n_paths = int(n_paths)
    dt = np.diff(np.concatenate(([0.0], grid.points)))
    n_blocks = -(-n_paths // PATH_BLOCK)
    states = np.empty((n_paths, len(grid)))

    def work(b: int) -> None:
        lo = b * PATH_BLOCK
        hi = min(n_paths, lo + PATH_BLOCK)
        z = _block_normals(seed, b, hi - lo, len(grid), antithetic)
        states[lo:hi] = _evolve(model, dt, z)

    workers = threads or os.cpu_count() or 1
    if workers > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, range(n_blocks)))
    else:
        for b in range(n_blocks):
            work(b)
    states.setflags(write=False)
    return PathSet(model=model, grid=grid, seed=int(seed), states=states, antithetic=antithetic)


def _check_conditional_args(horizon: float, q, stress_multiplier: float) -> None:
    if not horizon > 0:
        raise ConfigurationError(f"horizon must be > 0, got {horizon}")
    qa = np.asarray(q, dtype=float)
    if np.any((qa <= 0) | (qa >= 1)):
        raise ConfigurationError(f"quantile must lie in (0, 1), got {q}")
    if stress_multiplier < 1:
        raise ConfigurationError(f"stress multiplier must be >= 1, got {stress_multiplier}")


def conditional_sample(model: ModelSpec, state, horizon: float, z, stress_multiplier: float = 1.0):
    """Model state ``horizon`` years ahead for standard normal draw(s) ``z``."""
    m = model.scaled(stress_multiplier)
    state = np.asarray(state, dtype=float)
    z = np.asarray(z, dtype=float)
    if isinstance(m, GBM):
        return state * np.exp((m.drift - 0.5 * m.vol**2) * horizon + m.vol * math.sqrt(horizon) * z)
    return m.mean(horizon, state) + m.std(horizon) * z


def conditional_value_quantile(
    model: ModelSpec, state, horizon: float, q: float, stress_multiplier: float = 1.0
):
    """q-quantile of the state ``horizon`` years ahead given the current state,
    with the model vol multiplied by ``stress_multiplier``."""
    _check_conditional_args(horizon, q, stress_multiplier)
    return conditional_sample(model, state, horizon, norm.ppf(q), stress_multiplier)
