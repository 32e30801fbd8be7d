"""Limit checks, incurred-CVA limit adjustment and loss-appetite allocation."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError
from .metrics import IncurredCVA, Profile

METRIC_KINDS = ("PFE", "PFL", "aPFL", "paPFL")
ADJUSTED_KINDS = ("aPFL", "paPFL")


@dataclass(frozen=True)
class LimitSpec:
    counterparty: str
    netting_set: str
    metric: str
    q: float
    limit: float
    capacity_exhausted: bool = False

    def __post_init__(self):
        if self.metric not in METRIC_KINDS:
            raise ConfigurationError(f"unknown limit metric {self.metric!r}")
        if not 0 < self.q < 1:
            raise ConfigurationError("limit quantile must lie in (0, 1)")
        if self.limit < 0:
            raise ConfigurationError("limit must be >= 0")


@dataclass(frozen=True, eq=False)
class BreachReport:
    counterparty: str
    netting_set: str
    metric: str
    q: float
    limit: float
    t_years: np.ndarray
    headroom: np.ndarray
    first_breach: Optional[float]
    max_utilization: float
    capacity_exhausted: bool = False

    @property
    def breached(self) -> bool:
        return self.first_breach is not None

    def to_dict(self) -> dict:
        return {
            "counterparty": self.counterparty,
            "netting_set": self.netting_set,
            "metric": self.metric,
            "q": self.q,
            "limit": self.limit,
            "breached": self.breached,
            "first_breach_t_years": self.first_breach,
            "max_utilization": self.max_utilization if math.isfinite(self.max_utilization) else "inf",
            "capacity_exhausted": self.capacity_exhausted,
            "t_years": [float(t) for t in self.t_years],
            "headroom": [float(h) for h in self.headroom],
        }


def check_limit(profile: Profile, spec: LimitSpec) -> BreachReport:
    """Headroom per date; a breach is any date where the profile exceeds the limit."""
    if profile.kind != spec.metric:
        raise ConfigurationError(f"profile metric {profile.kind} does not match limit metric {spec.metric}")
    if abs(profile.q - spec.q) > 1e-12:
        raise ConfigurationError(f"profile q={profile.q} does not match limit q={spec.q}")
    values = profile.values
    headroom = spec.limit - values
    over = np.flatnonzero(values > spec.limit)
    first = float(profile.grid.points[over[0]]) if over.size else None
    peak = float(values.max()) if values.size else 0.0
    if spec.limit > 0:
        util = peak / spec.limit
    else:
        util = math.inf if peak > 0 else 0.0
    return BreachReport(
        spec.counterparty,
        spec.netting_set,
        spec.metric,
        spec.q,
        spec.limit,
        profile.grid.points,
        headroom,
        first,
        util,
        spec.capacity_exhausted,
    )


def adjust_limit(spec: LimitSpec, x) -> LimitSpec:
    """Shift an aPFL/paPFL limit down by incurred CVA, floored at zero."""
    if spec.metric not in ADJUSTED_KINDS:
        raise ConfigurationError(f"incurred CVA adjusts only aPFL/paPFL limits, not {spec.metric}")
    x = float(x.x if isinstance(x, IncurredCVA) else x)
    if x < 0:
        raise ConfigurationError("incurred CVA must be >= 0")
    adjusted = max(spec.limit - x, 0.0)
    return replace(spec, limit=adjusted, capacity_exhausted=spec.limit - x <= 0 and x > 0)


def check_paired(profile: Profile, spec: LimitSpec, x=None) -> BreachReport:
    """Check a profile against its limit, applying the incurred-CVA limit shift
    for adjusted metrics in the same step as the profile shift."""
    if spec.metric in ADJUSTED_KINDS:
        spec = adjust_limit(spec, profile.incurred_cva if x is None else x)
    return check_limit(profile, spec)


def allocate_appetite(total: float, weights: Sequence, metric: str = "PFL", q: float = 0.95,
                      netting_set: str = "*") -> list:
    """Split a bank-wide loss appetite across counterparties in proportion to
    non-negative weights, given as (counterparty, weight) pairs."""
    pairs = [(str(c), float(w)) for c, w in weights]
    if any(w < 0 for _, w in pairs):
        raise ConfigurationError("allocation weights must be >= 0")
    wsum = math.fsum(w for _, w in pairs)
    if not wsum > 0:
        raise ConfigurationError("allocation weights must not all be zero")
    return [LimitSpec(c, netting_set, metric, q, total * (w / wsum)) for c, w in pairs]


_LIMIT_COLUMNS = ["counterparty", "netting_set", "metric", "q", "limit"]


def read_limits_csv(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != _LIMIT_COLUMNS:
            raise ConfigurationError(f"{path}: limits columns must be {','.join(_LIMIT_COLUMNS)}")
        out = []
        for line, rec in enumerate(reader, start=2):
            try:
                out.append(
                    LimitSpec(rec["counterparty"], rec["netting_set"], rec["metric"], float(rec["q"]), float(rec["limit"]))
                )
            except (ValueError, ConfigurationError) as exc:
                raise ConfigurationError(f"{path}:{line}: {exc}") from exc
    return out


def write_limits_csv(specs: Sequence[LimitSpec], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_LIMIT_COLUMNS)
        for s in specs:
            w.writerow([s.counterparty, s.netting_set, s.metric, repr(s.q), repr(s.limit)])


def write_breach_reports(reports: Sequence[BreachReport], path) -> None:
    with open(path, "w") as fh:
        json.dump({"any_breach": any(r.breached for r in reports), "reports": [r.to_dict() for r in reports]}, fh, indent=1)
        fh.write("\n")
