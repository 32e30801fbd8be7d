"""Per-date, per-path conditional exposure distribution (the exposure cube)."""

from __future__ import annotations

import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .collateral import CollateralContext, CSATerms, IMTerms
from .errors import ConfigurationError, InputError, NumericalError
from .instruments import Portfolio
from .market_models import PathSet, TimeGrid

CUBE_MAGIC = b"PFLC"
CUBE_VERSION = 1
_HEADER = struct.Struct("<4sIQQQ")  # magic, version, n_dates, n_paths, seed


@dataclass(frozen=True, eq=False)
class ExposureCube:
    grid: TimeGrid
    raw: np.ndarray  # (n_dates, n_paths)
    seed: int = 0
    scenario_hash: str = ""

    def __post_init__(self):
        raw = np.asarray(self.raw, dtype=float)
        if raw.ndim != 2 or raw.shape[0] != len(self.grid):
            raise ConfigurationError(
                f"cube shape {raw.shape} inconsistent with grid of {len(self.grid)} dates"
            )
        if not np.all(np.isfinite(raw)):
            raise NumericalError("exposure cube contains non-finite values")
        raw.setflags(write=False)
        floored = np.maximum(raw, 0.0)
        floored.setflags(write=False)
        object.__setattr__(self, "raw", raw)
        object.__setattr__(self, "_floored", floored)

    @property
    def floored(self) -> np.ndarray:
        return self._floored

    @property
    def n_dates(self) -> int:
        return self.raw.shape[0]

    @property
    def n_paths(self) -> int:
        return self.raw.shape[1]

    @property
    def provenance(self) -> tuple:
        return self.seed, self.scenario_hash

    def scaled(self, factor: float) -> "ExposureCube":
        return ExposureCube(self.grid, self.raw * factor, self.seed, self.scenario_hash)

    def dump(self, path) -> None:
        """Write the little-endian binary format: header, grid points, raw
        values (date-major)."""
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(CUBE_MAGIC, CUBE_VERSION, self.n_dates, self.n_paths, self.seed))
            fh.write(self.grid.points.astype("<f8").tobytes())
            fh.write(np.ascontiguousarray(self.raw, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "ExposureCube":
        with open(path, "rb") as fh:
            head = fh.read(_HEADER.size)
            if len(head) != _HEADER.size:
                raise InputError(f"{path}: truncated cube header")
            magic, version, n_dates, n_paths, seed = _HEADER.unpack(head)
            if magic != CUBE_MAGIC or version != CUBE_VERSION:
                raise InputError(f"{path}: not a version-{CUBE_VERSION} PFLC cube")
            grid = np.frombuffer(fh.read(8 * n_dates), dtype="<f8")
            raw = np.frombuffer(fh.read(8 * n_dates * n_paths), dtype="<f8")
        if grid.size != n_dates or raw.size != n_dates * n_paths:
            raise InputError(f"{path}: truncated cube body")
        return cls(TimeGrid(grid.astype(float)), raw.reshape(n_dates, n_paths).astype(float), int(seed))


def build_exposure_cube(
    paths: PathSet,
    portfolio: Portfolio,
    csa: Optional[CSATerms] = None,
    im_terms: Optional[IMTerms] = None,
    deltas: Optional[Sequence] = None,
    grid: Optional[TimeGrid] = None,
    scenario_hash: str = "",
    threads: Optional[int] = None,
) -> ExposureCube:
    """Conditional exposure on every path at every date of ``grid``.

    ``grid`` (the reporting grid) defaults to the simulation grid and must be a
    subset of it; with a CSA the simulation grid must also hold each reporting
    date's t - MPOR companion.
    """
    if grid is None:
        grid = paths.grid
    rows = []
    for t in grid.points:
        i = paths.grid.find(t)
        if i is None:
            raise ConfigurationError(f"reporting date {t!r} is not on the simulation grid")
        rows.append(i)
    ctx = CollateralContext(paths, portfolio, csa, im_terms, tuple(deltas) if deltas else None)
    raw = np.empty((len(rows), paths.n_paths))

    def work(r: int) -> None:
        raw[r] = ctx.exposure(rows[r])

    workers = threads or os.cpu_count() or 1
    if workers > 1 and len(rows) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, range(len(rows))))
    else:
        for r in range(len(rows)):
            work(r)
    return ExposureCube(grid, raw, paths.seed, scenario_hash)
