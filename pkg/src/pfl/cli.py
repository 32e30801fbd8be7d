"""Command-line entry points: run a scenario, emit plot data, check limits,
validate scenario files.

Exit codes: 0 clean, 2 configuration or input error, 3 limit breach,
4 numerical failure, 1 any other engine error.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, InputError, NumericalError, PFLError
from .exposure import ExposureCube, build_exposure_cube
from .instruments import value
from .limits import check_paired, read_limits_csv, write_breach_reports
from .market_models import generate_paths
from .metrics import (
    Profile,
    apfl_profile,
    forward_cva_profile,
    incurred_cva,
    papfl_profile,
    pfe_profile,
    pfl_pfe_ratio,
    pfl_profile,
)
from .scenario_config import Scenario, load_scenario, shipped_scenarios

log = logging.getLogger("pfl")

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_BREACH, EXIT_NUMERICAL = 0, 1, 2, 3, 4


@dataclass
class RunReport:
    scenario_hash: str
    scenario_name: str
    output_dir: Path
    n_paths: int
    n_dates: int
    seed: int
    profile_files: dict = field(default_factory=dict)  # stem -> {"csv": ..., "json": ...}
    ratio_files: dict = field(default_factory=dict)  # q -> {"csv": ..., "json": ...}
    breaches: list = field(default_factory=list)
    breach_file: Optional[Path] = None
    incurred_cva: Optional[float] = None
    timing_seconds: dict = field(default_factory=dict)
    # in-memory results, not serialised
    profiles: dict = field(default_factory=dict, repr=False)
    ratios: dict = field(default_factory=dict, repr=False)
    distributions: dict = field(default_factory=dict, repr=False)
    cube: Optional[ExposureCube] = field(default=None, repr=False)
    scenario: Optional[Scenario] = field(default=None, repr=False)

    @property
    def breached(self) -> bool:
        return any(b["breached"] for b in self.breaches)

    def to_dict(self) -> dict:
        rel = lambda p: str(Path(p).relative_to(self.output_dir))  # noqa: E731
        return {
            "scenario": self.scenario_name,
            "scenario_hash": self.scenario_hash,
            "seed": self.seed,
            "n_paths": self.n_paths,
            "n_dates": self.n_dates,
            "incurred_cva": self.incurred_cva,
            "profiles": {k: {f: rel(p) for f, p in v.items()} for k, v in self.profile_files.items()},
            "ratio_series": {repr(q): {f: rel(p) for f, p in v.items()} for q, v in self.ratio_files.items()},
            "breach_report": rel(self.breach_file) if self.breach_file else None,
            "breaches": self.breaches,
        }


def _write_ratio(grid, ratio: np.ndarray, q: float, out: Path) -> dict:
    csv_path = out / f"ratio_pfl_pfe_q{q!r}.csv"
    json_path = csv_path.with_suffix(".json")
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_years", "ratio"])
        for t, r in zip(grid.points, ratio):
            w.writerow([repr(float(t)), repr(float(r))])
    with open(json_path, "w") as fh:
        json.dump(
            {
                "series": "(PFL-PFE)/PFE",
                "q": q,
                "t_years": [float(t) for t in grid.points],
                "ratio": [None if math.isnan(r) else float(r) for r in ratio],
            },
            fh,
            indent=1,
        )
        fh.write("\n")
    return {"csv": csv_path, "json": json_path}


def _matching_limits(scenario: Scenario) -> list:
    if scenario.limits_file is None:
        return []
    specs = read_limits_csv(scenario.limits_file)
    ns = scenario.portfolio.netting_set
    return [
        s for s in specs
        if s.counterparty in (scenario.counterparty, "*") and s.netting_set in (ns, "*")
    ]


def run_scenario(scenario: Scenario, threads: Optional[int] = None, cube_dump=None) -> RunReport:
    """Simulate, compute every requested profile, check limits and write all
    outputs to ``scenario.output_dir``. The manifest is written last."""
    timing = {}
    t0 = time.perf_counter()
    paths = generate_paths(scenario.model, scenario.sim_grid, scenario.n_paths, scenario.seed,
                           scenario.antithetic, threads)
    timing["paths"] = time.perf_counter() - t0
    log.info("simulated %d paths on %d dates", paths.n_paths, paths.n_dates)

    t0 = time.perf_counter()
    cube = build_exposure_cube(paths, scenario.portfolio, scenario.csa, scenario.im_terms, scenario.deltas,
                               scenario.grid, scenario.hash, threads)
    timing["exposure"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    lgd = scenario.lgd_model(paths)
    x = None
    x_shift = None
    if scenario.credit is not None:
        x = incurred_cva(cube, scenario.credit, lgd, scenario.measure, scenario.base_model)
        x_shift = forward_cva_profile(cube, scenario.credit, lgd, scenario.measure, scenario.base_model) \
            if scenario.forward_cva else x
    y = scenario.protection_profile()
    profiles = {}
    for kind, q in scenario.metrics:
        if kind == "PFE":
            p = pfe_profile(cube, q)
        elif kind == "PFL":
            p = pfl_profile(cube, lgd, q)
        elif kind == "aPFL":
            p = apfl_profile(cube, lgd, x_shift, q)
        else:
            p = papfl_profile(cube, lgd, x_shift, y, q)
        if not np.all(np.isfinite(p.values)):
            raise NumericalError(f"{kind} q={q} profile has non-finite values")
        profiles[(kind, q)] = p
    ratios = {}
    for kind, q in scenario.metrics:
        if kind == "PFE" and ("PFL", q) in profiles:
            ratios[q] = pfl_pfe_ratio(profiles[("PFL", q)], profiles[("PFE", q)])
    timing["metrics"] = time.perf_counter() - t0

    distributions = {}
    t_plot = scenario.plot.get("distribution_date_years")
    if t_plot is not None:
        i = scenario.grid.index(t_plot)
        distributions["uncollateralized_value"] = value(scenario.portfolio, paths, scenario.grid.points[i])
        if scenario.csa is not None:
            distributions["collateralized_exposure"] = np.array(cube.raw[i])

    out = Path(scenario.output_dir)
    (out / "profiles").mkdir(parents=True, exist_ok=True)
    report = RunReport(
        scenario.hash, scenario.name, out, scenario.n_paths, len(scenario.grid), scenario.seed,
        incurred_cva=None if x is None else float(x),
        profiles=profiles, ratios=ratios, distributions=distributions, cube=cube, scenario=scenario,
    )
    for p in profiles.values():
        csv_path = out / "profiles" / f"{p.stem}.csv"
        json_path = csv_path.with_suffix(".json")
        p.to_csv(csv_path)
        p.to_json(json_path)
        report.profile_files[p.stem] = {"csv": csv_path, "json": json_path}
    for q, ratio in ratios.items():
        report.ratio_files[q] = _write_ratio(scenario.grid, ratio, q, out)

    reports = []
    for spec in _matching_limits(scenario):
        prof = profiles.get((spec.metric, spec.q))
        if prof is None:
            raise ConfigurationError(
                f"limit {spec.counterparty}/{spec.netting_set} {spec.metric} q={spec.q} has no computed profile"
            )
        reports.append(check_paired(prof, spec))
    report.breach_file = out / "breach_report.json"
    write_breach_reports(reports, report.breach_file)
    report.breaches = [
        {k: r.to_dict()[k] for k in ("counterparty", "netting_set", "metric", "q", "limit", "breached",
                                     "first_breach_t_years", "max_utilization", "capacity_exhausted")}
        for r in reports
    ]
    if cube_dump is not None:
        cube.dump(cube_dump)
    report.timing_seconds = timing
    _write_manifest(report, threads, cube_dump)
    return report


def _write_manifest(report: RunReport, threads, cube_dump) -> None:
    doc = {
        "report": report.to_dict(),
        "cube_dump": None if cube_dump is None else str(cube_dump),
        "threads": threads,
        "timing_seconds": {k: round(v, 6) for k, v in report.timing_seconds.items()},
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    with open(report.output_dir / "run_manifest.json", "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def _histogram(samples: np.ndarray, bins: int):
    """Density histogram over the central 99.8% of the samples (the tails of a
    calendar spread would otherwise squeeze the body into a few bins)."""
    lo, hi = np.quantile(samples, [0.001, 0.999])
    if not hi > lo:
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(samples, bins=bins, range=(lo, hi))
    density = counts / (samples.size * np.diff(edges))
    clipped = float(np.mean((samples < lo) | (samples > hi)))
    return edges, counts, density, clipped


def emit_plot_data(report: RunReport, series: Optional[Sequence[str]] = None, out_dir=None) -> Path:
    """Write plot-ready CSVs plus ``manifest.json`` naming each series.

    ``series`` selects profile stems for the overlay file (default: all
    computed profiles); a stem that was not computed is an error.
    """
    out = Path(out_dir) if out_dir is not None else report.output_dir / "plot_data"
    out.mkdir(parents=True, exist_ok=True)
    by_stem = {p.stem: p for p in report.profiles.values()}
    wanted = list(by_stem) if series is None else list(series)
    missing = [s for s in wanted if s not in by_stem]
    if missing:
        raise ConfigurationError(f"no computed profile for {', '.join(missing)}")
    entries = []

    if wanted:
        grid = by_stem[wanted[0]].grid
        path = out / "profile_overlay.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t_years"] + wanted)
            for i, t in enumerate(grid.points):
                w.writerow([repr(float(t))] + [repr(float(by_stem[s].values[i])) for s in wanted])
        entries.append({"file": path.name, "kind": "profile_overlay", "columns": ["t_years"] + wanted})
        for q, ratio in sorted(report.ratios.items()):
            name = f"ratio_pfl_pfe_q{q!r}"
            if f"pfe_q{q!r}" in wanted and f"pfl_q{q!r}" in wanted:
                path = out / f"{name}.csv"
                with open(path, "w", newline="") as fh:
                    w = csv.writer(fh, lineterminator="\n")
                    w.writerow(["t_years", "ratio"])
                    for t, r in zip(grid.points, ratio):
                        w.writerow([repr(float(t)), repr(float(r))])
                entries.append({"file": path.name, "kind": "ratio", "columns": ["t_years", "ratio"], "q": q})

    bins = report.scenario.plot.get("histogram_bins", 60) if report.scenario is not None else 60
    t_plot = report.scenario.plot.get("distribution_date_years") if report.scenario is not None else None
    for name, samples in report.distributions.items():
        edges, counts, density, clipped = _histogram(np.asarray(samples, dtype=float), bins)
        path = out / f"histogram_{name}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_left", "bin_right", "count", "density"])
            for k in range(counts.size):
                w.writerow([repr(float(edges[k])), repr(float(edges[k + 1])), int(counts[k]), repr(float(density[k]))])
        entries.append({
            "file": path.name,
            "kind": "histogram",
            "series": name,
            "t_years": t_plot,
            "columns": ["bin_left", "bin_right", "count", "density"],
            "fraction_outside_range": clipped,
        })

    with open(out / "manifest.json", "w") as fh:
        json.dump({"scenario": report.scenario_name, "scenario_hash": report.scenario_hash, "series": entries},
                  fh, indent=1)
        fh.write("\n")
    return out


def _resolve_scenario_arg(arg: str) -> Path:
    """A path, or the name of a shipped scenario."""
    p = Path(arg)
    if p.exists():
        return p
    shipped = shipped_scenarios()
    if arg in shipped:
        return shipped[arg]
    if p.stem in shipped and not p.parent.parts:
        return shipped[p.stem]
    raise ConfigurationError(f"scenario {arg!r} not found (shipped: {', '.join(sorted(shipped))})")


def _load(args) -> Scenario:
    scenario = load_scenario(_resolve_scenario_arg(args.scenario), args.override or ())
    if args.output_dir:
        scenario = scenario.with_output_dir(args.output_dir)
    return scenario


def _summary(report: RunReport) -> str:
    lines = [f"scenario {report.scenario_name}  hash {report.scenario_hash[:16]}  "
             f"{report.n_paths} paths x {report.n_dates} dates"]
    for (kind, q), p in report.profiles.items():
        lines.append(f"  {kind:6s} q={q!r:6s} max {p.values.max():.6g}")
    if report.incurred_cva is not None:
        lines.append(f"  incurred CVA {report.incurred_cva:.6g}")
    for b in report.breaches:
        state = "BREACH" if b["breached"] else "ok"
        lines.append(f"  limit {b['metric']} q={b['q']!r} {b['limit']:.6g}: {state}, "
                     f"max utilisation {b['max_utilization']}")
    lines.append(f"  outputs in {report.output_dir}")
    return "\n".join(lines)


def cmd_run(args) -> int:
    report = run_scenario(_load(args), args.threads, args.cube_dump)
    print(_summary(report))
    return EXIT_BREACH if report.breached else EXIT_OK


def cmd_plot_data(args) -> int:
    report = run_scenario(_load(args), args.threads, args.cube_dump)
    out = emit_plot_data(report, args.series)
    print(_summary(report))
    print(f"  plot data in {out}")
    return EXIT_BREACH if report.breached else EXIT_OK


def cmd_check_limits(args) -> int:
    profiles = [Profile.from_json(p) for p in args.profiles]
    specs = read_limits_csv(args.limits)
    specs = [
        s for s in specs
        if (args.counterparty is None or s.counterparty in (args.counterparty, "*"))
        and (args.netting_set is None or s.netting_set in (args.netting_set, "*"))
    ]
    by_key = {(p.kind, p.q): p for p in profiles}
    reports = []
    for spec in specs:
        prof = by_key.get((spec.metric, spec.q))
        if prof is None:
            raise ConfigurationError(f"no profile given for limit {spec.metric} q={spec.q}")
        reports.append(check_paired(prof, spec, args.incurred_cva))
    write_breach_reports(reports, args.output)
    for r in reports:
        print(f"{r.counterparty}/{r.netting_set} {r.metric} q={r.q!r} limit {r.limit:.6g}: "
              f"{'BREACH at t=' + repr(r.first_breach) if r.breached else 'ok'}")
    return EXIT_BREACH if any(r.breached for r in reports) else EXIT_OK


def cmd_validate(args) -> int:
    scenario = _load(args)
    print(f"{scenario.name}: ok  hash {scenario.hash}")
    print(f"  reporting dates {len(scenario.grid)}, simulation dates {len(scenario.sim_grid)}, "
          f"paths {scenario.n_paths}, seed {scenario.seed}")
    print(f"  metrics {', '.join(f'{k}@{q!r}' for k, q in scenario.metrics) or 'none'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pfl", description="Exposure and potential-future-loss engine")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_args(p):
        p.add_argument("scenario", help="scenario file, or the name of a shipped scenario")
        p.add_argument("--override", nargs="+", metavar="KEY=VALUE",
                       help="dotted-key overrides, e.g. n_paths=1000 seed=7 csa.flow_netting=false")
        p.add_argument("--output-dir", help="output directory (beats PFL_OUTPUT_DIR and the file)")

    def run_args(p):
        scenario_args(p)
        p.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
        p.add_argument("--cube-dump", type=Path, default=None, help="write the exposure cube to this file")

    p = sub.add_parser("run", help="simulate a scenario and write profiles, ratios and breach report")
    run_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("plot-data", help="run a scenario and write plot-ready CSVs")
    run_args(p)
    p.add_argument("--series", nargs="+", help="profile stems to overlay, e.g. pfe_q0.95 pfl_q0.95")
    p.set_defaults(func=cmd_plot_data)

    p = sub.add_parser("check-limits", help="check profile JSON files against a limits CSV")
    p.add_argument("profiles", nargs="+", type=Path, help="profile JSON files written by run")
    p.add_argument("--limits", type=Path, required=True)
    p.add_argument("--incurred-cva", type=float, default=None,
                   help="incurred CVA for aPFL/paPFL limits (default: the value stored in the profile)")
    p.add_argument("--counterparty")
    p.add_argument("--netting-set")
    p.add_argument("--output", type=Path, default=Path("breach_report.json"))
    p.set_defaults(func=cmd_check_limits)

    p = sub.add_parser("validate", help="check a scenario file and print its hash")
    scenario_args(p)
    p.set_defaults(func=cmd_validate)
    return parser


def _fail(exc: Exception, code: int) -> int:
    json.dump({"error": type(exc).__name__, "message": str(exc), "exit_code": code}, sys.stderr)
    sys.stderr.write("\n")
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", None) is not None and args.threads < 1:
        return _fail(ConfigurationError("--threads must be >= 1"), EXIT_CONFIG)
    try:
        return args.func(args)
    except (ConfigurationError, InputError) as exc:
        return _fail(exc, EXIT_CONFIG)
    except NumericalError as exc:
        return _fail(exc, EXIT_NUMERICAL)
    except PFLError as exc:
        return _fail(exc, EXIT_ERROR)
    except OSError as exc:
        return _fail(exc, EXIT_CONFIG)


if __name__ == "__main__":
    sys.exit(main())
