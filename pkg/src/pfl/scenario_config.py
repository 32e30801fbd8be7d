"""Scenario files: loading, validation, hashing and overrides.

A scenario is a YAML document (conventionally ``*.scenario``) checked against
``scenario_schema.json``. Unit-bearing keys carry their unit in the name. File
references are resolved relative to the scenario file; ``output_dir`` is
resolved relative to the working directory and may be replaced through the
``PFL_OUTPUT_DIR`` environment variable.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import jsonschema
import numpy as np
import yaml

from .collateral import CSATerms, DEFAULT_SCHEDULE, DeltaVector, IMTerms, classical_plus, load_schedule_table
from .errors import ConfigurationError
from .instruments import ForwardSpec, Portfolio, SwapSpec, par_rate
from .market_models import GBM, MeasureConfig, PathSet, ShortRate1F, TimeGrid, business_days
from .metrics import ConstantLGD, CorrelatedLGD, CreditCurve, ProtectionProfile, TermStructureLGD, protection_profile

OUTPUT_ENV = "PFL_OUTPUT_DIR"

DEFAULTS = {
    "counterparty": "CPTY",
    "antithetic": False,
    "measure": {"discounting": "none"},
    "csa": None,
    "initial_margin": {"mode": "none"},
    "deltas": {"convention": "classical_plus"},
    "lgd": {"type": "constant", "value": 0.6},
    "credit": None,
    "protection": [],
    "metrics": [{"kind": "PFE", "q": [0.95]}, {"kind": "PFL", "q": [0.95]}],
    "limits_file": None,
    "plot": {},
}

CSA_DEFAULTS = {
    "threshold": 0.0,
    "minimum_transfer_amount": 0.0,
    "independent_amount": 0.0,
    "call_frequency_business_days": 1,
    "mpor_business_days": 10,
    "flow_netting": False,
}

IM_DEFAULTS = {"mode": "none", "q": 0.99, "horizon_business_days": 10, "stress_multiplier": 1.0}


@lru_cache(maxsize=1)
def schema() -> dict:
    return json.loads(resources.files("pfl").joinpath("scenario_schema.json").read_text())


def shipped_scenarios() -> dict:
    """Name -> path of the scenario files bundled with the package."""
    root = resources.files("pfl").joinpath("scenarios")
    return {Path(p.name).stem: Path(str(p)) for p in root.iterdir() if p.name.endswith(".scenario")}


def _key_path(err: jsonschema.ValidationError) -> str:
    parts = [str(p) for p in err.absolute_path]
    return ".".join(parts) if parts else "<root>"


def validate_document(doc) -> None:
    """Raise ConfigurationError naming the offending key path on any schema violation."""
    validator = jsonschema.Draft202012Validator(schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise ConfigurationError(f"scenario key {_key_path(err)}: {err.message}")


def _with_defaults(doc: dict) -> dict:
    out = copy.deepcopy(doc)
    for key, default in DEFAULTS.items():
        out.setdefault(key, copy.deepcopy(default))
    out["measure"] = {"discounting": "none", **out["measure"]}
    out["model"].setdefault("vol_stress_multiplier", 1.0)
    out["grid"].setdefault("extra_dates_years", [])
    out["grid"].setdefault("flow_adjacent_dates", True)
    out["portfolio"].setdefault("netting_set", "NS1")
    for trade in out["portfolio"]["trades"]:
        if trade["type"] == "swap":
            trade.setdefault("direction", "pay_fixed")
            trade.setdefault("start_years", 0.0)
            trade.setdefault("payments_per_year", 1)
    if out["csa"] is not None:
        out["csa"] = {**CSA_DEFAULTS, **out["csa"]}
    out["initial_margin"] = {**IM_DEFAULTS, **out["initial_margin"]}
    if out["credit"] is not None:
        out["credit"] = {"lgd": 0.6, "forward_cva": False, **out["credit"]}
    for pos in out["protection"]:
        pos.setdefault("lgd", 0.6)
    out.setdefault("output_dir", os.path.join("out", out["name"]))
    out["plot"] = {"histogram_bins": 60, **out["plot"]}
    return out


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads YAML 1.2 floats such as 1e8 (YAML 1.1 only
    accepts 1.0e+8)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(\d+\.?\d*|\.\d+)[eE][-+]?\d+$"),
    list("-+0123456789."),
)


def _yaml_load(text: str):
    return yaml.load(text, Loader=_Loader)


def _parse_value(text: str):
    try:
        return _yaml_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cannot parse override value {text!r}: {exc}") from exc


def apply_overrides(doc: dict, overrides: Sequence[str]) -> dict:
    """Apply ``dotted.key=value`` overrides (list items by integer index);
    values are parsed as YAML scalars or flow collections."""
    out = copy.deepcopy(doc)
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not of the form key=value")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        if not all(parts):
            raise ConfigurationError(f"override {item!r} has an empty key segment")
        node = out
        for depth, part in enumerate(parts):
            last = depth == len(parts) - 1
            if isinstance(node, list):
                try:
                    idx = int(part)
                    node[idx]
                except (ValueError, IndexError):
                    raise ConfigurationError(f"override key {key}: no list item {part!r}") from None
                if last:
                    node[idx] = _parse_value(text)
                else:
                    node = node[idx]
            elif isinstance(node, dict):
                if last:
                    node[part] = _parse_value(text)
                else:
                    if node.get(part) is None:
                        node[part] = {}
                    node = node[part]
            else:
                raise ConfigurationError(f"override key {key}: cannot descend into a scalar")
    return out


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def scenario_hash(doc: dict, files: dict) -> str:
    """sha256 of the canonical JSON of the normalised document, with output_dir
    and file locations dropped and referenced file contents digested in."""
    content = copy.deepcopy(doc)
    content.pop("output_dir", None)
    content.pop("limits_file", None)
    content.get("initial_margin", {}).pop("schedule_file", None)
    payload = {"scenario": content, "files": {k: _file_digest(p) for k, p in sorted(files.items())}}
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(canon.encode()).hexdigest()


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    counterparty: str
    model: object  # simulation model, vol stress applied
    base_model: object  # unstressed model, used for margin estimation
    measure: MeasureConfig
    grid: TimeGrid  # reporting dates
    sim_grid: TimeGrid  # reporting dates plus MPOR companions and fixings
    n_paths: int
    seed: int
    antithetic: bool
    portfolio: Portfolio
    csa: Optional[CSATerms]
    im_terms: Optional[IMTerms]
    deltas: Optional[tuple]
    lgd_spec: dict
    credit: Optional[CreditCurve]
    forward_cva: bool
    protection: tuple  # (notional, maturity_years, lgd)
    metrics: tuple  # (kind, q) pairs in request order
    limits_file: Optional[Path]
    output_dir: Path
    plot: dict
    document: dict = field(repr=False)
    source: Optional[Path] = None
    hash: str = ""

    def __eq__(self, other) -> bool:
        # the hash covers all content except file locations and output_dir
        return isinstance(other, Scenario) and self.hash == other.hash and self.output_dir == other.output_dir

    __hash__ = None

    def lgd_model(self, paths: Optional[PathSet] = None):
        spec = self.lgd_spec
        if spec["type"] == "constant":
            return ConstantLGD(spec["value"])
        if spec["type"] == "term_structure":
            return TermStructureLGD(tuple((s["from_years"], s["value"]) for s in spec["steps"]))
        if paths is None:
            raise ConfigurationError("correlated LGD needs the simulated paths")
        return CorrelatedLGD.from_paths(spec["base"], spec["beta"], paths, self.grid)

    def protection_profile(self) -> ProtectionProfile:
        total = ProtectionProfile.none(self.grid)
        for notional, maturity, lgd in self.protection:
            total = total + protection_profile(notional, maturity, lgd, self.grid)
        return total

    def with_output_dir(self, path) -> "Scenario":
        doc = dict(self.document, output_dir=str(path))
        return _build(doc, self.source, Path(path))


def _model(spec: dict):
    if spec["type"] == "gbm":
        base = GBM(spec["spot"], spec["drift_per_year"], spec["vol_per_sqrt_year"])
    else:
        base = ShortRate1F(spec["mean_reversion_per_year"], spec["vol_abs_per_sqrt_year"], spec["r0_continuous"])
    return base, base.scaled(spec["vol_stress_multiplier"])


def _trades(spec: dict, base_model) -> tuple:
    out = []
    for k, t in enumerate(spec["trades"]):
        try:
            if t["type"] == "swap":
                rate = t["fixed_rate"]
                if rate == "par":
                    rate = par_rate(base_model, t["maturity_years"], t["payments_per_year"], t["start_years"])
                out.append(
                    SwapSpec(t["notional"], float(rate), t["direction"], t["start_years"], t["maturity_years"],
                             t["payments_per_year"])
                )
            else:
                out.append(ForwardSpec(t["notional_units"], t["strike"], t["maturity_years"]))
        except ConfigurationError as exc:
            raise ConfigurationError(f"scenario key portfolio.trades.{k}: {exc}") from exc
    return tuple(out)


def _resolve(ref: str, base_dir: Path, key: str) -> Path:
    path = Path(ref)
    if not path.is_absolute():
        path = base_dir / path
    if not path.is_file():
        raise ConfigurationError(f"scenario key {key}: file {ref!r} not found (looked in {path})")
    return path


def _grids(doc: dict, portfolio: Portfolio, csa: Optional[CSATerms]) -> tuple:
    g = doc["grid"]
    end = g["end_years"]
    report = TimeGrid.uniform(end, business_days(g["step_business_days"]))
    extra = [t for t in g["extra_dates_years"] if t <= end]
    report = report.merged(extra)
    mpor = csa.mpor_years if csa is not None else business_days(CSA_DEFAULTS["mpor_business_days"])
    flows = portfolio.flow_times[portfolio.flow_times <= end + 1e-12]
    if g["flow_adjacent_dates"] and flows.size:
        # flow dates and the middle of the post-flow spike window
        adj = np.concatenate([flows, flows + 0.5 * mpor])
        report = report.merged(adj[adj <= end])
    sim = report.merged(portfolio.fixing_times[portfolio.fixing_times <= end])
    sim = sim.merged(flows)
    if csa is not None:
        sim = sim.merged(report.points - csa.mpor_years)
    return report, sim


def _build(doc: dict, source: Optional[Path], output_dir: Optional[Path] = None) -> Scenario:
    base_dir = source.parent if source is not None else Path.cwd()
    base_model, model = _model(doc["model"])
    portfolio = Portfolio(_trades(doc["portfolio"], base_model), doc["portfolio"]["netting_set"])
    files = {}

    csa = None
    if doc["csa"] is not None:
        c = doc["csa"]
        try:
            csa = CSATerms(
                c["threshold"], c["minimum_transfer_amount"], c["independent_amount"],
                c["call_frequency_business_days"], c["mpor_business_days"], c["flow_netting"],
            )
        except ConfigurationError as exc:
            raise ConfigurationError(f"scenario key csa: {exc}") from exc

    im = doc["initial_margin"]
    im_terms = None
    if im["mode"] != "none":
        if csa is None:
            raise ConfigurationError("scenario key initial_margin: IM requires a csa section")
        schedule = DEFAULT_SCHEDULE
        if "schedule_file" in im:
            path = _resolve(im["schedule_file"], base_dir, "initial_margin.schedule_file")
            schedule = load_schedule_table(path)
            files["schedule"] = path
        im_terms = IMTerms(im["mode"], schedule, im["q"], im["horizon_business_days"], im["stress_multiplier"],
                           base_model)
    elif "schedule_file" in im:
        raise ConfigurationError("scenario key initial_margin.schedule_file: given but IM mode is none")

    deltas = None
    d = doc["deltas"]
    if d["convention"] == "custom":
        if csa is None:
            raise ConfigurationError("scenario key deltas: custom deltas require a csa section")
        try:
            bank, cpty = (DeltaVector(**d[k]) for k in ("bank_business_days", "counterparty_business_days"))
        except KeyError as exc:
            raise ConfigurationError(f"scenario key deltas: custom convention needs {exc.args[0]}") from None
        for name, vec in (("bank", bank), ("counterparty", cpty)):
            try:
                vec.validate(csa.mpor_days)
            except ConfigurationError as exc:
                raise ConfigurationError(f"scenario key deltas.{name}_business_days: {exc}") from exc
        deltas = (bank, cpty)
    elif set(d) - {"convention"}:
        raise ConfigurationError("scenario key deltas: explicit vectors need convention: custom")
    elif csa is not None:
        deltas = classical_plus(csa.mpor_days)

    credit = None
    if doc["credit"] is not None:
        credit = CreditCurve.from_bps(doc["credit"]["cds_spread_bps"], doc["credit"]["lgd"])
    metrics = []
    for m in doc["metrics"]:
        for q in m["q"]:
            if (m["kind"], q) in metrics:
                raise ConfigurationError(f"scenario key metrics: {m['kind']} q={q} requested twice")
            metrics.append((m["kind"], q))
            if m["kind"] in ("aPFL", "paPFL") and credit is None:
                raise ConfigurationError(f"scenario key metrics: {m['kind']} needs a credit section for incurred CVA")
    if doc["lgd"]["type"] == "term_structure":
        starts = [s["from_years"] for s in doc["lgd"]["steps"]]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ConfigurationError("scenario key lgd.steps: from_years must increase")

    limits_file = None
    if doc["limits_file"] is not None:
        limits_file = _resolve(doc["limits_file"], base_dir, "limits_file")
        files["limits"] = limits_file

    report, sim = _grids(doc, portfolio, csa)
    plot = dict(doc["plot"])
    if "distribution_date_years" in plot and report.find(plot["distribution_date_years"]) is None:
        raise ConfigurationError(
            f"scenario key plot.distribution_date_years: {plot['distribution_date_years']} is not a grid date"
        )
    if output_dir is None:
        output_dir = Path(os.environ.get(OUTPUT_ENV) or doc["output_dir"])

    return Scenario(
        name=doc["name"],
        counterparty=doc["counterparty"],
        model=model,
        base_model=base_model,
        measure=MeasureConfig(doc["measure"]["discounting"]),
        grid=report,
        sim_grid=sim,
        n_paths=doc["n_paths"],
        seed=doc["seed"],
        antithetic=doc["antithetic"],
        portfolio=portfolio,
        csa=csa,
        im_terms=im_terms,
        deltas=deltas,
        lgd_spec=copy.deepcopy(doc["lgd"]),
        credit=credit,
        forward_cva=bool(doc["credit"] and doc["credit"]["forward_cva"]),
        protection=tuple((p["notional"], p["maturity_years"], p["lgd"]) for p in doc["protection"]),
        metrics=tuple(metrics),
        limits_file=limits_file,
        output_dir=output_dir,
        plot=plot,
        document=doc,
        source=source,
        hash=scenario_hash(doc, files),
    )


def parse_scenario(doc, source: Optional[Path] = None, overrides: Sequence[str] = ()) -> Scenario:
    """Validate and build a Scenario from an already parsed document."""
    if not isinstance(doc, dict):
        raise ConfigurationError("scenario must be a mapping at the top level")
    doc = apply_overrides(doc, overrides)
    validate_document(doc)
    return _build(_with_defaults(doc), source)


def load_scenario(path, overrides: Sequence[str] = ()) -> Scenario:
    path = Path(path).resolve()
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read scenario {path}: {exc}") from exc
    try:
        doc = _yaml_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: invalid YAML: {exc}") from exc
    return parse_scenario(doc, path, overrides)


def serialize(scenario: Scenario) -> str:
    """YAML text of the normalised document (defaults filled in). File references
    are written as absolute paths so the text loads from any location."""
    doc = copy.deepcopy(scenario.document)
    base = scenario.source.parent if scenario.source is not None else Path.cwd()
    if doc.get("limits_file"):
        doc["limits_file"] = str((base / doc["limits_file"]).resolve())
    if doc["initial_margin"].get("schedule_file"):
        doc["initial_margin"]["schedule_file"] = str((base / doc["initial_margin"]["schedule_file"]).resolve())
    return yaml.safe_dump(doc, sort_keys=True)
