"""Scenario configuration and the two-tier simulation pipeline.

Order of a run: every company's VFL group (company + its stations) trains and
is scored first; the company-level federated forecast then becomes the
``vfl_forecast`` feature of that company's HFL dataset, and the HFL tier runs
and is scored across companies.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from . import datagen, forecaster as fc, hfl, incentive, vfl
from .domain import (
    CsvSchema,
    HierarchyConfig,
    Participant,
    Role,
    Tier,
    TimeSeriesDataset,
    align_by_date,
    load_csv,
    split_train_eval,
)
from .errors import ConfigurationError
from .simnet import MessageKind, Network, assert_privacy, raw_fingerprints

log = logging.getLogger(__name__)

BROKER = "incentive-broker"
COMPANY_FEATURES = ("temperature", "wind")
STATION_FEATURES = ("strategy",)
TARGET = "usage"
STACKED_FEATURE = "vfl_forecast"
BUNDLED = ("default", "paper_tables", "truthful_vs_random")


def derive_seed(base, participant_id) -> int:
    """Stable 64-bit seed for one participant from the scenario seed."""
    raw = hashlib.blake2b(f"{int(base)}:{participant_id}".encode(), digest_size=8).digest()
    return int.from_bytes(raw, "little")


@dataclass(frozen=True)
class Pools:
    r_data: float = 100.0
    r_model: float = 100.0

    def __post_init__(self):
        if self.r_data < 0 or self.r_model < 0:
            raise ConfigurationError("reward pools must be non-negative")


@dataclass(frozen=True)
class DataSource:
    gen: Optional[datagen.GenSpec] = None
    csv: Optional[Path] = None
    features: tuple = ()

    def to_dict(self):
        if self.gen is not None:
            return {"gen": self.gen.to_dict()}
        return {"csv": str(self.csv), "features": list(self.features)}


@dataclass(frozen=True)
class StationConfig:
    id: str
    source: DataSource


@dataclass(frozen=True)
class CompanyConfig:
    id: str
    source: DataSource
    stations: tuple = ()


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    seed: int
    companies: tuple
    train: fc.TrainConfig = field(default_factory=fc.TrainConfig)
    hfl_rounds: int = 50
    vfl_rounds: int = 200
    eval_window: float = 0.2
    hfl_pools: Pools = field(default_factory=Pools)
    vfl_pools: Pools = field(default_factory=Pools)
    injected_scores: dict = field(default_factory=dict)

    @property
    def hierarchy(self) -> HierarchyConfig:
        return HierarchyConfig(
            companies=tuple(c.id for c in self.companies),
            stations_by_company={c.id: tuple(s.id for s in c.stations) for c in self.companies},
            r_data=self.hfl_pools.r_data,
            r_model=self.hfl_pools.r_model,
        )

    def resolved(self) -> dict:
        """Fully resolved config document (derived seeds filled in)."""
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "train": self.train.to_dict(),
            "hfl_rounds": self.hfl_rounds,
            "vfl_rounds": self.vfl_rounds,
            "eval_window": self.eval_window,
            "pools": {
                "hfl": {"r_data": self.hfl_pools.r_data, "r_model": self.hfl_pools.r_model},
                "vfl": {"r_data": self.vfl_pools.r_data, "r_model": self.vfl_pools.r_model},
            },
            "companies": [
                {
                    "id": c.id,
                    "data": c.source.to_dict(),
                    "stations": [{"id": s.id, "data": s.source.to_dict()} for s in c.stations],
                }
                for c in self.companies
            ],
            "injected_scores": copy.deepcopy(self.injected_scores),
        }


def _source(doc, pid, seed, base_dir, defaults, features):
    if "gen" in doc:
        spec = {**defaults, **doc["gen"]}
        spec.setdefault("seed", derive_seed(seed, pid))
        return DataSource(gen=datagen.GenSpec.from_dict(spec))
    if "csv" in doc:
        path = Path(doc["csv"])
        if not path.is_absolute():
            path = Path(base_dir) / path
        if not path.exists():
            raise ConfigurationError(f"{pid}: data file {path} does not exist")
        return DataSource(csv=path, features=tuple(doc.get("features", features)))
    raise ConfigurationError(f"{pid}: data source needs 'gen' or 'csv'")


def parse_config(doc: dict, base_dir=".", seed_override=None) -> ScenarioConfig:
    known = {"scenario", "seed", "train", "hfl_rounds", "vfl_rounds", "eval_window",
             "pools", "companies", "injected_scores", "description"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigurationError(f"unknown config keys {sorted(unknown)}")
    seed = int(seed_override if seed_override is not None else doc.get("seed", 0))
    if not 0 <= seed < 2**64:
        raise ConfigurationError("seed must be an unsigned 64-bit integer")
    companies = []
    for cdoc in doc.get("companies", []):
        cid = str(cdoc["id"])
        cdata = cdoc.get("data", {"gen": {}})
        csrc = _source(cdata, cid, seed, base_dir, {}, COMPANY_FEATURES)
        # Stations inherit the company's calendar and climate settings.
        inherit = {}
        if csrc.gen is not None:
            inherit = {k: v for k, v in csrc.gen.to_dict().items()
                       if k not in ("seed", "strategy_mode")}
        stations = tuple(
            StationConfig(str(s["id"]), _source(s.get("data", {"gen": {}}), str(s["id"]), seed,
                                                base_dir, inherit, STATION_FEATURES))
            for s in cdoc.get("stations", [])
        )
        companies.append(CompanyConfig(cid, csrc, stations))
    if not companies:
        raise ConfigurationError("scenario has no companies")
    pools = doc.get("pools", {})
    window = doc.get("eval_window", 0.2)
    cfg = ScenarioConfig(
        scenario=str(doc.get("scenario", "unnamed")),
        seed=seed,
        companies=tuple(companies),
        train=fc.TrainConfig(**doc.get("train", {})),
        hfl_rounds=int(doc.get("hfl_rounds", 50)),
        vfl_rounds=int(doc.get("vfl_rounds", 200)),
        eval_window=window,
        hfl_pools=Pools(**pools.get("hfl", {})),
        vfl_pools=Pools(**pools.get("vfl", {})),
        injected_scores=doc.get("injected_scores", {}),
    )
    cfg.hierarchy  # validates station ownership
    if isinstance(window, float) and not 0 < window < 1:
        raise ConfigurationError("fractional eval_window must be in (0, 1)")
    if not isinstance(window, float) and int(window) < 2:
        raise ConfigurationError("eval_window must cover at least 2 days")
    if cfg.hfl_rounds < 1 or cfg.vfl_rounds < 1:
        raise ConfigurationError("round counts must be >= 1")
    with_stations = {bool(c.stations) for c in companies}
    if len(with_stations) > 1:
        raise ConfigurationError("either every company has stations or none does")
    return cfg


def bundled_path(name) -> Path:
    return Path(str(resources.files("hierfl") / "scenarios" / f"{name}.json"))


def load_config(path_or_name, seed_override=None) -> ScenarioConfig:
    """Load a config file, or a bundled scenario by name (e.g. ``default``)."""
    path = Path(path_or_name)
    if not path.exists() and str(path_or_name) in BUNDLED:
        path = bundled_path(path_or_name)
    if not path.exists():
        raise ConfigurationError(f"config {path_or_name} not found")
    with path.open(encoding="utf-8") as fh:
        doc = json.load(fh)
    return parse_config(doc, base_dir=path.parent, seed_override=seed_override)


# ---------------------------------------------------------------- data building


def build_datasets(cfg: ScenarioConfig) -> dict:
    """``participant id -> TimeSeriesDataset`` (companies carry the usage target)."""
    out = {}
    for company in cfg.companies:
        if company.source.gen is not None:
            spec = company.source.gen
            weather = datagen.generate_weather(spec)
            actual = np.zeros(len(weather))
            for st in company.stations:
                if st.source.gen is None:
                    continue
                st_spec = st.source.gen
                reported = datagen.generate_strategy(st_spec, weather)
                if st_spec.strategy_mode is datagen.StrategyMode.TRUTHFUL:
                    truth = reported
                else:
                    truth = datagen.generate_strategy(
                        _replace_spec(st_spec, strategy_mode="truthful"), weather)
                actual = actual + truth.column("strategy")
                out[st.id] = reported
            driver = TimeSeriesDataset(weather.dates, actual.reshape(-1, 1), ("strategy",))
            usage = datagen.generate_usage(spec, weather, driver)
            out[company.id] = weather.with_target(usage)
        else:
            out[company.id] = load_csv(
                company.source.csv, CsvSchema(company.source.features, TARGET))
        for st in company.stations:
            if st.source.csv is not None:
                out[st.id] = load_csv(st.source.csv, CsvSchema(st.source.features))
            elif st.id not in out:
                raise ConfigurationError(
                    f"station {st.id!r} needs a CSV source when its company data is a CSV")
    return out


def _replace_spec(spec, **changes):
    return datagen.GenSpec.from_dict({**spec.to_dict(), **changes})


# ---------------------------------------------------------------- simulation


@dataclass
class SimulationResult:
    report: dict
    transcript: object
    metrics: list
    scorecards: list
    checks: dict

    @property
    def ok(self):
        return all(v["passed"] for v in self.checks.values())


def _cards_doc(cards):
    return [c.to_dict() for c in cards]


def _score_reports(net, cohort, cards):
    for card in cards:
        net.send(card.participant_id, BROKER, None, MessageKind.SCORE_REPORT,
                 {"cohort": cohort, "id": card.participant_id,
                  "quality": card.quality, "contribution": card.contribution})


def _run_vfl_tier(cfg, company, datasets, net, fingerprints):
    members = [company.id] + [s.id for s in company.stations]
    aligned = dict(zip(members, align_by_date([datasets[m] for m in members])))
    active_full = aligned[company.id]
    train, test = split_train_eval(active_full, cfg.eval_window)
    n_train = len(train)
    for m in members:
        fingerprints |= raw_fingerprints(aligned[m], [slice(0, n_train), slice(n_train, None)])
    splits = {m: (aligned[m].select_rows(slice(0, n_train)), aligned[m].select_rows(slice(n_train, None)))
              for m in members}

    group = vfl.VflGroup(
        Participant(company.id, Tier.COMPANY, Role.ACTIVE, splits[company.id][0]),
        tuple(Participant(s.id, Tier.STATION, Role.PASSIVE, splits[s.id][0]) for s in company.stations),
    )
    result = vfl.run_vfl(group, cfg.vfl_rounds, cfg.train, net)

    # Held-out evaluation, then a full-history forecast for the HFL tier.
    r_eval = cfg.vfl_rounds + 1
    eval_features = {m: splits[m][1].features for m in members}
    global_eval = vfl.vfl_predict(result, eval_features, net, r_eval)
    full_features = {m: aligned[m].features for m in members}
    stacked = vfl.vfl_predict(result, full_features, net, r_eval)

    actual = test.target
    cohort = [
        incentive.CohortMember(
            id=m,
            actual=actual,
            local_forecast=fc.predict(result.restricted[m], splits[m][1].features),
            global_forecast=global_eval,
            corr=incentive.corr_score(splits[m][0].features, train.target),
        )
        for m in members
    ]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        injected = cfg.injected_scores.get("vfl", {}).get(company.id)
        if injected:
            cards = incentive.score_from_values(
                injected["quality"], injected["contribution"], cfg.vfl_pools.r_data, cfg.vfl_pools.r_model)
        else:
            cards = incentive.evaluate_cohort(
                cohort, cfg.vfl_pools.r_data, cfg.vfl_pools.r_model, horizontal=False)
    _score_reports(net, f"vfl/{company.id}", cards)
    section = {
        "pools": {"r_data": cfg.vfl_pools.r_data, "r_model": cfg.vfl_pools.r_model},
        "injected": bool(injected),
        "scorecards": _cards_doc(cards),
        "warnings": [str(w.message) for w in caught],
    }
    metrics = [(log_["round"], f"{company.id}/vfl", log_["loss"]) for log_ in result.logs]
    hfl_ds = active_full.with_columns((STACKED_FEATURE,), stacked)
    return section, cards, metrics, hfl_ds


def _run_hfl_tier(cfg, company_data, net):
    split = {cid: split_train_eval(ds, cfg.eval_window) for cid, ds in company_data.items()}
    participants = [
        Participant(cid, Tier.COMPANY, Role.ACTIVE, split[cid][0]) for cid in company_data
    ]
    result = hfl.run_hfl(participants, cfg.hfl_rounds, cfg.train, net)
    cohort = []
    for cid in sorted(company_data):
        train, test = split[cid]
        raw = [n for n in train.feature_names if n != STACKED_FEATURE]
        cohort.append(incentive.CohortMember(
            id=cid,
            actual=test.target,
            local_forecast=fc.predict(result.locals[cid], test.features),
            global_forecast=fc.predict(result.global_params, test.features),
            corr=incentive.corr_score(train.select_columns(raw).features, train.target),
            sample_count=len(train),
        ))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        injected = cfg.injected_scores.get("hfl")
        if injected:
            cards = incentive.score_from_values(
                injected["quality"], injected["contribution"], cfg.hfl_pools.r_data, cfg.hfl_pools.r_model)
        else:
            cards = incentive.evaluate_cohort(
                cohort, cfg.hfl_pools.r_data, cfg.hfl_pools.r_model, horizontal=True)
    _score_reports(net, "hfl", cards)
    section = {
        "pools": {"r_data": cfg.hfl_pools.r_data, "r_model": cfg.hfl_pools.r_model},
        "injected": bool(injected),
        "global_model": result.global_params.to_dict(),
        "scorecards": _cards_doc(cards),
        "warnings": [str(w.message) for w in caught],
    }
    metrics = [(lg.round, cid, lg.local_loss[cid]) for lg in result.logs for cid in sorted(lg.local_loss)]
    return section, cards, metrics


def _tier_checks(name, cards, pools, checks):
    if not cards:
        return
    q = math.fsum(c.quality_norm for c in cards)
    c = math.fsum(c.contribution_norm for c in cards)
    checks[f"{name}:norm_sums"] = {
        "passed": abs(q - 1.0) <= 1e-9 and abs(c - 1.0) <= 1e-9,
        "quality_norm_sum": q,
        "contribution_norm_sum": c,
    }
    paid_q = math.fsum(x.r_quality for x in cards)
    paid_c = math.fsum(x.r_contribution for x in cards)
    checks[f"{name}:conservation"] = {
        "passed": (abs(paid_q - pools.r_data) <= 1e-9 * max(pools.r_data, 1.0)
                   and abs(paid_c - pools.r_model) <= 1e-9 * max(pools.r_model, 1.0)),
        "paid_data": paid_q,
        "paid_model": paid_c,
    }


def simulate(cfg: ScenarioConfig, full_transcript=False) -> SimulationResult:
    datasets = build_datasets(cfg)
    net = Network(cfg.scenario, cfg.seed, keep_payloads=full_transcript)
    net.register(BROKER)
    fingerprints = set()
    report = {"scenario": cfg.scenario, "seed": cfg.seed, "config": cfg.resolved()}
    metrics, all_cards, checks = [], [], {}

    vfl_sections = {}
    company_data = {}
    for company in cfg.companies:
        if company.stations:
            section, cards, rows, hfl_ds = _run_vfl_tier(cfg, company, datasets, net, fingerprints)
            vfl_sections[company.id] = section
            metrics += rows
            all_cards += [("vfl/" + company.id, c) for c in cards]
            _tier_checks(f"vfl/{company.id}", cards, cfg.vfl_pools, checks)
            company_data[company.id] = hfl_ds
        else:
            ds = datasets[company.id]
            train, _ = split_train_eval(ds, cfg.eval_window)
            fingerprints |= raw_fingerprints(ds, [slice(0, len(train)), slice(len(train), None)])
            company_data[company.id] = ds

    if len(company_data) >= 2:
        section, cards, rows = _run_hfl_tier(cfg, company_data, net)
        metrics += rows
        all_cards += [("hfl", c) for c in cards]
        _tier_checks("hfl", cards, cfg.hfl_pools, checks)
    else:
        section = {"scorecards": [], "skipped": "HFL needs at least 2 companies"}
    report["hfl"] = section
    report["vfl"] = vfl_sections

    privacy = assert_privacy(net.transcript, fingerprints)
    checks["privacy"] = {"passed": privacy.passed, "offending_seq": list(privacy.offending)}
    report["totals"] = {
        "paid_data": math.fsum(c.r_quality for _, c in all_cards),
        "paid_model": math.fsum(c.r_contribution for _, c in all_cards),
    }
    report["checks"] = checks
    return SimulationResult(report, net.transcript, metrics, all_cards, checks)


def write_outputs(result: SimulationResult, out_dir, full_transcript=False):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(result.report, indent=2) + "\n", encoding="utf-8")
    lines = ["cohort," + ",".join(incentive.SCORECARD_FIELDS)]
    body = incentive.scorecards_csv([c for _, c in result.scorecards]).splitlines()[1:]
    lines += [f"{cohort},{row}" for (cohort, _), row in zip(result.scorecards, body)]
    (out / "scorecards.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    result.transcript.write(out / "transcript.jsonl", full_payload=full_transcript)
    metric_lines = ["round,participant,loss"] + [f"{r},{p},{loss!r}" for r, p, loss in result.metrics]
    (out / "metrics.csv").write_text("\n".join(metric_lines) + "\n", encoding="utf-8")
    return out
