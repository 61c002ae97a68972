"""Command-line entry point: ``hierfl {gen-data,simulate,evaluate,report}``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import warnings
from pathlib import Path

from . import incentive
from .domain import Tier
from .errors import HierflError
from .scenario import (
    COMPANY_FEATURES,
    STATION_FEATURES,
    TARGET,
    build_datasets,
    load_config,
    simulate,
    write_outputs,
)

log = logging.getLogger("hierfl")


def cmd_gen_data(config, out_dir, seed=None) -> Path:
    """Write one CSV per participant, a manifest, and a CSV-backed copy of the config."""
    cfg = load_config(config, seed_override=seed)
    datasets = build_datasets(cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    companies_doc = []
    for company in cfg.companies:
        stations_doc = []
        path = out / f"{company.id}.csv"
        datasets[company.id].to_csv(path, TARGET)
        files.append({"id": company.id, "tier": Tier.COMPANY.value, "path": path.name,
                      "seed": company.source.gen.seed if company.source.gen else None})
        for st in company.stations:
            spath = out / f"{st.id}.csv"
            datasets[st.id].to_csv(spath)
            files.append({"id": st.id, "tier": Tier.STATION.value, "company": company.id,
                          "path": spath.name,
                          "seed": st.source.gen.seed if st.source.gen else None})
            stations_doc.append({"id": st.id, "data": {"csv": spath.name,
                                                       "features": list(STATION_FEATURES)}})
        companies_doc.append({"id": company.id,
                              "data": {"csv": path.name, "features": list(COMPANY_FEATURES)},
                              "stations": stations_doc})
    resolved = cfg.resolved()
    resolved["companies"] = companies_doc
    (out / "config.json").write_text(json.dumps(resolved, indent=2) + "\n", encoding="utf-8")
    manifest = {"scenario": cfg.scenario, "seed": cfg.seed, "config": "config.json", "files": files}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return out


def cmd_simulate(config, out_dir=None, seed=None, full_transcript=False):
    cfg = load_config(config, seed_override=seed)
    result = simulate(cfg, full_transcript=full_transcript)
    out = Path(out_dir) if out_dir else Path("runs") / cfg.scenario
    write_outputs(result, out, full_transcript)
    return result, out


def cmd_evaluate(scores_path, r_data=100.0, r_model=100.0, out_dir=None):
    quality, contrib = incentive.load_scores_csv(scores_path)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        cards = incentive.score_from_values(quality, contrib, r_data, r_model)
    paid_q = math.fsum(c.r_quality for c in cards)
    paid_c = math.fsum(c.r_contribution for c in cards)
    checks = {
        "norm_sums": {"passed": abs(math.fsum(c.quality_norm for c in cards) - 1) <= 1e-9
                      and abs(math.fsum(c.contribution_norm for c in cards) - 1) <= 1e-9},
        "conservation": {"passed": abs(paid_q - r_data) <= 1e-9 * max(r_data, 1.0)
                         and abs(paid_c - r_model) <= 1e-9 * max(r_model, 1.0)},
    }
    report = {
        "scores": str(scores_path),
        "pools": {"r_data": r_data, "r_model": r_model},
        "scorecards": [c.to_dict() for c in cards],
        "warnings": [str(w.message) for w in caught],
        "totals": {"paid_data": paid_q, "paid_model": paid_c},
        "checks": checks,
    }
    for w in caught:
        log.warning("%s", w.message)
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    return report


def _fmt(v):
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def format_report(report) -> str:
    cols = ("participant_id", "quality", "contribution", "quality_norm",
            "contribution_norm", "r_quality", "r_contribution")
    lines = []
    title = report.get("scenario", report.get("scores", "report"))
    lines.append(f"# {title}  (seed {report.get('seed', '-')})")

    def table(name, cards):
        lines.append(f"\n[{name}]")
        lines.append("  ".join(f"{c:>17}" for c in cols))
        for card in cards:
            lines.append("  ".join(f"{_fmt(card[c]):>17}" for c in cols))

    if "scorecards" in report:
        table("scores", report["scorecards"])
    for company, section in report.get("vfl", {}).items():
        table(f"vfl/{company}", section["scorecards"])
    hfl_section = report.get("hfl")
    if hfl_section:
        if hfl_section.get("skipped"):
            lines.append(f"\n[hfl] skipped: {hfl_section['skipped']}")
        else:
            table("hfl", hfl_section["scorecards"])
    totals = report.get("totals", {})
    lines.append(f"\npaid: data {_fmt(totals.get('paid_data'))}, model {_fmt(totals.get('paid_model'))}")
    for name, check in report.get("checks", {}).items():
        lines.append(f"check {name}: {'ok' if check['passed'] else 'FAILED'}")
    return "\n".join(lines)


def build_parser():
    parser = argparse.ArgumentParser(prog="hierfl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write synthetic participant CSVs")
    p.add_argument("--config", required=True, help="scenario JSON path or bundled name")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("simulate", help="run both FL tiers and score incentives")
    p.add_argument("--config", required=True, help="scenario JSON path or bundled name")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--full-transcript", action="store_true",
                   help="include message payloads in transcript.jsonl")

    p = sub.add_parser("evaluate", help="normalize and allocate precomputed scores")
    p.add_argument("--scores", required=True, help="CSV with id,quality,contribution")
    p.add_argument("--r-data", type=float, default=100.0)
    p.add_argument("--r-model", type=float, default=100.0)
    p.add_argument("--out")

    p = sub.add_parser("report", help="pretty-print an existing report.json")
    p.add_argument("path")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "gen-data":
            out = cmd_gen_data(args.config, args.out, args.seed)
            print(f"wrote {out}")
            return 0
        if args.command == "simulate":
            try:
                result, out = cmd_simulate(args.config, args.out, args.seed, args.full_transcript)
            except HierflError as exc:
                raise HierflError(f"scenario {args.config}: {exc}") from exc
            print(format_report(result.report))
            print(f"\nwrote {out}")
            return 0 if result.ok else 1
        if args.command == "evaluate":
            report = cmd_evaluate(args.scores, args.r_data, args.r_model, args.out)
            print(format_report(report) if args.out else json.dumps(report, indent=2))
            return 0 if all(c["passed"] for c in report["checks"].values()) else 1
        if args.command == "report":
            with open(args.path, encoding="utf-8") as fh:
                print(format_report(json.load(fh)))
            return 0
    except (HierflError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
