"""Command-line surface: amid build/calibrate/associate, detect, report, eval.

Exit codes: 0 clean, 1 for errors during detection (quarantined events or
report-client failures; the run itself completes), 2 for configuration or
input problems.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import _kernels
from .amid import (
    AmidSchemaError,
    AmidStore,
    CalibrationError,
    associate_cti,
    calibrate_threshold,
    gioc_from_dict,
    load_amid,
    save_amid,
)
from .config import EngineConfig, RunManifest, file_sha256, load_config
from .embedding import VectorFormatError, load_vectors
from .lifting import lift_event, load_dns_map, load_rules
from .metrics import ReconciliationError, evaluate, load_ground_truth
from .pipeline import DetectionPipeline, EventParseError, parse_event
from .reasoning import TacticMap
from .report import HttpTextGenClient, render_markdown, report_to_json

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DETECT = 1
EXIT_CONFIG = 2


def _load_table(args):
    return load_vectors(args.vectors)


def _load_common(args):
    cfg = load_config(getattr(args, "config", None))
    table = _load_table(args)
    store = load_amid(args.amid, table, theta_hit=cfg.theta_hit,
                      search_mode=cfg.search_mode, bandwidth=cfg.bandwidth)
    return cfg, table, store


def _iter_ndjson(path):
    fh = sys.stdin if path == "-" else open(path, "r", encoding="utf-8")
    try:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            yield lineno, json.loads(line)
    finally:
        if fh is not sys.stdin:
            fh.close()


def _rules_for(cfg: EngineConfig):
    return load_rules(cfg.rules_path,
                      bin_user_folder_alias=cfg.bin_user_folder_alias,
                      external_ip_domain_only=cfg.external_ip_domain_only)


# -- commands ---------------------------------------------------------------


def cmd_amid_build(args) -> int:
    cfg, table, store = _load_common(args)
    save_amid(store, args.out)
    print(f"built store: {len(store.aties)} ATIEs, {len(store.giocs)} gIoCs, "
          f"embedding {store.embedding_ref}")
    return EXIT_OK


def cmd_amid_calibrate(args) -> int:
    cfg, table, store = _load_common(args)
    rules = _rules_for(cfg)
    dns_map = load_dns_map(cfg.dns_map_path) if cfg.dns_map_path else {}

    def benign_events():
        for lineno, rec in _iter_ndjson(args.benign):
            yield lift_event(parse_event(rec), dns_map, rules)

    theta = calibrate_threshold(benign_events(), store, table, alpha=args.alpha)
    save_amid(store, args.out)
    print(f"theta_q = {theta:.6f} "
          f"(n={store.calibration['n_scores']}, alpha={store.calibration['alpha']}, "
          f"degenerate={store.calibration['degenerate']})")
    return EXIT_OK


def cmd_amid_associate(args) -> int:
    cfg, table, store = _load_common(args)
    if store.theta_q is None:
        store.theta_q = cfg.theta_q if cfg.theta_q is not None else 0.0
    giocs = [gioc_from_dict(rec, rec.get("technique_uid", ""))
             for _, rec in _iter_ndjson(args.giocs)]
    ranked = associate_cti(giocs, store, table)
    print(json.dumps([{"uid": uid, "score": score} for uid, score in ranked]))
    return EXIT_OK


def cmd_detect(args) -> int:
    cfg, table, store = _load_common(args)
    rules = _rules_for(cfg)
    dns_map = load_dns_map(cfg.dns_map_path) if cfg.dns_map_path else {}
    tmap = TacticMap.load(args.tactics) if args.tactics else None
    client = None
    if cfg.report_endpoint:
        client = HttpTextGenClient(cfg.report_endpoint, cfg.report_model,
                                   cfg.report_timeout)
    pipeline = DetectionPipeline(store, table, cfg, tmap=tmap, rules=rules,
                                 dns_map=dns_map, report_client=client)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    parse_errors = 0
    for lineno, rec in _iter_ndjson(args.events):
        try:
            pipeline.process_record(rec)
        except EventParseError as exc:
            parse_errors += 1
            logger.warning("line %d quarantined: %s", lineno, exc)
    result = pipeline.finish()

    with open(out_dir / "alerts.ndjson", "w", encoding="utf-8") as fh:
        for record in result.alerts:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    with open(out_dir / "suppressions.ndjson", "w", encoding="utf-8") as fh:
        for record in result.suppressions:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    reports_dir = out_dir / "reports"
    reports_dir.mkdir(exist_ok=True)
    for i, report in enumerate(result.reports):
        (reports_dir / f"report_{i:04d}.json").write_text(report_to_json(report),
                                                          encoding="utf-8")
        (reports_dir / f"report_{i:04d}.md").write_text(render_markdown(report),
                                                        encoding="utf-8")
    manifest = RunManifest(
        config=cfg.to_dict(),
        amid_sha256=file_sha256(args.amid),
        vectors_sha256=file_sha256(args.vectors),
        kernel_backend=_kernels.backend_name(),
        theta_q=store.theta_q,
        counts={
            "events_in": result.events_in,
            "events_matched": result.events_matched,
            "events_quarantined": result.events_quarantined + parse_errors,
            "alerts": len(result.alerts),
            "suppressions": len(result.suppressions),
        },
    )
    (out_dir / "manifest.json").write_text(manifest.to_json(), encoding="utf-8")
    print(f"events={result.events_in} matched={result.events_matched} "
          f"alerts={len(result.alerts)} suppressions={len(result.suppressions)} "
          f"quarantined={result.events_quarantined + parse_errors}")
    if result.events_quarantined + parse_errors > 0:
        return EXIT_DETECT
    return EXIT_OK


def cmd_report(args) -> int:
    # regenerate human-readable reports from an emitted alerts file
    from .graph import ProvGraph
    from .reasoning import Alert, CandidateLifecycle, Stage, StageEvidence
    from .report import build_report

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    count = 0
    for lineno, rec in _iter_ndjson(args.alerts):
        if rec.get("type") != "alert":
            continue
        graph = ProvGraph.import_subgraph(rec["subgraph"])
        lc = CandidateLifecycle(
            nodes=set(rec["lifecycle"]["nodes"]),
            host=rec["lifecycle"]["host"],
        )
        for stage_name, evs in rec["lifecycle"]["evidence"].items():
            stage = Stage(stage_name)
            lc.evidence[stage] = [
                StageEvidence(edge_id=e["edge_id"], technique_uid=e["technique"],
                              score=e["score"], ts=e["ts"], node_id=e["node"])
                for e in evs
            ]
        alert = Alert(lifecycle=lc, rationale=rec.get("rationale", []),
                      created_ts=rec.get("created_ts", 0))
        report = build_report(alert, graph)
        (out_dir / f"report_{count:04d}.json").write_text(report_to_json(report),
                                                          encoding="utf-8")
        (out_dir / f"report_{count:04d}.md").write_text(render_markdown(report),
                                                        encoding="utf-8")
        count += 1
    print(f"rendered {count} reports to {out_dir}")
    return EXIT_OK


def cmd_eval(args) -> int:
    gt = load_ground_truth(args.ground_truth)
    reported = []
    for lineno, rec in _iter_ndjson(args.alerts):
        if rec.get("type") == "alert":
            reported.append(rec["lifecycle"]["nodes"])
    metrics = evaluate(reported, gt)
    print(json.dumps(metrics.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


# -- argument wiring ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="provhunt")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    amid = sub.add_parser("amid", help="knowledge-base operations")
    amid_sub = amid.add_subparsers(dest="amid_command", required=True)

    p = amid_sub.add_parser("build", help="validate and normalize an AMID file")
    p.add_argument("--amid", required=True)
    p.add_argument("--vectors", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_amid_build)

    p = amid_sub.add_parser("calibrate", help="set theta_q from benign events")
    p.add_argument("--amid", required=True)
    p.add_argument("--vectors", required=True)
    p.add_argument("--benign", required=True, help="benign event ndjson ('-' for stdin)")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_amid_calibrate)

    p = amid_sub.add_parser("associate", help="rank ATIEs for a gIoC bag")
    p.add_argument("--amid", required=True)
    p.add_argument("--vectors", required=True)
    p.add_argument("--giocs", required=True, help="gIoC ndjson ('-' for stdin)")
    p.add_argument("--config")
    p.set_defaults(func=cmd_amid_associate)

    p = sub.add_parser("detect", help="run the detection pipeline over an event stream")
    p.add_argument("--amid", required=True)
    p.add_argument("--vectors", required=True)
    p.add_argument("--events", required=True, help="event ndjson ('-' for stdin)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config")
    p.add_argument("--tactics", help="alternate technique->tactics table")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("report", help="re-render reports from an alerts file")
    p.add_argument("--alerts", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("eval", help="score alerts against ground truth")
    p.add_argument("--alerts", required=True)
    p.add_argument("--ground-truth", required=True)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (AmidSchemaError, VectorFormatError, CalibrationError,
            ReconciliationError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except json.JSONDecodeError as exc:
        print(f"error: malformed input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
