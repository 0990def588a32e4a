"""``pvir`` command line: batch runs, single-stage debugging and evaluation.

Exit codes: 0 success, 1 partial failure (some event or check failed),
2 configuration or I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigError, IoError, ParseError, PvirError, SchemaError, SchemaViolations
from .ingest import dumps, load_event, load_manifest, load_run_predictions, write_atomic
from .metrics import evaluate_run, format_summary_table, summary_to_dict
from .pipeline import format_results, load_config, load_ground_truth, run_pipeline
from .sync import estimate_offset, load_motion_energy
from .synthesis import render_report_text, validate_report
from .trigger import TriggerParams, detect_trigger, load_trajectories

log = logging.getLogger("pvir")

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2


def _events(value):
    if not value:
        return None
    return [e.strip() for e in value.split(",") if e.strip()]


def _add_run_flags(p: argparse.ArgumentParser, with_stage: bool) -> None:
    p.add_argument("--config", required=True, help="run configuration JSON")
    p.add_argument("--events", help="comma-separated event ids (default: all in the manifest)")
    p.add_argument("--run-id", default="default")
    p.add_argument("--backend-url", help="override the URL of every http backend")
    if with_stage:
        p.add_argument("--stage", choices=("segment", "analyze", "synthesize"), default="synthesize",
                       help="last stage to execute")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pvir", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_run_flags(sub.add_parser("run", help="all stages end to end"), with_stage=True)
    _add_run_flags(sub.add_parser("segment", help="phase segmentation only"), with_stage=False)
    _add_run_flags(sub.add_parser("analyze", help="segmentation (reused if present) plus phase reasoning"),
                   with_stage=False)
    _add_run_flags(sub.add_parser("synthesize", help="report synthesis, reusing earlier stage outputs"),
                   with_stage=False)

    ev = sub.add_parser("evaluate", help="score a persisted run against ground truth")
    ev.add_argument("--config", required=True)
    ev.add_argument("--run-id", default="default")
    ev.add_argument("--events", help="comma-separated event ids")

    sy = sub.add_parser("sync", help="estimate the clock offset between two motion-energy sidecars")
    sy.add_argument("reference")
    sy.add_argument("other")
    sy.add_argument("--max-lag-s", type=float, default=5.0)

    tr = sub.add_parser("trigger", help="detect events of interest in a trajectory CSV")
    tr.add_argument("trajectories")
    defaults = TriggerParams()
    tr.add_argument("--config", help="run configuration whose trigger params are used")
    tr.add_argument("--distance-threshold-m", type=float, default=defaults.distance_threshold_m)
    tr.add_argument("--closing-speed-threshold-mps", type=float, default=defaults.closing_speed_threshold_mps)
    tr.add_argument("--sustain-samples", type=int, default=defaults.sustain_samples)
    tr.add_argument("--lookback-s", type=float, default=defaults.lookback_s)

    va = sub.add_parser("validate", help="check a report, event, manifest or config file")
    va.add_argument("path")
    va.add_argument("--kind", choices=("report", "event", "manifest", "config"), default="report")
    return parser


def _cmd_run(args, stop_after: str, reuse: bool) -> int:
    config = load_config(args.config)
    code, results = run_pipeline(config, run_id=args.run_id, events=_events(args.events),
                                 stop_after=stop_after, backend_url=args.backend_url, reuse=reuse)
    print(format_results(results))
    return code


def _cmd_evaluate(args) -> int:
    config = load_config(args.config)
    wanted = _events(args.events)
    truth = [e for e in load_ground_truth(config) if wanted is None or e.event_id in wanted]
    predictions = load_run_predictions(config.output_dir, args.run_id)
    predictions = {k: v for k, v in predictions.items() if wanted is None or k in wanted}
    summary = evaluate_run(predictions, truth)
    write_atomic(Path(config.output_dir) / args.run_id / "evaluation.json", dumps(summary_to_dict(summary)))
    print(format_summary_table(summary))
    return EXIT_OK


def _cmd_sync(args) -> int:
    est = estimate_offset(load_motion_energy(args.reference), load_motion_energy(args.other), args.max_lag_s)
    print(json.dumps({"offset_s": est.offset_s, "confidence": est.confidence}, sort_keys=True))
    return EXIT_OK


def _cmd_trigger(args) -> int:
    if args.config:
        params = load_config(args.config).trigger
    else:
        params = TriggerParams(args.distance_threshold_m, args.closing_speed_threshold_mps,
                               args.sustain_samples, args.lookback_s)
    windows = detect_trigger(load_trajectories(args.trajectories), params)
    print(json.dumps([{"pedestrian_id": w.pedestrian_id, "vehicle_id": w.vehicle_id,
                       "trigger_t_s": w.trigger_t_s, "start_s": w.window.start_s, "end_s": w.window.end_s}
                      for w in windows], indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_validate(args) -> int:
    if args.kind == "report":
        text = Path(args.path).read_text(encoding="utf-8")
        try:
            report = validate_report(text)
        except SchemaViolations as exc:
            for v in exc.violations:
                print(v)
            return EXIT_PARTIAL
        print(render_report_text(report))
    elif args.kind == "event":
        event = load_event(args.path)
        print(f"{event.event_id}: {len(event.views)} views, duration {event.duration_s} s")
    elif args.kind == "manifest":
        manifest = load_manifest(args.path)
        print(f"{manifest.dataset_id} ({manifest.split}): {len(manifest.events)} events")
    else:
        config = load_config(args.path)
        print(f"manifest {config.manifest}, output {config.output_dir}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return _cmd_run(args, args.stage, reuse=False)
        if args.command == "segment":
            return _cmd_run(args, "segment", reuse=False)
        if args.command in ("analyze", "synthesize"):
            return _cmd_run(args, args.command, reuse=True)
        if args.command == "evaluate":
            return _cmd_evaluate(args)
        if args.command == "sync":
            return _cmd_sync(args)
        if args.command == "trigger":
            return _cmd_trigger(args)
        return _cmd_validate(args)
    except (ConfigError, IoError, ParseError, SchemaError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except PvirError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
