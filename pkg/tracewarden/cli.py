import argparse
import json
import os
import sys
from typing import Optional, Sequence

from omegaconf.errors import OmegaConfBaseException

from . import __version__
from .capture import run_captured
from .config import TracewardenConfig, load_config
from .errors import TracewardenError
from .eval import evaluate_predictions, export_supervised_pairs, prediction_row
from .loaders.flows import merge, parse_flow_log, write_flow_log
from .loaders.mitm_export import convert_mitm_flows
from .loaders.pcap import extract_events_with_stats
from .models.events import TraceOrigin
from .pipelines import StreamingPipeline
from .registry import DETECTORS, build_detector, load_catalog, load_filter_policy
from .synth import CorpusManifest, CorpusSpec, synth_corpus
from .utils import logging
from .utils.render import serialize_trace
from .utils.saving import load_trace, save_trace, write_json_lines

logger = logging.get_logger(__name__)  # pylint: disable=invalid-name

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_MALICIOUS = 3


class UsageError(Exception):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; usage errors here are 1
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _emit(text: str) -> None:
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


def cmd_extract(args, config: TracewardenConfig) -> int:
    policy = load_filter_policy(config, args.policy)
    trace, stats = extract_events_with_stats(args.pcap, policy, session_id=os.path.splitext(os.path.basename(args.pcap))[0])
    save_trace(trace, args.output)
    _emit(f"{stats.events} events from {stats.packets} packets -> {args.output}")
    return EXIT_OK


def cmd_merge(args, config: TracewardenConfig) -> int:
    trace = load_trace(args.trace)
    records = parse_flow_log(args.flows, body_excerpt_cap=config.serializer.body_excerpt_cap)
    merged = merge(trace, records)
    save_trace(merged, args.output)
    _emit(f"{len(merged)} events ({len(records)} decrypted) -> {args.output}")
    return EXIT_OK


def cmd_render(args, config: TracewardenConfig) -> int:
    trace = load_trace(args.trace)
    budget = config.serializer.budget if args.budget is None else args.budget
    tz = args.tz or config.serializer.tz
    text = serialize_trace(trace, tz=tz, budget=budget or None)
    if text:
        _emit(text)
    return EXIT_OK


def _detect_manifest(args, config: TracewardenConfig) -> int:
    if not args.output:
        raise UsageError("--manifest requires -o/--output for the predictions file")
    catalog = load_catalog(config, args.catalog)
    detector = build_detector(args.backend, config)
    manifest = CorpusManifest.load(args.manifest)
    traces = [load_trace(manifest.path_of(e), origin=TraceOrigin.SYNTHETIC) for e in manifest.entries]
    try:
        verdicts = detector.detect_many(traces, catalog)
    finally:
        detector.close()
    count = write_json_lines((prediction_row(e, v) for e, v in zip(manifest.entries, verdicts)), args.output)
    malicious = sum(v.is_malicious for v in verdicts)
    _emit(f"{count} predictions ({malicious} malicious) -> {args.output}")
    return EXIT_OK


def cmd_detect(args, config: TracewardenConfig) -> int:
    if args.manifest:
        return _detect_manifest(args, config)
    if not args.trace:
        raise UsageError("detect needs a trace file or --manifest")
    catalog = load_catalog(config, args.catalog)
    detector = build_detector(args.backend, config)
    try:
        verdict = detector.detect(load_trace(args.trace), catalog)
    finally:
        detector.close()
    _emit(json.dumps(verdict.to_dict()) if args.json else verdict.label)
    return EXIT_MALICIOUS if verdict.is_malicious else EXIT_OK


def cmd_stream(args, config: TracewardenConfig) -> int:
    catalog = load_catalog(config, args.catalog)
    detector = build_detector(args.backend, config)
    overrides = {k: v for k, v in (("delta", args.delta), ("window", args.window)) if v is not None}
    pipeline = StreamingPipeline.from_config(config.streaming, detector, catalog, **overrides)
    feed = sys.stdin if args.input in (None, "-") else open(args.input, "r", encoding="utf-8")
    sink = sys.stdout if args.output in (None, "-") else open(args.output, "w", encoding="utf-8")
    try:
        reports = pipeline(feed, sink)
    finally:
        detector.close()
        if feed is not sys.stdin:
            feed.close()
        if sink is not sys.stdout:
            sink.close()
    if args.report:
        with open(args.report, "w", encoding="utf-8") as f:
            json.dump({sid: r.to_dict() for sid, r in reports.items()}, f, indent=2)
    for sid, report in reports.items():
        logger.info(f"[{sid}] {report.events_seen} events, {report.windows} windows -> {report.aggregate.label}")
    return EXIT_OK


def cmd_synth(args, config: TracewardenConfig) -> int:
    spec = CorpusSpec.load(args.spec)
    manifest = synth_corpus(spec, args.output, config.synth)
    _emit(f"{len(manifest)} traces -> {args.output}")
    return EXIT_OK


def cmd_eval(args, config: TracewardenConfig) -> int:
    catalog = load_catalog(config, args.catalog)
    manifest = CorpusManifest.load(args.manifest)
    report = evaluate_predictions(manifest, args.predictions, catalog, tool_level=args.tool_level)
    _emit(report.to_json() if args.json else report.format_table())
    return EXIT_OK


def cmd_export(args, config: TracewardenConfig) -> int:
    catalog = load_catalog(config, args.catalog) if args.prompt else None
    manifest = CorpusManifest.load(args.manifest)
    count = export_supervised_pairs(manifest, args.output, config.serializer, catalog)
    _emit(f"{count} pairs -> {args.output}")
    return EXIT_OK


def cmd_convert_flows(args, config: TracewardenConfig) -> int:
    cap = config.serializer.body_excerpt_cap if args.body_cap is None else args.body_cap
    records = convert_mitm_flows(args.dump, body_cap=cap)
    count = write_flow_log(records, args.output)
    _emit(f"{count} flow records -> {args.output}")
    return EXIT_OK


def cmd_capture(args, config: TracewardenConfig) -> int:
    child = list(args.child)
    if child and child[0] == "--":
        child = child[1:]
    if not child:
        raise UsageError("capture needs a child command after --")
    cfg = config.capture
    if args.pcap:
        cfg.pcap_path = args.pcap
    if args.flows:
        cfg.flow_log_path = args.flows
    run = run_captured(cfg, child)
    _emit(json.dumps({"returncode": run.returncode, "pcap": run.artifacts.pcap_path, "flows": run.artifacts.flow_log_path}))
    if run.returncode != 0:
        logger.error(f"Child command exited with {run.returncode}")
        return EXIT_RUNTIME
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="tracewarden", description="Network-level guardrail for agent tool execution.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="YAML file layered over the packaged defaults")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="dotlist override, e.g. --set streaming.delta=10 (repeatable)")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="count", default=0)
    verbosity.add_argument("-q", "--quiet", action="store_true")
    parser.add_argument("--log-file", help="also write log records to this file")
    parser.add_argument("--log-json", action="store_true", help="JSON-lines log records")

    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("extract", help="PCAP/PCAPNG -> trace JSON lines")
    p.add_argument("pcap")
    p.add_argument("--policy", help="filter policy JSON")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("merge", help="merge a decrypted flow log into a trace")
    p.add_argument("trace")
    p.add_argument("flows")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("render", help="print the serialized trace")
    p.add_argument("trace")
    p.add_argument("--budget", type=int, help="character budget, 0 for none")
    p.add_argument("--tz", help="IANA zone for the clock column")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("detect", help="classify a trace (exit 3 when malicious)")
    p.add_argument("trace", nargs="?")
    p.add_argument("--backend", choices=sorted(DETECTORS), default="rules")
    p.add_argument("--catalog", help="technique catalog JSON")
    p.add_argument("--manifest", help="classify every trace of a corpus manifest")
    p.add_argument("-o", "--output", help="predictions JSON lines (with --manifest)")
    p.add_argument("--json", action="store_true", help="print the full verdict")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("stream", help="sliding-window detection over an event feed")
    p.add_argument("--delta", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--backend", choices=sorted(DETECTORS), default="rules")
    p.add_argument("--catalog", help="technique catalog JSON")
    p.add_argument("-i", "--input", help="feed file, '-' for stdin")
    p.add_argument("-o", "--output", help="alert lines, '-' for stdout")
    p.add_argument("--report", help="write per-session reports as JSON")
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("synth", help="generate a labeled synthetic corpus")
    p.add_argument("--spec", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="score predictions against a corpus manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--catalog", help="technique catalog JSON")
    p.add_argument("--tool-level", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export", help="write {input, label} training pairs")
    p.add_argument("--manifest", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--prompt", action="store_true", help="wrap inputs in the detection prompt")
    p.add_argument("--catalog", help="technique catalog JSON")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("convert-flows", help="mitmproxy flow dump -> flow log JSON lines")
    p.add_argument("dump")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--body-cap", type=int)
    p.set_defaults(func=cmd_convert_flows)

    p = sub.add_parser("capture", help="run a child command inside a capture session")
    p.add_argument("--cfg", help="site YAML layered over --config for this session")
    p.add_argument("--pcap")
    p.add_argument("--flows")
    p.add_argument("child", nargs=argparse.REMAINDER)
    p.set_defaults(func=cmd_capture)

    return parser


def _apply_logging(args) -> None:
    if args.quiet:
        logging.set_verbosity_error()
        logging.disable_progress_bar()
    elif args.verbose >= 2:
        logging.set_verbosity_debug()
    elif args.verbose == 1:
        logging.set_verbosity_info()
    if args.log_json:
        logging.enable_json_format()


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    _apply_logging(args)
    file_handler = logging.add_file_handler(args.log_file, json_lines=args.log_json) if args.log_file else None

    try:
        config_files = [f for f in (args.config, getattr(args, "cfg", None)) if f]
        config = load_config(config_files, args.overrides)
        return args.func(args, config)
    except UsageError as e:
        sys.stderr.write(f"tracewarden {args.command}: error: {e}\n")
        return EXIT_USAGE
    except TracewardenError as e:
        sys.stderr.write(f"error: {type(e).__name__}: {e}\n")
        return EXIT_RUNTIME
    except (OSError, ValueError, ImportError, OmegaConfBaseException) as e:
        sys.stderr.write(f"error: {type(e).__name__}: {e}\n")
        return EXIT_RUNTIME
    finally:
        if file_handler is not None:
            logging.remove_handler(file_handler)


if __name__ == "__main__":
    sys.exit(main())
