"""Console entry point chaining generation, analysis, ingestion and queries.

The subcommands mirror the campaign workflow: ``gen`` synthesizes a raw
sample stream into a directory, ``analyze`` turns such a directory into a
transfer-file tree (computing every averaged parameter and detecting
events), ``ingest`` loads trees into a SQLite database, and ``budget``,
``query`` and ``event`` report on the results.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime
from pathlib import Path

import numpy as np

from . import __version__
from .analyzer import PipelineConfig, run_pipeline
from .charts import ChartError, ChartSpec, format_text_table, render_chart
from .events import EventDetector, EventThresholds
from .query import (
    NotFoundError,
    QueryError,
    QuerySpec,
    aggregate_events,
    event_detail,
    extract_raw_capture,
    timeseries,
)
from .siggen import (
    DEFAULT_FRAME_LENGTH,
    DisturbanceScript,
    ScriptError,
    SignalConfig,
    WaveformFrame,
    generate_stream,
    parse_script,
)
from .store import (
    BudgetConfig,
    MeasurementPoint,
    StoreError,
    StreamDatabase,
    TransferFileWriter,
    compute_traffic_budget,
    format_budget_table,
    ingest_directory,
)

DEFAULT_BASE_TIME = "2000-01-01T00:00:00"
META_FILE = "meta.json"
VOLTAGE_FILE = "voltage.npy"
CURRENT_FILE = "current.npy"


def _load_gen_config(path: Path) -> dict:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise StoreError(f"cannot read config {path}: {exc}") from exc


def _signal_config(meta: dict) -> SignalConfig:
    return SignalConfig(
        nominal_frequency=float(meta.get("nominal_frequency", 50.0)),
        nominal_voltage_rms=float(meta.get("nominal_voltage_rms", 230.0)),
        nominal_current_rms=float(meta.get("nominal_current_rms", 10.0)),
        duration=float(meta.get("duration", 1.0)),
        current_lag_deg=float(meta.get("current_lag_deg", 0.0)),
        jitter_pu=float(meta.get("jitter_pu", 0.0)),
        seed=int(meta.get("seed", 0)),
    )


def _measurement_point(meta: dict) -> MeasurementPoint:
    point = meta.get("point", {})
    return MeasurementPoint(
        id=point.get("id", "MP1"),
        name=point.get("name", point.get("id", "MP1")),
        point_kind=point.get("point_kind", "busbar"),
        load_type=point.get("load_type", "Urban Only"),
        city_name=point.get("city_name", ""),
        region_name=point.get("region_name", ""),
        voltage_level=float(point.get("voltage_level", 0.0)),
    )


def cmd_gen(args: argparse.Namespace) -> int:
    meta = _load_gen_config(Path(args.config))
    config = _signal_config(meta)
    script_text = ""
    if args.script:
        script_text = Path(args.script).read_text(encoding="utf-8")
    script = parse_script(script_text) if script_text.strip() else DisturbanceScript()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    total = config.total_samples
    voltage = np.empty((3, total))
    current = np.empty((3, total))
    for frame in generate_stream(config, script):
        sl = slice(frame.start_sample_index, frame.end_sample_index)
        voltage[:, sl] = frame.voltage_samples
        current[:, sl] = frame.current_samples
    np.save(out / VOLTAGE_FILE, voltage)
    np.save(out / CURRENT_FILE, current)
    meta_out = dict(meta)
    meta_out.setdefault("base_time", DEFAULT_BASE_TIME)
    meta_out["script"] = script_text
    meta_out["total_samples"] = total
    (out / META_FILE).write_text(
        json.dumps(meta_out, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"generated {total} samples per channel into {out}")
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    in_dir = Path(args.in_dir)
    meta = _load_gen_config(in_dir / META_FILE)
    voltage = np.load(in_dir / VOLTAGE_FILE)
    current = np.load(in_dir / CURRENT_FILE)
    nominal_v = args.nominal_v if args.nominal_v is not None else float(
        meta.get("nominal_voltage_rms", 230.0)
    )
    nominal_i = float(meta.get("nominal_current_rms", 10.0))
    config = PipelineConfig(
        nominal_frequency=float(meta.get("nominal_frequency", 50.0)),
        nominal_voltage_rms=nominal_v,
        nominal_current_rms=nominal_i,
    )
    point = _measurement_point(meta)
    base_time = datetime.fromisoformat(meta.get("base_time", DEFAULT_BASE_TIME))
    writer = TransferFileWriter(args.out, point, base_time)
    detector = EventDetector(
        EventThresholds(nominal_voltage_rms=nominal_v),
        measurement_point_id=point.id,
        raw_sink=writer.raw_sink,
    )

    def frames():
        total = voltage.shape[1]
        for start in range(0, total, DEFAULT_FRAME_LENGTH):
            end = min(start + DEFAULT_FRAME_LENGTH, total)
            yield WaveformFrame(start, voltage[:, start:end], current[:, start:end])

    result = run_pipeline(frames(), config, detector=detector)
    written = writer.write_results(result)
    print(f"analyzed {voltage.shape[1]} samples from {in_dir}")
    print(
        "records: "
        f"rms={len(result.rms)} power={len(result.power)} "
        f"harmonics={len(result.harmonics)} frequency={len(result.frequency)} "
        f"demand={len(result.demand)} pst={len(result.flicker_pst)} "
        f"plt={len(result.flicker_plt)} events={len(result.events)}"
    )
    if args.lag_deg is not None:
        print(f"assumed current lag: {args.lag_deg} degrees")
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_ingest(args: argparse.Namespace) -> int:
    with StreamDatabase(args.db) as db:
        report = ingest_directory(args.root, db)
    print(report.summary())
    return 0


def cmd_budget(args: argparse.Namespace) -> int:
    budget = compute_traffic_budget(BudgetConfig())
    if args.with_events:
        print(f"{budget.total_with_events:.3f}")
    elif args.without_events:
        print(f"{budget.total_without_events:.3f}")
    else:
        print(format_budget_table(budget))
    return 0


def _render_or_print(table, args, default_title: str) -> None:
    if args.chart:
        if not args.out:
            raise ChartError("--chart needs --out to name the output file")
        spec = ChartSpec(kind=args.chart, title=default_title)
        path = render_chart(table, spec, Path(args.out))
        print(f"wrote {path}")
    else:
        print(format_text_table(table))


def cmd_query_events(args: argparse.Namespace) -> int:
    filters = []
    for item in args.filter or []:
        if "=" not in item:
            raise QueryError(f"filter {item!r} must look like attribute=value")
        key, value = item.split("=", 1)
        filters.append((key, value))
    group_by = tuple(k for k in (args.group_by or "").split(",") if k)
    spec = QuerySpec(filters=tuple(filters), group_by=group_by)
    with StreamDatabase(args.db, readonly=True) as db:
        table = aggregate_events(db, spec)
    _render_or_print(table, args, "Event counts")
    return 0


def cmd_query_series(args: argparse.Namespace) -> int:
    start = datetime.fromisoformat(args.start) if args.start else None
    end = datetime.fromisoformat(args.end) if args.end else None
    with StreamDatabase(args.db, readonly=True) as db:
        table = timeseries(db, args.point, args.param, start, end)
    _render_or_print(table, args, f"{args.param} at {args.point}")
    return 0


def cmd_event(args: argparse.Namespace) -> int:
    with StreamDatabase(args.db, readonly=True) as db:
        event = event_detail(db, args.event_id, point_id=args.point)
    print(
        f"event {event.event_id} at {event.measurement_point_id}: "
        f"{event.event_type} from {event.start_time.isoformat()} "
        f"to {event.end_time.isoformat()} ({event.size_in_samples} samples)"
    )
    if event.raw_path:
        print(f"raw capture: {event.raw_path}")
    else:
        print("raw capture: not available")
    if args.raw:
        out = extract_raw_capture(event, Path(args.out))
        print(f"extracted {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pqstream",
        description="Power-quality stream engine: synthesize, analyze, store, query.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="synthesize a raw sample stream")
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--script", help="disturbance script file")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("analyze", help="run the analysis pipeline over a stream")
    p.add_argument("--in", dest="in_dir", required=True, help="directory from gen")
    p.add_argument("--out", required=True, help="transfer tree output root")
    p.add_argument("--nominal-v", type=float, help="override the nominal voltage (V)")
    p.add_argument("--lag-deg", type=float, help="note the assumed current lag (degrees)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("ingest", help="load a transfer tree into the database")
    p.add_argument("--root", required=True, help="transfer tree root")
    p.add_argument("--db", required=True, help="SQLite database path")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("budget", help="print the outgoing traffic budget")
    flags = p.add_mutually_exclusive_group()
    flags.add_argument(
        "--with-events", action="store_true", help="print only the total including raw event data"
    )
    flags.add_argument(
        "--without-events", action="store_true", help="print only the total excluding raw event data"
    )
    p.set_defaults(func=cmd_budget)

    p = sub.add_parser("query", help="run read-only queries")
    qsub = p.add_subparsers(dest="query_command", required=True)

    q = qsub.add_parser("events", help="aggregate event counters across points")
    q.add_argument("--db", required=True)
    q.add_argument("--group-by", help="comma-separated point attributes")
    q.add_argument("--filter", action="append", help="attribute=value, repeatable")
    q.add_argument("--chart", choices=("bar", "pie", "table"), help="render instead of printing")
    q.add_argument("--out", help="chart output path")
    q.set_defaults(func=cmd_query_events)

    q = qsub.add_parser("series", help="time series of one parameter at one point")
    q.add_argument("--db", required=True)
    q.add_argument("--point", required=True)
    q.add_argument("--param", required=True)
    q.add_argument("--from", dest="start", help="inclusive ISO-8601 lower bound")
    q.add_argument("--to", dest="end", help="inclusive ISO-8601 upper bound")
    q.add_argument(
        "--chart", choices=("time_series", "table"), help="render instead of printing"
    )
    q.add_argument("--out", help="chart output path")
    q.set_defaults(func=cmd_query_series)

    p = sub.add_parser("event", help="show one event, optionally extracting raw data")
    p.add_argument("event_id", type=int)
    p.add_argument("--db", required=True)
    p.add_argument("--point", help="disambiguate when ids repeat across points")
    p.add_argument("--raw", action="store_true", help="extract the raw capture to CSV")
    p.add_argument("--out", default=".", help="directory for extracted raw CSV")
    p.set_defaults(func=cmd_event)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ScriptError, StoreError, QueryError, ChartError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NotFoundError as exc:
        print(f"not found: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    raise SystemExit(main())
