"""Transfer-file tree, relational store and the outgoing traffic budget.

Analyzer output is laid down as one CSV per parameter type under
``<root>/<point_id>/<parameter>/``, raw event captures under capitalized
``Sag``/``Swell``/``Unbalance``/``Interruption`` directories, and a point
metadata file.  Data rows carry values only; the trailing
``#last_sample=<iso8601>`` footer dates the final row and every other row's
timestamp is derived by stepping the parameter interval backwards.  Floats
are serialized with 17 significant digits so a write / ingest / query round
trip is bit exact.

Ingestion walks such trees into an embedded SQLite database, skipping
files whose content hash is already present, and keeps per-point event
counters in step with the event table.  Raw capture files are never loaded
into the database; only their absolute paths are stored.
"""

from __future__ import annotations

import hashlib
import json
import sqlite3
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Sequence

from .analyzer import HARMONIC_ORDERS, PipelineResult
from .events import EventRecord

POINT_KINDS = ("busbar", "feeder")
LOAD_TYPES = ("Heavy Industry", "Industry+Urban", "Urban Only")

PARAMETER_TYPES = (
    "power",
    "rms",
    "harmonics",
    "frequency",
    "demand",
    "flicker_pst",
    "flicker_plt",
    "event",
)

#: Row spacing per parameter type in milliseconds; the event log has no
#: fixed interval and is deliberately absent.
PARAMETER_INTERVAL_MS = {
    "power": 1_000,
    "rms": 200,
    "harmonics": 3_000,
    "frequency": 1_000,
    "demand": 900_000,
    "flicker_pst": 600_000,
    "flicker_plt": 7_200_000,
}

RAW_DIR_NAMES = {
    "sag": "Sag",
    "swell": "Swell",
    "interruption": "Interruption",
    "unbalance": "Unbalance",
}

POINT_METADATA_FILE = "point.json"
ISO_TIMESPEC = "microseconds"


class StoreError(RuntimeError):
    """Raised for unusable trees, rows or store configurations."""


def _phase_columns(prefix: str) -> list[str]:
    return [f"{prefix}_{p}" for p in ("a", "b", "c")]


def _harmonic_phase_columns(prefix: str) -> list[str]:
    return [
        f"{prefix}_{p}_h{h}"
        for p in ("a", "b", "c")
        for h in range(1, HARMONIC_ORDERS + 1)
    ]


PARAMETER_COLUMNS: dict[str, tuple[str, ...]] = {
    "power": tuple(
        _phase_columns("p") + _phase_columns("q") + _phase_columns("s") + _phase_columns("pf")
    ),
    "rms": tuple(_phase_columns("v") + _phase_columns("i")),
    "harmonics": tuple(
        _harmonic_phase_columns("v")
        + _harmonic_phase_columns("i")
        + _phase_columns("thd_v")
        + _phase_columns("thd_i")
    ),
    "frequency": ("frequency", "held"),
    "demand": tuple(_phase_columns("d")),
    "flicker_pst": tuple(_phase_columns("pst")),
    "flicker_plt": tuple(_phase_columns("plt")),
    "event": (
        "event_id",
        "event_type",
        "start_time",
        "end_time",
        "size_in_samples",
        "raw_path",
    ),
}


@dataclass(frozen=True)
class MeasurementPoint:
    """Identity and siting of one monitored busbar or feeder."""

    id: str
    name: str
    point_kind: str
    load_type: str
    city_name: str = ""
    region_name: str = ""
    voltage_level: float = 0.0

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("measurement point id must be non-empty")
        if self.point_kind not in POINT_KINDS:
            raise ValueError(f"point_kind must be one of {POINT_KINDS}")
        if self.load_type not in LOAD_TYPES:
            raise ValueError(f"load_type must be one of {LOAD_TYPES}")
        if self.voltage_level < 0:
            raise ValueError("voltage_level must be >= 0")


@dataclass(frozen=True)
class TransferFile:
    """Metadata of one ingested measurement file.

    ``measurement_date`` is the timestamp of the file's last sample, which
    together with ``row_count`` and the parameter interval determines every
    row timestamp.
    """

    id: int
    measurement_point_id: str
    parameter_type: str
    measurement_date: datetime
    transfer_time: datetime
    path: str
    row_count: int
    content_hash: str

    def __post_init__(self) -> None:
        if self.parameter_type not in PARAMETER_TYPES:
            raise ValueError(f"unknown parameter_type {self.parameter_type!r}")
        if self.measurement_date > self.transfer_time:
            raise ValueError("measurement_date must not be after transfer_time")
        if self.row_count < 0:
            raise ValueError("row_count must be >= 0")


@dataclass(frozen=True)
class EventStat:
    """Incrementally maintained per-point event counters."""

    measurement_point_id: str
    event_count: int = 0
    sag_count: int = 0
    swell_count: int = 0
    interruption_count: int = 0
    unbalance_count: int = 0

    def __post_init__(self) -> None:
        parts = (
            self.sag_count,
            self.swell_count,
            self.interruption_count,
            self.unbalance_count,
        )
        if any(c < 0 for c in parts) or self.event_count != sum(parts):
            raise ValueError("event_count must equal the sum of the per-type counts")


def parameter_interval(parameter_type: str) -> timedelta:
    """Row spacing for an interval-typed parameter; the event log has none."""
    try:
        return timedelta(milliseconds=PARAMETER_INTERVAL_MS[parameter_type])
    except KeyError:
        raise StoreError(
            f"parameter type {parameter_type!r} has no fixed row interval"
        ) from None


def derive_timestamps(transfer_file: TransferFile, row_index: int) -> datetime:
    """Timestamp of ``row_index`` counted back from the last-sample date."""
    if not 0 <= row_index < transfer_file.row_count:
        raise StoreError(
            f"row index {row_index} outside file of {transfer_file.row_count} rows"
        )
    interval = parameter_interval(transfer_file.parameter_type)
    steps = transfer_file.row_count - 1 - row_index
    return transfer_file.measurement_date - steps * interval


def format_value(value) -> str:
    """Serialize one CSV cell; floats keep 17 significant digits, None is empty."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _record_rows(parameter_type: str, records: Sequence) -> list[list]:
    if parameter_type == "power":
        return [list(r.active + r.reactive + r.apparent + r.power_factor) for r in records]
    if parameter_type == "rms":
        return [list(r.v_rms + r.i_rms) for r in records]
    if parameter_type == "harmonics":
        return [
            [x for row in r.v_harmonics for x in row]
            + [x for row in r.i_harmonics for x in row]
            + list(r.thd_v)
            + list(r.thd_i)
            for r in records
        ]
    if parameter_type == "frequency":
        return [[r.frequency, r.held] for r in records]
    if parameter_type == "demand":
        return [list(r.demand) for r in records]
    if parameter_type == "flicker_pst":
        return [list(r.pst) for r in records]
    if parameter_type == "flicker_plt":
        return [list(r.plt) for r in records]
    raise StoreError(f"no row conversion for parameter type {parameter_type!r}")


class TransferFileWriter:
    """Writes one run's records and raw captures under ``<root>/<point_id>/``.

    Directories appear lazily so an empty run leaves only the metadata
    file.  Pass :meth:`raw_sink` to an event detector so raw captures land
    in the tree while the stream is still being analyzed.
    """

    def __init__(self, out_root: Path | str, point: MeasurementPoint, base_time: datetime) -> None:
        self.out_root = Path(out_root)
        self.point = point
        self.base_time = base_time
        self.point_dir = self.out_root / point.id
        try:
            self.point_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StoreError(f"output root not writable: {exc}") from exc
        self._write_metadata()

    def _write_metadata(self) -> None:
        meta = {
            "id": self.point.id,
            "name": self.point.name,
            "point_kind": self.point.point_kind,
            "load_type": self.point.load_type,
            "city_name": self.point.city_name,
            "region_name": self.point.region_name,
            "voltage_level": self.point.voltage_level,
            "base_time": self.base_time.isoformat(timespec=ISO_TIMESPEC),
        }
        path = self.point_dir / POINT_METADATA_FILE
        path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def timestamp(self, seconds: float) -> datetime:
        return self.base_time + timedelta(milliseconds=round(seconds * 1000.0))

    def raw_sink(self, event_type: str, event_id: int, blob: bytes) -> str:
        """Store one compressed capture; returns its absolute path."""
        directory = self.point_dir / RAW_DIR_NAMES[event_type]
        directory.mkdir(exist_ok=True)
        path = directory / f"raw_{event_id}.pqz"
        path.write_bytes(blob)
        return str(path.resolve())

    def _write_csv(
        self, parameter_type: str, rows: list[list], last_sample: datetime, file_seq: int
    ) -> Path:
        directory = self.point_dir / parameter_type
        directory.mkdir(exist_ok=True)
        path = directory / f"{parameter_type}_{file_seq:03d}.csv"
        lines = [f"# columns: {','.join(PARAMETER_COLUMNS[parameter_type])}"]
        lines.extend(",".join(format_value(v) for v in row) for row in rows)
        lines.append(f"#last_sample={last_sample.isoformat(timespec=ISO_TIMESPEC)}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    def write_results(self, result: PipelineResult, file_seq: int = 0) -> list[Path]:
        """Write every non-empty record series plus the event log; returns paths."""
        written: list[Path] = []
        series = [
            ("power", result.power),
            ("rms", result.rms),
            ("harmonics", result.harmonics),
            ("frequency", result.frequency),
            ("demand", result.demand),
            ("flicker_pst", result.flicker_pst),
            ("flicker_plt", result.flicker_plt),
        ]
        for parameter_type, records in series:
            if not records:
                continue
            rows = _record_rows(parameter_type, records)
            last = self.timestamp(records[-1].timestamp)
            written.append(self._write_csv(parameter_type, rows, last, file_seq))
        if result.events:
            rows = [self._event_row(e) for e in result.events]
            last = self.timestamp(max(e.end_time for e in result.events))
            written.append(self._write_csv("event", rows, last, file_seq))
        return written

    def _event_row(self, event: EventRecord) -> list:
        raw = ""
        if event.file_path:
            raw_path = Path(event.file_path)
            try:
                raw = raw_path.relative_to(self.point_dir.resolve()).as_posix()
            except ValueError:
                raw = str(raw_path)
        return [
            event.event_id,
            event.event_type,
            self.timestamp(event.start_time).isoformat(timespec=ISO_TIMESPEC),
            self.timestamp(event.end_time).isoformat(timespec=ISO_TIMESPEC),
            event.size_in_samples,
            raw,
        ]


def write_transfer_files(
    out_root: Path | str,
    point: MeasurementPoint,
    base_time: datetime,
    result: PipelineResult,
    file_seq: int = 0,
) -> list[Path]:
    """One-shot convenience wrapper around :class:`TransferFileWriter`."""
    return TransferFileWriter(out_root, point, base_time).write_results(result, file_seq)


# -- database ---------------------------------------------------------------


_SCHEMA_FIXED = """
CREATE TABLE IF NOT EXISTS measurement_point (
    id TEXT PRIMARY KEY,
    name TEXT NOT NULL,
    point_kind TEXT NOT NULL,
    load_type TEXT NOT NULL,
    city_name TEXT NOT NULL DEFAULT '',
    region_name TEXT NOT NULL DEFAULT '',
    voltage_level REAL NOT NULL DEFAULT 0
);
CREATE TABLE IF NOT EXISTS transfer_file (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    measurement_point_id TEXT NOT NULL REFERENCES measurement_point(id),
    parameter_type TEXT NOT NULL,
    measurement_date TEXT NOT NULL,
    transfer_time TEXT NOT NULL,
    path TEXT NOT NULL,
    row_count INTEGER NOT NULL,
    content_hash TEXT NOT NULL UNIQUE
);
CREATE TABLE IF NOT EXISTS event (
    measurement_point_id TEXT NOT NULL REFERENCES measurement_point(id),
    event_id INTEGER NOT NULL,
    event_type TEXT NOT NULL,
    start_time TEXT NOT NULL,
    end_time TEXT NOT NULL,
    size_in_samples INTEGER NOT NULL,
    raw_path TEXT,
    transfer_file_id INTEGER NOT NULL REFERENCES transfer_file(id),
    PRIMARY KEY (measurement_point_id, event_id)
);
CREATE TABLE IF NOT EXISTS event_stat (
    measurement_point_id TEXT PRIMARY KEY REFERENCES measurement_point(id),
    event_count INTEGER NOT NULL DEFAULT 0,
    sag_count INTEGER NOT NULL DEFAULT 0,
    swell_count INTEGER NOT NULL DEFAULT 0,
    interruption_count INTEGER NOT NULL DEFAULT 0,
    unbalance_count INTEGER NOT NULL DEFAULT 0
);
"""


def _series_table_sql(parameter_type: str) -> str:
    cols = ",\n    ".join(f'"{c}" REAL' for c in PARAMETER_COLUMNS[parameter_type])
    if parameter_type == "frequency":
        cols = '"frequency" REAL,\n    "held" INTEGER'
    return (
        f"CREATE TABLE IF NOT EXISTS {parameter_type} (\n"
        "    measurement_point_id TEXT NOT NULL REFERENCES measurement_point(id),\n"
        "    transfer_file_id INTEGER NOT NULL REFERENCES transfer_file(id),\n"
        "    row_index INTEGER NOT NULL,\n"
        f"    {cols},\n"
        "    PRIMARY KEY (transfer_file_id, row_index)\n"
        ")"
    )


class StreamDatabase:
    """Thin wrapper around the SQLite schema used by ingestion and queries."""

    def __init__(self, path: Path | str, readonly: bool = False) -> None:
        self.path = Path(path)
        self.readonly = readonly
        if readonly:
            uri = f"file:{self.path}?mode=ro"
            self.conn = sqlite3.connect(uri, uri=True)
        else:
            self.conn = sqlite3.connect(self.path)
            self._create_schema()
        self.conn.row_factory = sqlite3.Row

    def _create_schema(self) -> None:
        self.conn.executescript(_SCHEMA_FIXED)
        for parameter_type in PARAMETER_TYPES:
            if parameter_type == "event":
                continue
            self.conn.execute(_series_table_sql(parameter_type))
        self.conn.commit()

    def close(self) -> None:
        self.conn.close()

    def __enter__(self) -> "StreamDatabase":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- points and stats --------------------------------------------------

    def upsert_point(self, point: MeasurementPoint) -> None:
        self.conn.execute(
            "INSERT INTO measurement_point"
            " (id, name, point_kind, load_type, city_name, region_name, voltage_level)"
            " VALUES (?, ?, ?, ?, ?, ?, ?)"
            " ON CONFLICT(id) DO UPDATE SET name=excluded.name,"
            " point_kind=excluded.point_kind, load_type=excluded.load_type,"
            " city_name=excluded.city_name, region_name=excluded.region_name,"
            " voltage_level=excluded.voltage_level",
            (
                point.id,
                point.name,
                point.point_kind,
                point.load_type,
                point.city_name,
                point.region_name,
                point.voltage_level,
            ),
        )

    def get_point(self, point_id: str) -> MeasurementPoint | None:
        row = self.conn.execute(
            "SELECT * FROM measurement_point WHERE id = ?", (point_id,)
        ).fetchone()
        if row is None:
            return None
        return MeasurementPoint(
            id=row["id"],
            name=row["name"],
            point_kind=row["point_kind"],
            load_type=row["load_type"],
            city_name=row["city_name"],
            region_name=row["region_name"],
            voltage_level=row["voltage_level"],
        )

    def event_stat(self, point_id: str) -> EventStat | None:
        row = self.conn.execute(
            "SELECT * FROM event_stat WHERE measurement_point_id = ?", (point_id,)
        ).fetchone()
        if row is None:
            return None
        return EventStat(
            measurement_point_id=row["measurement_point_id"],
            event_count=row["event_count"],
            sag_count=row["sag_count"],
            swell_count=row["swell_count"],
            interruption_count=row["interruption_count"],
            unbalance_count=row["unbalance_count"],
        )

    def update_event_stat(self, point_id: str, event_type: str, amount: int = 1) -> None:
        """Bump the per-type and total counters, creating the row on first use."""
        if event_type not in RAW_DIR_NAMES:
            raise StoreError(f"unknown event type {event_type!r}")
        self.conn.execute(
            "INSERT INTO event_stat (measurement_point_id) VALUES (?)"
            " ON CONFLICT(measurement_point_id) DO NOTHING",
            (point_id,),
        )
        column = f"{event_type}_count"
        self.conn.execute(
            f"UPDATE event_stat SET {column} = {column} + ?,"
            " event_count = event_count + ? WHERE measurement_point_id = ?",
            (amount, amount, point_id),
        )

    def recompute_event_stat(self, point_id: str) -> EventStat:
        """Full scan of the event table; the incremental counters must agree."""
        counts = {t: 0 for t in RAW_DIR_NAMES}
        for row in self.conn.execute(
            "SELECT event_type, COUNT(*) AS n FROM event"
            " WHERE measurement_point_id = ? GROUP BY event_type",
            (point_id,),
        ):
            counts[row["event_type"]] = row["n"]
        return EventStat(
            measurement_point_id=point_id,
            event_count=sum(counts.values()),
            sag_count=counts["sag"],
            swell_count=counts["swell"],
            interruption_count=counts["interruption"],
            unbalance_count=counts["unbalance"],
        )

    def get_transfer_file(self, transfer_file_id: int) -> TransferFile | None:
        row = self.conn.execute(
            "SELECT * FROM transfer_file WHERE id = ?", (transfer_file_id,)
        ).fetchone()
        if row is None:
            return None
        return TransferFile(
            id=row["id"],
            measurement_point_id=row["measurement_point_id"],
            parameter_type=row["parameter_type"],
            measurement_date=datetime.fromisoformat(row["measurement_date"]),
            transfer_time=datetime.fromisoformat(row["transfer_time"]),
            path=row["path"],
            row_count=row["row_count"],
            content_hash=row["content_hash"],
        )


# -- ingestion ---------------------------------------------------------------


@dataclass
class IngestReport:
    """Outcome of one :func:`ingest_directory` run."""

    points_seen: int = 0
    files_ingested: int = 0
    files_skipped_duplicate: int = 0
    files_malformed: list[tuple[str, str]] = field(default_factory=list)
    rows_inserted: dict[str, int] = field(default_factory=dict)

    def bump_rows(self, table: str, amount: int) -> None:
        self.rows_inserted[table] = self.rows_inserted.get(table, 0) + amount

    @property
    def total_rows_inserted(self) -> int:
        return sum(self.rows_inserted.values())

    def summary(self) -> str:
        lines = [
            f"points: {self.points_seen}",
            f"files ingested: {self.files_ingested}",
            f"files skipped (duplicate): {self.files_skipped_duplicate}",
            f"files malformed: {len(self.files_malformed)}",
        ]
        for path, reason in self.files_malformed:
            lines.append(f"  {path}: {reason}")
        for table in sorted(self.rows_inserted):
            lines.append(f"rows into {table}: {self.rows_inserted[table]}")
        return "\n".join(lines)


@dataclass(frozen=True)
class _ParsedFile:
    rows: list[list[str]]
    measurement_date: datetime


def _parse_transfer_csv(path: Path, expected_columns: int) -> _ParsedFile:
    rows: list[list[str]] = []
    measurement_date: datetime | None = None
    for raw in path.read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#last_sample="):
            try:
                measurement_date = datetime.fromisoformat(line.split("=", 1)[1])
            except ValueError as exc:
                raise StoreError(f"bad footer timestamp: {exc}") from None
            continue
        if line.startswith("#"):
            continue
        cells = line.split(",")
        if len(cells) != expected_columns:
            raise StoreError(
                f"row {len(rows) + 1} holds {len(cells)} cells, expected {expected_columns}"
            )
        rows.append(cells)
    if measurement_date is None:
        raise StoreError("missing #last_sample footer")
    return _ParsedFile(rows=rows, measurement_date=measurement_date)


def _load_point_metadata(path: Path) -> tuple[MeasurementPoint, datetime]:
    meta = json.loads(path.read_text(encoding="utf-8"))
    point = MeasurementPoint(
        id=meta["id"],
        name=meta.get("name", meta["id"]),
        point_kind=meta.get("point_kind", "busbar"),
        load_type=meta.get("load_type", LOAD_TYPES[0]),
        city_name=meta.get("city_name", ""),
        region_name=meta.get("region_name", ""),
        voltage_level=float(meta.get("voltage_level", 0.0)),
    )
    base_time = datetime.fromisoformat(meta.get("base_time", "2000-01-01T00:00:00"))
    return point, base_time


def _cell_to_sql(cell: str) -> float | None:
    if cell == "":
        return None
    return float(cell)


def _ingest_series_file(
    db: StreamDatabase,
    report: IngestReport,
    point: MeasurementPoint,
    parameter_type: str,
    path: Path,
    parsed: _ParsedFile,
    transfer_file_id: int,
) -> None:
    columns = PARAMETER_COLUMNS[parameter_type]
    col_sql = ", ".join(f'"{c}"' for c in columns)
    placeholders = ", ".join("?" for _ in range(len(columns) + 3))
    sql = (
        f"INSERT INTO {parameter_type} (measurement_point_id, transfer_file_id,"
        f" row_index, {col_sql}) VALUES ({placeholders})"
    )
    payload = []
    for index, cells in enumerate(parsed.rows):
        values = [_cell_to_sql(c) for c in cells]
        payload.append([point.id, transfer_file_id, index, *values])
    db.conn.executemany(sql, payload)
    report.bump_rows(parameter_type, len(payload))


def _ingest_event_file(
    db: StreamDatabase,
    report: IngestReport,
    point: MeasurementPoint,
    point_dir: Path,
    parsed: _ParsedFile,
    transfer_file_id: int,
) -> None:
    inserted = 0
    for cells in parsed.rows:
        event_id = int(cells[0])
        event_type = cells[1]
        if event_type not in RAW_DIR_NAMES:
            raise StoreError(f"unknown event type {event_type!r}")
        raw_path: str | None = None
        if cells[5]:
            candidate = Path(cells[5])
            if not candidate.is_absolute():
                candidate = point_dir / candidate
            raw_path = str(candidate.resolve())
        cursor = db.conn.execute(
            "INSERT OR IGNORE INTO event (measurement_point_id, event_id, event_type,"
            " start_time, end_time, size_in_samples, raw_path, transfer_file_id)"
            " VALUES (?, ?, ?, ?, ?, ?, ?, ?)",
            (
                point.id,
                event_id,
                event_type,
                cells[2],
                cells[3],
                int(cells[4]),
                raw_path,
                transfer_file_id,
            ),
        )
        if cursor.rowcount == 1:
            db.update_event_stat(point.id, event_type)
            inserted += 1
    report.bump_rows("event", inserted)


def ingest_directory(root: Path | str, db: StreamDatabase) -> IngestReport:
    """Walk a transfer tree into the database, idempotently.

    A file whose content hash is already present is skipped; malformed
    files are reported by path and skipped without aborting the rest of
    the run.  Event rows update the per-point counters as they land.
    """
    root = Path(root)
    if not root.is_dir():
        raise StoreError(f"ingest root {root} is not a directory")
    if db.readonly:
        raise StoreError("cannot ingest into a read-only database")
    report = IngestReport()
    for point_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        meta_path = point_dir / POINT_METADATA_FILE
        if not meta_path.is_file():
            report.files_malformed.append((str(point_dir), "missing point metadata"))
            continue
        try:
            point, _ = _load_point_metadata(meta_path)
        except (ValueError, KeyError) as exc:
            report.files_malformed.append((str(meta_path), f"bad metadata: {exc}"))
            continue
        db.upsert_point(point)
        report.points_seen += 1
        for parameter_type in PARAMETER_TYPES:
            directory = point_dir / parameter_type
            if not directory.is_dir():
                continue
            for path in sorted(directory.glob(f"{parameter_type}_*.csv")):
                _ingest_one_file(db, report, point, point_dir, parameter_type, path)
        db.conn.commit()
    return report


def _ingest_one_file(
    db: StreamDatabase,
    report: IngestReport,
    point: MeasurementPoint,
    point_dir: Path,
    parameter_type: str,
    path: Path,
) -> None:
    content = path.read_bytes()
    content_hash = hashlib.sha256(content).hexdigest()
    exists = db.conn.execute(
        "SELECT 1 FROM transfer_file WHERE content_hash = ?", (content_hash,)
    ).fetchone()
    if exists is not None:
        report.files_skipped_duplicate += 1
        return
    try:
        parsed = _parse_transfer_csv(path, len(PARAMETER_COLUMNS[parameter_type]))
    except StoreError as exc:
        report.files_malformed.append((str(path), str(exc)))
        return
    transfer_time = datetime.now(timezone.utc).replace(tzinfo=None)
    cursor = db.conn.execute(
        "INSERT INTO transfer_file (measurement_point_id, parameter_type,"
        " measurement_date, transfer_time, path, row_count, content_hash)"
        " VALUES (?, ?, ?, ?, ?, ?, ?)",
        (
            point.id,
            parameter_type,
            parsed.measurement_date.isoformat(timespec=ISO_TIMESPEC),
            transfer_time.isoformat(timespec=ISO_TIMESPEC),
            str(path.resolve()),
            len(parsed.rows),
            content_hash,
        ),
    )
    transfer_file_id = cursor.lastrowid
    try:
        if parameter_type == "event":
            _ingest_event_file(db, report, point, point_dir, parsed, transfer_file_id)
        else:
            _ingest_series_file(
                db, report, point, parameter_type, path, parsed, transfer_file_id
            )
    except (StoreError, ValueError) as exc:
        db.conn.rollback()
        report.files_malformed.append((str(path), str(exc)))
        return
    report.files_ingested += 1


# -- traffic budget -----------------------------------------------------------


@dataclass(frozen=True)
class BudgetRow:
    """Average outgoing bit rate of one parameter for a single point."""

    parameter: str
    bits_per_second: float
    raw_event_stream: bool = False


@dataclass(frozen=True)
class BudgetConfig:
    """Inputs of the traffic budget.

    Every value travels as a 64-bit float; the event length and type rows
    are campaign-average constants rather than cadence-derived rates, and
    the raw event rows assume continuous streaming of all samples.
    """

    sample_bits: int = 64
    phase_count: int = 3
    sampling_rate: int = 3200
    event_length_bps: float = 4.0
    event_type_bps: float = 10.0


@dataclass(frozen=True)
class TrafficBudget:
    rows: tuple[BudgetRow, ...]

    @property
    def total_with_events(self) -> float:
        return sum(r.bits_per_second for r in self.rows)

    @property
    def total_without_events(self) -> float:
        return sum(r.bits_per_second for r in self.rows if not r.raw_event_stream)


def compute_traffic_budget(config: BudgetConfig = BudgetConfig()) -> TrafficBudget:
    """Per-parameter outgoing bit rates and the two campaign totals.

    The "without events" total leaves out only the two raw-sample streams;
    the event length and type bookkeeping rates stay in both totals.
    """
    bits = float(config.sample_bits)
    phases = float(config.phase_count)
    per_phase_each_second = bits * phases  # one value per phase per second
    raw_stream = bits * phases * config.sampling_rate
    rows = (
        BudgetRow("Active Power", per_phase_each_second / 1.0),
        BudgetRow("Reactive Power", per_phase_each_second / 1.0),
        BudgetRow("Apparent Power", per_phase_each_second / 1.0),
        BudgetRow("Power Factor", per_phase_each_second / 1.0),
        BudgetRow("33 Voltage Harmonics", bits * phases * HARMONIC_ORDERS / 3.0),
        BudgetRow("33 Current Harmonics", bits * phases * HARMONIC_ORDERS / 3.0),
        BudgetRow("RMS Voltage and Current", bits * phases * 2.0 / 0.2),
        BudgetRow("Event Length", config.event_length_bps),
        BudgetRow("Event Type", config.event_type_bps),
        BudgetRow("Event Raw Data (Current)", raw_stream, raw_event_stream=True),
        BudgetRow("Event Raw Data (Voltage)", raw_stream, raw_event_stream=True),
        BudgetRow("Short Term Flicker", per_phase_each_second / 600.0),
        BudgetRow("Demand", per_phase_each_second / 900.0),
        BudgetRow("Frequency", bits / 1.0),
    )
    return TrafficBudget(rows=rows)


def _format_rate(value: float) -> str:
    text = f"{value:,.3f}"
    if "." in text:
        text = text.rstrip("0").rstrip(".")
    return text


def format_budget_table(budget: TrafficBudget) -> str:
    """Aligned two-column rendering with both campaign totals."""
    name_width = max(len(r.parameter) for r in budget.rows)
    name_width = max(name_width, len("Total (without event raw data)"))
    lines = [f"{'Parameter':<{name_width}}  {'bits/s':>15}"]
    lines.append("-" * (name_width + 17))
    for row in budget.rows:
        lines.append(f"{row.parameter:<{name_width}}  {_format_rate(row.bits_per_second):>15}")
    lines.append("-" * (name_width + 17))
    lines.append(
        f"{'Total (with event raw data)':<{name_width}}  "
        f"{budget.total_with_events:>15,.3f}"
    )
    lines.append(
        f"{'Total (without event raw data)':<{name_width}}  "
        f"{budget.total_without_events:>15,.3f}"
    )
    return "\n".join(lines)
