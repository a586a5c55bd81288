"""Read-only access to ingested measurements: time series, event sums, detail.

Every function returns a :class:`ResultTable`, a plain column/row container
that the chart renderer and the CLI share.  Queries never write to the
database; identical inputs yield identical tables (rows are explicitly
ordered) so rendered output is reproducible byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

from .events import decode_raw_capture
from .store import (
    PARAMETER_COLUMNS,
    PARAMETER_TYPES,
    StreamDatabase,
    TransferFile,
    derive_timestamps,
)

#: MeasurementPoint attributes usable as filters and group keys.
POINT_ATTRIBUTES = (
    "id",
    "name",
    "point_kind",
    "load_type",
    "city_name",
    "region_name",
    "voltage_level",
)

#: EventStat counters usable in aggregations.
STAT_COLUMNS = (
    "event_count",
    "sag_count",
    "swell_count",
    "interruption_count",
    "unbalance_count",
)

AGGREGATE_FUNCTIONS = ("sum", "count", "mean", "max", "min")
_SQL_FUNC = {"sum": "SUM", "count": "COUNT", "mean": "AVG", "max": "MAX", "min": "MIN"}

DEFAULT_AGGREGATES = (
    ("sum", "sag_count"),
    ("sum", "swell_count"),
    ("sum", "unbalance_count"),
    ("sum", "event_count"),
)


class QueryError(ValueError):
    """Raised for malformed query specifications."""


class NotFoundError(LookupError):
    """Raised when the referenced point, parameter or event does not exist."""


@dataclass(frozen=True)
class ResultTable:
    """Columns, rows and a provenance note describing what produced them."""

    columns: tuple[str, ...]
    rows: tuple[tuple, ...]
    provenance: str = ""

    def __post_init__(self) -> None:
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError(
                    f"row of {len(row)} cells does not match {len(self.columns)} columns"
                )


@dataclass(frozen=True)
class QuerySpec:
    """Event aggregation request over the per-point counters.

    ``filters`` match measurement point attributes exactly; ``group_by``
    names point attributes; ``aggregates`` pairs a function with a counter
    column.  The defaults reproduce the per-load-type event summary.
    """

    filters: tuple[tuple[str, object], ...] = ()
    group_by: tuple[str, ...] = ()
    aggregates: tuple[tuple[str, str], ...] = DEFAULT_AGGREGATES

    def __post_init__(self) -> None:
        for key, _ in self.filters:
            if key not in POINT_ATTRIBUTES:
                raise QueryError(
                    f"unknown filter attribute {key!r}; expected one of {POINT_ATTRIBUTES}"
                )
        for key in self.group_by:
            if key not in POINT_ATTRIBUTES:
                raise QueryError(
                    f"unknown group key {key!r}; expected one of {POINT_ATTRIBUTES}"
                )
        if not self.aggregates:
            raise QueryError("at least one aggregate is required")
        for func, column in self.aggregates:
            if func not in AGGREGATE_FUNCTIONS:
                raise QueryError(
                    f"unknown aggregate {func!r}; expected one of {AGGREGATE_FUNCTIONS}"
                )
            if column not in STAT_COLUMNS:
                raise QueryError(
                    f"unknown counter {column!r}; expected one of {STAT_COLUMNS}"
                )


def timeseries(
    db: StreamDatabase,
    point_id: str,
    parameter_type: str,
    start: datetime | None = None,
    end: datetime | None = None,
) -> ResultTable:
    """Derived-timestamped rows of one parameter for one point, time ascending.

    ``start`` and ``end`` bound the derived timestamps inclusively; an
    interval with no rows yields an empty table with the usual columns.
    """
    if parameter_type not in PARAMETER_TYPES or parameter_type == "event":
        raise QueryError(f"parameter type must be one of {PARAMETER_TYPES[:-1]}")
    if db.get_point(point_id) is None:
        raise NotFoundError(f"measurement point {point_id!r} not in the database")
    columns = PARAMETER_COLUMNS[parameter_type]
    files: dict[int, TransferFile] = {}
    for row in db.conn.execute(
        "SELECT * FROM transfer_file WHERE measurement_point_id = ?"
        " AND parameter_type = ?",
        (point_id, parameter_type),
    ):
        files[row["id"]] = TransferFile(
            id=row["id"],
            measurement_point_id=row["measurement_point_id"],
            parameter_type=row["parameter_type"],
            measurement_date=datetime.fromisoformat(row["measurement_date"]),
            transfer_time=datetime.fromisoformat(row["transfer_time"]),
            path=row["path"],
            row_count=row["row_count"],
            content_hash=row["content_hash"],
        )
    col_sql = ", ".join(f'"{c}"' for c in columns)
    out: list[tuple] = []
    for data in db.conn.execute(
        f"SELECT transfer_file_id, row_index, {col_sql} FROM {parameter_type}"
        " WHERE measurement_point_id = ? ORDER BY transfer_file_id, row_index",
        (point_id,),
    ):
        tf = files[data["transfer_file_id"]]
        ts = derive_timestamps(tf, data["row_index"])
        if start is not None and ts < start:
            continue
        if end is not None and ts > end:
            continue
        out.append((ts, *[data[c] for c in columns]))
    out.sort(key=lambda r: r[0])
    return ResultTable(
        columns=("timestamp", *columns),
        rows=tuple(out),
        provenance=f"timeseries point={point_id} parameter={parameter_type}",
    )


def aggregate_events(db: StreamDatabase, spec: QuerySpec = QuerySpec()) -> ResultTable:
    """Sum event counters over points, optionally filtered and grouped.

    Reads only the incrementally maintained counters joined with the point
    attributes.  Groups come back ordered ascending by the group key tuple.
    """
    select: list[str] = [f"mp.{k}" for k in spec.group_by]
    headers: list[str] = list(spec.group_by)
    for func, column in spec.aggregates:
        select.append(f"{_SQL_FUNC[func]}(es.{column})")
        headers.append(f"{func}_{column}")
    where: list[str] = []
    params: list[object] = []
    for key, value in spec.filters:
        where.append(f"mp.{key} = ?")
        params.append(value)
    sql = (
        f"SELECT {', '.join(select)} FROM event_stat es"
        " JOIN measurement_point mp ON es.measurement_point_id = mp.id"
    )
    if where:
        sql += " WHERE " + " AND ".join(where)
    if spec.group_by:
        group = ", ".join(f"mp.{k}" for k in spec.group_by)
        sql += f" GROUP BY {group} ORDER BY {group}"
    rows = [tuple(row) for row in db.conn.execute(sql, params)]
    if not spec.group_by and rows == [tuple([None] * len(spec.aggregates))]:
        rows = []  # SQL aggregates over zero rows; report an empty table instead
    return ResultTable(
        columns=tuple(headers),
        rows=tuple(rows),
        provenance="aggregate_events "
        + (f"group_by={','.join(spec.group_by)}" if spec.group_by else "ungrouped"),
    )


@dataclass(frozen=True)
class StoredEvent:
    """One event row as ingested, with parsed timestamps."""

    measurement_point_id: str
    event_id: int
    event_type: str
    start_time: datetime
    end_time: datetime
    size_in_samples: int
    raw_path: str | None


def event_detail(
    db: StreamDatabase, event_id: int, point_id: str | None = None
) -> StoredEvent:
    """Fetch one event row; ``point_id`` disambiguates reused event ids."""
    sql = "SELECT * FROM event WHERE event_id = ?"
    params: list[object] = [event_id]
    if point_id is not None:
        sql += " AND measurement_point_id = ?"
        params.append(point_id)
    rows = db.conn.execute(sql, params).fetchall()
    if not rows:
        raise NotFoundError(f"no event with id {event_id}")
    if len(rows) > 1:
        points = ", ".join(sorted(r["measurement_point_id"] for r in rows))
        raise QueryError(
            f"event id {event_id} exists at several points ({points}); pass point_id"
        )
    row = rows[0]
    return StoredEvent(
        measurement_point_id=row["measurement_point_id"],
        event_id=row["event_id"],
        event_type=row["event_type"],
        start_time=datetime.fromisoformat(row["start_time"]),
        end_time=datetime.fromisoformat(row["end_time"]),
        size_in_samples=row["size_in_samples"],
        raw_path=row["raw_path"],
    )


def extract_raw_capture(event: StoredEvent, out_dir: Path | str) -> Path:
    """Decompress an event's raw capture into a CSV next to the caller's output.

    The CSV holds one row per sample: the sample index followed by the six
    channel values (voltage A, B, C then current A, B, C).  Raises
    :class:`NotFoundError` when the event has no stored capture.
    """
    if not event.raw_path:
        raise NotFoundError(
            f"event {event.event_id} has no raw capture stored (write failed or skipped)"
        )
    blob = Path(event.raw_path).read_bytes()
    header, samples = decode_raw_capture(blob)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / f"raw_{event.measurement_point_id}_{event.event_id}.csv"
    lines = ["sample_index,v_a,v_b,v_c,i_a,i_b,i_c"]
    first = round(header["start_time"] * header["sample_rate"])
    for k in range(header["sample_count"]):
        cells = ",".join(format(samples[c, k], ".17g") for c in range(samples.shape[0]))
        lines.append(f"{first + k},{cells}")
    out_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out_path
