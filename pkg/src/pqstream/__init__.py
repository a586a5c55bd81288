"""Power-quality stream engine for three-phase 3200 Hz measurement campaigns.

The package is organised around five cooperating parts:

``siggen``
    deterministic waveform synthesis with scripted disturbances,
``analyzer``
    online computation of averaged power-quality parameters,
``events``
    threshold state machines with raw-sample capture,
``store``
    transfer-file tree writer, database ingestion and the traffic budget,
``query``
    read-only time series / event aggregation plus chart rendering.

The ``pqstream`` console entry point (see :mod:`pqstream.cli`) chains them
into a generate / analyze / ingest / query workflow.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .siggen import (
    DisturbanceScript,
    DisturbanceSpec,
    ScriptError,
    SignalConfig,
    WaveformFrame,
    generate_stream,
    parse_script,
    serialize_script,
)
from .analyzer import (
    PipelineConfig,
    PipelineResult,
    StreamGapError,
    StreamPipeline,
    run_pipeline,
)
from .events import EventDetector, EventRecord, EventThresholds
from .store import (
    MeasurementPoint,
    StreamDatabase,
    TransferFileWriter,
    compute_traffic_budget,
    ingest_directory,
)

__all__ = [
    "DisturbanceScript",
    "DisturbanceSpec",
    "EventDetector",
    "EventRecord",
    "EventThresholds",
    "MeasurementPoint",
    "PipelineConfig",
    "PipelineResult",
    "ScriptError",
    "SignalConfig",
    "StreamDatabase",
    "StreamGapError",
    "StreamPipeline",
    "TransferFileWriter",
    "WaveformFrame",
    "compute_traffic_budget",
    "generate_stream",
    "ingest_directory",
    "parse_script",
    "run_pipeline",
    "serialize_script",
]
