"""Online computation of averaged power-quality parameters.

Consumes contiguous waveform frames and emits one record per tumbling
window: RMS every 0.2 s, power and frequency every second, 33 harmonics
plus THD every 3 s, demand every 15 minutes, short-term flicker severity
every 10 minutes and long-term flicker severity every 2 hours.  All record
timestamps are seconds since stream start and mark the end of the window
that produced them.  Incomplete windows at stream end are discarded and
tallied, never emitted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .siggen import SAMPLE_RATE, WaveformFrame

RMS_WINDOW = 640            # 0.2 s at 3200 Hz
POWER_WINDOW = 3200         # 1 s
HARMONIC_WINDOW = 9600      # 3 s
DEMAND_INTERVAL_S = 900.0   # 15 min of per-second fundamental current magnitudes
PST_INTERVAL_S = 600.0      # 10 min of half-cycle RMS values
PLT_PST_COUNT = 12          # 12 x 10 min = 2 h
HARMONIC_ORDERS = 33

Triple = tuple[float, float, float]
OptionalTriple = tuple[Optional[float], Optional[float], Optional[float]]


class StreamGapError(ValueError):
    """Raised when a frame does not start where the previous one ended."""


@dataclass(frozen=True)
class RmsRecord:
    timestamp: float
    v_rms: Triple
    i_rms: Triple


@dataclass(frozen=True)
class PowerRecord:
    timestamp: float
    active: Triple
    reactive: Triple
    apparent: Triple
    power_factor: Triple


@dataclass(frozen=True)
class HarmonicsRecord:
    """Peak amplitudes of harmonic orders 1..33 per phase plus THD in percent.

    A THD entry is None when the fundamental magnitude sat below the
    configured floor, i.e. the ratio is undefined rather than zero.
    """

    timestamp: float
    v_harmonics: tuple[tuple[float, ...], ...]
    i_harmonics: tuple[tuple[float, ...], ...]
    thd_v: OptionalTriple
    thd_i: OptionalTriple


@dataclass(frozen=True)
class FrequencyRecord:
    timestamp: float
    frequency: float
    held: bool


@dataclass(frozen=True)
class DemandRecord:
    timestamp: float
    demand: Triple


@dataclass(frozen=True)
class FlickerPstRecord:
    timestamp: float
    pst: OptionalTriple


@dataclass(frozen=True)
class FlickerPltRecord:
    timestamp: float
    plt: Triple


@dataclass(frozen=True)
class PipelineConfig:
    """Tuning knobs for the analysis pipeline.

    ``thd_floor_factor`` scales the nominal RMS level into the fundamental
    magnitude floor below which THD is reported as undefined.
    """

    nominal_frequency: float = 50.0
    sampling_rate: int = SAMPLE_RATE
    nominal_voltage_rms: float = 230.0
    nominal_current_rms: float = 10.0
    frequency_band: tuple[float, float] = (40.0, 70.0)
    thd_floor_factor: float = 1e-9
    pst_calibration: float = 1.0

    def __post_init__(self) -> None:
        if self.sampling_rate != SAMPLE_RATE:
            raise ValueError(f"sampling_rate is fixed at {SAMPLE_RATE} Hz")
        if self.nominal_frequency <= 0:
            raise ValueError("nominal_frequency must be positive")
        lo, hi = self.frequency_band
        if not lo < hi:
            raise ValueError("frequency_band must be (low, high) with low < high")

    @property
    def half_cycle_samples(self) -> int:
        return round(self.sampling_rate / (2.0 * self.nominal_frequency))


def rms(samples: np.ndarray) -> np.ndarray | float:
    """Root mean square along the last axis."""
    return np.sqrt(np.mean(np.square(samples), axis=-1))


def compute_rms(
    v_window: np.ndarray, i_window: np.ndarray, timestamp: float
) -> RmsRecord:
    """RMS of one 0.2 s window (shape (3, 640)) per voltage and current phase."""
    if v_window.shape[-1] != RMS_WINDOW:
        raise ValueError(f"RMS window must hold exactly {RMS_WINDOW} samples")
    return RmsRecord(
        timestamp=timestamp,
        v_rms=tuple(float(x) for x in rms(v_window)),
        i_rms=tuple(float(x) for x in rms(i_window)),
    )


def half_cycle_rms(window: np.ndarray, block: int) -> np.ndarray:
    """RMS over consecutive ``block``-sample groups; shape (3, n//block)."""
    n = window.shape[-1] - window.shape[-1] % block
    grouped = window[..., :n].reshape(window.shape[0], n // block, block)
    return np.sqrt(np.mean(np.square(grouped), axis=-1))


def fundamental_phasor(
    samples: np.ndarray, frequency: float, sample_rate: int = SAMPLE_RATE
) -> np.ndarray:
    """Complex single-frequency projection scaled to peak amplitude.

    ``samples`` may be (n,) or (k, n); the magnitude of the result equals
    the peak amplitude of a pure sinusoid at ``frequency``.
    """
    x = np.atleast_2d(samples)
    n = x.shape[-1]
    k = np.arange(n)
    basis = np.exp(-2j * np.pi * frequency / sample_rate * k)
    proj = (2.0 / n) * (x @ basis)
    return proj if samples.ndim > 1 else proj[0]


def harmonic_magnitudes(
    samples: np.ndarray,
    fundamental: float,
    sample_rate: int = SAMPLE_RATE,
    orders: int = HARMONIC_ORDERS,
) -> np.ndarray:
    """Peak amplitudes at orders 1..``orders`` times ``fundamental``.

    Single-frequency projections are evaluated per order (the order-h basis
    is the elementwise h-th power of the order-1 basis, built by a running
    product) and scaled so a pure sinusoid of amplitude A reports A.
    """
    x = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    n = x.shape[-1]
    base = np.exp(-2j * np.pi * fundamental / sample_rate * np.arange(n))
    basis = np.empty((orders, n), dtype=np.complex128)
    basis[0] = base
    for h in range(1, orders):
        basis[h] = basis[h - 1] * base
    proj = basis @ x.T  # (orders, channels)
    mags = (2.0 / n) * np.abs(proj).T
    return mags if samples.ndim > 1 else mags[0]


def compute_thd(magnitudes: Sequence[float], floor: float = 0.0) -> float | None:
    """Total harmonic distortion in percent of the fundamental.

    Returns None (undefined) when the fundamental magnitude does not exceed
    ``floor``; a dead channel has no meaningful distortion ratio.
    """
    mags = np.asarray(magnitudes, dtype=np.float64)
    if mags.ndim != 1 or len(mags) < 2:
        raise ValueError("need the fundamental plus at least one harmonic")
    if mags[0] <= floor:
        return None
    return 100.0 * math.sqrt(float(np.sum(np.square(mags[1:])))) / float(mags[0])


def compute_harmonics(
    v_window: np.ndarray,
    i_window: np.ndarray,
    fundamental: float,
    timestamp: float,
    sample_rate: int = SAMPLE_RATE,
    v_floor: float = 0.0,
    i_floor: float = 0.0,
) -> HarmonicsRecord:
    """Harmonic magnitudes for orders 1..33 of one 3 s window plus THD."""
    if v_window.shape[-1] != HARMONIC_WINDOW:
        raise ValueError(f"harmonics window must hold exactly {HARMONIC_WINDOW} samples")
    v_mags = harmonic_magnitudes(v_window, fundamental, sample_rate)
    i_mags = harmonic_magnitudes(i_window, fundamental, sample_rate)
    return HarmonicsRecord(
        timestamp=timestamp,
        v_harmonics=tuple(tuple(float(x) for x in row) for row in v_mags),
        i_harmonics=tuple(tuple(float(x) for x in row) for row in i_mags),
        thd_v=tuple(compute_thd(row, v_floor) for row in v_mags),
        thd_i=tuple(compute_thd(row, i_floor) for row in i_mags),
    )


def _wrap_angle(angle: float) -> float:
    return (angle + math.pi) % (2.0 * math.pi) - math.pi


def compute_power(
    v_window: np.ndarray,
    i_window: np.ndarray,
    fundamental: float,
    timestamp: float,
    sample_rate: int = SAMPLE_RATE,
) -> PowerRecord:
    """Per-phase P, Q, S and power factor over one 1 s window.

    P is the sample mean of v*i, S the product of the RMS values, and
    Q = sign(phi) * sqrt(max(S^2 - P^2, 0)) where phi is the fundamental
    lag of current behind voltage, making Q positive for inductive load.
    The power factor is P/S, defined as 0 for a dead window.
    """
    if v_window.shape[-1] != POWER_WINDOW:
        raise ValueError(f"power window must hold exactly {POWER_WINDOW} samples")
    active = np.mean(v_window * i_window, axis=-1)
    apparent = rms(v_window) * rms(i_window)
    zv = fundamental_phasor(v_window, fundamental, sample_rate)
    zi = fundamental_phasor(i_window, fundamental, sample_rate)
    p_out, q_out, s_out, pf_out = [], [], [], []
    for p in range(3):
        P = float(active[p])
        S = float(apparent[p])
        if S > 0.0 and abs(zv[p]) > 0.0 and abs(zi[p]) > 0.0:
            phi = _wrap_angle(float(np.angle(zv[p])) - float(np.angle(zi[p])))
            sign = math.copysign(1.0, phi) if phi != 0.0 else 0.0
        else:
            sign = 0.0
        Q = sign * math.sqrt(max(S * S - P * P, 0.0))
        # P <= S holds mathematically (Cauchy-Schwarz); clamp float rounding.
        pf = min(1.0, max(-1.0, P / S)) if S > 0.0 else 0.0
        p_out.append(P)
        q_out.append(Q)
        s_out.append(S)
        pf_out.append(pf)
    return PowerRecord(
        timestamp=timestamp,
        active=tuple(p_out),
        reactive=tuple(q_out),
        apparent=tuple(s_out),
        power_factor=tuple(pf_out),
    )


def estimate_frequency(
    samples: np.ndarray,
    previous: float,
    timestamp: float,
    sample_rate: int = SAMPLE_RATE,
    band: tuple[float, float] = (40.0, 70.0),
) -> FrequencyRecord:
    """Fundamental frequency from interpolated positive-going zero crossings.

    With k crossings at interpolated times t_1..t_k the estimate is
    (k - 1) / (t_k - t_1).  Fewer than two crossings, or an estimate
    outside ``band``, holds ``previous`` and flags the record.
    """
    x = np.asarray(samples, dtype=np.float64)
    idx = np.nonzero((x[:-1] < 0.0) & (x[1:] >= 0.0))[0]
    if len(idx) < 2:
        return FrequencyRecord(timestamp=timestamp, frequency=previous, held=True)
    frac = x[idx] / (x[idx] - x[idx + 1])
    crossings = (idx + frac) / sample_rate
    span = crossings[-1] - crossings[0]
    if span <= 0.0:
        return FrequencyRecord(timestamp=timestamp, frequency=previous, held=True)
    freq = (len(crossings) - 1) / span
    if not band[0] <= freq <= band[1]:
        return FrequencyRecord(timestamp=timestamp, frequency=previous, held=True)
    return FrequencyRecord(timestamp=timestamp, frequency=float(freq), held=False)


def compute_demand(series: np.ndarray, timestamp: float) -> DemandRecord:
    """Mean of the per-second fundamental current magnitudes, per phase.

    ``series`` has shape (3, n); the cadence expects n = 900 (15 minutes)
    but any non-empty series is averaged so callers can test directly.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 2 or series.shape[0] != 3 or series.shape[1] == 0:
        raise ValueError("series must have shape (3, n) with n >= 1")
    return DemandRecord(
        timestamp=timestamp,
        demand=tuple(float(x) for x in np.mean(series, axis=-1)),
    )


def compute_pst(
    series: np.ndarray, timestamp: float, calibration: float = 1.0
) -> FlickerPstRecord:
    """Short-term flicker severity estimate from half-cycle RMS values.

    Per phase, with r the half-cycle RMS series and m its mean, the
    estimator is ``calibration`` times the 95th percentile of
    ``|r - m| / m``.  It is zero for an unmodulated waveform, scales
    linearly with modulation depth and is None (undefined) for a dead
    phase where m = 0.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 2 or series.shape[0] != 3 or series.shape[1] == 0:
        raise ValueError("series must have shape (3, n) with n >= 1")
    values: list[float | None] = []
    for row in series:
        m = float(np.mean(row))
        if m == 0.0:
            values.append(None)
            continue
        deviation = np.abs(row - m) / m
        values.append(calibration * float(np.percentile(deviation, 95.0)))
    return FlickerPstRecord(timestamp=timestamp, pst=tuple(values))


def compute_plt(
    pst_values: Sequence[Triple], timestamp: float
) -> FlickerPltRecord:
    """Long-term flicker severity: cube root of the mean cubed Pst.

    Requires exactly 12 defined short-term values per phase (12 x 10 min
    covering the 2 h window).
    """
    if len(pst_values) != PLT_PST_COUNT:
        raise ValueError(f"need exactly {PLT_PST_COUNT} Pst values, got {len(pst_values)}")
    arr = np.asarray(pst_values, dtype=np.float64)  # (12, 3)
    if np.any(np.isnan(arr)):
        raise ValueError("undefined Pst value in Plt input")
    plt = np.cbrt(np.mean(arr**3, axis=0))
    return FlickerPltRecord(timestamp=timestamp, plt=tuple(float(x) for x in plt))


@dataclass
class PipelineDiagnostics:
    """Counts of inputs that could not contribute to a full window."""

    discarded: dict[str, int] = field(default_factory=dict)

    def bump(self, key: str, amount: int = 1) -> None:
        self.discarded[key] = self.discarded.get(key, 0) + amount


@dataclass
class PipelineResult:
    rms: list[RmsRecord] = field(default_factory=list)
    power: list[PowerRecord] = field(default_factory=list)
    harmonics: list[HarmonicsRecord] = field(default_factory=list)
    frequency: list[FrequencyRecord] = field(default_factory=list)
    demand: list[DemandRecord] = field(default_factory=list)
    flicker_pst: list[FlickerPstRecord] = field(default_factory=list)
    flicker_plt: list[FlickerPltRecord] = field(default_factory=list)
    events: list = field(default_factory=list)
    diagnostics: PipelineDiagnostics = field(default_factory=PipelineDiagnostics)


class StreamPipeline:
    """Tumbling-window state machine over a contiguous frame stream.

    Keeps at most one 3 s raw-sample block plus per-second and half-cycle
    aggregates; raw samples are never retained beyond the harmonics window
    (the events module owns its own capture buffer).  Feed frames with
    :meth:`process_frame` and collect records with :meth:`finish`.
    """

    def __init__(self, config: PipelineConfig, detector=None) -> None:
        self.config = config
        self.detector = detector
        self.result = PipelineResult()
        self._buf_v = np.empty((3, HARMONIC_WINDOW))
        self._buf_i = np.empty((3, HARMONIC_WINDOW))
        self._fill = 0               # samples currently in the buffer
        self._done = 0               # samples already cut into RMS windows
        self._buf_base = 0           # absolute index of buffer start
        self._next_sample = 0
        self._prev_frequency = config.nominal_frequency
        self._half_block = config.half_cycle_samples
        pst_len = round(PST_INTERVAL_S / 0.2) * (RMS_WINDOW // self._half_block)
        self._pst_series = np.empty((3, pst_len))
        self._pst_fill = 0
        self._pst_deadline = PST_INTERVAL_S
        self._pst_window: list[FlickerPstRecord] = []
        self._fundamentals: list[tuple[float, Triple]] = []
        self._demand_deadline = DEMAND_INTERVAL_S
        self._basis_cache: tuple[float, np.ndarray] | None = None
        self._finished = False

    # -- frame intake ---------------------------------------------------

    def process_frame(self, frame: WaveformFrame) -> None:
        if self._finished:
            raise RuntimeError("pipeline already finished")
        if frame.start_sample_index != self._next_sample:
            raise StreamGapError(
                f"frame starts at sample {frame.start_sample_index}, "
                f"expected {self._next_sample}"
            )
        pos = 0
        n = frame.frame_length
        while pos < n:
            take = min(HARMONIC_WINDOW - self._fill, n - pos)
            self._buf_v[:, self._fill : self._fill + take] = frame.voltage_samples[:, pos : pos + take]
            self._buf_i[:, self._fill : self._fill + take] = frame.current_samples[:, pos : pos + take]
            self._fill += take
            pos += take
            self._next_sample += take
            if self.detector is not None:
                self.detector.feed_samples(
                    self._buf_base + self._fill - take,
                    frame.voltage_samples[:, pos - take : pos],
                    frame.current_samples[:, pos - take : pos],
                )
            self._drain_windows()

    def _drain_windows(self) -> None:
        fs = self.config.sampling_rate
        while self._done + RMS_WINDOW <= self._fill:
            end_local = self._done + RMS_WINDOW
            end_abs = self._buf_base + end_local
            ts = end_abs / fs
            v_win = self._buf_v[:, self._done : end_local]
            i_win = self._buf_i[:, self._done : end_local]
            rec = compute_rms(v_win, i_win, ts)
            self.result.rms.append(rec)
            self._append_half_cycles(v_win, ts)
            if self.detector is not None:
                self.detector.update(ts, np.asarray(rec.v_rms))
            if end_abs % POWER_WINDOW == 0:
                self._emit_second(end_local, ts)
            if end_abs % HARMONIC_WINDOW == 0:
                self._emit_harmonics(ts)
                self._buf_base = end_abs
                self._fill = 0
                self._done = 0
                continue
            self._done = end_local

    def _emit_second(self, end_local: int, ts: float) -> None:
        v_win = self._buf_v[:, end_local - POWER_WINDOW : end_local]
        i_win = self._buf_i[:, end_local - POWER_WINDOW : end_local]
        freq = estimate_frequency(
            v_win[0],
            previous=self._prev_frequency,
            timestamp=ts,
            sample_rate=self.config.sampling_rate,
            band=self.config.frequency_band,
        )
        self._prev_frequency = freq.frequency
        self.result.frequency.append(freq)
        self.result.power.append(
            compute_power(v_win, i_win, freq.frequency, ts, self.config.sampling_rate)
        )

    def _harmonic_basis(self, fundamental: float) -> np.ndarray:
        if self._basis_cache is not None and self._basis_cache[0] == fundamental:
            return self._basis_cache[1]
        base = np.exp(
            -2j * np.pi * fundamental / self.config.sampling_rate * np.arange(HARMONIC_WINDOW)
        )
        basis = np.empty((HARMONIC_ORDERS, HARMONIC_WINDOW), dtype=np.complex128)
        basis[0] = base
        for h in range(1, HARMONIC_ORDERS):
            basis[h] = basis[h - 1] * base
        self._basis_cache = (fundamental, basis)
        return basis

    def _emit_harmonics(self, ts: float) -> None:
        fundamental = self._prev_frequency
        basis = self._harmonic_basis(fundamental)
        scale = 2.0 / HARMONIC_WINDOW
        v_mags = scale * np.abs(basis @ self._buf_v.T).T
        i_mags = scale * np.abs(basis @ self._buf_i.T).T
        v_floor = self.config.thd_floor_factor * self.config.nominal_voltage_rms
        i_floor = self.config.thd_floor_factor * self.config.nominal_current_rms
        rec = HarmonicsRecord(
            timestamp=ts,
            v_harmonics=tuple(tuple(float(x) for x in row) for row in v_mags),
            i_harmonics=tuple(tuple(float(x) for x in row) for row in i_mags),
            thd_v=tuple(compute_thd(row, v_floor) for row in v_mags),
            thd_i=tuple(compute_thd(row, i_floor) for row in i_mags),
        )
        self.result.harmonics.append(rec)
        self._fundamentals.append((ts, tuple(row[0] for row in rec.i_harmonics)))
        if ts >= self._demand_deadline:
            self._emit_demand(self._demand_deadline)
            self._demand_deadline += DEMAND_INTERVAL_S

    def _emit_demand(self, boundary: float) -> None:
        xs = np.array([ts for ts, _ in self._fundamentals])
        mags = np.array([m for _, m in self._fundamentals])  # (k, 3)
        seconds = np.arange(boundary - DEMAND_INTERVAL_S + 1.0, boundary + 1.0)
        series = np.vstack([np.interp(seconds, xs, mags[:, p]) for p in range(3)])
        self.result.demand.append(compute_demand(series, boundary))
        # keep the boundary record: the next window interpolates from it
        self._fundamentals = self._fundamentals[-1:]

    def _append_half_cycles(self, v_win: np.ndarray, ts: float) -> None:
        hc = half_cycle_rms(v_win, self._half_block)
        k = hc.shape[1]
        self._pst_series[:, self._pst_fill : self._pst_fill + k] = hc
        self._pst_fill += k
        if ts >= self._pst_deadline:
            rec = compute_pst(
                self._pst_series[:, : self._pst_fill],
                self._pst_deadline,
                self.config.pst_calibration,
            )
            self.result.flicker_pst.append(rec)
            self._pst_fill = 0
            self._pst_deadline += PST_INTERVAL_S
            self._collect_plt(rec)

    def _collect_plt(self, rec: FlickerPstRecord) -> None:
        self._pst_window.append(rec)
        if len(self._pst_window) < PLT_PST_COUNT:
            return
        window = self._pst_window
        self._pst_window = []
        if any(v is None for r in window for v in r.pst):
            self.result.diagnostics.bump("plt_windows_with_undefined_pst")
            return
        self.result.flicker_plt.append(
            compute_plt([r.pst for r in window], window[-1].timestamp)
        )

    # -- completion ------------------------------------------------------

    def finish(self) -> PipelineResult:
        if self._finished:
            return self.result
        self._finished = True
        diag = self.result.diagnostics
        leftover = self._fill - self._done
        if leftover:
            diag.bump("rms_samples_discarded", leftover)
        fs = self.config.sampling_rate
        end_abs = self._buf_base + self._fill
        if end_abs % POWER_WINDOW:
            diag.bump("power_samples_discarded", end_abs % POWER_WINDOW)
        if end_abs % HARMONIC_WINDOW:
            diag.bump("harmonic_samples_discarded", end_abs % HARMONIC_WINDOW)
        if self._pst_fill:
            diag.bump("pst_half_cycles_discarded", self._pst_fill)
        if self._pst_window:
            diag.bump("plt_pst_records_discarded", len(self._pst_window))
        if self._fundamentals and self.result.harmonics:
            last_ts = self.result.harmonics[-1].timestamp
            if last_ts > self._demand_deadline - DEMAND_INTERVAL_S:
                diag.bump("demand_windows_discarded")
        if self.detector is not None:
            self.detector.close(end_abs / fs)
            self.result.events = list(self.detector.records)
        return self.result


def run_pipeline(
    frames: Iterable[WaveformFrame], config: PipelineConfig, detector=None
) -> PipelineResult:
    """Feed every frame through a :class:`StreamPipeline` and finish it."""
    pipeline = StreamPipeline(config, detector=detector)
    for frame in frames:
        pipeline.process_frame(frame)
    return pipeline.finish()
