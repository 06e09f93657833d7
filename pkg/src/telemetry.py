"""GPU telemetry parsing, plateau detection and energy integration.

Input logs are the ``csv,noheader,nounits`` output of a per-node monitoring
process, one line per GPU and sample, nine fields in this order::

    index, timestamp, power.draw, clocks.sm, clocks.mem,
    temperature.gpu, temperature.memory, utilization.gpu, utilization.memory

e.g. ``0, 2024/01/15 10:00:00.000, 287.45, 1395, 1593, 52, 48, 100, 67``.
Files are named ``<node>.nvidiasmi.txt``.

Energy-to-solution (ETS) is the time integral of board power over the
compute plateau of each GPU, summed over the node; time-to-solution (TTS)
is the span from the earliest plateau start to the latest plateau end.
"""

from __future__ import annotations

import json
import logging
import os
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from numpy.typing import NDArray

from src.config import (
    MIN_PLATEAU_TRACE_SAMPLES,
    NOMINAL_SAMPLE_PERIOD_S,
    PLATEAU_IDLE_SAMPLES,
    PLATEAU_MIN_POWER_RISE_W,
    PLATEAU_MIN_RUN,
    PLATEAU_POWER_FRACTION,
    PLATEAU_UTIL_MIN,
    SMI_FIELD_COUNT,
    SMI_LOG_SUFFIX,
    SMI_MISSING_VALUES,
    SMI_TIMESTAMP_FORMAT,
)
from src.errors import (
    ConfigurationError,
    EmptyLogError,
    InsufficientSamplesError,
    NoPlateauError,
    TimestampOrderError,
)

logger = logging.getLogger(__name__)

MISSING_TOKEN = "[N/A]"
MAX_GPUS_PER_REPORT = 4
REPORT_COLUMNS: tuple[str, ...] = (
    "node",
    "gpu",
    "t_start",
    "t_end",
    "tts_s",
    "ets_j",
    "mean_power_w",
    "mean_clock_mhz",
    "mean_temp_c",
)


@dataclass(frozen=True)
class PowerSample:
    """One telemetry line."""

    gpu_index: int
    timestamp: datetime
    power_w: float
    clock_sm_mhz: float
    clock_mem_mhz: float
    temp_gpu_c: float
    temp_mem_c: float | None
    util_gpu_pct: float | None
    util_mem_pct: float | None


@dataclass(frozen=True)
class GpuTrace:
    """Time-ordered samples of a single GPU."""

    gpu_index: int
    samples: tuple[PowerSample, ...]
    nominal_period_s: float = NOMINAL_SAMPLE_PERIOD_S

    def __len__(self) -> int:
        """Return the number of samples."""
        return len(self.samples)

    @property
    def start(self) -> datetime:
        """Timestamp of the first sample."""
        return self.samples[0].timestamp

    def times_s(self, origin: datetime | None = None) -> NDArray[np.float64]:
        """Return sample times in seconds since ``origin`` (default: first sample)."""
        base = self.start if origin is None else origin
        return np.array(
            [(s.timestamp - base).total_seconds() for s in self.samples],
            dtype=np.float64,
        )

    def power_w(self) -> NDArray[np.float64]:
        """Return the power draw of every sample."""
        return np.array([s.power_w for s in self.samples], dtype=np.float64)

    def util_gpu_pct(self) -> NDArray[np.float64]:
        """Return GPU utilization with missing values as NaN."""
        return np.array(
            [np.nan if s.util_gpu_pct is None else s.util_gpu_pct for s in self.samples],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class ParsedLog:
    """Traces of one log file grouped by GPU index."""

    traces: dict[int, GpuTrace]
    skipped_lines: int
    parsed_lines: int


@dataclass(frozen=True)
class PlateauSegment:
    """A time window of a trace with the means of its samples."""

    t_start: datetime
    t_end: datetime
    mean_power_w: float
    mean_clock_sm_mhz: float
    mean_temp_c: float
    n_samples: int

    @property
    def duration_s(self) -> float:
        """``t_end - t_start`` in seconds."""
        return (self.t_end - self.t_start).total_seconds()


@dataclass(frozen=True)
class PlateauConfig:
    """Thresholds of plateau detection.

    Parameters
    ----------
    util_min : float
        Utilization (percent) of a busy sample.
    power_fraction : float
        Fallback threshold as a fraction of the rise from idle to peak power.
    min_run : int
        Minimum consecutive samples of an accepted plateau.
    idle_samples : int
        Leading samples averaged as the idle floor.
    min_power_rise_w : float
        Minimum peak rise over the idle floor for the power fallback.
    """

    util_min: float = PLATEAU_UTIL_MIN
    power_fraction: float = PLATEAU_POWER_FRACTION
    min_run: int = PLATEAU_MIN_RUN
    idle_samples: int = PLATEAU_IDLE_SAMPLES
    min_power_rise_w: float = PLATEAU_MIN_POWER_RISE_W

    def __post_init__(self) -> None:
        """Validate the fields."""
        if not 0.0 < self.util_min <= 100.0:
            raise ConfigurationError(f"util_min must lie in (0, 100]: {self.util_min}")
        if not 0.0 < self.power_fraction < 1.0:
            raise ConfigurationError(
                f"power_fraction must lie in (0, 1): {self.power_fraction}"
            )
        if self.min_run < 2 or self.idle_samples < 1:
            raise ConfigurationError("min_run must be >= 2 and idle_samples >= 1.")

    @classmethod
    def from_env(cls, **overrides: Any) -> PlateauConfig:
        """Build from ``PLATEAU_*`` environment variables, then ``overrides``."""
        values: dict[str, Any] = {}
        util = os.getenv("PLATEAU_UTIL_MIN")
        fraction = os.getenv("PLATEAU_POWER_FRACTION")
        run = os.getenv("PLATEAU_MIN_RUN")
        if util:
            values["util_min"] = float(util)
        if fraction:
            values["power_fraction"] = float(fraction)
        if run:
            values["min_run"] = int(run)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass(frozen=True)
class GpuEnergy:
    """Per-GPU plateau energy and time."""

    gpu_index: int
    ets_joules: float
    tts_seconds: float
    plateau: PlateauSegment
    idle_power_w: float | None


@dataclass(frozen=True)
class RunEnergyReport:
    """Per-GPU and node-level energy/time of one run."""

    per_gpu: tuple[GpuEnergy, ...]
    node_ets_joules: float
    node_tts_seconds: float
    skipped_lines: int = 0

    @property
    def mean_clock_sm_mhz(self) -> float:
        """Average of the per-GPU plateau clock means."""
        return float(np.mean([g.plateau.mean_clock_sm_mhz for g in self.per_gpu]))

    @property
    def mean_temp_c(self) -> float:
        """Average of the per-GPU plateau temperature means."""
        return float(np.mean([g.plateau.mean_temp_c for g in self.per_gpu]))

    @property
    def node_power_w(self) -> float:
        """Sum of the per-GPU plateau power means."""
        return float(sum(g.plateau.mean_power_w for g in self.per_gpu))


def _optional(token: str) -> float | None:
    return None if token in SMI_MISSING_VALUES else float(token)


def parse_smi_line(line: str) -> PowerSample:
    """Parse one telemetry line.

    Raises
    ------
    ValueError
        If the line does not follow the nine-field grammar.

    Examples
    --------
    >>> from src.telemetry import parse_smi_line
    >>> sample = parse_smi_line(
    ...     "0, 2024/01/15 10:00:00.000, 287.45, 1395, 1593, 52, 48, 100, 67"
    ... )
    >>> sample.gpu_index, sample.power_w, sample.util_gpu_pct
    (0, 287.45, 100.0)
    """
    fields = [token.strip() for token in line.split(",")]
    if len(fields) != SMI_FIELD_COUNT:
        raise ValueError(f"expected {SMI_FIELD_COUNT} fields, found {len(fields)}")
    sample = PowerSample(
        gpu_index=int(fields[0]),
        timestamp=datetime.strptime(fields[1], SMI_TIMESTAMP_FORMAT),
        power_w=float(fields[2]),
        clock_sm_mhz=float(fields[3]),
        clock_mem_mhz=float(fields[4]),
        temp_gpu_c=float(fields[5]),
        temp_mem_c=_optional(fields[6]),
        util_gpu_pct=_optional(fields[7]),
        util_mem_pct=_optional(fields[8]),
    )
    if sample.gpu_index < 0 or not np.isfinite(sample.power_w) or sample.power_w < 0:
        raise ValueError("negative GPU index or invalid power draw")
    for util in (sample.util_gpu_pct, sample.util_mem_pct):
        if util is not None and not 0.0 <= util <= 100.0:
            raise ValueError(f"utilization {util} outside [0, 100]")
    return sample


def _format_number(value: float | None) -> str:
    return MISSING_TOKEN if value is None else f"{value:g}"


def format_smi_line(sample: PowerSample) -> str:
    """Render a sample as a telemetry line (inverse of :func:`parse_smi_line`).

    Examples
    --------
    >>> from src.telemetry import format_smi_line, parse_smi_line
    >>> line = "0, 2024/01/15 10:00:00.000, 287.45, 1395, 1593, 52, 48, 100, 67"
    >>> format_smi_line(parse_smi_line(line)) == line
    True
    """
    stamp = sample.timestamp
    millis = stamp.microsecond // 1000
    return ", ".join(
        [
            str(sample.gpu_index),
            f"{stamp:%Y/%m/%d %H:%M:%S}.{millis:03d}",
            f"{sample.power_w:.2f}",
            _format_number(sample.clock_sm_mhz),
            _format_number(sample.clock_mem_mhz),
            _format_number(sample.temp_gpu_c),
            _format_number(sample.temp_mem_c),
            _format_number(sample.util_gpu_pct),
            _format_number(sample.util_mem_pct),
        ]
    )


def parse_smi_lines(
    lines: Iterable[str], nominal_period_s: float = NOMINAL_SAMPLE_PERIOD_S
) -> ParsedLog:
    """Parse telemetry lines into per-GPU traces.

    Blank lines are ignored. Lines that fail to parse are skipped, counted
    and logged.

    Raises
    ------
    EmptyLogError
        If no line parses.
    TimestampOrderError
        If a GPU's timestamp goes backwards.
    """
    grouped: dict[int, list[PowerSample]] = {}
    skipped = 0
    parsed = 0
    for number, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            sample = parse_smi_line(line)
        except ValueError as error:
            skipped += 1
            logger.warning(f"Skipping telemetry line {number}: {error}")
            continue
        samples = grouped.setdefault(sample.gpu_index, [])
        if samples and sample.timestamp < samples[-1].timestamp:
            logger.error(f"Timestamp regression on line {number}")
            raise TimestampOrderError(number, sample.gpu_index)
        samples.append(sample)
        parsed += 1
    if parsed == 0:
        raise EmptyLogError(
            f"no parseable telemetry line ({skipped} malformed line(s) skipped)."
        )
    traces = {
        index: GpuTrace(index, tuple(samples), nominal_period_s)
        for index, samples in sorted(grouped.items())
    }
    logger.debug(f"Parsed {parsed} samples for GPUs {sorted(traces)}; skipped {skipped}")
    return ParsedLog(traces=traces, skipped_lines=skipped, parsed_lines=parsed)


def parse_smi_csv(
    data: bytes | str, nominal_period_s: float = NOMINAL_SAMPLE_PERIOD_S
) -> ParsedLog:
    """Parse the full content of a telemetry log.

    Examples
    --------
    >>> from src.telemetry import parse_smi_csv
    >>> log = parse_smi_csv(
    ...     b"0, 2024/01/15 10:00:00.000, 287.45, 1395, 1593, 52, 48, 100, 67\\n"
    ...     b"garbage\\n"
    ... )
    >>> len(log.traces[0]), log.skipped_lines
    (1, 1)
    """
    text = data.decode("utf-8", errors="replace") if isinstance(data, bytes) else data
    return parse_smi_lines(text.splitlines(), nominal_period_s)


def read_smi_log(path: Path, nominal_period_s: float = NOMINAL_SAMPLE_PERIOD_S) -> ParsedLog:
    """Read and parse a telemetry log file."""
    logger.info(f"Reading telemetry log {path}")
    return parse_smi_csv(path.read_bytes(), nominal_period_s)


def node_name(path: Path) -> str:
    """Return the node name encoded in ``<node>.nvidiasmi.txt``.

    Examples
    --------
    >>> from pathlib import Path
    >>> from src.telemetry import node_name
    >>> node_name(Path("logs/lrdn0042.nvidiasmi.txt"))
    'lrdn0042'
    """
    name = path.name
    return name[: -len(SMI_LOG_SUFFIX)] if name.endswith(SMI_LOG_SUFFIX) else path.stem


def write_smi_log(path: Path, traces: Iterable[GpuTrace]) -> Path:
    """Write traces as one interleaved log, ordered by time then GPU index."""
    samples = sorted(
        (s for trace in traces for s in trace.samples),
        key=lambda s: (s.timestamp, s.gpu_index),
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        "".join(format_smi_line(s) + "\n" for s in samples), encoding="utf-8"
    )
    return path


def segment_between(trace: GpuTrace, t_start: datetime, t_end: datetime) -> PlateauSegment:
    """Summarize the samples of ``trace`` inside ``[t_start, t_end]``.

    Raises
    ------
    InsufficientSamplesError
        If the window is empty or holds fewer than two samples.
    """
    if t_end <= t_start:
        raise InsufficientSamplesError(f"empty window [{t_start}, {t_end}].")
    inside = [s for s in trace.samples if t_start <= s.timestamp <= t_end]
    if len(inside) < 2:
        raise InsufficientSamplesError(
            f"window [{t_start}, {t_end}] holds {len(inside)} sample(s); need 2."
        )
    return PlateauSegment(
        t_start=t_start,
        t_end=t_end,
        mean_power_w=float(np.mean([s.power_w for s in inside])),
        mean_clock_sm_mhz=float(np.mean([s.clock_sm_mhz for s in inside])),
        mean_temp_c=float(np.mean([s.temp_gpu_c for s in inside])),
        n_samples=len(inside),
    )


def _longest_run(mask: NDArray[np.bool_]) -> tuple[int, int]:
    """Return ``(first, last)`` of the longest True run, earliest on ties."""
    best = (0, -1)
    start = None
    for index, flag in enumerate([*mask.tolist(), False]):
        if flag and start is None:
            start = index
        elif not flag and start is not None:
            if index - start > best[1] - best[0] + 1:
                best = (start, index - 1)
            start = None
    return best


def detect_plateau(trace: GpuTrace, config: PlateauConfig | None = None) -> PlateauSegment:
    """Find the compute plateau of a trace.

    The plateau is the longest run of consecutive samples with GPU
    utilization at or above ``config.util_min``. When utilization is missing
    or zero throughout, samples with power at or above
    ``idle + power_fraction * (peak - idle)`` qualify instead, where the
    idle floor is the mean of the first ``idle_samples`` samples.

    Parameters
    ----------
    trace : GpuTrace
        Samples of one GPU.
    config : PlateauConfig, optional
        Detection thresholds.

    Returns
    -------
    PlateauSegment
        Window from the first to the last sample of the run.

    Raises
    ------
    InsufficientSamplesError
        If the trace has fewer than ``MIN_PLATEAU_TRACE_SAMPLES`` samples.
    NoPlateauError
        If no run of at least ``config.min_run`` samples qualifies.
    """
    config = config or PlateauConfig()
    if len(trace) < MIN_PLATEAU_TRACE_SAMPLES:
        raise InsufficientSamplesError(
            f"GPU {trace.gpu_index}: {len(trace)} samples, need at least "
            f"{MIN_PLATEAU_TRACE_SAMPLES} for plateau detection."
        )
    util = np.nan_to_num(trace.util_gpu_pct(), nan=0.0)
    if np.any(util > 0.0):
        mask = util >= config.util_min
    else:
        power = trace.power_w()
        idle = float(np.mean(power[: config.idle_samples]))
        peak = float(np.max(power))
        if peak - idle < config.min_power_rise_w:
            raise NoPlateauError(
                f"no utilization data and power rises only {peak - idle:.1f} W "
                "over idle.",
                trace.gpu_index,
            )
        mask = power >= idle + config.power_fraction * (peak - idle)
    first, last = _longest_run(mask)
    length = last - first + 1
    if length < config.min_run:
        raise NoPlateauError(
            f"longest busy run has {max(length, 0)} sample(s), need "
            f"{config.min_run}.",
            trace.gpu_index,
        )
    segment = segment_between(
        trace, trace.samples[first].timestamp, trace.samples[last].timestamp
    )
    logger.info(
        f"GPU {trace.gpu_index}: plateau {segment.t_start:%H:%M:%S}"
        f"-{segment.t_end:%H:%M:%S} ({segment.duration_s:.0f} s, "
        f"{segment.mean_power_w:.1f} W)"
    )
    return segment


def integrate_energy(trace: GpuTrace, segment: PlateauSegment) -> float:
    """Integrate power over the samples inside ``segment`` (trapezoidal rule).

    Uses the actual timestamp spacing, so jitter and missing samples are
    handled.

    Raises
    ------
    InsufficientSamplesError
        If fewer than two samples fall inside the segment.
    """
    inside = [s for s in trace.samples if segment.t_start <= s.timestamp <= segment.t_end]
    if len(inside) < 2:
        raise InsufficientSamplesError(
            f"GPU {trace.gpu_index}: {len(inside)} sample(s) inside the segment."
        )
    origin = inside[0].timestamp
    times = np.array([(s.timestamp - origin).total_seconds() for s in inside])
    power = np.array([s.power_w for s in inside])
    return float(np.trapezoid(power, times))


def _idle_power(trace: GpuTrace, segment: PlateauSegment) -> float | None:
    outside = [
        s.power_w
        for s in trace.samples
        if s.timestamp < segment.t_start or s.timestamp > segment.t_end
    ]
    return float(np.mean(outside)) if outside else None


def node_report(
    traces: Mapping[int, GpuTrace] | Sequence[GpuTrace],
    config: PlateauConfig | None = None,
    skipped_lines: int = 0,
) -> RunEnergyReport:
    """Compute per-GPU and node ETS/TTS from the traces of one node.

    Parameters
    ----------
    traces : Mapping[int, GpuTrace] or Sequence[GpuTrace]
        One to four GPU traces.
    config : PlateauConfig, optional
        Detection thresholds.
    skipped_lines : int
        Malformed line count carried into the report.

    Returns
    -------
    RunEnergyReport
        Node ETS is the sum of the per-GPU ETS; node TTS spans from the
        earliest plateau start to the latest plateau end.

    Raises
    ------
    NoPlateauError
        Naming the first GPU without a plateau.
    """
    items = list(traces.values()) if isinstance(traces, Mapping) else list(traces)
    if not 1 <= len(items) <= MAX_GPUS_PER_REPORT:
        raise ConfigurationError(
            f"a node report takes 1 to {MAX_GPUS_PER_REPORT} traces, got {len(items)}."
        )
    per_gpu: list[GpuEnergy] = []
    for trace in items:
        try:
            segment = detect_plateau(trace, config)
        except InsufficientSamplesError as error:
            raise NoPlateauError(str(error), trace.gpu_index) from error
        energy = integrate_energy(trace, segment)
        per_gpu.append(
            GpuEnergy(
                gpu_index=trace.gpu_index,
                ets_joules=energy,
                tts_seconds=segment.duration_s,
                plateau=segment,
                idle_power_w=_idle_power(trace, segment),
            )
        )
    start = min(g.plateau.t_start for g in per_gpu)
    end = max(g.plateau.t_end for g in per_gpu)
    report = RunEnergyReport(
        per_gpu=tuple(per_gpu),
        node_ets_joules=float(sum(g.ets_joules for g in per_gpu)),
        node_tts_seconds=(end - start).total_seconds(),
        skipped_lines=skipped_lines,
    )
    logger.info(
        f"Node report: ETS {report.node_ets_joules / 1e3:.1f} kJ, "
        f"TTS {report.node_tts_seconds:.0f} s over {len(per_gpu)} GPU(s)"
    )
    return report


def report_frame(report: RunEnergyReport, node: str) -> pd.DataFrame:
    """Tabulate the per-GPU rows of a report."""
    rows = [
        (
            node,
            g.gpu_index,
            f"{g.plateau.t_start:%Y/%m/%d %H:%M:%S.%f}"[:-3],
            f"{g.plateau.t_end:%Y/%m/%d %H:%M:%S.%f}"[:-3],
            g.tts_seconds,
            g.ets_joules,
            g.plateau.mean_power_w,
            g.plateau.mean_clock_sm_mhz,
            g.plateau.mean_temp_c,
        )
        for g in report.per_gpu
    ]
    return pd.DataFrame(rows, columns=list(REPORT_COLUMNS))


def reports_frame(reports: Mapping[str, RunEnergyReport]) -> pd.DataFrame:
    """Stack the per-GPU rows of several node reports, nodes in name order."""
    frames = [report_frame(reports[node], node) for node in sorted(reports)]
    if not frames:
        return pd.DataFrame(columns=list(REPORT_COLUMNS))
    return pd.concat(frames, ignore_index=True)


def report_to_dict(report: RunEnergyReport, node: str) -> dict[str, Any]:
    """Return a JSON-serializable summary of a report."""
    frame = report_frame(report, node)
    return {
        "node": node,
        "node_ets_j": round(report.node_ets_joules, 3),
        "node_tts_s": round(report.node_tts_seconds, 3),
        "skipped_lines": report.skipped_lines,
        "gpus": [
            {
                **{k: (round(v, 3) if isinstance(v, float) else v) for k, v in row.items()},
                "idle_power_w": (
                    None if g.idle_power_w is None else round(g.idle_power_w, 3)
                ),
            }
            for row, g in zip(frame.to_dict(orient="records"), report.per_gpu)
        ],
    }


def write_report(
    report: RunEnergyReport, node: str, csv_path: Path, json_path: Path
) -> None:
    """Write a report as CSV rows and a JSON summary."""
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    report_frame(report, node).to_csv(csv_path, index=False, float_format="%.3f")
    json_path.parent.mkdir(parents=True, exist_ok=True)
    json_path.write_text(
        json.dumps(report_to_dict(report, node), indent=2), encoding="utf-8"
    )
    logger.info(f"Wrote energy report for {node} to {csv_path} and {json_path}")


# --- Synthetic traces ---


@dataclass(frozen=True)
class Phase:
    """A constant-utilization stretch of a synthetic trace.

    Power goes linearly from ``power_start_w`` to ``power_end_w``; busy phases
    include the sample at their end time.
    """

    duration_s: float
    power_start_w: float
    power_end_w: float
    util_pct: float
    busy: bool = False


@dataclass(frozen=True)
class SynthSpec:
    """Shape of a synthetic trace: idle, ramp, plateau, ramp, idle."""

    idle_w: float = 60.0
    idle_s: float = 10.0
    ramp_s: float = 0.0
    plateau_w: float = 300.0
    plateau_s: float = 200.0
    jitter: float = 0.0
    period: float = NOMINAL_SAMPLE_PERIOD_S
    gpu_index: int = 0
    seed: int = 0
    start: datetime = field(default=datetime(2024, 1, 15, 10, 0, 0))
    clock_sm_mhz: float = 1395.0
    clock_mem_mhz: float = 1593.0
    ramp_util_pct: float = 30.0

    def __post_init__(self) -> None:
        """Validate the fields."""
        if min(self.idle_s, self.ramp_s, self.plateau_s) < 0 or self.period <= 0:
            raise ConfigurationError("durations must be >= 0 and period > 0.")

    def phases(self) -> list[Phase]:
        """Return the five trace phases (zero-length phases dropped)."""
        phases = [
            Phase(self.idle_s, self.idle_w, self.idle_w, 0.0),
            Phase(self.ramp_s, self.idle_w, self.plateau_w, self.ramp_util_pct),
            Phase(self.plateau_s, self.plateau_w, self.plateau_w, 100.0, busy=True),
            Phase(self.ramp_s, self.plateau_w, self.idle_w, self.ramp_util_pct),
            Phase(self.idle_s, self.idle_w, self.idle_w, 0.0),
        ]
        return [p for p in phases if p.duration_s > 0]


@dataclass(frozen=True)
class SyntheticTrace:
    """Generated trace with its ground-truth plateau and analytic energy."""

    trace: GpuTrace
    plateau: PlateauSegment
    analytic_energy_j: float


def _phase_at(phases: Sequence[Phase], bounds: Sequence[float], t: float) -> int:
    for index, phase in enumerate(phases):
        if phase.busy and bounds[index] <= t <= bounds[index + 1]:
            return index
    for index in range(len(phases)):
        if bounds[index] <= t < bounds[index + 1]:
            return index
    return len(phases) - 1


def synth_phases(
    phases: Sequence[Phase],
    period: float = NOMINAL_SAMPLE_PERIOD_S,
    jitter: float = 0.0,
    gpu_index: int = 0,
    seed: int = 0,
    start: datetime = datetime(2024, 1, 15, 10, 0, 0),
    clock_sm_mhz: float = 1395.0,
    clock_mem_mhz: float = 1593.0,
) -> GpuTrace:
    """Generate a trace sampled every ``period`` seconds through ``phases``.

    Sample times are whole milliseconds; busy-phase power gets uniform
    ``+-jitter`` noise drawn from ``numpy.random.default_rng(seed)`` and is
    rounded to the 0.01 W resolution of the log format.
    """
    if not phases:
        raise ConfigurationError("a synthetic trace needs at least one phase.")
    bounds = np.concatenate([[0.0], np.cumsum([p.duration_s for p in phases])])
    total = float(bounds[-1])
    rng = np.random.default_rng(seed)
    count = int(round(total / period))
    samples: list[PowerSample] = []
    for k in range(count):
        offset_ms = int(round(k * period * 1000.0))
        t = offset_ms / 1000.0
        index = _phase_at(phases, bounds, t)
        phase = phases[index]
        span = phase.duration_s
        fraction = (t - bounds[index]) / span if span > 0 else 0.0
        power = phase.power_start_w + fraction * (phase.power_end_w - phase.power_start_w)
        if phase.busy and jitter > 0:
            power += float(rng.uniform(-jitter, jitter))
        temperature = 60.0 if phase.busy else (45.0 if phase.util_pct > 0 else 35.0)
        samples.append(
            PowerSample(
                gpu_index=gpu_index,
                timestamp=start + timedelta(milliseconds=offset_ms),
                power_w=round(max(power, 0.0), 2),
                clock_sm_mhz=clock_sm_mhz,
                clock_mem_mhz=clock_mem_mhz,
                temp_gpu_c=temperature,
                temp_mem_c=temperature - 5.0,
                util_gpu_pct=phase.util_pct,
                util_mem_pct=round(phase.util_pct * 0.6),
            )
        )
    return GpuTrace(gpu_index, tuple(samples), period)


def synth_trace(spec: SynthSpec) -> SyntheticTrace:
    """Generate the trace of ``spec`` with its ground truth.

    Examples
    --------
    >>> from src.telemetry import SynthSpec, integrate_energy, synth_trace
    >>> synthetic = synth_trace(SynthSpec())
    >>> len(synthetic.trace), synthetic.analytic_energy_j
    (220, 60000.0)
    >>> integrate_energy(synthetic.trace, synthetic.plateau)
    60000.0
    """
    trace = synth_phases(
        spec.phases(),
        period=spec.period,
        jitter=spec.jitter,
        gpu_index=spec.gpu_index,
        seed=spec.seed,
        start=spec.start,
        clock_sm_mhz=spec.clock_sm_mhz,
        clock_mem_mhz=spec.clock_mem_mhz,
    )
    begin = spec.idle_s + spec.ramp_s
    busy = [
        s
        for s in trace.samples
        if begin <= (s.timestamp - spec.start).total_seconds() <= begin + spec.plateau_s
    ]
    if len(busy) < 2:
        raise ConfigurationError("plateau shorter than two sampling periods.")
    plateau = segment_between(trace, busy[0].timestamp, busy[-1].timestamp)
    return SyntheticTrace(
        trace=trace,
        plateau=plateau,
        analytic_energy_j=spec.plateau_w * spec.plateau_s,
    )
