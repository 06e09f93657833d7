"""Clock-rate sweep analysis.

Each sweep point holds the energy-to-solution (ETS) and time-to-solution
(TTS) of one run at a fixed SM clock. The product ETS x TTS (the "action",
in joule-seconds) balances energy against time; its minimum is the
recommended work point. Variations are expressed in percent relative to a
reference clock, by default the highest clock present.
"""

from __future__ import annotations

import json
import logging
import math
import re
from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from src.config import CLOCK_SWEEP_REFERENCE_CSV, GPUS_PER_NODE, SLOWDOWN_BUDGETS_PCT
from src.errors import (
    AlignmentError,
    ConfigurationError,
    EmptyAnalysisError,
    MissingReferenceError,
)
from src.telemetry import PlateauConfig, node_name, node_report, read_smi_log

logger = logging.getLogger(__name__)

CLOCK_DIR_PATTERN = re.compile(r"^(\d+(?:\.\d+)?)mhz$", re.IGNORECASE)
REPORT_COLUMNS: tuple[str, ...] = (
    "clock",
    "ets_j",
    "tts_s",
    "mlups",
    "action_js",
    "dtts_pct",
    "dets_pct",
    "mean_temp_c",
)
TEMPERATURE_COLUMNS: tuple[str, ...] = ("node_id", "clock", "mean_temp_c", "violation")


@dataclass(frozen=True)
class SweepPoint:
    """Measured ETS/TTS of one run at a fixed SM clock."""

    clock_mhz: float
    ets_joules: float
    tts_seconds: float
    mlups: float | None = None
    mean_temp_c: float | None = None
    node_id: str | None = None

    def __post_init__(self) -> None:
        """Validate the fields."""
        if not (self.clock_mhz > 0 and self.ets_joules > 0 and self.tts_seconds > 0):
            raise ConfigurationError(
                f"clock, ETS and TTS must be positive: ({self.clock_mhz}, "
                f"{self.ets_joules}, {self.tts_seconds})."
            )


@dataclass(frozen=True)
class SweepAnalysis:
    """Per-clock actions and variations of a sweep (points sorted by clock)."""

    points: tuple[SweepPoint, ...]
    reference_clock: float
    actions: tuple[float, ...]
    argmin_clock: float
    normalized: tuple[tuple[float, float], ...]

    def point_at(self, clock_mhz: float) -> SweepPoint:
        """Return the point measured at ``clock_mhz``."""
        for point in self.points:
            if point.clock_mhz == clock_mhz:
                return point
        raise MissingReferenceError(f"no sweep point at {clock_mhz:g} MHz.")

    def variation_at(self, clock_mhz: float) -> tuple[float, float]:
        """Return ``(dTTS%, dETS%)`` of the point at ``clock_mhz``."""
        index = self.points.index(self.point_at(clock_mhz))
        return self.normalized[index]


@dataclass(frozen=True)
class TemperatureCurve:
    """Mean GPU temperature against clock for one node."""

    node_id: str
    clocks: tuple[float, ...]
    temps: tuple[float, ...]
    violations: tuple[float, ...]


@dataclass(frozen=True)
class NodeVariability:
    """Spread of the action across nodes."""

    per_clock: dict[float, float]
    max_spread: float
    normalized_per_clock: dict[float, float]
    max_normalized_spread: float


def action(point: SweepPoint) -> float:
    """Return ``ETS x TTS`` in joule-seconds.

    Examples
    --------
    >>> from src.sweep import SweepPoint, action
    >>> action(SweepPoint(1395, 290e3, 269)) / 1e6
    78.01
    """
    return point.ets_joules * point.tts_seconds


def argmin_action(points: Sequence[SweepPoint]) -> float:
    """Return the clock of minimum action; equal actions prefer the higher clock.

    Examples
    --------
    >>> from src.sweep import SweepPoint, argmin_action
    >>> argmin_action([SweepPoint(900, 2.0, 5.0), SweepPoint(1000, 5.0, 2.0)])
    1000
    """
    if not points:
        raise EmptyAnalysisError("argmin of an empty sweep.")
    best = min(points, key=lambda p: (action(p), -p.clock_mhz))
    return best.clock_mhz


def _reference(points: Sequence[SweepPoint], reference_clock: float | None) -> SweepPoint:
    if reference_clock is None:
        return max(points, key=lambda p: p.clock_mhz)
    for point in points:
        if point.clock_mhz == reference_clock:
            return point
    raise MissingReferenceError(
        f"reference clock {reference_clock:g} MHz is not among the sweep points."
    )


def normalized_variations(
    points: Sequence[SweepPoint], reference_clock: float | None = None
) -> list[tuple[float, float]]:
    """Return ``(dTTS%, dETS%)`` of each point relative to the reference clock.

    ``dX% = 100 (X - X_ref) / X_ref``; the reference maps to ``(0, 0)``.
    """
    if not points:
        raise EmptyAnalysisError("no sweep points to normalize.")
    reference = _reference(points, reference_clock)
    return [
        (
            100.0 * (p.tts_seconds - reference.tts_seconds) / reference.tts_seconds,
            100.0 * (p.ets_joules - reference.ets_joules) / reference.ets_joules,
        )
        for p in points
    ]


def analyze_sweep(
    points: Iterable[SweepPoint], reference_clock: float | None = None
) -> SweepAnalysis:
    """Build the full analysis of a single-curve sweep.

    Points measured on several nodes are averaged per clock first (see
    :func:`aggregate_nodes`).
    """
    items = list(points)
    if not items:
        raise EmptyAnalysisError("a sweep analysis needs at least one point.")
    if len({p.clock_mhz for p in items}) != len(items):
        items = aggregate_nodes(items)
    items.sort(key=lambda p: p.clock_mhz)
    reference = _reference(items, reference_clock)
    analysis = SweepAnalysis(
        points=tuple(items),
        reference_clock=reference.clock_mhz,
        actions=tuple(action(p) for p in items),
        argmin_clock=argmin_action(items),
        normalized=tuple(normalized_variations(items, reference.clock_mhz)),
    )
    logger.info(
        f"Sweep over {len(items)} clock(s): argmin action at "
        f"{analysis.argmin_clock:g} MHz, reference {analysis.reference_clock:g} MHz"
    )
    return analysis


def recommend_clock(analysis: SweepAnalysis, max_slowdown_pct: float) -> float:
    """Return the minimum-energy clock whose slowdown stays within budget.

    Slowdowns are truncated to whole percent, so a 5.58 % slowdown counts
    as 5 %. Equal energies prefer the higher clock.
    """
    candidates = [
        point
        for point, (dtts, _) in zip(analysis.points, analysis.normalized)
        if math.floor(dtts) <= max_slowdown_pct
    ]
    if not candidates:
        raise EmptyAnalysisError(
            f"no clock within a {max_slowdown_pct:g}% slowdown budget."
        )
    return min(candidates, key=lambda p: (p.ets_joules, -p.clock_mhz)).clock_mhz


def max_saving_clock(analysis: SweepAnalysis) -> float:
    """Return the clock with the lowest ETS (higher clock on ties)."""
    return min(analysis.points, key=lambda p: (p.ets_joules, -p.clock_mhz)).clock_mhz


def mean_power_per_gpu(point: SweepPoint, gpus: int = GPUS_PER_NODE) -> float:
    """Return the average board power per GPU, ``ETS / TTS / gpus``.

    Examples
    --------
    >>> from src.sweep import SweepPoint, mean_power_per_gpu
    >>> round(mean_power_per_gpu(SweepPoint(1395, 290e3, 269)), 1)
    269.5
    """
    if gpus < 1:
        raise ConfigurationError(f"gpus must be positive, got {gpus}.")
    return point.ets_joules / point.tts_seconds / gpus


def power_saving_per_gpu(
    analysis: SweepAnalysis, clock_mhz: float, gpus: int = GPUS_PER_NODE
) -> float:
    """Return the per-GPU power saved at ``clock_mhz`` relative to the reference."""
    reference = analysis.point_at(analysis.reference_clock)
    return mean_power_per_gpu(reference, gpus) - mean_power_per_gpu(
        analysis.point_at(clock_mhz), gpus
    )


def aggregate_nodes(points: Iterable[SweepPoint]) -> list[SweepPoint]:
    """Average ETS, TTS, MLUPS and temperature per clock across nodes."""
    grouped: dict[float, list[SweepPoint]] = defaultdict(list)
    for point in points:
        grouped[point.clock_mhz].append(point)

    def _mean(values: list[float | None]) -> float | None:
        present = [v for v in values if v is not None]
        return float(np.mean(present)) if present and len(present) == len(values) else None

    return [
        SweepPoint(
            clock_mhz=clock,
            ets_joules=float(np.mean([p.ets_joules for p in group])),
            tts_seconds=float(np.mean([p.tts_seconds for p in group])),
            mlups=_mean([p.mlups for p in group]),
            mean_temp_c=_mean([p.mean_temp_c for p in group]),
        )
        for clock, group in sorted(grouped.items())
    ]


def points_by_node(points: Iterable[SweepPoint]) -> dict[str, list[SweepPoint]]:
    """Group points by ``node_id`` (unnamed points share the key ``"node"``)."""
    grouped: dict[str, list[SweepPoint]] = defaultdict(list)
    for point in points:
        grouped[point.node_id or "node"].append(point)
    return dict(grouped)


def temperature_curve(points: Iterable[SweepPoint]) -> dict[str, TemperatureCurve]:
    """Return the per-node mean temperature against clock.

    Series are sorted by clock and never averaged across nodes. A violation
    is a clock at which the temperature is lower than at the next lower
    clock.
    """
    curves: dict[str, TemperatureCurve] = {}
    for node, group in sorted(points_by_node(points).items()):
        series = sorted(
            (p.clock_mhz, p.mean_temp_c) for p in group if p.mean_temp_c is not None
        )
        clocks = tuple(c for c, _ in series)
        temps = tuple(float(t) for _, t in series)
        violations = tuple(
            clocks[i] for i in range(1, len(temps)) if temps[i] < temps[i - 1]
        )
        if violations:
            logger.warning(
                f"Node {node}: temperature drops with rising clock at "
                f"{', '.join(f'{c:g}' for c in violations)} MHz"
            )
        curves[node] = TemperatureCurve(node, clocks, temps, violations)
    return curves


def node_variability(
    curves: Mapping[str, Sequence[SweepPoint]],
) -> NodeVariability:
    """Return the spread ``(max - min) / mean`` of the action across nodes.

    The spread is also normalized by the mean action at the highest clock.

    Raises
    ------
    AlignmentError
        With fewer than two nodes or when the nodes' clock grids differ.
    """
    if len(curves) < 2:
        raise AlignmentError(
            f"node variability needs at least two nodes, got {len(curves)}."
        )
    grids = {node: {p.clock_mhz for p in points} for node, points in curves.items()}
    common = set.intersection(*grids.values())
    union = set.union(*grids.values())
    if common != union:
        raise AlignmentError(
            "nodes were measured on different clock grids.", sorted(union - common)
        )
    actions: dict[float, list[float]] = defaultdict(list)
    for points in curves.values():
        for point in points:
            actions[point.clock_mhz].append(action(point))
    per_clock = {
        clock: (max(values) - min(values)) / float(np.mean(values))
        for clock, values in sorted(actions.items())
    }
    top_mean = float(np.mean(actions[max(actions)]))
    normalized = {
        clock: (max(values) - min(values)) / top_mean
        for clock, values in sorted(actions.items())
    }
    return NodeVariability(
        per_clock=per_clock,
        max_spread=max(per_clock.values()),
        normalized_per_clock=normalized,
        max_normalized_spread=max(normalized.values()),
    )


def load_points_csv(path: Path = CLOCK_SWEEP_REFERENCE_CSV) -> list[SweepPoint]:
    """Read sweep points from CSV.

    Required columns: ``clock_mhz, ets_j, tts_s``; optional: ``mlups,
    mean_temp_c, node_id``.
    """
    frame = pd.read_csv(path)
    missing = {"clock_mhz", "ets_j", "tts_s"} - set(frame.columns)
    if missing:
        raise ConfigurationError(f"{path}: missing column(s) {sorted(missing)}.")

    def _optional(row: Mapping[str, Any], column: str) -> Any:
        value = row.get(column)
        return None if value is None or pd.isna(value) else value

    points = [
        SweepPoint(
            clock_mhz=float(row["clock_mhz"]),
            ets_joules=float(row["ets_j"]),
            tts_seconds=float(row["tts_s"]),
            mlups=_optional(row, "mlups"),
            mean_temp_c=_optional(row, "mean_temp_c"),
            node_id=None if _optional(row, "node_id") is None else str(row["node_id"]),
        )
        for row in frame.to_dict(orient="records")
    ]
    logger.info(f"Loaded {len(points)} sweep point(s) from {path}")
    return points


def points_from_log_tree(
    directory: Path, config: PlateauConfig | None = None
) -> list[SweepPoint]:
    """Build sweep points from ``<clock>mhz/<node>.nvidiasmi.txt`` logs."""
    points: list[SweepPoint] = []
    for clock_dir in sorted(p for p in directory.iterdir() if p.is_dir()):
        match = CLOCK_DIR_PATTERN.match(clock_dir.name)
        if not match:
            logger.debug(f"Ignoring directory {clock_dir.name}")
            continue
        clock = float(match.group(1))
        for log_path in sorted(clock_dir.glob("*.nvidiasmi.txt")):
            parsed = read_smi_log(log_path)
            report = node_report(parsed.traces, config, parsed.skipped_lines)
            points.append(
                SweepPoint(
                    clock_mhz=clock,
                    ets_joules=report.node_ets_joules,
                    tts_seconds=report.node_tts_seconds,
                    mean_temp_c=report.mean_temp_c,
                    node_id=node_name(log_path),
                )
            )
    if not points:
        raise EmptyAnalysisError(f"no telemetry logs found under {directory}.")
    return points


def _fmt(value: float | None, spec: str) -> str:
    return "" if value is None else format(value, spec)


def report_frame(analysis: SweepAnalysis) -> pd.DataFrame:
    """Tabulate an analysis with fixed decimal places."""
    rows = [
        (
            f"{p.clock_mhz:g}",
            f"{p.ets_joules:.3f}",
            f"{p.tts_seconds:.3f}",
            _fmt(p.mlups, ".1f"),
            f"{act:.3f}",
            f"{dtts:.3f}",
            f"{dets:.3f}",
            _fmt(p.mean_temp_c, ".2f"),
        )
        for p, act, (dtts, dets) in zip(
            analysis.points, analysis.actions, analysis.normalized
        )
    ]
    return pd.DataFrame(rows, columns=list(REPORT_COLUMNS))


def temperature_frame(curves: Mapping[str, TemperatureCurve]) -> pd.DataFrame:
    """Tabulate per-node temperature series, one row per node and clock.

    ``violation`` marks clocks at which the node ran cooler than at the next
    lower clock. Nodes without temperature samples contribute no rows.
    """
    rows = [
        (node, f"{clock:g}", f"{temp:.2f}", clock in curve.violations)
        for node, curve in sorted(curves.items())
        for clock, temp in zip(curve.clocks, curve.temps)
    ]
    return pd.DataFrame(rows, columns=list(TEMPERATURE_COLUMNS))


def summary(
    analysis: SweepAnalysis,
    budgets: Sequence[float] = SLOWDOWN_BUDGETS_PCT,
    curves: Mapping[str, TemperatureCurve] | None = None,
    max_node_spread: float | None = None,
) -> dict[str, Any]:
    """Return the JSON summary of an analysis.

    ``temperature_violations`` counts, per node with temperature samples,
    the clocks at which the node ran cooler than at the next lower clock.
    ``max_node_spread`` is the largest relative action spread across nodes,
    ``None`` for single-node inputs.
    """
    dtts, dets = analysis.variation_at(analysis.argmin_clock)
    recommended = {}
    for budget in budgets:
        clock = recommend_clock(analysis, budget)
        c_dtts, c_dets = analysis.variation_at(clock)
        recommended[f"{budget:g}"] = {
            "clock_mhz": clock,
            "dtts_pct": round(c_dtts, 3),
            "dets_pct": round(c_dets, 3),
        }
    return {
        "reference_clock_mhz": analysis.reference_clock,
        "argmin_clock_mhz": analysis.argmin_clock,
        "argmin_action_js": round(action(analysis.point_at(analysis.argmin_clock)), 3),
        "argmin_dtts_pct": round(dtts, 3),
        "argmin_dets_pct": round(dets, 3),
        "max_saving_clock_mhz": max_saving_clock(analysis),
        "recommended": recommended,
        "points": len(analysis.points),
        "temperature_violations": {
            node: len(curve.violations)
            for node, curve in sorted((curves or {}).items())
            if curve.clocks
        },
        "max_node_spread": None if max_node_spread is None else round(max_node_spread, 6),
    }


def sweep_report(
    analysis: SweepAnalysis,
    csv_path: Path,
    json_path: Path,
    curves: Mapping[str, TemperatureCurve] | None = None,
    max_node_spread: float | None = None,
    temperature_path: Path | None = None,
) -> None:
    """Write the per-clock CSV and the JSON summary of an analysis.

    When ``temperature_path`` is given and ``curves`` hold samples, the
    per-node temperature series are written there as well.

    Raises
    ------
    EmptyAnalysisError
        If the analysis has no points; nothing is written.
    """
    if not analysis.points:
        raise EmptyAnalysisError("refusing to write a report for an empty analysis.")
    frame = report_frame(analysis)
    payload = json.dumps(
        summary(analysis, curves=curves, max_node_spread=max_node_spread),
        indent=2,
        sort_keys=True,
    )
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(csv_path, index=False)
    json_path.parent.mkdir(parents=True, exist_ok=True)
    json_path.write_text(payload + "\n", encoding="utf-8")
    logger.info(f"Wrote sweep report to {csv_path} and {json_path}")
    temperatures = temperature_frame(curves or {})
    if temperature_path is not None and not temperatures.empty:
        temperature_path.parent.mkdir(parents=True, exist_ok=True)
        temperatures.to_csv(temperature_path, index=False)
        logger.info(f"Wrote {len(temperatures)} temperature sample(s) to {temperature_path}")
