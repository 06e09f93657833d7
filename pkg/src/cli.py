"""Command line entry point of the lattice Boltzmann energy toolkit.

Usage::

    python -m src.cli simulate --size 32 --precision mixed --steps 2000
    python -m src.cli validate --quick
    python -m src.cli analyze data/fixtures/synthetic_node.nvidiasmi.txt
    python -m src.cli sweep --points data/reference/clock_sweep_full_node.csv
    python -m src.cli perf --scheme fused --precision double --gpus 4

Settings resolve as command line flag, then ``--config`` JSON file, then
environment (``.env`` is loaded from the project root), then the defaults in
:mod:`src.config`. Exit codes: 0 success, 1 domain or validation error,
2 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np
from dotenv import load_dotenv
from rich.console import Console
from rich.rule import Rule
from rich.table import Table

from src.config import (
    CAVITY_MAX_STEPS,
    CLOCK_SWEEP_REFERENCE_CSV,
    DEFAULT_CAVITY_N,
    DEFAULT_LID_VELOCITY,
    DEFAULT_REYNOLDS,
    DEFAULT_STEPS,
    GPUS_PER_NODE,
    LOG_DIR,
    LOG_FILENAME_CLI,
    LOG_FORMAT,
    MAX_GRID_EDGE,
    OPS_PER_UPDATE,
    OUTPUT_DIR,
    PROJECT_ROOT,
    SLOWDOWN_BUDGETS_PCT,
)
from src.d3q19_core import D3Q19, StencilD3Q19, stencil_identities
from src.errors import ConfigurationError, LbmError
from src.field_io import write_profiles_csv, write_snapshot
from src.perfmodel import (
    CostReport,
    MachineSpec,
    arithmetic_intensity,
    canonical_profile,
    cost_report,
    load_reference_flow,
    mlups,
    roofline_cap,
    roofline_efficiency,
    write_cost_reports,
)
from src.solver import (
    BoundarySpec,
    CavityCase,
    CavityResult,
    LatticeGrid,
    Precision,
    Scheme,
    centerline_profiles,
    init_fields,
    init_uniform,
    mirror_symmetry_error,
    populations,
    run_cavity,
    run_cavity_to_steady,
    run_taylor_green,
    step,
)
from src.sweep import (
    SweepAnalysis,
    TemperatureCurve,
    analyze_sweep,
    load_points_csv,
    mean_power_per_gpu,
    node_variability,
    points_by_node,
    points_from_log_tree,
    recommend_clock,
    report_frame,
    summary,
    sweep_report,
    temperature_curve,
)
from src.telemetry import (
    PlateauConfig,
    RunEnergyReport,
    node_name,
    node_report,
    read_smi_log,
    report_to_dict,
    reports_frame,
    write_report,
)

logger = logging.getLogger(__name__)

_CONSOLE = Console()

EXIT_OK = 0
EXIT_DOMAIN_ERROR = 1
EXIT_IO_ERROR = 2

CAVITY_RESIDUAL_TARGET = 1e-7
MIRROR_SYMMETRY_TOLERANCE = 1e-12
TAYLOR_GREEN_TOLERANCE = 0.02
VALIDATION_SEED = 2024

_POSITIVE = {"type": "number", "exclusiveMinimum": 0}

RUN_CONFIG_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "size": {"type": "integer", "minimum": 3, "maximum": MAX_GRID_EDGE},
        "reynolds": _POSITIVE,
        "u_lid": _POSITIVE,
        "steps": {"type": "integer", "minimum": 1},
        "tolerance": _POSITIVE,
        "scheme": {"enum": [s.value for s in Scheme]},
        "precision": {"enum": [p.value for p in Precision]},
        "output_dir": {"type": "string"},
        "telemetry": {"type": "string"},
        "util_min": {"type": "number", "minimum": 0, "maximum": 100},
        "power_fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "min_run": {"type": "integer", "minimum": 1},
        "points": {"type": "string"},
        "log_dir": {"type": "string"},
        "reference_clock": _POSITIVE,
        "gpus": {"type": "integer", "minimum": 1},
        "ops": _POSITIVE,
        "bandwidth": _POSITIVE,
        "measured_mlups": _POSITIVE,
        "quick": {"type": "boolean"},
    },
}


# --- Logging and console output ---


def configure_logging(log_level: str = "INFO", enable_file: bool = True) -> None:
    """Configure root logging for the command line program.

    Parameters
    ----------
    log_level : str
        Logging level name (e.g. ``"INFO"``, ``"DEBUG"``).
    enable_file : bool
        If ``True``, also log to ``LOG_DIR / LOG_FILENAME_CLI``.
    """
    for h in logging.root.handlers[:]:
        logging.root.removeHandler(h)
    handlers: list[logging.Handler] = [logging.StreamHandler()]
    if enable_file:
        try:
            LOG_DIR.mkdir(exist_ok=True)
            handlers.insert(0, logging.FileHandler(LOG_DIR / LOG_FILENAME_CLI, mode="a"))
        except Exception:
            pass
    logging.basicConfig(
        level=getattr(logging, log_level.upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=handlers,
    )


def ui_rule(title: str) -> None:
    """Render a section rule."""
    _CONSOLE.print(Rule(title, style="bold blue"))


def ui_success(message: str) -> None:
    """Print a success message with a checkmark."""
    _CONSOLE.print(f"[green]✓ {message}[/green]")


def ui_warning(message: str) -> None:
    """Print a warning message."""
    _CONSOLE.print(f"[yellow]⚠ {message}[/yellow]")


def ui_error(message: str) -> None:
    """Print an error message with a cross."""
    _CONSOLE.print(f"[bold red]✗ {message}[/bold red]")


def ui_table(title: str, columns: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    """Render rows as a rich table; every cell is converted with ``str``."""
    table = Table(title=title, show_header=True, header_style="bold blue")
    for column in columns:
        table.add_column(column)
    for row in rows:
        table.add_row(*(str(cell) for cell in row))
    _CONSOLE.print(table)


def _emit(payload: Any, fmt: str, csv_text: str | None = None) -> None:
    if fmt == "json":
        print(json.dumps(payload, indent=2, sort_keys=True))
    elif fmt == "csv" and csv_text is not None:
        print(csv_text, end="")


# --- Configuration ---


def load_env_file(env_path: Path = PROJECT_ROOT / ".env") -> bool:
    """Load ``.env`` without overriding variables already set."""
    if env_path.exists():
        load_dotenv(env_path, override=False)
        return True
    return False


def load_config_file(path: Path) -> dict[str, Any]:
    """Read and validate a JSON run configuration.

    Raises
    ------
    ConfigurationError
        If the file is not a JSON object matching ``RUN_CONFIG_SCHEMA``.
    OSError
        If the file cannot be read.
    """
    try:
        values = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as error:
        raise ConfigurationError(f"{path}: invalid JSON ({error.msg}).") from error
    try:
        jsonschema.validate(values, RUN_CONFIG_SCHEMA)
    except jsonschema.ValidationError as error:
        where = "/".join(str(p) for p in error.absolute_path) or "top level"
        raise ConfigurationError(f"{path}: {where}: {error.message}") from error
    logger.info(f"Loaded run configuration from {path}")
    return dict(values)


def _setting(
    args: argparse.Namespace, file_values: Mapping[str, Any], key: str, default: Any = None
) -> Any:
    value = getattr(args, key, None)
    if value is not None:
        return value
    return file_values.get(key, default)


def _path_setting(
    args: argparse.Namespace,
    file_values: Mapping[str, Any],
    key: str,
    default: Path | None = None,
) -> Path | None:
    value = _setting(args, file_values, key)
    return default if value is None else Path(value)


def _plateau_config(
    args: argparse.Namespace, file_values: Mapping[str, Any]
) -> PlateauConfig:
    return PlateauConfig.from_env(
        util_min=_setting(args, file_values, "util_min"),
        power_fraction=_setting(args, file_values, "power_fraction"),
        min_run=_setting(args, file_values, "min_run"),
    )


def _enum(kind: type[Scheme] | type[Precision], name: str, value: Any) -> Any:
    try:
        return kind(value)
    except ValueError as error:
        choices = ", ".join(member.value for member in kind)
        raise ConfigurationError(
            f"{name} must be one of {choices}, got {value!r}."
        ) from error


@dataclass(frozen=True)
class RunConfig:
    """Validated settings of a cavity simulation."""

    case: CavityCase
    steps: int
    scheme: Scheme = Scheme.FUSED
    precision: Precision = Precision.DOUBLE
    output_dir: Path = OUTPUT_DIR
    telemetry: Path | None = None
    tolerance: float | None = None
    progress: bool = False

    @classmethod
    def from_settings(cls, settings: Mapping[str, Any]) -> RunConfig:
        """Validate raw settings before any compute starts.

        Raises
        ------
        ConfigurationError
            Naming the offending field.
        FileNotFoundError
            If a telemetry log is given but missing.
        """
        steps = int(settings.get("steps", DEFAULT_STEPS))
        if steps < 1:
            raise ConfigurationError(f"steps must be at least 1, got {steps}.")
        case = CavityCase(
            N=int(settings.get("size", DEFAULT_CAVITY_N)),
            reynolds=float(settings.get("reynolds", DEFAULT_REYNOLDS)),
            u_lid=float(settings.get("u_lid", DEFAULT_LID_VELOCITY)),
        )
        telemetry = settings.get("telemetry")
        if telemetry is not None and not Path(telemetry).is_file():
            raise FileNotFoundError(f"telemetry log not found: {telemetry}")
        tolerance = settings.get("tolerance")
        return cls(
            case=case,
            steps=steps,
            scheme=_enum(Scheme, "scheme", settings.get("scheme", Scheme.FUSED.value)),
            precision=_enum(
                Precision, "precision", settings.get("precision", Precision.DOUBLE.value)
            ),
            output_dir=Path(settings.get("output_dir", OUTPUT_DIR)),
            telemetry=None if telemetry is None else Path(telemetry),
            tolerance=None if tolerance is None else float(tolerance),
            progress=bool(settings.get("progress", False)),
        )


# --- simulate ---


@dataclass(frozen=True)
class SimulationArtifacts:
    """Files and results of one ``simulate`` run."""

    result: CavityResult
    snapshot: Path
    metadata: Path
    profiles: Path
    stats: Path
    loop_mlups: float | None
    cost: CostReport | None = None
    cost_files: tuple[Path, ...] = ()


def _snapshot_metadata(config: RunConfig, result: CavityResult) -> dict[str, Any]:
    return {
        "case": "lid_driven_cavity",
        "reynolds": f"{config.case.reynolds:g}",
        "u_lid": f"{config.case.u_lid:g}",
        "omega": repr(config.case.omega),
        "scheme": config.scheme.value,
        "precision": config.precision.value,
        "steps": result.stats.steps_done,
    }


def cmd_simulate(config: RunConfig) -> SimulationArtifacts:
    """Run the cavity, write the snapshot, profiles, statistics and cost report.

    When ``config.telemetry`` names a node log, its plateau ETS/TTS feed the
    cost report; the loop-only MLUPS is always reported.
    """
    result = run_cavity(
        config.case,
        config.steps,
        config.scheme,
        config.precision,
        tolerance=config.tolerance,
        progress=config.progress,
    )
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    snapshot = out / "cavity.bin"
    sidecar = write_snapshot(
        snapshot, result.velocity, result.rho, _snapshot_metadata(config, result)
    )
    profiles = write_profiles_csv(
        out / "profiles.csv", centerline_profiles(result.velocity, config.case.u_lid)
    )
    stats = result.stats
    loop_mlups = (
        mlups(stats.site_updates, stats.wall_seconds) if stats.wall_seconds > 0 else None
    )
    cost: CostReport | None = None
    cost_files: tuple[Path, ...] = ()
    if config.telemetry is not None:
        parsed = read_smi_log(config.telemetry)
        energy = node_report(parsed.traces, PlateauConfig.from_env(), parsed.skipped_lines)
        cost = cost_report(
            f"{config.scheme.value}-{config.precision.value}",
            energy.node_ets_joules,
            energy.node_tts_seconds,
            stats.site_updates,
        )
        cost_files = (out / "cost.csv", out / "cost.json")
        write_cost_reports([cost], *cost_files)
    stats_path = out / "stats.json"
    payload = {
        "steps_done": stats.steps_done,
        "site_updates": stats.site_updates,
        "wall_seconds": stats.wall_seconds,
        "loop_mlups": loop_mlups,
        "final_residual": result.final_residual,
        "scheme": config.scheme.value,
        "precision": config.precision.value,
        "plateau_mlups": None if cost is None else cost.mlups,
        "cost_j_per_gupdate": None if cost is None else cost.cost_per_gigaupdate,
    }
    stats_path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    logger.info(f"Wrote run statistics to {stats_path}")
    return SimulationArtifacts(
        result=result,
        snapshot=snapshot,
        metadata=sidecar,
        profiles=profiles,
        stats=stats_path,
        loop_mlups=loop_mlups,
        cost=cost,
        cost_files=cost_files,
    )


def _run_simulate(args: argparse.Namespace, file_values: Mapping[str, Any]) -> int:
    keys = ("size", "reynolds", "u_lid", "steps", "tolerance", "scheme", "precision")
    settings: dict[str, Any] = {
        key: value
        for key in keys
        if (value := _setting(args, file_values, key)) is not None
    }
    settings["output_dir"] = _path_setting(args, file_values, "output_dir", OUTPUT_DIR)
    settings["telemetry"] = _path_setting(args, file_values, "telemetry")
    settings["progress"] = bool(args.progress)
    config = RunConfig.from_settings(settings)
    artifacts = cmd_simulate(config)
    stats = artifacts.result.stats
    rows = [
        ("steps", stats.steps_done),
        ("final residual", f"{artifacts.result.final_residual:.3e}"),
        ("wall time [s]", f"{stats.wall_seconds:.3f}"),
        (
            "loop MLUPS",
            "n/a" if artifacts.loop_mlups is None else f"{artifacts.loop_mlups:.2f}",
        ),
    ]
    if artifacts.cost is not None:
        rows += [
            ("ETS [J]", f"{artifacts.cost.ets_joules:.1f}"),
            ("plateau MLUPS", f"{artifacts.cost.mlups:.2f}"),
            ("J per 10^9 updates", f"{artifacts.cost.cost_per_gigaupdate:.3f}"),
        ]
    ui_table("Cavity run", ("quantity", "value"), rows)
    ui_success(f"Snapshot written to {artifacts.snapshot}")
    return EXIT_OK


# --- validate ---


@dataclass(frozen=True)
class ValidationCheck:
    """Outcome of one physics check."""

    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class SuiteSizes:
    """Grid sizes and step counts of the validation suite."""

    fixed_point_n: int
    fixed_point_steps: int
    equivalence_n: int
    equivalence_steps: int
    periodic_equivalence_n: int
    periodic_equivalence_steps: int
    taylor_green_n: int
    taylor_green_steps: int
    taylor_green_omegas: tuple[float, ...]
    cavity_n: int
    cavity_reynolds: float
    cavity_max_steps: int = CAVITY_MAX_STEPS
    taylor_green_depth: int = 2
    taylor_green_amplitude: float = 0.02


FULL_SUITE = SuiteSizes(
    fixed_point_n=8,
    fixed_point_steps=1000,
    equivalence_n=8,
    equivalence_steps=100,
    periodic_equivalence_n=16,
    periodic_equivalence_steps=50,
    taylor_green_n=64,
    taylor_green_steps=300,
    taylor_green_omegas=(0.8, 1.0, 1.2),
    cavity_n=32,
    cavity_reynolds=100.0,
)
QUICK_SUITE = SuiteSizes(
    fixed_point_n=4,
    fixed_point_steps=100,
    equivalence_n=6,
    equivalence_steps=20,
    periodic_equivalence_n=6,
    periodic_equivalence_steps=20,
    taylor_green_n=32,
    taylor_green_steps=200,
    taylor_green_omegas=(1.0,),
    cavity_n=8,
    cavity_reynolds=10.0,
    cavity_max_steps=5000,
)


def _check_stencil(stencil: StencilD3Q19) -> ValidationCheck:
    failed = stencil_identities(stencil)
    detail = "all identities hold" if not failed else "failed: " + ", ".join(failed)
    return ValidationCheck("stencil identities", not failed, detail)


def _check_fixed_point(sizes: SuiteSizes) -> ValidationCheck:
    n = sizes.fixed_point_n
    grid = init_uniform(LatticeGrid((n, n, n)))
    before = populations(grid)
    boundary = BoundarySpec.periodic()
    for _ in range(sizes.fixed_point_steps):
        step(grid, 1.2, boundary)
    passed = bool(np.array_equal(populations(grid), before))
    outcome = "unchanged" if passed else "changed"
    return ValidationCheck(
        "rest fixed point",
        passed,
        f"{sizes.fixed_point_steps} steps on {n}^3: populations {outcome}",
    )


def _compare_schemes(
    name: str, n: int, steps: int, boundary: BoundarySpec
) -> ValidationCheck:
    rng = np.random.default_rng(VALIDATION_SEED)
    rho = 1.0 + 0.01 * rng.uniform(-1.0, 1.0, (n, n, n))
    u = 0.02 * rng.uniform(-1.0, 1.0, (3, n, n, n))
    grids = [
        init_fields(LatticeGrid((n, n, n), Precision.DOUBLE, scheme), rho, u)
        for scheme in (Scheme.BASELINE, Scheme.FUSED)
    ]
    for grid in grids:
        for _ in range(steps):
            step(grid, 1.3, boundary)
    baseline, fused = (populations(grid) for grid in grids)
    deviation = float(np.max(np.abs(baseline - fused)))
    return ValidationCheck(
        name,
        bool(np.array_equal(baseline, fused)),
        f"max |difference| {deviation:.1e} after {steps} steps on {n}^3",
    )


def _check_scheme_equivalence(sizes: SuiteSizes) -> list[ValidationCheck]:
    return [
        _compare_schemes(
            "fused == baseline",
            sizes.equivalence_n,
            sizes.equivalence_steps,
            BoundarySpec.cavity(0.05),
        ),
        _compare_schemes(
            "fused == baseline (periodic)",
            sizes.periodic_equivalence_n,
            sizes.periodic_equivalence_steps,
            BoundarySpec.periodic(),
        ),
    ]


def _check_taylor_green(sizes: SuiteSizes) -> list[ValidationCheck]:
    checks: list[ValidationCheck] = []
    for omega in sizes.taylor_green_omegas:
        name = f"Taylor-Green viscosity (omega={omega:g})"
        result = run_taylor_green(
            sizes.taylor_green_n,
            omega,
            sizes.taylor_green_amplitude,
            sizes.taylor_green_steps,
            depth=sizes.taylor_green_depth,
        )
        checks.append(
            ValidationCheck(
                name,
                result.relative_error <= TAYLOR_GREEN_TOLERANCE,
                f"nu {result.nu_measured:.5f} vs {result.nu_expected:.5f} "
                f"({100 * result.relative_error:.2f}%)",
            )
        )
    return checks


def _check_cavity(sizes: SuiteSizes) -> list[ValidationCheck]:
    case = CavityCase(N=sizes.cavity_n, reynolds=sizes.cavity_reynolds, u_lid=0.05)
    result = run_cavity_to_steady(
        case, CAVITY_RESIDUAL_TARGET, max_steps=sizes.cavity_max_steps
    )
    symmetry = mirror_symmetry_error(result.velocity)
    return [
        ValidationCheck(
            "cavity convergence",
            True,
            f"residual {result.final_residual:.2e} after {result.stats.steps_done} steps",
        ),
        ValidationCheck(
            "cavity mirror symmetry",
            symmetry < MIRROR_SYMMETRY_TOLERANCE,
            f"max deviation {symmetry:.1e}",
        ),
    ]


def _guarded(
    name: str, check: Callable[[], ValidationCheck | list[ValidationCheck]]
) -> list[ValidationCheck]:
    try:
        outcome = check()
    except LbmError as error:
        logger.error(f"Validation check {name} raised: {error}")
        return [ValidationCheck(name, False, str(error))]
    return outcome if isinstance(outcome, list) else [outcome]


def cmd_validate(
    quick: bool = False, stencil: StencilD3Q19 = D3Q19
) -> list[ValidationCheck]:
    """Run the physics validation suite.

    Parameters
    ----------
    quick : bool
        Use reduced grids (a few seconds instead of minutes).
    stencil : StencilD3Q19
        Stencil checked by the identity test; a perturbed copy exercises the
        failure path.

    Returns
    -------
    list[ValidationCheck]
        One entry per check, in suite order.
    """
    sizes = QUICK_SUITE if quick else FULL_SUITE
    logger.info(f"Running {'quick' if quick else 'full'} validation suite")
    checks: list[ValidationCheck] = []
    checks += _guarded("stencil identities", lambda: _check_stencil(stencil))
    checks += _guarded("rest fixed point", lambda: _check_fixed_point(sizes))
    checks += _guarded("fused == baseline", lambda: _check_scheme_equivalence(sizes))
    checks += _guarded("Taylor-Green viscosity", lambda: _check_taylor_green(sizes))
    checks += _guarded("cavity convergence", lambda: _check_cavity(sizes))
    failed = [c.name for c in checks if not c.passed]
    if failed:
        logger.error(f"Validation failed: {', '.join(failed)}")
    else:
        logger.info(f"All {len(checks)} validation checks passed")
    return checks


def _parse_weight(text: str) -> tuple[int, Fraction]:
    index, _, value = text.partition(":")
    try:
        return int(index), Fraction(value)
    except ValueError as error:
        raise argparse.ArgumentTypeError(f"expected INDEX:FRACTION, got {text!r}") from error


def _run_validate(args: argparse.Namespace, file_values: Mapping[str, Any]) -> int:
    stencil = D3Q19
    if args.perturb_weight is not None:
        index, weight = args.perturb_weight
        stencil = D3Q19.with_weight(index, weight)
    checks = cmd_validate(bool(_setting(args, file_values, "quick", False)), stencil)
    ui_table(
        "Physics validation",
        ("check", "result", "detail"),
        [(c.name, "PASS" if c.passed else "FAIL", c.detail) for c in checks],
    )
    failed = [c.name for c in checks if not c.passed]
    if failed:
        ui_error(f"Failed checks: {', '.join(failed)}")
        return EXIT_DOMAIN_ERROR
    ui_success("All validation checks passed")
    return EXIT_OK


# --- analyze ---


@dataclass(frozen=True)
class AnalysisOutcome:
    """Per-log reports and failures of an ``analyze`` run."""

    reports: dict[str, RunEnergyReport]
    outputs: dict[str, tuple[Path, Path]]
    failures: dict[str, str]
    exit_code: int


def cmd_analyze(
    logs: Sequence[Path], config: PlateauConfig, output_dir: Path
) -> AnalysisOutcome:
    """Analyze node telemetry logs and write one CSV/JSON report per log.

    A log that fails does not stop the others; the exit code reflects the
    worst failure (I/O over domain errors).
    """
    reports: dict[str, RunEnergyReport] = {}
    outputs: dict[str, tuple[Path, Path]] = {}
    failures: dict[str, str] = {}
    exit_code = EXIT_OK
    for path in logs:
        node = node_name(path)
        try:
            parsed = read_smi_log(path)
            report = node_report(parsed.traces, config, parsed.skipped_lines)
            paths = (
                output_dir / f"{node}.energy.csv",
                output_dir / f"{node}.energy.json",
            )
            write_report(report, node, *paths)
        except OSError as error:
            logger.error(f"{path}: {error}")
            failures[str(path)] = str(error)
            exit_code = EXIT_IO_ERROR
            continue
        except ValueError as error:
            logger.error(f"{path}: {error}")
            failures[str(path)] = str(error)
            exit_code = max(exit_code, EXIT_DOMAIN_ERROR)
            continue
        reports[node] = report
        outputs[node] = paths
    return AnalysisOutcome(reports, outputs, failures, exit_code)


def _run_analyze(args: argparse.Namespace, file_values: Mapping[str, Any]) -> int:
    output_dir = _path_setting(args, file_values, "output_dir", OUTPUT_DIR)
    assert output_dir is not None
    outcome = cmd_analyze(args.logs, _plateau_config(args, file_values), output_dir)
    if args.format == "json":
        _emit(
            {node: report_to_dict(r, node) for node, r in outcome.reports.items()},
            "json",
        )
    elif args.format == "csv":
        frame = reports_frame(outcome.reports)
        _emit(None, "csv", frame.to_csv(index=False, float_format="%.3f"))
    else:
        ui_table(
            "Node energy",
            ("node", "GPUs", "ETS [kJ]", "TTS [s]", "skipped lines"),
            [
                (
                    node,
                    len(r.per_gpu),
                    f"{r.node_ets_joules / 1e3:.3f}",
                    f"{r.node_tts_seconds:.1f}",
                    r.skipped_lines,
                )
                for node, r in outcome.reports.items()
            ],
        )
    for path, message in outcome.failures.items():
        ui_error(f"{path}: {message}")
    return outcome.exit_code


# --- sweep ---


@dataclass(frozen=True)
class SweepOutcome:
    """Analysis and report files of a ``sweep`` run."""

    analysis: SweepAnalysis
    csv_path: Path
    json_path: Path
    recommended: dict[float, float]
    max_node_spread: float | None = None
    curves: dict[str, TemperatureCurve] = field(default_factory=dict)
    temperature_path: Path | None = None


def cmd_sweep(
    points_csv: Path | None,
    log_dir: Path | None,
    output_dir: Path,
    reference_clock: float | None = None,
    plateau: PlateauConfig | None = None,
) -> SweepOutcome:
    """Analyze a clock sweep from a points CSV or a ``<clock>mhz/`` log tree.

    Besides ``sweep.csv`` and ``sweep.json``, per-node temperature series are
    written to ``temperatures.csv`` when the points carry temperatures.
    """
    if points_csv is not None and log_dir is not None:
        raise ConfigurationError("give either a points CSV or a log directory, not both.")
    points = (
        points_from_log_tree(log_dir, plateau)
        if log_dir is not None
        else load_points_csv(points_csv or CLOCK_SWEEP_REFERENCE_CSV)
    )
    curves = temperature_curve(points)
    nodes = points_by_node(points)
    spread = node_variability(nodes).max_spread if len(nodes) > 1 else None
    analysis = analyze_sweep(points, reference_clock)
    csv_path = output_dir / "sweep.csv"
    json_path = output_dir / "sweep.json"
    temperature_path = (
        output_dir / "temperatures.csv"
        if any(curve.clocks for curve in curves.values())
        else None
    )
    sweep_report(analysis, csv_path, json_path, curves, spread, temperature_path)
    recommended = {b: recommend_clock(analysis, b) for b in SLOWDOWN_BUDGETS_PCT}
    return SweepOutcome(
        analysis, csv_path, json_path, recommended, spread, curves, temperature_path
    )


def _run_sweep(args: argparse.Namespace, file_values: Mapping[str, Any]) -> int:
    output_dir = _path_setting(args, file_values, "output_dir", OUTPUT_DIR)
    assert output_dir is not None
    outcome = cmd_sweep(
        _path_setting(args, file_values, "points"),
        _path_setting(args, file_values, "log_dir"),
        output_dir,
        _setting(args, file_values, "reference_clock"),
        _plateau_config(args, file_values),
    )
    analysis = outcome.analysis
    if args.format == "json":
        _emit(
            summary(
                analysis,
                curves=outcome.curves,
                max_node_spread=outcome.max_node_spread,
            ),
            "json",
        )
        return EXIT_OK
    if args.format == "csv":
        _emit(None, "csv", report_frame(analysis).to_csv(index=False))
        return EXIT_OK
    gpus = int(_setting(args, file_values, "gpus", GPUS_PER_NODE))
    ui_table(
        "Clock sweep",
        ("clock [MHz]", "ETS [kJ]", "TTS [s]", "action [MJ s]", "dTTS %", "dETS %", "W/GPU"),
        [
            (
                f"{p.clock_mhz:g}",
                f"{p.ets_joules / 1e3:.1f}",
                f"{p.tts_seconds:.1f}",
                f"{act / 1e6:.2f}",
                f"{dtts:+.2f}",
                f"{dets:+.2f}",
                f"{mean_power_per_gpu(p, gpus):.1f}",
            )
            for p, act, (dtts, dets) in zip(
                analysis.points, analysis.actions, analysis.normalized
            )
        ],
    )
    ui_rule("Recommendations")
    ui_success(f"Minimum action at {analysis.argmin_clock:g} MHz")
    for budget, clock in outcome.recommended.items():
        dtts, dets = analysis.variation_at(clock)
        ui_success(
            f"<= {budget:g}% slowdown: {clock:g} MHz "
            f"({dtts:+.2f}% time, {dets:+.2f}% energy)"
        )
    if outcome.max_node_spread is not None:
        ui_warning(f"Largest action spread across nodes: {100 * outcome.max_node_spread:.2f}%")
    for node, curve in sorted(outcome.curves.items()):
        if curve.violations:
            ui_warning(f"{node}: temperature drops at {len(curve.violations)} clock(s)")
    if outcome.temperature_path is not None:
        ui_success(f"Temperature series written to {outcome.temperature_path}")
    return EXIT_OK


# --- perf ---


def cmd_perf(
    schemes: Sequence[Scheme],
    precisions: Sequence[Precision],
    machine: MachineSpec,
    n_gpus: int = 1,
    ops: float = OPS_PER_UPDATE,
    measured_mlups: float | None = None,
) -> list[dict[str, Any]]:
    """Return roofline rows (AI, caps, optional efficiency) per scheme/precision."""
    rows: list[dict[str, Any]] = []
    for scheme in schemes:
        for precision in precisions:
            profile = canonical_profile(scheme, precision, ops)
            cap = roofline_cap(profile, machine, n_gpus)
            rows.append(
                {
                    "profile": profile.label,
                    "bytes_per_update": profile.bytes_per_update,
                    "arithmetic_intensity": arithmetic_intensity(profile),
                    "cap_gflops": cap.gflops,
                    "cap_mlups": cap.mlups,
                    "efficiency": (
                        None
                        if measured_mlups is None
                        else roofline_efficiency(measured_mlups, cap.mlups)
                    ),
                }
            )
    return rows


def _run_perf(args: argparse.Namespace, file_values: Mapping[str, Any]) -> int:
    machine = MachineSpec.from_env()
    bandwidth = _setting(args, file_values, "bandwidth")
    if bandwidth is not None:
        machine = MachineSpec(float(bandwidth), machine.gpus_per_node)
    scheme = _setting(args, file_values, "scheme")
    precision = _setting(args, file_values, "precision")
    rows = cmd_perf(
        [_enum(Scheme, "scheme", scheme)] if scheme else list(Scheme),
        [_enum(Precision, "precision", precision)] if precision else list(Precision),
        machine,
        int(_setting(args, file_values, "gpus", 1)),
        float(_setting(args, file_values, "ops", OPS_PER_UPDATE)),
        _setting(args, file_values, "measured_mlups"),
    )
    if args.format == "json":
        _emit(rows, "json")
        return EXIT_OK
    ui_table(
        "Roofline",
        ("profile", "bytes/update", "AI [flop/B]", "cap GFLOPS", "cap MLUPS", "efficiency"),
        [
            (
                r["profile"],
                f"{r['bytes_per_update']:g}",
                f"{r['arithmetic_intensity']:.2f}",
                f"{r['cap_gflops']:.1f}",
                f"{r['cap_mlups']:.0f}",
                "" if r["efficiency"] is None else f"{100 * r['efficiency']:.1f}%",
            )
            for r in rows
        ],
    )
    if args.flow:
        flow = load_reference_flow()
        ui_table(
            "Optimization flow",
            ("table", "label", "ETS [kJ]", "TTS [s]", "GPUs", "J per 10^9 updates"),
            [
                (
                    row["table"],
                    row["label"],
                    f"{row['ets_j'] / 1e3:.0f}",
                    f"{row['tts_s']:g}",
                    row["gpus"],
                    f"{row['cost_j_per_gupdate']:.1f}",
                )
                for row in flow.to_dict(orient="records")
            ],
        )
    return EXIT_OK


# --- argument parsing ---


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON run configuration file.")
    parser.add_argument(
        "--log-level",
        type=str,
        default=os.environ.get("LOG_LEVEL", "INFO"),
        help="Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL).",
    )
    parser.add_argument("--output-dir", type=Path, help="Directory for output files.")


def _add_format(parser: argparse.ArgumentParser, choices: Sequence[str]) -> None:
    parser.add_argument(
        "--format", choices=list(choices), default="table", help="Console output format."
    )


def _add_plateau(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--util-min", type=float, help="Busy utilization threshold [%%].")
    parser.add_argument(
        "--power-fraction", type=float, help="Fallback power threshold fraction."
    )
    parser.add_argument("--min-run", type=int, help="Minimum plateau length [samples].")


def parse_arguments(argv: Sequence[str] | None = None) -> argparse.Namespace:
    """Parse the command line."""
    parser = argparse.ArgumentParser(
        prog="python -m src.cli",
        description="Lattice Boltzmann solver, performance model and energy analysis.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate", help="Run the lid-driven cavity.")
    _add_common(simulate)
    simulate.add_argument("--size", type=int, help="Cavity edge N.")
    simulate.add_argument("--reynolds", type=float, help="Reynolds number.")
    simulate.add_argument("--u-lid", type=float, help="Lid speed (lattice units).")
    simulate.add_argument("--steps", type=int, help="Number of time steps.")
    simulate.add_argument("--tolerance", type=float, help="Stop below this residual.")
    simulate.add_argument("--scheme", choices=[s.value for s in Scheme])
    simulate.add_argument("--precision", choices=[p.value for p in Precision])
    simulate.add_argument("--telemetry", type=Path, help="Node telemetry log of the run.")
    simulate.add_argument("--progress", action="store_true", help="Show a progress bar.")
    simulate.set_defaults(handler=_run_simulate)

    validate = commands.add_parser("validate", help="Run the physics validation suite.")
    _add_common(validate)
    validate.add_argument(
        "--quick", action="store_true", default=None, help="Use reduced grids."
    )
    validate.add_argument("--perturb-weight", type=_parse_weight, help=argparse.SUPPRESS)
    validate.set_defaults(handler=_run_validate)

    analyze = commands.add_parser("analyze", help="Compute ETS/TTS from telemetry logs.")
    _add_common(analyze)
    analyze.add_argument("logs", type=Path, nargs="+", help="Node telemetry logs.")
    _add_plateau(analyze)
    _add_format(analyze, ("table", "json", "csv"))
    analyze.set_defaults(handler=_run_analyze)

    sweep = commands.add_parser("sweep", help="Analyze a clock-rate sweep.")
    _add_common(sweep)
    source = sweep.add_mutually_exclusive_group()
    source.add_argument("--points", type=Path, help="Sweep points CSV.")
    source.add_argument("--log-dir", type=Path, help="Tree of <clock>mhz/<node> logs.")
    sweep.add_argument("--reference-clock", type=float, help="Reference clock [MHz].")
    sweep.add_argument("--gpus", type=int, help="GPUs per node (power per GPU).")
    _add_plateau(sweep)
    _add_format(sweep, ("table", "json", "csv"))
    sweep.set_defaults(handler=_run_sweep)

    perf = commands.add_parser("perf", help="Roofline and arithmetic intensity.")
    _add_common(perf)
    perf.add_argument("--scheme", choices=[s.value for s in Scheme])
    perf.add_argument("--precision", choices=[p.value for p in Precision])
    perf.add_argument("--gpus", type=int, help="Devices used.")
    perf.add_argument("--ops", type=float, help="Operations per site update.")
    perf.add_argument("--bandwidth", type=float, help="Memory bandwidth [bytes/s].")
    perf.add_argument("--measured-mlups", type=float, help="Measured throughput.")
    perf.add_argument(
        "--flow", action="store_true", help="Also print the published cost flow."
    )
    _add_format(perf, ("table", "json"))
    perf.set_defaults(handler=_run_perf)

    return parser.parse_args(argv)


def main(argv: Sequence[str] | None = None) -> int:
    """Run one subcommand and return its exit code."""
    load_env_file()
    args = parse_arguments(argv)
    disable_file = bool(
        os.environ.get("DISABLE_FILE_LOGS") or os.environ.get("PYTEST_CURRENT_TEST")
    )
    configure_logging(args.log_level, enable_file=not disable_file)
    logger.info(f"Starting {args.command}")
    try:
        file_values = load_config_file(args.config) if args.config else {}
        handler: Callable[[argparse.Namespace, Mapping[str, Any]], int] = args.handler
        return handler(args, file_values)
    except OSError as error:
        logger.error(f"I/O error: {error}")
        ui_error(str(error))
        return EXIT_IO_ERROR
    except ValueError as error:
        logger.error(f"{type(error).__name__}: {error}")
        ui_error(str(error))
        return EXIT_DOMAIN_ERROR


if __name__ == "__main__":  # pragma: no cover - CLI entry
    sys.exit(main())
