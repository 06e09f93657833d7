"""Performance and energy accounting for lattice kernels.

Converts between lattice updates and floating point operations, computes
arithmetic intensity and memory-bound roofline caps, and expresses the
energy cost of a run per 10^9 site updates.

Traffic model per site update (8-byte or 4-byte scalars):

- baseline: collision reads and writes all 19 populations, propagation
  reads and writes the 18 moving ones, ``2*19 + 2*18 = 74`` scalars.
- fused: one read of 19 and one write of 18 moving populations, 37 scalars.
"""

from __future__ import annotations

import json
import logging
import os
from collections.abc import Iterable
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from src.config import (
    GPUS_PER_NODE,
    MEM_BANDWIDTH_BYTES,
    OPS_PER_UPDATE,
    OPTIMIZATION_FLOW_REFERENCE_CSV,
    PRODUCTION_LATTICE_SITES,
    PRODUCTION_STEPS,
)
from src.errors import ConfigurationError
from src.solver import Precision, Scheme

logger = logging.getLogger(__name__)

BASELINE_SCALARS_PER_UPDATE: int = 2 * 19 + 2 * 18
FUSED_SCALARS_PER_UPDATE: int = 19 + 18
GIGA_UPDATES: float = 1e9
REFERENCE_UPDATES: int = PRODUCTION_LATTICE_SITES * PRODUCTION_STEPS

COST_REPORT_COLUMNS: tuple[str, ...] = (
    "label",
    "ets_j",
    "tts_s",
    "updates",
    "mlups",
    "cost_j_per_gupdate",
)


@dataclass(frozen=True)
class KernelProfile:
    """Operations and bytes moved per site update.

    Examples
    --------
    >>> from src.perfmodel import KernelProfile, arithmetic_intensity
    >>> round(arithmetic_intensity(KernelProfile(250, 592)), 2)
    0.42
    """

    ops_per_update: float = OPS_PER_UPDATE
    bytes_per_update: float = 8 * BASELINE_SCALARS_PER_UPDATE
    label: str = ""

    def __post_init__(self) -> None:
        """Validate the fields."""
        if not (self.ops_per_update > 0 and self.bytes_per_update > 0):
            raise ConfigurationError(
                "ops_per_update and bytes_per_update must be positive, got "
                f"{self.ops_per_update} and {self.bytes_per_update}."
            )


@dataclass(frozen=True)
class MachineSpec:
    """Memory bandwidth (bytes/s) per device and devices per node."""

    mem_bandwidth: float = MEM_BANDWIDTH_BYTES
    gpus_per_node: int = GPUS_PER_NODE

    def __post_init__(self) -> None:
        """Validate the fields."""
        if not (self.mem_bandwidth > 0 and self.gpus_per_node > 0):
            raise ConfigurationError(
                "mem_bandwidth and gpus_per_node must be positive, got "
                f"{self.mem_bandwidth} and {self.gpus_per_node}."
            )

    @classmethod
    def from_env(cls) -> MachineSpec:
        """Build from ``MEM_BANDWIDTH_BYTES``/``GPUS_PER_NODE`` env overrides."""
        bandwidth = os.getenv("MEM_BANDWIDTH_BYTES")
        gpus = os.getenv("GPUS_PER_NODE")
        return cls(
            mem_bandwidth=float(bandwidth) if bandwidth else MEM_BANDWIDTH_BYTES,
            gpus_per_node=int(gpus) if gpus else GPUS_PER_NODE,
        )


@dataclass(frozen=True)
class RooflineCap:
    """Memory-bound performance ceiling."""

    flops: float
    lups: float

    @property
    def gflops(self) -> float:
        """Cap in GFLOPS."""
        return self.flops / 1e9

    @property
    def mlups(self) -> float:
        """Cap in MLUPS."""
        return self.lups / 1e6


@dataclass(frozen=True)
class CostReport:
    """Energy, time and throughput of one run."""

    label: str
    ets_joules: float
    tts_seconds: float
    updates: int
    mlups: float
    cost_per_gigaupdate: float


def traffic_model(scheme: Scheme | str, precision: Precision | str) -> int:
    """Return bytes moved per site update for a scheme/precision pair.

    Examples
    --------
    >>> from src.perfmodel import traffic_model
    >>> traffic_model("baseline", "double"), traffic_model("fused", "mixed")
    (592, 148)
    """
    try:
        scheme = Scheme(scheme)
        precision = Precision(precision)
    except ValueError as error:
        raise ConfigurationError(
            f"unknown scheme/precision pair ({scheme}, {precision})."
        ) from error
    scalar_bytes = np.dtype(precision.storage_dtype).itemsize
    scalars = (
        BASELINE_SCALARS_PER_UPDATE
        if scheme is Scheme.BASELINE
        else FUSED_SCALARS_PER_UPDATE
    )
    return scalar_bytes * scalars


def canonical_profile(
    scheme: Scheme | str, precision: Precision | str, ops: float = OPS_PER_UPDATE
) -> KernelProfile:
    """Return the kernel profile of a scheme/precision pair."""
    scheme = Scheme(scheme)
    precision = Precision(precision)
    return KernelProfile(
        ops_per_update=ops,
        bytes_per_update=traffic_model(scheme, precision),
        label=f"{scheme.value}-{precision.value}",
    )


def arithmetic_intensity(profile: KernelProfile) -> float:
    """Return operations per byte moved."""
    return profile.ops_per_update / profile.bytes_per_update


def roofline_cap(
    profile: KernelProfile, machine: MachineSpec | None = None, n_gpus: int = 1
) -> RooflineCap:
    """Return the memory-bound FLOPS and LUPS caps on ``n_gpus`` devices.

    Parameters
    ----------
    profile : KernelProfile
        Kernel operations and traffic.
    machine : MachineSpec, optional
        Device bandwidth and node size; defaults to the configured machine.
    n_gpus : int
        Devices used, ``1 <= n_gpus <= machine.gpus_per_node``.

    Returns
    -------
    RooflineCap
        ``flops = AI * bandwidth * n_gpus`` and ``lups = flops / ops``.

    Examples
    --------
    >>> from src.perfmodel import canonical_profile, roofline_cap
    >>> round(roofline_cap(canonical_profile("fused", "double"), n_gpus=4).mlups)
    21622
    """
    machine = machine or MachineSpec()
    if not 1 <= n_gpus <= machine.gpus_per_node:
        raise ConfigurationError(
            f"n_gpus must lie in [1, {machine.gpus_per_node}], got {n_gpus}."
        )
    flops = arithmetic_intensity(profile) * machine.mem_bandwidth * n_gpus
    return RooflineCap(flops=flops, lups=flops / profile.ops_per_update)


def mlups(updates: float, seconds: float) -> float:
    """Return million lattice updates per second.

    Examples
    --------
    >>> from src.perfmodel import mlups
    >>> mlups(1e6, 1.0)
    1.0
    """
    if not seconds > 0:
        raise ConfigurationError(f"seconds must be positive, got {seconds}.")
    return updates / seconds / 1e6


def flops_from_mlups(value_mlups: float, ops: float = OPS_PER_UPDATE) -> float:
    """Convert MLUPS to FLOPS with ``ops`` operations per update."""
    return value_mlups * 1e6 * ops


def mlups_from_flops(flops: float, ops: float = OPS_PER_UPDATE) -> float:
    """Convert FLOPS to MLUPS with ``ops`` operations per update."""
    return flops / ops / 1e6


def operation_cost(ets_joules: float, updates: float) -> float:
    """Return the energy cost in joules per 10^9 site updates.

    Examples
    --------
    >>> from src.perfmodel import REFERENCE_UPDATES, operation_cost
    >>> round(operation_cost(436e3, REFERENCE_UPDATES), 1)
    81.2
    """
    if not updates > 0:
        raise ConfigurationError(f"updates must be positive, got {updates}.")
    return ets_joules / (updates / GIGA_UPDATES)


def roofline_efficiency(measured_mlups: float, cap_mlups: float) -> float:
    """Return the fraction of the roofline cap reached by a measurement."""
    if not cap_mlups > 0:
        raise ConfigurationError(f"cap must be positive, got {cap_mlups}.")
    return measured_mlups / cap_mlups


def improvement_factors(
    before: tuple[float, float], after: tuple[float, float]
) -> tuple[float, float]:
    """Return ``(ETS_before / ETS_after, TTS_before / TTS_after)``.

    Examples
    --------
    >>> from src.perfmodel import improvement_factors
    >>> tuple(round(v, 2) for v in improvement_factors((821, 797), (290, 269)))
    (2.83, 2.96)
    """
    (ets_before, tts_before), (ets_after, tts_after) = before, after
    if min(ets_before, tts_before, ets_after, tts_after) <= 0:
        raise ConfigurationError("energies and times must be positive.")
    return ets_before / ets_after, tts_before / tts_after


def cost_report(
    label: str, ets_joules: float, tts_seconds: float, updates: int
) -> CostReport:
    """Build a :class:`CostReport` from the measured quantities."""
    return CostReport(
        label=label,
        ets_joules=ets_joules,
        tts_seconds=tts_seconds,
        updates=int(updates),
        mlups=mlups(updates, tts_seconds),
        cost_per_gigaupdate=operation_cost(ets_joules, updates),
    )


def load_reference_flow(
    path: Path = OPTIMIZATION_FLOW_REFERENCE_CSV,
    updates: int = REFERENCE_UPDATES,
) -> pd.DataFrame:
    """Load the published optimization-flow rows and add the derived columns.

    Returns
    -------
    pandas.DataFrame
        The CSV columns plus ``action_js`` and ``cost_j_per_gupdate``
        (computed from ``ets_j`` and ``updates``).
    """
    frame = pd.read_csv(path)
    frame["action_js"] = frame["ets_j"] * frame["tts_s"]
    frame["cost_j_per_gupdate"] = frame["ets_j"] / (updates / GIGA_UPDATES)
    return frame


def cost_reports_frame(reports: Iterable[CostReport]) -> pd.DataFrame:
    """Tabulate cost reports with the exported column names."""
    rows = [
        (
            r.label,
            r.ets_joules,
            r.tts_seconds,
            r.updates,
            r.mlups,
            r.cost_per_gigaupdate,
        )
        for r in reports
    ]
    return pd.DataFrame(rows, columns=list(COST_REPORT_COLUMNS))


def write_cost_reports(
    reports: list[CostReport], csv_path: Path, json_path: Path | None = None
) -> None:
    """Write cost reports as CSV and, optionally, a JSON summary."""
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    cost_reports_frame(reports).to_csv(csv_path, index=False, float_format="%.6f")
    logger.info(f"Wrote {len(reports)} cost report row(s) to {csv_path}")
    if json_path is not None:
        payload = [asdict(r) for r in reports]
        json_path.parent.mkdir(parents=True, exist_ok=True)
        json_path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
        logger.info(f"Wrote cost summary to {json_path}")
