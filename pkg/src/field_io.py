"""Field snapshot and profile export.

Snapshot layout: a 24-byte header with ``Nx, Ny, Nz`` as little-endian
int64, followed by ``ux, uy, uz, rho`` as little-endian float64 arrays in
x-fastest order. A text sidecar named ``<stem>.meta.txt`` records the case
parameters and is rendered from ``SNAPSHOT_METADATA_TEMPLATE``.
"""

from __future__ import annotations

import logging
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from jinja2 import Environment, FileSystemLoader, StrictUndefined
from numpy.typing import ArrayLike, NDArray

from src.config import SNAPSHOT_METADATA_TEMPLATE
from src.errors import ShapeMismatchError
from src.solver import CenterlineProfiles

logger = logging.getLogger(__name__)

HEADER_DTYPE = np.dtype("<i8")
VALUE_DTYPE = np.dtype("<f8")
HEADER_BYTES = 3 * HEADER_DTYPE.itemsize


@dataclass(frozen=True)
class Snapshot:
    """Velocity ``(3, Nz, Ny, Nx)`` and density ``(Nz, Ny, Nx)`` read from disk."""

    dims: tuple[int, int, int]
    velocity: NDArray[np.float64]
    rho: NDArray[np.float64]


def metadata_path(path: Path) -> Path:
    """Return the sidecar path of a snapshot file.

    Examples
    --------
    >>> from pathlib import Path
    >>> from src.field_io import metadata_path
    >>> metadata_path(Path("out/cavity.bin")).name
    'cavity.meta.txt'
    """
    return path.with_name(f"{path.stem}.meta.txt")


def render_metadata(
    data_file: str, dims: tuple[int, int, int], metadata: Mapping[str, Any]
) -> str:
    """Render the sidecar text for a snapshot."""
    environment = Environment(
        loader=FileSystemLoader(str(SNAPSHOT_METADATA_TEMPLATE.parent)),
        undefined=StrictUndefined,
        autoescape=False,  # nosec B701 - plain text output
        keep_trailing_newline=True,
    )
    template = environment.get_template(SNAPSHOT_METADATA_TEMPLATE.name)
    nx, ny, nz = dims
    return template.render(
        data_file=data_file, nx=nx, ny=ny, nz=nz, metadata=dict(metadata)
    )


def write_snapshot(
    path: Path,
    velocity: ArrayLike,
    rho: ArrayLike,
    metadata: Mapping[str, Any] | None = None,
) -> Path:
    """Write a velocity/density snapshot and its metadata sidecar.

    Parameters
    ----------
    path : Path
        Target of the binary snapshot.
    velocity : array_like
        Velocity field of shape ``(3, Nz, Ny, Nx)``.
    rho : array_like
        Density field of shape ``(Nz, Ny, Nx)``.
    metadata : Mapping[str, Any], optional
        Case parameters written to the sidecar, one ``key: value`` per line.

    Returns
    -------
    Path
        The sidecar path.

    Raises
    ------
    ShapeMismatchError
        If the fields do not share a grid.
    OSError
        If a file cannot be written.
    """
    u = np.asarray(velocity, dtype=np.float64)
    density = np.asarray(rho, dtype=np.float64)
    if u.ndim != 4 or u.shape[0] != 3 or u.shape[1:] != density.shape:
        raise ShapeMismatchError(
            f"velocity {u.shape} and density {density.shape} do not share a grid."
        )
    nz, ny, nx = density.shape
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as handle:
        handle.write(np.array([nx, ny, nz], dtype=HEADER_DTYPE).tobytes())
        for field_values in (u[0], u[1], u[2], density):
            handle.write(np.ascontiguousarray(field_values, dtype=VALUE_DTYPE).tobytes())
    sidecar = metadata_path(path)
    sidecar.write_text(
        render_metadata(path.name, (nx, ny, nz), metadata or {}), encoding="utf-8"
    )
    logger.info(f"Wrote snapshot {path} ({nx}x{ny}x{nz}) and {sidecar.name}")
    return sidecar


def read_snapshot(path: Path) -> Snapshot:
    """Read a snapshot written by :func:`write_snapshot`.

    Raises
    ------
    ShapeMismatchError
        If the payload size does not match the header.
    """
    raw = path.read_bytes()
    if len(raw) < HEADER_BYTES:
        raise ShapeMismatchError(f"{path} is shorter than the snapshot header.")
    nx, ny, nz = (int(v) for v in np.frombuffer(raw[:HEADER_BYTES], dtype=HEADER_DTYPE))
    values = np.frombuffer(raw[HEADER_BYTES:], dtype=VALUE_DTYPE)
    expected = 4 * nx * ny * nz
    if min(nx, ny, nz) < 1 or values.size != expected:
        raise ShapeMismatchError(
            f"{path}: header ({nx}, {ny}, {nz}) expects {expected} values, "
            f"found {values.size}."
        )
    fields = values.reshape(4, nz, ny, nx).astype(np.float64)
    return Snapshot(dims=(nx, ny, nz), velocity=fields[:3].copy(), rho=fields[3].copy())


def profiles_frame(profiles: CenterlineProfiles) -> pd.DataFrame:
    """Return the centerline profiles in long form (profile, position, value)."""
    vertical = pd.DataFrame(
        {"profile": "ux_vertical", "position": profiles.z, "value": profiles.vertical_ux}
    )
    horizontal = pd.DataFrame(
        {
            "profile": "uz_horizontal",
            "position": profiles.x,
            "value": profiles.horizontal_uz,
        }
    )
    return pd.concat([vertical, horizontal], ignore_index=True)


def write_profiles_csv(path: Path, profiles: CenterlineProfiles) -> Path:
    """Write the centerline profiles as CSV with fixed precision."""
    path.parent.mkdir(parents=True, exist_ok=True)
    profiles_frame(profiles).to_csv(path, index=False, float_format="%.10f")
    logger.info(f"Wrote centerline profiles to {path}")
    return path
