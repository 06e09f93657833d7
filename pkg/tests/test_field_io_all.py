"""Tests for snapshot export/import and centerline profile CSVs."""

from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from src.errors import ShapeMismatchError
from src.field_io import (
    HEADER_BYTES,
    metadata_path,
    profiles_frame,
    read_snapshot,
    render_metadata,
    write_profiles_csv,
    write_snapshot,
)
from src.solver import CenterlineProfiles


def _fields(nx: int = 4, ny: int = 3, nz: int = 2) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(5)
    return rng.normal(size=(3, nz, ny, nx)), 1.0 + 0.01 * rng.normal(size=(nz, ny, nx))


def test_snapshot_layout_is_x_fastest(tmp_path: Path):
    u, rho = _fields()
    path = tmp_path / "snap.bin"
    write_snapshot(path, u, rho)
    raw = path.read_bytes()
    assert len(raw) == HEADER_BYTES + 4 * 24 * 8
    assert np.frombuffer(raw[:HEADER_BYTES], dtype="<i8").tolist() == [4, 3, 2]
    values = np.frombuffer(raw[HEADER_BYTES:], dtype="<f8")
    # second value is ux at (x=1, y=0, z=0)
    assert values[1] == u[0, 0, 0, 1]
    assert values[-1] == rho[-1, -1, -1]


def test_snapshot_reads_back_exactly(tmp_path: Path):
    u, rho = _fields()
    path = tmp_path / "out" / "snap.bin"
    write_snapshot(path, u, rho)
    snapshot = read_snapshot(path)
    assert snapshot.dims == (4, 3, 2)
    assert np.array_equal(snapshot.velocity, u)
    assert np.array_equal(snapshot.rho, rho)


def test_snapshot_sidecar_lists_metadata(tmp_path: Path):
    u, rho = _fields()
    sidecar = write_snapshot(
        tmp_path / "cavity.bin", u, rho, {"reynolds": "100", "scheme": "fused"}
    )
    assert sidecar == tmp_path / "cavity.meta.txt"
    lines = sidecar.read_text(encoding="utf-8").splitlines()
    assert "data_file: cavity.bin" in lines
    assert "nx: 4" in lines and "nz: 2" in lines
    assert lines[-2:] == ["reynolds: 100", "scheme: fused"]


def test_render_metadata_without_extras():
    text = render_metadata("a.bin", (1, 2, 3), {})
    assert text.endswith("nz: 3\n")


def test_metadata_path_uses_stem():
    assert metadata_path(Path("x/run.bin")) == Path("x/run.meta.txt")


def test_write_snapshot_rejects_mismatched_fields(tmp_path: Path):
    u, rho = _fields()
    with pytest.raises(ShapeMismatchError):
        write_snapshot(tmp_path / "bad.bin", u[:, :1], rho)
    with pytest.raises(ShapeMismatchError):
        write_snapshot(tmp_path / "bad.bin", u[:2], rho)
    assert not (tmp_path / "bad.bin").exists()


def test_read_snapshot_rejects_truncated_files(tmp_path: Path):
    u, rho = _fields()
    path = tmp_path / "snap.bin"
    write_snapshot(path, u, rho)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ShapeMismatchError):
        read_snapshot(path)
    path.write_bytes(b"\x00" * 10)
    with pytest.raises(ShapeMismatchError):
        read_snapshot(path)


def test_read_snapshot_missing_file_is_oserror(tmp_path: Path):
    with pytest.raises(OSError):
        read_snapshot(tmp_path / "missing.bin")


def test_profiles_csv_is_long_form(tmp_path: Path):
    profiles = CenterlineProfiles(
        z=np.array([0.25, 0.75]),
        vertical_ux=np.array([-0.1, 0.5]),
        x=np.array([0.25, 0.75]),
        horizontal_uz=np.array([0.2, -0.2]),
    )
    frame = profiles_frame(profiles)
    assert frame["profile"].tolist() == ["ux_vertical"] * 2 + ["uz_horizontal"] * 2
    path = write_profiles_csv(tmp_path / "p.csv", profiles)
    read = pd.read_csv(path)
    assert list(read.columns) == ["profile", "position", "value"]
    assert read["value"].tolist() == pytest.approx([-0.1, 0.5, 0.2, -0.2])
