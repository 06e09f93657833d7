"""Tests for the roofline model, throughput conversions and cost accounting.

Expected values are the published memory-bound caps (1600 GB/s per device,
250 operations per update) and the cost column of the optimization recap
(512^3 sites x 40000 steps).
"""

import json
from pathlib import Path

import pandas as pd
import pytest

from src.errors import ConfigurationError
from src.perfmodel import (
    COST_REPORT_COLUMNS,
    REFERENCE_UPDATES,
    KernelProfile,
    MachineSpec,
    arithmetic_intensity,
    canonical_profile,
    cost_report,
    cost_reports_frame,
    flops_from_mlups,
    improvement_factors,
    load_reference_flow,
    mlups,
    mlups_from_flops,
    operation_cost,
    roofline_cap,
    roofline_efficiency,
    traffic_model,
    write_cost_reports,
)
from src.solver import Precision, Scheme


@pytest.mark.parametrize(
    ("scheme", "precision", "expected"),
    [
        ("baseline", "double", 592),
        ("baseline", "mixed", 296),
        ("baseline", "single", 296),
        ("fused", "double", 296),
        ("fused", "mixed", 148),
        ("fused", "single", 148),
    ],
)
def test_traffic_model(scheme, precision, expected):
    assert traffic_model(scheme, precision) == expected


def test_traffic_model_rejects_unknown_names():
    with pytest.raises(ConfigurationError):
        traffic_model("pull", "double")
    with pytest.raises(ConfigurationError):
        traffic_model(Scheme.FUSED, "half")


@pytest.mark.parametrize(
    ("scheme", "precision", "n_gpus", "ai", "cap_mlups"),
    [
        (Scheme.BASELINE, Precision.DOUBLE, 1, 0.42, 2703),
        (Scheme.FUSED, Precision.DOUBLE, 1, 0.84, 5405),
        (Scheme.FUSED, Precision.DOUBLE, 4, 0.84, 21622),
        (Scheme.FUSED, Precision.MIXED, 4, 1.69, 43243),
    ],
)
def test_roofline_caps(scheme, precision, n_gpus, ai, cap_mlups):
    profile = canonical_profile(scheme, precision)
    assert round(arithmetic_intensity(profile), 2) == ai
    cap = roofline_cap(profile, MachineSpec(), n_gpus)
    assert round(cap.mlups) == cap_mlups
    assert cap.gflops == pytest.approx(cap.mlups * 250 / 1e3)


def test_roofline_caps_match_published_within_one_percent():
    published = {(1, 592): 2700, (1, 296): 5400, (4, 148): 43000}
    for (n_gpus, traffic), value in published.items():
        cap = roofline_cap(KernelProfile(250, traffic), n_gpus=n_gpus)
        assert cap.mlups == pytest.approx(value, rel=0.01)


def test_roofline_cap_validates_gpu_count():
    with pytest.raises(ConfigurationError):
        roofline_cap(KernelProfile(), n_gpus=0)
    with pytest.raises(ConfigurationError):
        roofline_cap(KernelProfile(), MachineSpec(gpus_per_node=2), n_gpus=3)


def test_profile_and_machine_validation():
    with pytest.raises(ConfigurationError):
        KernelProfile(0, 592)
    with pytest.raises(ConfigurationError):
        MachineSpec(mem_bandwidth=-1.0)
    assert canonical_profile("fused", "mixed").label == "fused-mixed"


def test_machine_spec_from_env(monkeypatch):
    monkeypatch.setenv("MEM_BANDWIDTH_BYTES", "2e12")
    monkeypatch.setenv("GPUS_PER_NODE", "8")
    machine = MachineSpec.from_env()
    assert machine.mem_bandwidth == 2e12
    assert machine.gpus_per_node == 8
    monkeypatch.delenv("MEM_BANDWIDTH_BYTES")
    monkeypatch.delenv("GPUS_PER_NODE")
    assert MachineSpec.from_env() == MachineSpec()


def test_throughput_conversions():
    assert mlups(5e9, 2.0) == 2500.0
    assert flops_from_mlups(1900) == pytest.approx(475e9)
    assert mlups_from_flops(flops_from_mlups(1234.5)) == pytest.approx(1234.5)
    assert flops_from_mlups(1, ops=100) == 1e8
    with pytest.raises(ConfigurationError):
        mlups(1.0, 0.0)


def test_roofline_efficiency_of_single_gpu_port():
    cap = roofline_cap(canonical_profile("baseline", "double")).mlups
    assert roofline_efficiency(1900, cap) == pytest.approx(0.70, abs=0.01)
    with pytest.raises(ConfigurationError):
        roofline_efficiency(1.0, 0.0)


def test_reference_update_count():
    assert REFERENCE_UPDATES == 5_368_709_120_000


@pytest.mark.parametrize(
    ("ets", "expected"),
    [
        (821e3, 152.9),
        (436e3, 81.2),
        (290e3, 54.0),
        (260e3, 48.4),
        (235e3, 43.8),
        (218e3, 40.6),
    ],
)
def test_operation_cost_recap(ets, expected):
    assert round(operation_cost(ets, REFERENCE_UPDATES), 1) == expected


def test_operation_cost_rejects_zero_updates():
    with pytest.raises(ConfigurationError):
        operation_cost(1.0, 0)


def test_improvement_factors():
    energy, time = improvement_factors((821e3, 797), (290e3, 269))
    assert round(energy, 2) == 2.83 and round(time, 2) == 2.96
    energy, time = improvement_factors((436e3, 432), (252e3, 258))
    assert round(energy, 2) == 1.73 and round(time, 2) == 1.67
    with pytest.raises(ConfigurationError):
        improvement_factors((0.0, 1.0), (1.0, 1.0))


def test_reference_flow_reproduces_cost_column():
    flow = load_reference_flow()
    recap = flow[flow["table"] == "recap"]
    assert len(recap) == 6
    for computed, reported in zip(recap["cost_j_per_gupdate"], recap["reported_cost"]):
        assert abs(round(computed) - reported) <= 1
    assert set(flow["table"]) == {"parallel_model", "implementation", "precision", "recap"}
    mixed = flow[(flow["table"] == "precision") & (flow["label"] == "mixed")].iloc[0]
    assert mixed["action_js"] == pytest.approx(290e3 * 269)


def test_cost_report_and_export(tmp_path: Path):
    report = cost_report("fused-mixed", 290e3, 269.0, REFERENCE_UPDATES)
    assert report.mlups == pytest.approx(REFERENCE_UPDATES / 269.0 / 1e6)
    assert round(report.cost_per_gigaupdate, 1) == 54.0
    frame = cost_reports_frame([report])
    assert tuple(frame.columns) == COST_REPORT_COLUMNS
    csv_path = tmp_path / "out" / "cost.csv"
    json_path = tmp_path / "out" / "cost.json"
    write_cost_reports([report], csv_path, json_path)
    read = pd.read_csv(csv_path)
    assert read.loc[0, "label"] == "fused-mixed"
    assert read.loc[0, "updates"] == REFERENCE_UPDATES
    payload = json.loads(json_path.read_text(encoding="utf-8"))
    assert payload[0]["label"] == "fused-mixed"
    assert payload[0]["ets_joules"] == 290e3


def test_write_cost_reports_csv_only(tmp_path: Path):
    report = cost_report("baseline-double", 847e3, 797.0, REFERENCE_UPDATES)
    write_cost_reports([report], tmp_path / "c.csv")
    assert (tmp_path / "c.csv").exists()
    assert not list(tmp_path.glob("*.json"))
