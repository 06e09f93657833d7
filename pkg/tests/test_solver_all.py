"""Tests for the lattice solver: storage, schemes, boundaries and test cases.

Covers exact fixed points, bitwise equivalence of the baseline and fused
schemes, conservation, divergence detection, the lid-driven cavity and the
Taylor-Green viscosity measurement. Long physics runs carry the ``slow``
marker.
"""

import numpy as np
import pytest

import src.solver as solver
from src.d3q19_core import D3Q19, Q, collide
from src.errors import (
    ConfigurationError,
    DegenerateStateError,
    DivergenceError,
    NonFiniteInputError,
    ShapeMismatchError,
    StabilityDomainError,
    ValidationError,
)
from src.solver import (
    BoundarySpec,
    CavityCase,
    LatticeGrid,
    Precision,
    Scheme,
    apply_boundaries,
    build_plan,
    centerline_profiles,
    init_fields,
    init_uniform,
    mirror_symmetry_error,
    moments,
    populations,
    propagate,
    precision_drift,
    run_cavity,
    run_cavity_to_steady,
    run_taylor_green,
    step,
    step_baseline,
    step_fused,
    taylor_green_fields,
    total_mass,
)


# relative drift of the total mass over 1000 double-precision steps
MASS_DRIFT_BOUND = 1e-12


def _random_grid(
    dims: tuple[int, int, int],
    scheme: Scheme,
    precision: Precision = Precision.DOUBLE,
    seed: int = 11,
) -> LatticeGrid:
    nx, ny, nz = dims
    rng = np.random.default_rng(seed)
    rho = 1.0 + 0.01 * rng.uniform(-1.0, 1.0, (nz, ny, nx))
    u = 0.02 * rng.uniform(-1.0, 1.0, (3, nz, ny, nx))
    return init_fields(LatticeGrid(dims, precision, scheme), rho, u)


# --- grid and initialization ---


def test_grid_layout_and_dtypes():
    grid = LatticeGrid((5, 4, 3), Precision.SINGLE, Scheme.BASELINE)
    assert grid.buffers[0].shape == (Q, 3, 4, 5)
    assert grid.buffers[0].dtype == np.float32
    assert grid.n_sites == 60
    assert Precision.MIXED.compute_dtype is np.float64
    assert Precision.SINGLE.compute_dtype is np.float32
    assert Precision.DOUBLE.storage_dtype is np.float64


@pytest.mark.parametrize("dims", [(0, 4, 4), (4, 4), (4, 4, 129)])
def test_grid_rejects_bad_dims(dims):
    with pytest.raises(ConfigurationError):
        LatticeGrid(dims)


def test_init_uniform_recovers_state():
    grid = init_uniform(LatticeGrid((3, 3, 3)), 1.1, (0.02, -0.01, 0.0))
    rho, u = moments(grid)
    np.testing.assert_allclose(rho, 1.1, rtol=8 * np.finfo(float).eps)
    np.testing.assert_allclose(u[0], 0.02, atol=1e-15)
    np.testing.assert_allclose(u[1], -0.01, atol=1e-15)


def test_init_rejects_invalid_states():
    grid = LatticeGrid((2, 2, 2))
    with pytest.raises(ConfigurationError):
        init_uniform(grid, 1.0, (0.3, 0.0, 0.0))
    with pytest.raises(ConfigurationError):
        init_uniform(grid, 1.0, (0.0, 0.0))
    with pytest.raises(DegenerateStateError):
        init_uniform(grid, 0.0)
    with pytest.raises(NonFiniteInputError):
        init_uniform(grid, 1.0, (np.nan, 0.0, 0.0))
    with pytest.raises(ShapeMismatchError):
        init_fields(grid, np.ones((2, 2, 3)), np.zeros((3, 2, 2, 3)))


# --- fixed point, equivalence, conservation ---


@pytest.mark.parametrize("precision", list(Precision))
@pytest.mark.parametrize("scheme", list(Scheme))
@pytest.mark.parametrize(
    "boundary", [BoundarySpec.periodic(), BoundarySpec.channel(2)], ids=["periodic", "walls"]
)
def test_rest_state_is_a_fixed_point(precision, scheme, boundary):
    grid = init_uniform(LatticeGrid((4, 3, 5), precision, scheme))
    before = populations(grid)
    for _ in range(50):
        step(grid, 1.3, boundary)
    assert np.array_equal(populations(grid), before)
    assert total_mass(grid) == grid.n_sites


@pytest.mark.parametrize("precision", [Precision.DOUBLE, Precision.MIXED])
def test_fused_matches_baseline_bitwise(precision):
    boundary = BoundarySpec.cavity(0.05)
    baseline = _random_grid((6, 5, 4), Scheme.BASELINE, precision)
    fused = _random_grid((6, 5, 4), Scheme.FUSED, precision)
    for n in range(1, 31):
        step(baseline, 1.4, boundary)
        step(fused, 1.4, boundary)
        if n in (1, 2, 7, 30):
            assert np.array_equal(populations(baseline), populations(fused))
    assert baseline.steps_done == fused.steps_done == 30


def test_fused_matches_baseline_on_periodic_16_cube():
    boundary = BoundarySpec.periodic()
    baseline = _random_grid((16, 16, 16), Scheme.BASELINE, seed=3)
    fused = _random_grid((16, 16, 16), Scheme.FUSED, seed=3)
    for _ in range(50):
        step(baseline, 1.25, boundary)
        step(fused, 1.25, boundary)
    assert np.array_equal(populations(baseline), populations(fused))


def test_fused_step_writes_only_the_inactive_buffer(mocker):
    boundary = BoundarySpec.periodic()
    baseline = _random_grid((4, 4, 4), Scheme.BASELINE)
    fused = _random_grid((4, 4, 4), Scheme.FUSED)
    spy = mocker.spy(solver, "propagate")
    for _ in range(3):
        source_index = fused.active
        source = fused.buffers[source_index].copy()
        step_fused(fused, 1.3, boundary)
        assert fused.active == 1 - source_index
        assert np.array_equal(fused.buffers[source_index], source)
        step_baseline(baseline, 1.3, boundary)
    gathers = [c for c in spy.call_args_list if c.args[1] is fused.scratch()]
    assert len(gathers) == 2
    expected = collide(populations(baseline), 1.3)
    assert np.array_equal(fused.buffers[fused.active], expected)


def test_fused_then_baseline_switch_keeps_time_level():
    boundary = BoundarySpec.periodic()
    reference = _random_grid((4, 4, 4), Scheme.BASELINE)
    mixed_run = _random_grid((4, 4, 4), Scheme.FUSED)
    for _ in range(3):
        step(reference, 1.1, boundary)
        step(mixed_run, 1.1, boundary)
    mixed_run.scheme = Scheme.BASELINE
    for _ in range(3):
        step(reference, 1.1, boundary)
        step(mixed_run, 1.1, boundary)
    assert np.array_equal(populations(reference), populations(mixed_run))


def test_periodic_run_conserves_mass_and_momentum():
    grid = _random_grid((6, 6, 6), Scheme.FUSED)
    mass = total_mass(grid)
    rho, u = moments(grid)
    momentum = (rho * u).sum(axis=(1, 2, 3))
    for _ in range(1000):
        step(grid, 1.3, BoundarySpec.periodic())
    assert total_mass(grid) == pytest.approx(mass, rel=MASS_DRIFT_BOUND)
    rho, u = moments(grid)
    np.testing.assert_allclose((rho * u).sum(axis=(1, 2, 3)), momentum, atol=1e-9)


@pytest.mark.parametrize("scheme", list(Scheme))
def test_static_walls_conserve_mass(scheme):
    grid = _random_grid((6, 6, 6), scheme)
    mass = total_mass(grid)
    for _ in range(1000):
        step(grid, 1.3, BoundarySpec.cavity(0.0))
    assert total_mass(grid) == pytest.approx(mass, rel=MASS_DRIFT_BOUND)


def test_step_rejects_omega_outside_domain():
    grid = init_uniform(LatticeGrid((2, 2, 2)))
    with pytest.raises(StabilityDomainError):
        step(grid, 2.0, BoundarySpec.periodic())


def test_divergence_is_detected_at_scan_interval():
    grid = init_uniform(LatticeGrid((4, 4, 4), scheme=Scheme.BASELINE))
    grid.buffers[grid.active][3, 1, 2, 0] = np.nan
    with pytest.raises(DivergenceError) as info:
        for _ in range(200):
            step(grid, 1.0, BoundarySpec.periodic())
    assert info.value.step == 100
    assert len(info.value.site) == 3


# --- boundaries ---


def test_channel_axis_is_validated():
    with pytest.raises(ConfigurationError):
        BoundarySpec.channel(3)
    assert BoundarySpec.channel(1).walls == (False, True, False)


def test_cavity_plan_sites_and_lid_precedence():
    plan = build_plan((4, 4, 4), BoundarySpec.cavity(0.1))
    assert plan.plain[5].size == 16 and plan.lid[5].size == 0  # +z enters at z=0
    assert plan.plain[6].size == 0 and plan.lid[6].size == 16  # -z enters at the lid
    assert plan.plain[7].size == 28  # x=0 or y=0 faces
    # (-1, 0, -1): the lid edge at x=Nx-1 belongs to the lid
    assert plan.lid[12].size == 16
    assert plan.plain[12].size == 12
    assert plan.lid_correction[1] == pytest.approx(6 * (1 / 18) * 0.1)
    assert plan.lid_correction[2] == pytest.approx(-6 * (1 / 18) * 0.1)
    assert plan.lid_correction[3] == 0.0


def test_periodic_plan_has_no_wall_sites():
    plan = build_plan((3, 3, 3), BoundarySpec.periodic())
    assert all(sites.size == 0 for sites in plan.plain + plan.lid)
    assert set(plan.lid_correction) == {0.0}


def test_apply_boundaries_reflects_and_corrects():
    dims = (4, 3, 5)
    plan = build_plan(dims, BoundarySpec.cavity(0.08))
    rng = np.random.default_rng(5)
    src = rng.uniform(0.0, 0.1, (Q, 5, 3, 4))
    dst = np.zeros_like(src)
    apply_boundaries(src, dst, plan)
    src_flat, dst_flat = src.reshape(Q, -1), dst.reshape(Q, -1)
    for j in range(1, Q):
        jbar = D3Q19.opposite[j]
        assert np.array_equal(dst_flat[j, plan.plain[j]], src_flat[jbar, plan.plain[j]])
        expected = src_flat[jbar, plan.lid[j]] - plan.lid_correction[jbar]
        assert np.array_equal(dst_flat[j, plan.lid[j]], expected)
    touched = np.zeros_like(dst_flat, dtype=bool)
    for j in range(1, Q):
        touched[j, plan.plain[j]] = True
        touched[j, plan.lid[j]] = True
    assert not dst_flat[~touched].any()


def test_channel_reflection_matches_hand_table():
    # walls normal to z on a 3-wide channel; arrays are indexed [j, z, y, x]
    plan = build_plan((3, 3, 3), BoundarySpec.channel(2))
    index = D3Q19.velocities.index
    src = np.zeros((Q, 3, 3, 3))
    src[index((0, 0, 1)), 2, 1, 1] = 1.0  # leaves through the top wall
    src[index((1, 0, 1)), 2, 1, 2] = 2.0  # diagonal into the top wall
    src[index((0, 1, 0)), 1, 2, 1] = 3.0  # wraps around the periodic y axis
    src[index((0, 0, -1)), 1, 1, 1] = 4.0  # interior move
    dst = np.full_like(src, np.nan)
    propagate(src, dst, plan)
    expected = np.zeros_like(src)
    expected[index((0, 0, -1)), 2, 1, 1] = 1.0
    expected[index((-1, 0, -1)), 2, 1, 2] = 2.0
    expected[index((0, 1, 0)), 1, 0, 1] = 3.0
    expected[index((0, 0, -1)), 0, 1, 1] = 4.0
    assert np.array_equal(dst, expected)


def test_resting_lid_is_plain_bounce_back():
    rng = np.random.default_rng(9)
    src = rng.uniform(0.0, 0.1, (Q, 4, 4, 4))
    with_lid = np.empty_like(src)
    walls_only = np.empty_like(src)
    propagate(src, with_lid, build_plan((4, 4, 4), BoundarySpec.cavity(0.0)))
    propagate(src, walls_only, build_plan((4, 4, 4), BoundarySpec((True, True, True))))
    assert np.array_equal(with_lid, walls_only)


def _shift_oracle(post: np.ndarray) -> np.ndarray:
    nz, ny, nx = post.shape[1:]
    out = np.empty_like(post)
    for j, (cx, cy, cz) in enumerate(D3Q19.velocities):
        for z in range(nz):
            for y in range(ny):
                for x in range(nx):
                    out[j, (z + cz) % nz, (y + cy) % ny, (x + cx) % nx] = post[j, z, y, x]
    return out


@pytest.mark.parametrize("scheme", list(Scheme))
def test_one_step_matches_two_array_oracle(scheme):
    grid = init_uniform(LatticeGrid((4, 4, 4), scheme=scheme))
    grid.buffers[grid.active][:, 1, 2, 3] *= np.linspace(0.9, 1.1, Q)
    before = populations(grid)
    step(grid, 1.5, BoundarySpec.periodic())
    expected = _shift_oracle(collide(before, 1.5))
    np.testing.assert_allclose(populations(grid), expected, rtol=0, atol=1e-15)


def test_direct_scheme_entry_points_agree():
    boundary = BoundarySpec.cavity(0.05)
    baseline = _random_grid((5, 4, 6), Scheme.BASELINE, seed=8)
    fused = _random_grid((5, 4, 6), Scheme.FUSED, seed=8)
    for _ in range(12):
        assert step_baseline(baseline, 1.6, boundary) is baseline
        assert step_fused(fused, 1.6, boundary) is fused
    assert fused.pending_stream and not baseline.pending_stream
    assert np.array_equal(populations(baseline), populations(fused))


def test_lid_drives_flow_along_x():
    result = run_cavity(CavityCase(N=6, reynolds=10.0, u_lid=0.05), steps=300)
    top = result.velocity[0, -1]
    assert float(top.mean()) > 0.0
    assert float(result.velocity[0, 1:3].mean()) < float(top.mean())
    assert mirror_symmetry_error(result.velocity) < 1e-12


# --- cavity case and runs ---


def test_cavity_case_derives_omega():
    case = CavityCase(N=32, reynolds=100.0, u_lid=0.05)
    assert case.nu == pytest.approx(0.016)
    assert case.omega == pytest.approx(1 / (3 * 0.016 + 0.5))


@pytest.mark.parametrize(
    ("kwargs", "fragment"),
    [
        ({"N": 2, "reynolds": 100.0, "u_lid": 0.05}, "N"),
        ({"N": 8, "reynolds": 0.0, "u_lid": 0.05}, "reynolds"),
        ({"N": 8, "reynolds": 100.0, "u_lid": 0.2}, "Mach"),
        ({"N": 32, "reynolds": 1e20, "u_lid": 0.05}, "omega"),
    ],
)
def test_cavity_case_validation(kwargs, fragment):
    with pytest.raises(ConfigurationError, match=fragment):
        CavityCase(**kwargs)


def test_run_cavity_statistics_and_early_stop():
    case = CavityCase(N=5, reynolds=10.0, u_lid=0.05)
    with pytest.raises(ConfigurationError):
        run_cavity(case, steps=0)
    result = run_cavity(case, steps=1000, tolerance=10.0)
    assert result.stats.steps_done == 100
    assert result.stats.site_updates == 125 * 100
    assert result.stats.wall_seconds > 0.0
    assert result.residuals[0][0] == 100
    assert result.velocity.shape == (3, 5, 5, 5)


def test_run_cavity_is_deterministic():
    case = CavityCase(N=5, reynolds=10.0, u_lid=0.05)
    first = run_cavity(case, steps=150, precision=Precision.MIXED)
    second = run_cavity(case, steps=150, precision=Precision.MIXED)
    assert np.array_equal(first.velocity, second.velocity)
    assert first.residuals == second.residuals


def test_run_cavity_to_steady_reports_failure():
    case = CavityCase(N=5, reynolds=10.0, u_lid=0.05)
    with pytest.raises(ValidationError):
        run_cavity_to_steady(case, tolerance=1e-14, max_steps=200)


def test_small_cavity_converges():
    case = CavityCase(N=8, reynolds=10.0, u_lid=0.05)
    result = run_cavity_to_steady(case, tolerance=1e-7, max_steps=5000)
    assert result.final_residual < 1e-7
    assert mirror_symmetry_error(result.velocity) < 1e-12
    residuals = [r for _, r in result.residuals]
    assert residuals[-1] < residuals[0]


@pytest.mark.slow
def test_cavity_residual_decays_and_doubling_steps_is_a_fixed_point():
    case = CavityCase(N=8, reynolds=10.0, u_lid=0.05)
    converged = run_cavity_to_steady(case, tolerance=1e-11, max_steps=10000)
    residuals = [r for _, r in converged.residuals]
    tail = residuals[len(residuals) // 4 :]
    peaks = [max(tail[i : i + 3]) for i in range(0, len(tail) - 2, 3)]
    assert len(peaks) >= 2
    assert all(later < earlier for earlier, later in zip(peaks, peaks[1:]))
    doubled = run_cavity(case, steps=2 * converged.stats.steps_done)
    assert precision_drift(doubled.velocity, converged.velocity) < 1e-10


@pytest.mark.slow
def test_cavity_re100_converges_at_32():
    case = CavityCase(N=32, reynolds=100.0, u_lid=0.05)
    result = run_cavity_to_steady(case, tolerance=1e-7)
    assert mirror_symmetry_error(result.velocity) < 1e-12
    profiles = centerline_profiles(result.velocity, case.u_lid)
    assert profiles.vertical_ux.min() < 0.0 < profiles.vertical_ux.max()


@pytest.mark.slow
def test_precision_ladder_on_cavity():
    case = CavityCase(N=32, reynolds=100.0, u_lid=0.05)
    runs = {p: run_cavity(case, steps=1000, precision=p) for p in Precision}
    reference = runs[Precision.DOUBLE].velocity
    mixed = precision_drift(runs[Precision.MIXED].velocity, reference)
    single = precision_drift(runs[Precision.SINGLE].velocity, reference)
    assert mixed < 1e-5
    assert single < 1e-3
    assert single >= mixed


def test_precision_drift_helpers():
    u = np.ones((3, 2, 2, 2))
    assert precision_drift(u, u) == 0.0
    assert precision_drift(1.1 * u, u) == pytest.approx(0.1)
    with pytest.raises(ShapeMismatchError):
        precision_drift(u, u[:, :1])


def test_mirror_symmetry_error_detects_asymmetry():
    u = np.zeros((3, 2, 4, 3))
    assert mirror_symmetry_error(u) == 0.0
    u[0, :, 0, :] = 1.0
    assert mirror_symmetry_error(u) == 1.0


def test_centerline_profiles_of_linear_field():
    u = np.zeros((3, 4, 5, 6))
    u[0] = 0.05 * np.arange(4)[:, None, None]
    u[2] = 0.05 * np.arange(6)[None, None, :]
    profiles = centerline_profiles(u, 0.05)
    np.testing.assert_allclose(profiles.vertical_ux, [0.0, 1.0, 2.0, 3.0])
    np.testing.assert_allclose(profiles.horizontal_uz, np.arange(6.0))
    np.testing.assert_allclose(profiles.z, (np.arange(4) + 0.5) / 4)
    with pytest.raises(ShapeMismatchError):
        centerline_profiles(np.zeros((2, 3, 3, 3)), 0.05)


# --- Taylor-Green ---


def test_taylor_green_fields_shape_and_mass():
    rho, u = taylor_green_fields(8, 0.02, depth=2)
    assert rho.shape == (2, 8, 8)
    assert u.shape == (3, 2, 8, 8)
    assert float(np.abs(u[2]).max()) == 0.0
    assert float(rho.mean()) == pytest.approx(1.0)


def test_taylor_green_viscosity_thin_grid():
    result = run_taylor_green(32, 1.0, 0.02, 200, depth=1)
    assert result.relative_error < 0.02
    assert result.r_squared > 0.99
    assert result.times[0] == 0.0


def test_taylor_green_viscosity_falls_with_omega():
    measured = [
        run_taylor_green(32, omega, 0.02, 200, depth=1).nu_measured
        for omega in (0.8, 1.0, 1.2)
    ]
    assert measured[0] > measured[1] > measured[2]


def test_taylor_green_is_amplitude_independent():
    full = run_taylor_green(32, 1.2, 0.02, 200, depth=1)
    half = run_taylor_green(32, 1.2, 0.01, 200, depth=1)
    assert half.nu_measured == pytest.approx(full.nu_measured, rel=0.005)


def test_taylor_green_schemes_agree():
    baseline = run_taylor_green(16, 1.0, 0.02, 60, Scheme.BASELINE, depth=1)
    fused = run_taylor_green(16, 1.0, 0.02, 60, Scheme.FUSED, depth=1)
    assert np.array_equal(baseline.kinetic_energy, fused.kinetic_energy)


def test_taylor_green_argument_checks():
    with pytest.raises(ConfigurationError):
        run_taylor_green(16, 1.0, 0.1, 100, depth=1)
    with pytest.raises(ConfigurationError):
        run_taylor_green(16, 1.0, 0.02, 20, depth=1)


@pytest.mark.slow
@pytest.mark.parametrize("omega", [0.8, 1.0, 1.2, 1.4])
def test_taylor_green_viscosity_at_64(omega):
    result = run_taylor_green(64, omega, 0.02, 300, depth=2)
    assert result.relative_error < 0.02


def test_weights_are_the_rest_populations():
    grid = init_uniform(LatticeGrid((2, 2, 2), Precision.SINGLE))
    assert np.all(grid.buffers[grid.active] == 0.0)
    np.testing.assert_array_equal(
        populations(grid)[:, 0, 0, 0], D3Q19.weights_array()
    )
