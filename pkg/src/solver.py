"""D3Q19 lattice solver: storage, time stepping, boundaries and test cases.

The grid keeps two population buffers of shape ``(19, Nz, Ny, Nx)`` in
C order, so x is the fastest index and each direction is one contiguous
plane. Two time-stepping schemes share the same collision and propagation
routines:

- baseline: collide in place in the active buffer, then scatter every
  population to its neighbor in the inactive buffer and swap.
- fused: gather the incoming populations from the neighbors (pull form),
  collide and write the result to the other buffer, then swap. The
  streaming half of the last step is left pending on the grid and is
  resolved by the next fused step or by :func:`populations`.

Both schemes therefore produce bit-identical populations in double
precision. In the 32-bit storage modes the buffers hold deviations from
the rest weights (``f_i - w_i``); ``mixed`` widens them to 64-bit for the
arithmetic, ``single`` computes in 32-bit.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray
from tqdm import tqdm

from src.config import (
    CAVITY_MAX_STEPS,
    DEFAULT_RHO,
    DIVERGENCE_CHECK_INTERVAL,
    MAX_GRID_EDGE,
    MAX_MACH,
    RESIDUAL_WINDOW,
    TAYLOR_GREEN_MAX_AMPLITUDE,
    TAYLOR_GREEN_MIN_R2,
    TAYLOR_GREEN_SAMPLE_EVERY,
    TAYLOR_GREEN_SKIP_STEPS,
)
from src.d3q19_core import (
    CS2,
    D3Q19,
    Q,
    FloatArray,
    _collide_unchecked,
    _equilibrium_unchecked,
    _moments_unchecked,
    _require_omega,
    mach_number,
    omega_from_viscosity,
    viscosity_from_omega,
)
from src.errors import (
    ConfigurationError,
    DegenerateStateError,
    DivergenceError,
    NonFiniteInputError,
    ShapeMismatchError,
    ValidationError,
)

logger = logging.getLogger(__name__)

_WEIGHTS64 = D3Q19.weights_array(np.float64)
_WEIGHTS32 = D3Q19.weights_array(np.float32)


class Precision(str, Enum):
    """Storage/compute precision pair of a grid."""

    DOUBLE = "double"
    SINGLE = "single"
    MIXED = "mixed"

    @property
    def storage_dtype(self) -> type[np.floating[Any]]:
        """Dtype of the population buffers."""
        return np.float64 if self is Precision.DOUBLE else np.float32

    @property
    def compute_dtype(self) -> type[np.floating[Any]]:
        """Dtype of the collision arithmetic."""
        return np.float32 if self is Precision.SINGLE else np.float64


class Scheme(str, Enum):
    """Time-stepping variant."""

    BASELINE = "baseline"
    FUSED = "fused"


@dataclass(frozen=True)
class BoundarySpec:
    """Boundary rules of the six faces.

    Parameters
    ----------
    walls : tuple[bool, bool, bool]
        For each axis (x, y, z), whether both faces are no-slip walls;
        ``False`` makes the axis periodic.
    lid_velocity : float or None
        When set, the z-max face is a lid moving along x with this speed.
    """

    walls: tuple[bool, bool, bool] = (False, False, False)
    lid_velocity: float | None = None

    @classmethod
    def periodic(cls) -> BoundarySpec:
        """Fully periodic box."""
        return cls()

    @classmethod
    def cavity(cls, u_lid: float) -> BoundarySpec:
        """Five static walls and a lid at z-max moving along x."""
        return cls(walls=(True, True, True), lid_velocity=float(u_lid))

    @classmethod
    def channel(cls, axis: int) -> BoundarySpec:
        """Static walls on both faces normal to ``axis``, periodic elsewhere."""
        if axis not in (0, 1, 2):
            raise ConfigurationError(f"channel axis must be 0, 1 or 2, got {axis}.")
        walls = tuple(a == axis for a in range(3))
        return cls(walls=(walls[0], walls[1], walls[2]))


@dataclass(frozen=True)
class PropagationPlan:
    """Precomputed streaming shifts and bounce-back sites of one boundary spec.

    ``plain[j]`` and ``lid[j]`` hold flat site indices (into one
    ``Nz*Ny*Nx`` plane) where population ``j`` arrives from outside the
    domain; ``lid_correction[i]`` is the moving-wall term subtracted from
    population ``i`` when it is reflected by the lid.
    """

    shape: tuple[int, int, int]
    plain: tuple[NDArray[np.intp], ...]
    lid: tuple[NDArray[np.intp], ...]
    lid_correction: tuple[float, ...]


def build_plan(dims: tuple[int, int, int], boundary: BoundarySpec) -> PropagationPlan:
    """Precompute the bounce-back sites of ``boundary`` on a grid of ``dims``.

    Where a population crosses both the lid and a side wall (the lid edges),
    the lid rule is applied.
    """
    nx, ny, nz = dims
    zz, yy, xx = np.indices((nz, ny, nx))
    coords = (xx, yy, zz)
    has_lid = boundary.lid_velocity is not None and boundary.walls[2]
    plain: list[NDArray[np.intp]] = [np.empty(0, dtype=np.intp)]
    lid: list[NDArray[np.intp]] = [np.empty(0, dtype=np.intp)]
    for j in range(1, Q):
        c = D3Q19.velocities[j]
        crossed = np.zeros((nz, ny, nx), dtype=bool)
        for axis in range(3):
            if not boundary.walls[axis] or c[axis] == 0:
                continue
            entry = 0 if c[axis] > 0 else dims[axis] - 1
            crossed |= coords[axis] == entry
        lid_mask = (
            (zz == nz - 1) if has_lid and c[2] < 0 else np.zeros_like(crossed)
        )
        plain.append(np.flatnonzero(crossed & ~lid_mask))
        lid.append(np.flatnonzero(lid_mask))
    u_lid = boundary.lid_velocity or 0.0
    correction = tuple(
        (6.0 * _WEIGHTS64[i] * c[0] * u_lid) if has_lid else 0.0
        for i, c in enumerate(D3Q19.velocities)
    )
    return PropagationPlan(
        shape=(nz, ny, nx), plain=tuple(plain), lid=tuple(lid), lid_correction=correction
    )


def apply_boundaries(src: FloatArray, dst: FloatArray, plan: PropagationPlan) -> None:
    """Overwrite the populations of ``dst`` that entered through a wall.

    Static walls use full-way bounce-back, ``dst_j(x) = src_jbar(x)``; the
    lid subtracts the moving-wall correction of the reflected population,
    ``dst_j(x) = src_jbar(x) - 6 w_jbar (c_jbar . u_lid)``.
    """
    src_flat = src.reshape(Q, -1)
    dst_flat = dst.reshape(Q, -1)
    for j in range(1, Q):
        jbar = D3Q19.opposite[j]
        plain = plan.plain[j]
        if plain.size:
            dst_flat[j, plain] = src_flat[jbar, plain]
        lid = plan.lid[j]
        if lid.size:
            dst_flat[j, lid] = src_flat[jbar, lid] - np.float64(
                plan.lid_correction[jbar]
            )


def propagate(src: FloatArray, dst: FloatArray, plan: PropagationPlan) -> None:
    """Stream ``src`` into ``dst``: ``dst_j(x) = src_j(x - c_j)`` plus boundaries."""
    dst[0] = src[0]
    for j in range(1, Q):
        cx, cy, cz = D3Q19.velocities[j]
        dst[j] = np.roll(src[j], shift=(cz, cy, cx), axis=(0, 1, 2))
    apply_boundaries(src, dst, plan)


class LatticeGrid:
    """Double-buffered D3Q19 population field.

    Parameters
    ----------
    dims : tuple[int, int, int]
        ``(Nx, Ny, Nz)``.
    precision : Precision
        Storage/compute precision pair.
    scheme : Scheme
        Scheme used by :func:`step`.

    Notes
    -----
    After a baseline step the active buffer holds the time-t populations.
    After a fused step it holds their post-collision values with one
    propagation pending (``pending_stream``); :func:`populations` is the
    accessor for time-t data in both cases.

    Examples
    --------
    >>> from src.solver import LatticeGrid, Precision
    >>> grid = LatticeGrid((4, 3, 2), Precision.MIXED)
    >>> grid.buffers[0].shape, grid.buffers[0].dtype.name
    ((19, 2, 3, 4), 'float32')
    """

    def __init__(
        self,
        dims: tuple[int, int, int],
        precision: Precision = Precision.DOUBLE,
        scheme: Scheme = Scheme.FUSED,
    ) -> None:
        if len(dims) != 3 or any(
            not isinstance(n, int | np.integer) or n < 1 for n in dims
        ):
            raise ConfigurationError(f"grid dims must be three positive ints: {dims}.")
        if max(dims) > MAX_GRID_EDGE:
            raise ConfigurationError(
                f"grid edge {max(dims)} exceeds the supported maximum {MAX_GRID_EDGE}."
            )
        self.dims: tuple[int, int, int] = (int(dims[0]), int(dims[1]), int(dims[2]))
        self.precision = Precision(precision)
        self.scheme = Scheme(scheme)
        shape = (Q, self.dims[2], self.dims[1], self.dims[0])
        dtype = self.precision.storage_dtype
        self.buffers: list[FloatArray] = [
            np.zeros(shape, dtype=dtype),
            np.zeros(shape, dtype=dtype),
        ]
        self.active = 0
        self.pending_stream = False
        self.pending_boundary: BoundarySpec | None = None
        self.steps_done = 0
        self._plans: dict[BoundarySpec, PropagationPlan] = {}
        self._scratch: FloatArray | None = None

    @property
    def n_sites(self) -> int:
        """Number of lattice sites."""
        return self.dims[0] * self.dims[1] * self.dims[2]

    def plan(self, boundary: BoundarySpec) -> PropagationPlan:
        """Return the cached propagation plan for ``boundary``."""
        if boundary not in self._plans:
            self._plans[boundary] = build_plan(self.dims, boundary)
        return self._plans[boundary]

    def load(self, buffer: FloatArray) -> FloatArray:
        """Return absolute populations of ``buffer`` in the compute dtype."""
        if self.precision is Precision.DOUBLE:
            return buffer
        if self.precision is Precision.SINGLE:
            return buffer + _WEIGHTS32[:, None, None, None]
        return buffer.astype(np.float64) + _WEIGHTS64[:, None, None, None]

    def store(self, values: FloatArray, buffer: FloatArray) -> None:
        """Write absolute populations ``values`` into ``buffer``."""
        if self.precision is Precision.DOUBLE:
            buffer[...] = values
        elif self.precision is Precision.SINGLE:
            buffer[...] = values - _WEIGHTS32[:, None, None, None]
        else:
            buffer[...] = values - _WEIGHTS64[:, None, None, None]

    def weights(self) -> FloatArray:
        """Return the weights in the compute dtype."""
        return _WEIGHTS32 if self.precision is Precision.SINGLE else _WEIGHTS64

    def swap(self) -> None:
        """Make the inactive buffer the active one."""
        self.active = 1 - self.active

    def scratch(self) -> FloatArray:
        """Return the gather buffer of the fused scheme, allocated on first use."""
        if self._scratch is None:
            self._scratch = np.empty_like(self.buffers[0])
        return self._scratch


@dataclass(frozen=True)
class CavityCase:
    """Lid-driven cubic cavity.

    Parameters
    ----------
    N : int
        Cavity edge in grid points.
    reynolds : float
        Reynolds number ``u_lid N / nu``.
    u_lid : float
        Lid speed in lattice units.

    Examples
    --------
    >>> from src.solver import CavityCase
    >>> case = CavityCase(N=32, reynolds=100.0, u_lid=0.05)
    >>> round(case.nu, 6), round(case.omega, 6)
    (0.016, 1.824818)
    """

    N: int
    reynolds: float
    u_lid: float
    omega: float = field(init=False)

    def __post_init__(self) -> None:
        """Validate the fields."""
        if self.N < 3 or self.N > MAX_GRID_EDGE:
            raise ConfigurationError(
                f"cavity edge N must lie in [3, {MAX_GRID_EDGE}], got {self.N}."
            )
        if not (math.isfinite(self.reynolds) and self.reynolds > 0.0):
            raise ConfigurationError(
                f"reynolds must be positive, got {self.reynolds}."
            )
        if not (math.isfinite(self.u_lid) and self.u_lid > 0.0):
            raise ConfigurationError(f"u_lid must be positive, got {self.u_lid}.")
        mach = self.u_lid / math.sqrt(CS2)
        if mach > MAX_MACH:
            raise ConfigurationError(
                f"lid Mach number {mach:.3f} exceeds the low-Mach limit {MAX_MACH}."
            )
        omega = omega_from_viscosity(self.u_lid * self.N / self.reynolds)
        if not 0.0 < omega < 2.0:
            raise ConfigurationError(
                f"Re={self.reynolds:g} with u_lid={self.u_lid:g} and N={self.N} "
                f"implies omega={omega!r}, outside the stable range 0 < omega < 2."
            )
        object.__setattr__(self, "omega", omega)

    @property
    def nu(self) -> float:
        """Kinematic viscosity implied by ``omega``."""
        return viscosity_from_omega(self.omega)


@dataclass(frozen=True)
class RunStats:
    """Counters of a stepping loop."""

    steps_done: int
    wall_seconds: float
    site_updates: int


@dataclass(frozen=True)
class CavityResult:
    """Final fields, timing and residual history of a cavity run."""

    case: CavityCase
    scheme: Scheme
    precision: Precision
    rho: FloatArray
    velocity: FloatArray
    stats: RunStats
    residuals: tuple[tuple[int, float], ...]

    @property
    def final_residual(self) -> float:
        """Last recorded residual, ``inf`` when none was recorded."""
        return self.residuals[-1][1] if self.residuals else math.inf


@dataclass(frozen=True)
class TaylorGreenResult:
    """Kinetic energy decay of a Taylor-Green run and the viscosity it implies."""

    nu_measured: float
    nu_expected: float
    decay_rate: float
    r_squared: float
    times: NDArray[np.float64]
    kinetic_energy: NDArray[np.float64]

    @property
    def relative_error(self) -> float:
        """``|nu_measured - nu_expected| / nu_expected``."""
        return abs(self.nu_measured - self.nu_expected) / self.nu_expected


@dataclass(frozen=True)
class CenterlineProfiles:
    """Cavity centerline velocity profiles normalized by the lid speed.

    ``vertical_ux`` is the lid-direction velocity along the vertical line
    through the cavity center, ``horizontal_uz`` the vertical velocity along
    the lid-direction line through the center. Positions are cell centers
    scaled to the unit interval.
    """

    z: NDArray[np.float64]
    vertical_ux: NDArray[np.float64]
    x: NDArray[np.float64]
    horizontal_uz: NDArray[np.float64]


def _validate_state(rho: FloatArray, u: FloatArray) -> None:
    if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(u))):
        raise NonFiniteInputError("initial fields contain NaN or infinite values.")
    if np.any(rho <= 0.0):
        raise DegenerateStateError("initial density must be positive.")
    peak = float(np.max(mach_number(u))) if u.size else 0.0
    if peak > MAX_MACH:
        raise ConfigurationError(
            f"initial Mach number {peak:.3f} exceeds the low-Mach limit {MAX_MACH}."
        )


def _reset(grid: LatticeGrid, feq: FloatArray) -> None:
    grid.active = 0
    grid.pending_stream = False
    grid.pending_boundary = None
    grid.steps_done = 0
    grid.store(feq, grid.buffers[0])
    grid.buffers[1][...] = 0.0


def init_uniform(
    grid: LatticeGrid, rho0: float = DEFAULT_RHO, u0: ArrayLike = (0.0, 0.0, 0.0)
) -> LatticeGrid:
    """Fill the active buffer with the equilibrium of a uniform state.

    Parameters
    ----------
    grid : LatticeGrid
        Grid to initialize; the inactive buffer is zeroed.
    rho0 : float
        Density, positive.
    u0 : array_like
        Velocity 3-vector with ``|u0| / c_s <= MAX_MACH``.

    Returns
    -------
    LatticeGrid
        The same grid.
    """
    rho = np.asarray(rho0, dtype=np.float64)
    u = np.asarray(u0, dtype=np.float64)
    if u.shape != (3,):
        raise ConfigurationError(f"u0 must be a 3-vector, got shape {u.shape}.")
    _validate_state(rho, u)
    site = _equilibrium_unchecked(rho, u, _WEIGHTS64)
    feq = np.broadcast_to(site[:, None, None, None], grid.buffers[0].shape)
    _reset(grid, feq)
    logger.debug(f"Initialized {grid.dims} grid at rho={rho0}, u={u.tolist()}")
    return grid


def init_fields(grid: LatticeGrid, rho: ArrayLike, u: ArrayLike) -> LatticeGrid:
    """Fill the active buffer with the equilibrium of density/velocity fields.

    ``rho`` has shape ``(Nz, Ny, Nx)`` and ``u`` shape ``(3, Nz, Ny, Nx)``.
    """
    density = np.asarray(rho, dtype=np.float64)
    velocity = np.asarray(u, dtype=np.float64)
    plane = grid.buffers[0].shape[1:]
    if density.shape != plane or velocity.shape != (3, *plane):
        raise ShapeMismatchError(
            f"fields of shape {density.shape} / {velocity.shape} do not match "
            f"the grid plane {plane}."
        )
    _validate_state(density, velocity)
    _reset(grid, _equilibrium_unchecked(density, velocity, _WEIGHTS64))
    return grid


def _collide_into(grid: LatticeGrid, src: FloatArray, dst: FloatArray, omega: float) -> None:
    if grid.precision is Precision.DOUBLE:
        _collide_unchecked(src, omega, _WEIGHTS64, out=dst)
        return
    post = _collide_unchecked(grid.load(src), omega, grid.weights())
    grid.store(post, dst)


def _check_divergence(grid: LatticeGrid) -> None:
    if grid.steps_done % DIVERGENCE_CHECK_INTERVAL:
        return
    buffer = grid.buffers[grid.active]
    bad = ~np.isfinite(buffer)
    if bad.any():
        direction, z, y, x = (int(v) for v in np.argwhere(bad)[0])
        logger.error(f"Divergence at step {grid.steps_done}, site {(x, y, z)}")
        raise DivergenceError(grid.steps_done, (x, y, z), direction)


def _materialize_stream(grid: LatticeGrid) -> None:
    if not grid.pending_stream:
        return
    assert grid.pending_boundary is not None
    active = grid.buffers[grid.active]
    propagate(active, grid.buffers[1 - grid.active], grid.plan(grid.pending_boundary))
    grid.swap()
    grid.pending_stream = False
    grid.pending_boundary = None


def step_baseline(grid: LatticeGrid, omega: float, boundary: BoundarySpec) -> LatticeGrid:
    """Advance one step with separate collision and propagation passes.

    Parameters
    ----------
    grid : LatticeGrid
        Initialized grid.
    omega : float
        Relaxation parameter in ``(0, 2)``.
    boundary : BoundarySpec
        Boundary rules applied during propagation.

    Returns
    -------
    LatticeGrid
        The same grid, one step later.

    Raises
    ------
    DivergenceError
        If a periodic scan finds non-finite populations.
    """
    _require_omega(omega)
    _materialize_stream(grid)
    active = grid.buffers[grid.active]
    _collide_into(grid, active, active, omega)
    propagate(active, grid.buffers[1 - grid.active], grid.plan(boundary))
    grid.swap()
    grid.steps_done += 1
    _check_divergence(grid)
    return grid


def step_fused(grid: LatticeGrid, omega: float, boundary: BoundarySpec) -> LatticeGrid:
    """Advance one step with the combined gather-collide pass.

    The incoming populations of every site are pulled from its neighbors in
    the active buffer, relaxed with the same collision routine as the
    baseline scheme and written to the inactive buffer, which then becomes
    the active one. The active buffer of a fused grid therefore holds the
    post-collision state of time ``t``, whose propagation is pulled by the
    next fused step; :func:`populations` returns the time-``t`` values for
    either scheme.
    """
    _require_omega(omega)
    source = grid.buffers[grid.active]
    if grid.pending_stream:
        assert grid.pending_boundary is not None
        gathered = grid.scratch()
        propagate(source, gathered, grid.plan(grid.pending_boundary))
    else:
        gathered = source
    _collide_into(grid, gathered, grid.buffers[1 - grid.active], omega)
    grid.swap()
    grid.pending_stream = True
    grid.pending_boundary = boundary
    grid.steps_done += 1
    _check_divergence(grid)
    return grid


def step(grid: LatticeGrid, omega: float, boundary: BoundarySpec) -> LatticeGrid:
    """Advance one step with the grid's own scheme."""
    if grid.scheme is Scheme.BASELINE:
        return step_baseline(grid, omega, boundary)
    return step_fused(grid, omega, boundary)


def populations(grid: LatticeGrid) -> NDArray[np.float64]:
    """Return the time-t populations as a new float64 array.

    Examples
    --------
    >>> import numpy as np
    >>> from src.d3q19_core import D3Q19
    >>> from src.solver import LatticeGrid, Precision, init_uniform, populations
    >>> grid = init_uniform(LatticeGrid((2, 2, 2), Precision.MIXED))
    >>> bool(np.all(populations(grid)[:, 0, 0, 0] == D3Q19.weights_array()))
    True
    """
    buffer = grid.buffers[grid.active]
    if grid.pending_stream:
        assert grid.pending_boundary is not None
        streamed = np.empty_like(buffer)
        propagate(buffer, streamed, grid.plan(grid.pending_boundary))
        buffer = streamed
    if grid.precision is Precision.DOUBLE:
        return np.array(buffer, dtype=np.float64)
    return buffer.astype(np.float64) + _WEIGHTS64[:, None, None, None]


def moments(grid: LatticeGrid) -> tuple[FloatArray, FloatArray]:
    """Return the density field ``(Nz, Ny, Nx)`` and velocity ``(3, Nz, Ny, Nx)``."""
    return _moments_unchecked(populations(grid))


def total_mass(grid: LatticeGrid) -> float:
    """Return the correctly rounded sum of the site densities."""
    rho, _ = _moments_unchecked(populations(grid))
    return math.fsum(np.ravel(rho).tolist())


def _relative_change(current: FloatArray, reference: FloatArray) -> float:
    """Return ``||current - reference|| / ||reference||``, 0 when both vanish."""
    norm = float(np.linalg.norm(reference))
    change = float(np.linalg.norm(current - reference))
    if norm == 0.0:
        return 0.0 if change == 0.0 else math.inf
    return change / norm


def run_cavity(
    case: CavityCase,
    steps: int,
    scheme: Scheme = Scheme.FUSED,
    precision: Precision = Precision.DOUBLE,
    tolerance: float | None = None,
    progress: bool = False,
) -> CavityResult:
    """Run the lid-driven cavity from rest.

    The velocity residual is the relative L2 change of the velocity field
    over each window of ``RESIDUAL_WINDOW`` steps. Wall time covers the step
    calls only.

    Parameters
    ----------
    case : CavityCase
        Validated cavity parameters.
    steps : int
        Maximum number of steps, at least 1.
    scheme, precision : Scheme, Precision
        Stepping variant and precision mode.
    tolerance : float, optional
        Stop at the end of the first window whose residual is below it.
    progress : bool
        Show a tqdm progress bar.

    Returns
    -------
    CavityResult
        Final moments, run statistics and the residual series.
    """
    if steps < 1:
        raise ConfigurationError(f"steps must be at least 1, got {steps}.")
    n = case.N
    grid = init_uniform(LatticeGrid((n, n, n), precision, scheme))
    boundary = BoundarySpec.cavity(case.u_lid)
    logger.info(
        f"Cavity N={n} Re={case.reynolds:g} u_lid={case.u_lid:g} "
        f"omega={case.omega:.6f}: {scheme.value}/{precision.value}, "
        f"up to {steps} steps"
    )
    _, previous = moments(grid)
    residuals: list[tuple[int, float]] = []
    wall = 0.0
    with tqdm(total=steps, disable=not progress, desc="cavity", unit="step") as bar:
        while grid.steps_done < steps:
            chunk = min(RESIDUAL_WINDOW, steps - grid.steps_done)
            started = time.perf_counter()
            for _ in range(chunk):
                step(grid, case.omega, boundary)
            wall += time.perf_counter() - started
            bar.update(chunk)
            _, velocity = moments(grid)
            residual = _relative_change(previous, velocity)
            residuals.append((grid.steps_done, residual))
            previous = velocity
            logger.debug(f"step {grid.steps_done}: residual {residual:.3e}")
            if tolerance is not None and residual < tolerance:
                logger.info(
                    f"Residual {residual:.3e} below {tolerance:.1e} at step "
                    f"{grid.steps_done}"
                )
                break
    rho, velocity = moments(grid)
    stats = RunStats(
        steps_done=grid.steps_done,
        wall_seconds=wall,
        site_updates=grid.n_sites * grid.steps_done,
    )
    logger.info(
        f"Cavity finished after {stats.steps_done} steps in {wall:.2f} s "
        f"(residual {residuals[-1][1]:.3e})"
    )
    return CavityResult(
        case=case,
        scheme=scheme,
        precision=precision,
        rho=rho,
        velocity=velocity,
        stats=stats,
        residuals=tuple(residuals),
    )


def run_cavity_to_steady(
    case: CavityCase,
    tolerance: float,
    max_steps: int = CAVITY_MAX_STEPS,
    **kwargs: Any,
) -> CavityResult:
    """Run the cavity until the residual drops below ``tolerance``.

    Raises
    ------
    ValidationError
        If ``max_steps`` pass without reaching the tolerance.
    """
    result = run_cavity(case, max_steps, tolerance=tolerance, **kwargs)
    if result.final_residual >= tolerance:
        raise ValidationError(
            f"cavity residual {result.final_residual:.3e} still above "
            f"{tolerance:.1e} after {result.stats.steps_done} steps."
        )
    return result


def taylor_green_fields(
    n: int, amplitude: float, depth: int | None = None
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Return the density and velocity of the 2D Taylor-Green vortex.

    ``u = A (sin kx cos ky, -cos kx sin ky, 0)`` with ``k = 2 pi / n``, and the
    density carries the matching pressure field
    ``rho = 1 - 3 (A^2 / 4)(cos 2kx + cos 2ky)``. The flow is uniform along z.
    """
    nz = n if depth is None else depth
    k = 2.0 * math.pi / n
    zz, yy, xx = np.indices((nz, n, n), dtype=np.float64)
    ux = amplitude * np.sin(k * xx) * np.cos(k * yy)
    uy = -amplitude * np.cos(k * xx) * np.sin(k * yy)
    uz = np.zeros_like(ux)
    rho = 1.0 - (amplitude**2 / 4.0) * (np.cos(2 * k * xx) + np.cos(2 * k * yy)) / CS2
    return rho, np.stack([ux, uy, uz])


def _kinetic_energy(grid: LatticeGrid) -> float:
    _, u = moments(grid)
    return 0.5 * float(np.sum(u * u))


def run_taylor_green(
    n: int,
    omega: float,
    amplitude: float,
    steps: int,
    scheme: Scheme = Scheme.FUSED,
    precision: Precision = Precision.DOUBLE,
    depth: int | None = None,
    sample_every: int = TAYLOR_GREEN_SAMPLE_EVERY,
) -> TaylorGreenResult:
    """Measure the viscosity from the decay of a periodic Taylor-Green vortex.

    The kinetic energy decays as ``exp(-4 nu k^2 t)``; a straight-line fit of
    its logarithm gives the velocity decay rate ``2 nu k^2``, so
    ``nu_measured = rate / (2 k^2)``.

    Parameters
    ----------
    n : int
        Grid edge along x and y.
    omega : float
        Relaxation parameter.
    amplitude : float
        Vortex amplitude, at most ``TAYLOR_GREEN_MAX_AMPLITUDE``.
    steps : int
        Number of steps.
    depth : int, optional
        Grid extent along z (defaults to ``n``).
    sample_every : int
        Steps between kinetic energy samples.

    Returns
    -------
    TaylorGreenResult
        Measured and expected viscosity, fit quality and the sampled energy.

    Raises
    ------
    ValidationError
        If the log-linear fit has ``R^2 < TAYLOR_GREEN_MIN_R2``.
    """
    if not 0.0 < amplitude <= TAYLOR_GREEN_MAX_AMPLITUDE:
        raise ConfigurationError(
            f"amplitude must lie in (0, {TAYLOR_GREEN_MAX_AMPLITUDE}], got {amplitude}."
        )
    if steps < 2 * sample_every + TAYLOR_GREEN_SKIP_STEPS:
        raise ConfigurationError(
            f"steps={steps} too short for a decay fit with sampling every "
            f"{sample_every} steps."
        )
    nu_expected = viscosity_from_omega(omega)
    nz = n if depth is None else depth
    grid = LatticeGrid((n, n, nz), precision, scheme)
    init_fields(grid, *taylor_green_fields(n, amplitude, depth))
    boundary = BoundarySpec.periodic()
    times = [0.0]
    energy = [_kinetic_energy(grid)]
    while grid.steps_done < steps:
        for _ in range(min(sample_every, steps - grid.steps_done)):
            step(grid, omega, boundary)
        times.append(float(grid.steps_done))
        energy.append(_kinetic_energy(grid))
    t = np.asarray(times)
    ke = np.asarray(energy)
    keep = (t >= TAYLOR_GREEN_SKIP_STEPS) & (ke > 0.0)
    if keep.sum() < 3:
        raise ValidationError("kinetic energy vanished before the fit window.")
    log_ke = np.log(ke[keep])
    slope, intercept = np.polyfit(t[keep], log_ke, 1)
    fitted = slope * t[keep] + intercept
    ss_res = float(np.sum((log_ke - fitted) ** 2))
    ss_tot = float(np.sum((log_ke - log_ke.mean()) ** 2))
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else 0.0
    if r_squared < TAYLOR_GREEN_MIN_R2:
        raise ValidationError(
            f"kinetic energy decay is not exponential (R^2 = {r_squared:.4f})."
        )
    k = 2.0 * math.pi / n
    rate = -float(slope) / 2.0
    nu_measured = rate / (2.0 * k * k)
    logger.info(
        f"Taylor-Green N={n} omega={omega}: nu={nu_measured:.6f} "
        f"(expected {nu_expected:.6f}, R^2={r_squared:.6f})"
    )
    return TaylorGreenResult(
        nu_measured=nu_measured,
        nu_expected=nu_expected,
        decay_rate=rate,
        r_squared=r_squared,
        times=t,
        kinetic_energy=ke,
    )


def precision_drift(test_velocity: ArrayLike, reference_velocity: ArrayLike) -> float:
    """Return ``||u_test - u_ref||_2 / ||u_ref||_2``.

    Examples
    --------
    >>> from src.solver import precision_drift
    >>> precision_drift([[1.0, 2.0]], [[1.0, 2.0]])
    0.0
    """
    test = np.asarray(test_velocity, dtype=np.float64)
    reference = np.asarray(reference_velocity, dtype=np.float64)
    if test.shape != reference.shape:
        raise ShapeMismatchError(
            f"velocity fields differ in shape: {test.shape} vs {reference.shape}."
        )
    return _relative_change(test, reference)


def mirror_symmetry_error(velocity: ArrayLike) -> float:
    """Return the largest deviation from the mirror image across the y mid-plane.

    The cavity lid moves along x and its normal is z, so the flow is
    symmetric under ``y -> Ny - 1 - y`` with ``u_y`` negated.
    """
    u = np.asarray(velocity, dtype=np.float64)
    mirrored = u[:, :, ::-1, :].copy()
    mirrored[1] *= -1.0
    return float(np.max(np.abs(u - mirrored)))


def _centerline(values: FloatArray) -> FloatArray:
    n = values.shape[-1]
    if n % 2:
        return values[..., n // 2]
    return 0.5 * (values[..., n // 2 - 1] + values[..., n // 2])


def centerline_profiles(velocity: ArrayLike, u_lid: float) -> CenterlineProfiles:
    """Extract the classic cavity centerline profiles from ``(3, Nz, Ny, Nx)``.

    Even grid sizes average the two cells around the center.
    """
    u = np.asarray(velocity, dtype=np.float64)
    if u.ndim != 4 or u.shape[0] != 3:
        raise ShapeMismatchError(f"expected a (3, Nz, Ny, Nx) field, got {u.shape}.")
    _, nz, ny, nx = u.shape
    # mid-y plane, then centerlines in x (vertical line) and z (horizontal line)
    ux_plane = _centerline(np.moveaxis(u[0], 1, -1))  # (Nz, Nx)
    uz_plane = _centerline(np.moveaxis(u[2], 1, -1))
    vertical = _centerline(ux_plane) / u_lid
    horizontal = _centerline(uz_plane.T) / u_lid
    return CenterlineProfiles(
        z=(np.arange(nz) + 0.5) / nz,
        vertical_ux=np.asarray(vertical, dtype=np.float64),
        x=(np.arange(nx) + 0.5) / nx,
        horizontal_uz=np.asarray(horizontal, dtype=np.float64),
    )
