"""D3Q19 lattice model mathematics.

Stencil constants, the second-order equilibrium, single-relaxation-time
collision, macroscopic moments and the viscosity/relaxation relation. The
module holds no storage and performs no I/O.

Every array operation takes populations with a leading axis of length 19 and
any trailing shape, so a single site (shape ``(19,)``) and a whole field
(shape ``(19, Nz, Ny, Nx)``) go through the same arithmetic. The evaluation
order inside each routine is fixed; callers that use the same routine get
bit-identical results.

Direction layout: index 0 is the rest direction, 1-6 the axis directions and
7-18 the diagonals. For ``i > 0`` the opposite of an odd ``i`` is ``i + 1``.
"""

from __future__ import annotations

import dataclasses
import logging
from collections.abc import Sequence
from dataclasses import dataclass
from fractions import Fraction
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

from src.errors import (
    DegenerateStateError,
    NonFiniteInputError,
    StabilityDomainError,
)

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.floating[Any]]

Q: int = 19
AXIS_DIRECTIONS: tuple[int, ...] = (1, 2, 3, 4, 5, 6)
DIAGONAL_DIRECTIONS: tuple[int, ...] = tuple(range(7, 19))

_VELOCITIES: tuple[tuple[int, int, int], ...] = (
    (0, 0, 0),
    (1, 0, 0),
    (-1, 0, 0),
    (0, 1, 0),
    (0, -1, 0),
    (0, 0, 1),
    (0, 0, -1),
    (1, 1, 0),
    (-1, -1, 0),
    (1, -1, 0),
    (-1, 1, 0),
    (1, 0, 1),
    (-1, 0, -1),
    (1, 0, -1),
    (-1, 0, 1),
    (0, 1, 1),
    (0, -1, -1),
    (0, 1, -1),
    (0, -1, 1),
)
_WEIGHTS: tuple[Fraction, ...] = (
    (Fraction(1, 3),) + (Fraction(1, 18),) * 6 + (Fraction(1, 36),) * 12
)
_OPPOSITE: tuple[int, ...] = (0,) + tuple(
    i + 1 if i % 2 == 1 else i - 1 for i in range(1, Q)
)


@dataclass(frozen=True)
class StencilD3Q19:
    """Discrete velocities, weights and sound speed of the D3Q19 lattice.

    Parameters
    ----------
    velocities : tuple[tuple[int, int, int], ...]
        The 19 integer velocity vectors ``(cx, cy, cz)``.
    weights : tuple[Fraction, ...]
        Exact lattice weights.
    cs2 : Fraction
        Lattice sound speed squared.
    opposite : tuple[int, ...]
        ``opposite[i]`` is the index of ``-c_i``.

    Examples
    --------
    >>> from src.d3q19_core import D3Q19
    >>> sum(D3Q19.weights)
    Fraction(1, 1)
    >>> D3Q19.velocities[D3Q19.opposite[7]]
    (-1, -1, 0)
    """

    velocities: tuple[tuple[int, int, int], ...] = _VELOCITIES
    weights: tuple[Fraction, ...] = _WEIGHTS
    cs2: Fraction = Fraction(1, 3)
    opposite: tuple[int, ...] = _OPPOSITE

    def velocity_array(self) -> NDArray[np.int64]:
        """Return the velocities as an integer array of shape ``(19, 3)``."""
        return np.array(self.velocities, dtype=np.int64)

    def weights_array(self, dtype: Any = np.float64) -> FloatArray:
        """Return the weights rounded to ``dtype`` (shape ``(19,)``)."""
        return np.array([float(w) for w in self.weights], dtype=dtype)

    def with_weight(self, index: int, weight: Fraction) -> StencilD3Q19:
        """Return a copy with one weight replaced (used to exercise the checks)."""
        weights = list(self.weights)
        weights[index] = weight
        return dataclasses.replace(self, weights=tuple(weights))


D3Q19 = StencilD3Q19()
CS2: float = float(D3Q19.cs2)


@dataclass(frozen=True)
class FluidMoments:
    """Density and velocity recovered from populations.

    ``rho`` has the trailing shape of the populations and ``u`` has a leading
    axis of length 3 (x, y, z) in front of it.
    """

    rho: FloatArray
    u: FloatArray


@dataclass(frozen=True)
class RelaxationParams:
    """Relaxation parameter and the kinematic viscosity it implies."""

    omega: float
    nu: float

    @classmethod
    def from_omega(cls, omega: float) -> RelaxationParams:
        """Build the pair from a relaxation parameter in ``(0, 2)``."""
        return cls(omega=omega, nu=viscosity_from_omega(omega))

    @classmethod
    def from_viscosity(cls, nu: float) -> RelaxationParams:
        """Build the pair from a positive viscosity."""
        return cls(omega=omega_from_viscosity(nu), nu=nu)


def stencil_identities(stencil: StencilD3Q19 = D3Q19) -> list[str]:
    """Check the stencil identities exactly and return the names that fail.

    Parameters
    ----------
    stencil : StencilD3Q19
        Stencil to check.

    Returns
    -------
    list[str]
        Names of failed identities; empty for a valid stencil.

    Examples
    --------
    >>> from fractions import Fraction
    >>> from src.d3q19_core import D3Q19, stencil_identities
    >>> stencil_identities()
    []
    >>> stencil_identities(D3Q19.with_weight(0, Fraction(1, 2)))
    ['weight_sum']
    """
    failures: list[str] = []
    velocities = stencil.velocities
    weights = stencil.weights
    if len(velocities) != Q or len(weights) != Q or len(stencil.opposite) != Q:
        return ["size"]
    if sum(weights) != 1:
        failures.append("weight_sum")
    if any(w <= 0 for w in weights):
        failures.append("weights_positive")
    first = [sum(w * c[a] for w, c in zip(weights, velocities)) for a in range(3)]
    if any(value != 0 for value in first):
        failures.append("first_moment")
    for a in range(3):
        for b in range(3):
            second = sum(w * c[a] * c[b] for w, c in zip(weights, velocities))
            if second != (stencil.cs2 if a == b else 0):
                failures.append("second_moment")
                break
        else:
            continue
        break
    if len(set(velocities)) != Q:
        failures.append("distinct_velocities")
    if velocities[0] != (0, 0, 0):
        failures.append("rest_direction")
    opposite = stencil.opposite
    if any(opposite[opposite[i]] != i for i in range(Q)):
        failures.append("opposite_involution")
    if any(
        velocities[opposite[i]] != tuple(-c for c in velocities[i]) for i in range(Q)
    ):
        failures.append("opposite_velocity")
    return failures


def _ordered_sum(f: FloatArray, indices: Sequence[int]) -> FloatArray:
    acc = f[indices[0]]
    for i in indices[1:]:
        acc = acc + f[i]
    return acc


def _density(f: FloatArray) -> FloatArray:
    # rest + (axis group + diagonal group); sums the rest weights to exactly 1
    moving = _ordered_sum(f, AXIS_DIRECTIONS) + _ordered_sum(f, DIAGONAL_DIRECTIONS)
    return f[0] + moving


def _momentum_component(f: FloatArray, axis: int) -> FloatArray:
    acc: FloatArray | None = None
    for i in range(1, Q, 2):
        c = _VELOCITIES[i][axis]
        if c == 0:
            continue
        term = f[i] - f[i + 1] if c > 0 else f[i + 1] - f[i]
        acc = term if acc is None else acc + term
    assert acc is not None
    return acc


def _moments_unchecked(f: FloatArray) -> tuple[FloatArray, FloatArray]:
    rho = _density(f)
    u = np.stack([_momentum_component(f, axis) / rho for axis in range(3)])
    return rho, u


def _equilibrium_unchecked(
    rho: FloatArray, u: FloatArray, weights: FloatArray
) -> FloatArray:
    ux, uy, uz = u[0], u[1], u[2]
    usq = ux * ux + uy * uy + uz * uz
    feq = np.empty((Q, *np.shape(rho)), dtype=weights.dtype)
    components = (ux, uy, uz)
    for i in range(Q):
        cu: Any = None
        for axis, c in enumerate(_VELOCITIES[i]):
            if c == 0:
                continue
            if cu is None:
                cu = components[axis] if c > 0 else -components[axis]
            else:
                cu = cu + components[axis] if c > 0 else cu - components[axis]
        if cu is None:
            feq[i] = weights[i] * rho * (1.0 - 1.5 * usq)
        else:
            feq[i] = weights[i] * rho * (1.0 + 3.0 * cu + (4.5 * cu * cu - 1.5 * usq))
    return feq


def _collide_unchecked(
    f: FloatArray,
    omega: float,
    weights: FloatArray,
    out: FloatArray | None = None,
) -> FloatArray:
    """Relax ``f`` toward its own equilibrium; ``out`` may alias ``f``."""
    rho, u = _moments_unchecked(f)
    feq = _equilibrium_unchecked(rho, u, weights)
    keep = 1.0 - omega
    result = np.empty_like(f) if out is None else out
    for i in range(Q):
        result[i] = feq[i] + keep * (f[i] - feq[i])
    return result


def _require_finite(name: str, values: FloatArray) -> None:
    if not np.all(np.isfinite(values)):
        raise NonFiniteInputError(f"{name} contains NaN or infinite values.")


def _require_omega(omega: float) -> None:
    if not (np.isfinite(omega) and 0.0 < omega < 2.0):
        raise StabilityDomainError(
            f"omega must lie in the open interval (0, 2), got {omega}."
        )


def _as_populations(f: ArrayLike) -> FloatArray:
    populations = np.asarray(f, dtype=np.float64)
    if populations.ndim == 0 or populations.shape[0] != Q:
        raise ValueError(
            f"populations need a leading axis of length {Q}, got shape "
            f"{populations.shape}."
        )
    _require_finite("populations", populations)
    return populations


def equilibrium(rho: ArrayLike, u: ArrayLike) -> FloatArray:
    """Return the second-order equilibrium populations.

    Parameters
    ----------
    rho : array_like
        Density, a scalar or a field.
    u : array_like
        Velocity with a leading axis of length 3 and the shape of ``rho``
        behind it.

    Returns
    -------
    numpy.ndarray
        ``f_eq`` with shape ``(19, *rho.shape)`` in float64.

    Raises
    ------
    NonFiniteInputError
        If an input is NaN or infinite.
    DegenerateStateError
        If any density is not positive.

    Examples
    --------
    >>> import numpy as np
    >>> from src.d3q19_core import D3Q19, equilibrium
    >>> bool(np.array_equal(equilibrium(1.0, [0.0, 0.0, 0.0]), D3Q19.weights_array()))
    True
    """
    density = np.asarray(rho, dtype=np.float64)
    velocity = np.asarray(u, dtype=np.float64)
    if velocity.shape != (3, *density.shape):
        raise ValueError(
            f"velocity shape {velocity.shape} does not match (3, *{density.shape})."
        )
    _require_finite("rho", density)
    _require_finite("u", velocity)
    if np.any(density <= 0.0):
        raise DegenerateStateError("density must be positive.")
    return _equilibrium_unchecked(density, velocity, D3Q19.weights_array())


def macroscopic(f: ArrayLike) -> FluidMoments:
    """Recover density and velocity from populations.

    The velocity sums use only additions and subtractions over opposite
    pairs; the single multiplication-free pass is then divided by density.

    Parameters
    ----------
    f : array_like
        Populations with a leading axis of length 19.

    Returns
    -------
    FluidMoments
        Density and velocity.

    Raises
    ------
    NonFiniteInputError
        If a population is NaN or infinite.
    DegenerateStateError
        If any density is not positive.

    Examples
    --------
    >>> from src.d3q19_core import D3Q19, macroscopic
    >>> moments = macroscopic(D3Q19.weights_array())
    >>> float(moments.rho), moments.u.tolist()
    (1.0, [0.0, 0.0, 0.0])
    """
    populations = _as_populations(f)
    rho = _density(populations)
    if np.any(rho <= 0.0):
        raise DegenerateStateError("population density is not positive.")
    u = np.stack([_momentum_component(populations, axis) / rho for axis in range(3)])
    return FluidMoments(rho=np.asarray(rho), u=u)


def collide(
    f: ArrayLike,
    omega: float,
    rho: ArrayLike | None = None,
    u: ArrayLike | None = None,
) -> FloatArray:
    """Apply one single-relaxation-time collision.

    ``f' = f_eq + (1 - omega) (f - f_eq)``, which is the affine combination
    ``(1 - omega) f + omega f_eq`` evaluated so that ``omega = 1`` and the
    equilibrium fixed point are reproduced exactly.

    Parameters
    ----------
    f : array_like
        Populations with a leading axis of length 19.
    omega : float
        Relaxation parameter in ``(0, 2)``.
    rho, u : array_like, optional
        Moments to relax toward; recovered from ``f`` when omitted.

    Returns
    -------
    numpy.ndarray
        Post-collision populations, float64.

    Raises
    ------
    StabilityDomainError
        If ``omega`` lies outside ``(0, 2)``.
    """
    _require_omega(omega)
    populations = _as_populations(f)
    if rho is None and u is None:
        return _collide_unchecked(populations, omega, D3Q19.weights_array())
    if rho is None or u is None:
        moments = macroscopic(populations)
        rho = moments.rho if rho is None else rho
        u = moments.u if u is None else u
    feq = equilibrium(rho, u)
    keep = 1.0 - omega
    result = np.empty_like(populations)
    for i in range(Q):
        result[i] = feq[i] + keep * (populations[i] - feq[i])
    return result


def viscosity_from_omega(omega: float) -> float:
    """Return the lattice viscosity ``cs2 (1/omega - 1/2)``.

    Examples
    --------
    >>> from src.d3q19_core import viscosity_from_omega
    >>> viscosity_from_omega(1.0) == 1 / 6
    True
    """
    _require_omega(omega)
    return CS2 * (1.0 / omega - 0.5)


def omega_from_viscosity(nu: float) -> float:
    """Return the relaxation parameter giving viscosity ``nu`` (> 0).

    Examples
    --------
    >>> from src.d3q19_core import omega_from_viscosity
    >>> omega_from_viscosity(0.1)
    1.25
    """
    if not (np.isfinite(nu) and nu > 0.0):
        raise StabilityDomainError(f"viscosity must be positive, got {nu}.")
    return 1.0 / (nu / CS2 + 0.5)


def mach_number(u: ArrayLike) -> FloatArray:
    """Return ``|u| / c_s`` for a velocity with a leading axis of length 3.

    Examples
    --------
    >>> from src.d3q19_core import mach_number
    >>> round(float(mach_number([0.05, 0.0, 0.0])), 6)
    0.086603
    """
    velocity = np.asarray(u, dtype=np.float64)
    speed2 = np.sum(velocity * velocity, axis=0)
    return np.asarray(np.sqrt(speed2 / CS2))
