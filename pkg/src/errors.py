"""Exception hierarchy shared by all modules.

Every domain error derives from :class:`LbmError`, itself a ``ValueError``,
so callers that only care about "bad input or bad state" can keep catching
``ValueError``. I/O problems are left to the built-in ``OSError`` family.
"""

from collections.abc import Sequence


class LbmError(ValueError):
    """Root of all domain errors raised by this package."""


class NonFiniteInputError(LbmError):
    """An input contained NaN or infinite values."""


class DegenerateStateError(LbmError):
    """A population vector has non-positive density."""


class StabilityDomainError(LbmError):
    """A relaxation parameter or viscosity lies outside its stable range."""


class ConfigurationError(LbmError):
    """A case, grid or command configuration violates a precondition."""


class ShapeMismatchError(LbmError):
    """Two fields that must be comparable have different shapes."""


class ValidationError(LbmError):
    """A physics validation (e.g. an exponential decay fit) failed."""


class DivergenceError(LbmError):
    """Non-finite populations appeared while stepping.

    Parameters
    ----------
    step : int
        Time step at which the scan found the first non-finite value.
    site : tuple[int, int, int]
        ``(x, y, z)`` coordinates of the first offending site.
    direction : int
        Population index of the first offending value.
    """

    def __init__(self, step: int, site: tuple[int, int, int], direction: int) -> None:
        self.step = step
        self.site = site
        self.direction = direction
        super().__init__(
            f"Non-finite population f_{direction} at site (x, y, z) = {site} "
            f"detected at step {step}."
        )


class EmptyLogError(LbmError):
    """A telemetry log contained no parseable sample."""


class TimestampOrderError(LbmError):
    """Timestamps of one GPU went backwards.

    Parameters
    ----------
    line_number : int
        One-based line number of the offending line.
    gpu_index : int
        GPU whose samples regressed.
    """

    def __init__(self, line_number: int, gpu_index: int) -> None:
        self.line_number = line_number
        self.gpu_index = gpu_index
        super().__init__(
            f"Line {line_number}: timestamp of GPU {gpu_index} precedes its "
            "previous sample."
        )


class InsufficientSamplesError(LbmError):
    """Too few samples for the requested analysis."""


class NoPlateauError(LbmError):
    """No compute plateau could be found in a trace.

    Parameters
    ----------
    message : str
        Description of why detection failed.
    gpu_index : int or None
        GPU whose trace has no plateau, when known.
    """

    def __init__(self, message: str, gpu_index: int | None = None) -> None:
        self.gpu_index = gpu_index
        prefix = f"GPU {gpu_index}: " if gpu_index is not None else ""
        super().__init__(prefix + message)


class MissingReferenceError(LbmError):
    """The normalization clock is not among the sweep points."""


class AlignmentError(LbmError):
    """Per-node curves do not share a common clock grid.

    Parameters
    ----------
    message : str
        Description of the misalignment.
    missing : Sequence[float]
        Clocks missing from at least one node.
    """

    def __init__(self, message: str, missing: Sequence[float] = ()) -> None:
        self.missing = tuple(missing)
        if self.missing:
            listed = ", ".join(f"{clock:g}" for clock in self.missing)
            message = f"{message} Missing clocks: {listed}."
        super().__init__(message)


class EmptyAnalysisError(LbmError):
    """A report was requested for an analysis without points."""
