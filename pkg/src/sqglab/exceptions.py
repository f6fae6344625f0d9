"""Exception hierarchy shared by every sqglab module."""


class SQGLabError(Exception):
    """Base class for all errors raised by sqglab."""


class ConfigurationError(SQGLabError, ValueError):
    """Invalid grid, solver or experiment configuration."""


class DomainError(SQGLabError, ValueError):
    """An operator was applied outside the set where it is defined."""


class UnsupportedScaleError(SQGLabError, ValueError):
    """A rescaling factor that cannot be represented on the lattice."""


class UnsupportedMapError(SQGLabError, ValueError):
    """A map that is not an exactly measure-preserving grid map."""


class IncompleteLedgerError(SQGLabError, ValueError):
    """A time-series ledger lacks the records a computation needs."""


class UndefinedRatioError(SQGLabError, ArithmeticError):
    """A normalised ratio whose denominator vanishes."""


class SnapshotError(SQGLabError, OSError):
    """A snapshot or its sidecar is missing or corrupt."""


class CFLError(SQGLabError, ValueError):
    """The requested timestep violates the advective CFL restriction."""

    def __init__(self, dt, required_dt):
        self.dt = dt
        self.required_dt = required_dt
        super().__init__(
            f"dt={dt:.6g} violates the CFL condition; use dt <= {required_dt:.6g}"
        )


class BlowupError(SQGLabError, RuntimeError):
    """Non-finite or runaway values detected; carries the last valid state."""

    def __init__(self, message, state=None, partial=None):
        self.state = state
        self.partial = partial
        super().__init__(message)
