"""Exception types shared across the lab.

Every failure mode that callers are expected to branch on gets its own
class; plain ValueError is reserved for programming mistakes.
"""


class TcilabError(Exception):
    """Base class for all lab errors."""


class InvalidInputError(TcilabError):
    """Malformed argument: bad shape, non-finite entry, out-of-range value."""


class GridMismatchError(TcilabError):
    """Two objects built on different grids were combined."""


class RangeOverflowError(TcilabError):
    """An exponential weight overflows float64 at some grid point."""

    def __init__(self, message: str, offending_y: float | None = None):
        super().__init__(message)
        self.offending_y = offending_y


class CoefficientContractError(TcilabError):
    """Declared Lipschitz / sup bounds are violated by the callables."""

    def __init__(self, message: str, witness=None):
        super().__init__(message)
        self.witness = witness


class DivergenceError(TcilabError):
    """A solve produced a non-finite value."""

    def __init__(self, message: str, step: int = -1):
        super().__init__(message)
        self.step = step


class TruncationError(TcilabError):
    """Recorded domain-truncation tail bound exceeds the configured tolerance."""


class UnderpoweredError(TcilabError):
    """Monte Carlo standard error too large for the comparison requested."""


class CouplingIntegrityError(TcilabError):
    """Coupled pair disagrees where it must agree (e.g. zero-cost shift)."""


class ConfigError(TcilabError):
    """Bad configuration file or command-line override."""
