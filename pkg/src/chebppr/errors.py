"""Exception hierarchy shared by the solvers and the command line."""


class ConfigError(ValueError):
    """Invalid run configuration (CLI exit code 2)."""


class NumericalError(RuntimeError):
    """A numerical procedure failed (CLI exit code 3)."""


class ConvergenceError(NumericalError):
    """An iterative procedure hit its iteration cap."""


class SpectralBoundError(NumericalError):
    """The stored spectral radius bound does not cover the evolved graph."""


class DenseLimitError(ValueError):
    """A dense-only computation was requested on a graph above the size limit."""
