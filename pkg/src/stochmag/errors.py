"""Exception hierarchy shared by the library and the command line front-end."""


class StochmagError(Exception):
    """Base class for all library errors."""


class ConfigError(StochmagError, ValueError):
    """Invalid configuration, bad arguments or unparsable input files."""


class MeshFormatError(ConfigError):
    """Malformed Triangle .node/.ele input."""

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


class TaggingError(ConfigError):
    """An element carries a region attribute outside the documented mapping."""


class GeometryError(ConfigError):
    """Inconsistent reference geometry dimensions."""


class NumericalError(StochmagError, ArithmeticError):
    """A numerical procedure failed or could not reach its target."""


class NeedMoreEigenpairs(NumericalError):
    """The computed eigenvalues do not capture the requested variance fraction."""

    def __init__(self, achieved, threshold, count):
        super().__init__(
            f"{count} eigenpairs capture psi={achieved:.6f} < threshold {threshold}; "
            "request more eigenpairs"
        )
        self.achieved = achieved
        self.threshold = threshold
        self.count = count


class SolverError(NumericalError):
    """The finite element system could not be solved to the residual contract."""


class BudgetError(StochmagError, MemoryError):
    """A resource budget (memory or collocation nodes) would be exceeded."""
