"""Exception types shared across the package."""


class EvigraphError(Exception):
    """Base class for all errors raised by evigraph."""


class DagSyntaxError(EvigraphError):
    """DSL text could not be parsed; carries the offending position."""

    def __init__(self, message, line, column):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class DagValidationError(EvigraphError):
    """A structurally invalid hypothesis DAG (cycles, bad markings, ...)."""


class DataError(EvigraphError):
    """Dataset content violates its declared column metadata."""


class MethodError(EvigraphError):
    """An analysis method was misconfigured or applied to unsuitable data."""


class EvolutionError(EvigraphError):
    """An evolution step violates the framework rules."""


class ConvergenceError(EvigraphError):
    """An iterative fit failed to converge; carries the optimizer trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
