"""Exception hierarchy. CLI exit codes hang off these classes."""


class ConfigError(ValueError):
    """Invalid configuration (exit code 2)."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalError(RuntimeError):
    """Numerical failure: non-convergence, broken stability gate (exit code 3)."""


class PureStateError(ValueError):
    """Potential evaluated at or beyond a pure state |r| >= 1."""


class GuardBandError(NumericalError):
    """The order parameter left the guard band (-1 + eps_g, 1 - eps_g)."""


class SnapshotError(ValueError):
    """Malformed or mismatched snapshot file (exit code 4)."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
