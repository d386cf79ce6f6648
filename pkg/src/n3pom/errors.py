"""Exception hierarchy. Each class maps to a CLI exit code."""


class N3pomError(Exception):
    exit_code = 1


class DataError(N3pomError):
    """Unreadable, malformed or inconsistent input data."""

    exit_code = 1


class DomainError(N3pomError, ValueError):
    """A response value lies outside ``[1, J]``."""

    exit_code = 2


class ConfigError(N3pomError, ValueError):
    exit_code = 2


class TrainingError(N3pomError, ArithmeticError):
    """Numerical failure during optimisation (NaN gradient, negative density)."""

    exit_code = 3
