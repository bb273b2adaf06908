"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class WipsError(Exception):
    exit_code = 1


class InvalidSpecError(WipsError, ValueError):
    exit_code = 2


class ConfigError(WipsError, ValueError):
    exit_code = 2


class RegimeError(WipsError):
    """A requested step-size regime or regime parameter is not admissible."""

    exit_code = 3


class DegenerateInteractionError(WipsError, ZeroDivisionError):
    exit_code = 3


class UnsupportedOracleError(WipsError):
    exit_code = 3


class NumericOverflowError(WipsError, FloatingPointError):
    exit_code = 4

    def __init__(self, message, particle=None, step=None):
        super().__init__(message)
        self.particle = particle
        self.step = step


class ToleranceUnachievableError(WipsError):
    exit_code = 4
