"""Exception hierarchy. The CLI maps each class to its own exit code."""


class SensorGameError(Exception):
    exit_code = 1


class ConfigError(SensorGameError, ValueError):
    """Invalid model, game or simulation configuration."""

    exit_code = 2


class NumericError(SensorGameError, ArithmeticError):
    exit_code = 3


class ConvergenceError(NumericError):
    """An iteration hit its budget before reaching tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class CapacityError(SensorGameError):
    """A joint action space is too large to enumerate."""

    exit_code = 4


class ContractError(SensorGameError):
    """A solver was called on a game outside its domain."""

    exit_code = 4


class UnsupportedGameError(ContractError):
    pass


class InfeasibleProfileError(SensorGameError, ValueError):
    """A strategy profile or distribution violates an energy cap."""

    exit_code = 4
