"""Remote state estimation over a shared interference channel.

Sensors pick transmission powers in a game; this package computes the Nash
and correlated equilibria of that game, verifies them independently, and
simulates the resulting remote-estimation error by Monte Carlo.
"""

from sensorgame.errors import (
    CapacityError,
    ConfigError,
    ContractError,
    ConvergenceError,
    InfeasibleProfileError,
    NumericError,
    SensorGameError,
    UnsupportedGameError,
)

__version__ = "0.1.0"

__all__ = [
    "CapacityError",
    "ConfigError",
    "ContractError",
    "ConvergenceError",
    "InfeasibleProfileError",
    "NumericError",
    "SensorGameError",
    "UnsupportedGameError",
]
