"""Shared interference channel: SINR, symbol error rate, packet arrivals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import erfc

from sensorgame.errors import ConfigError

PAPER_QFUNC = "paper_qfunc"
USER_TABLE = "user_table"
# Above this SINR the default curve's square-root argument is negative.
SER_ZERO_SINR = 4.0


@dataclass(frozen=True)
class ChannelParams:
    gains: tuple[float, ...]
    spreading_gain: float
    noise: float

    def __post_init__(self):
        gains = tuple(float(g) for g in self.gains)
        if not gains:
            raise ConfigError("channel.gains: at least one sensor required")
        for i, g in enumerate(gains):
            if not (0.0 < g <= 1.0):
                raise ConfigError(f"channel.gains[{i}]: must lie in (0, 1], got {g}")
        if not self.spreading_gain > 0:
            raise ConfigError(f"channel.spreading_gain: must be positive, got {self.spreading_gain}")
        if not self.noise > 0:
            raise ConfigError(f"channel.noise: must be positive, got {self.noise}")
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "spreading_gain", float(self.spreading_gain))
        object.__setattr__(self, "noise", float(self.noise))

    @property
    def n_sensors(self) -> int:
        return len(self.gains)


@dataclass(frozen=True)
class SerCurve:
    """SINR-to-SER map.

    ``kind="paper_qfunc"`` is ``1 - 2Q(sqrt(4/gamma - 1))`` extended by 1 at
    gamma=0 and by 0 above gamma=4. ``kind="user_table"`` linearly
    interpolates ``(gamma, ser)`` samples and holds the end values outside
    the sampled range.
    """

    kind: str = PAPER_QFUNC
    table: tuple[tuple[float, float], ...] | None = field(default=None)

    def __post_init__(self):
        if self.kind == PAPER_QFUNC:
            if self.table is not None:
                raise ConfigError("ser_curve.table: only allowed with kind 'user_table'")
            return
        if self.kind != USER_TABLE:
            raise ConfigError(f"ser_curve.kind: unknown curve {self.kind!r}")
        if not self.table or len(self.table) < 2:
            raise ConfigError("ser_curve.table: need at least two (gamma, ser) points")
        pts = tuple((float(g), float(f)) for g, f in self.table)
        gs = [g for g, _ in pts]
        fs = [f for _, f in pts]
        if any(b <= a for a, b in zip(gs, gs[1:])):
            raise ConfigError("ser_curve.table: gamma values must be strictly ascending")
        if gs[0] < 0:
            raise ConfigError("ser_curve.table: gamma values must be non-negative")
        if any(not 0.0 <= f <= 1.0 for f in fs):
            raise ConfigError("ser_curve.table: ser values must lie in [0, 1]")
        if any(b > a for a, b in zip(fs, fs[1:])):
            raise ConfigError("ser_curve.table: ser must be non-increasing in gamma")
        object.__setattr__(self, "table", pts)


PAPER_CURVE = SerCurve()


def sinr(i: int, powers: Sequence[float], params: ChannelParams) -> float:
    """SINR of sensor ``i`` when all sensors transmit at ``powers``; others act as noise."""
    if len(powers) != params.n_sensors:
        raise ConfigError(f"expected {params.n_sensors} powers, got {len(powers)}")
    interference = 0.0
    for j, (h, a) in enumerate(zip(params.gains, powers)):
        if a < 0:
            raise ValueError(f"transmission power must be non-negative, got {a} for sensor {j}")
        if j != i:
            interference += h * a
    return params.spreading_gain * params.gains[i] * powers[i] / (interference + params.noise)


def gaussian_q(x: float) -> float:
    """Standard normal upper tail ``P(Z > x)``."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def ser(gamma: float, curve: SerCurve = PAPER_CURVE) -> float:
    if gamma < 0:
        raise ValueError(f"SINR must be non-negative, got {gamma}")
    if curve.kind == USER_TABLE:
        gs, fs = zip(*curve.table)
        return float(np.interp(gamma, gs, fs))
    if gamma == 0.0:
        return 1.0
    if gamma >= SER_ZERO_SINR:
        return 0.0
    value = 1.0 - 2.0 * gaussian_q(math.sqrt(4.0 / gamma - 1.0))
    return min(1.0, max(0.0, value))


def ser_array(gamma, curve: SerCurve = PAPER_CURVE) -> np.ndarray:
    """Vectorized :func:`ser`."""
    g = np.asarray(gamma, dtype=float)
    if curve.kind == USER_TABLE:
        gs, fs = zip(*curve.table)
        return np.interp(g, gs, fs)
    out = np.zeros_like(g)
    zero = g <= 0.0
    mid = (g > 0.0) & (g < SER_ZERO_SINR)
    out[zero] = 1.0
    x = np.sqrt(4.0 / g[mid] - 1.0)
    out[mid] = 1.0 - erfc(x / math.sqrt(2.0))
    return np.clip(out, 0.0, 1.0)


def arrival_probability(gamma: float, curve: SerCurve = PAPER_CURVE) -> float:
    return 1.0 - ser(gamma, curve)


def sample_arrival(gamma: float, curve: SerCurve, rng: np.random.Generator) -> int:
    """Bernoulli packet arrival with success probability ``1 - ser(gamma)``."""
    return int(rng.random() < 1.0 - ser(gamma, curve))
