"""The N-sensor transmission-power game and its closed-form equilibria.

A sensor's payoff is minus the expected trace of its remote error covariance
after one step:

    u_i(a) = ser(gamma_i(a)) * c_i(tau_i) - Tr(P_bar_i)

where ``c_i < 0`` is :func:`sensorgame.estimation.trace_gap`. Joint actions
are indexed by per-player level indices, so every distribution over joint
actions is an ndarray of shape ``(m_1, ..., m_N)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import cached_property, reduce
from typing import Sequence

import numpy as np

from sensorgame import channel as ch
from sensorgame.errors import CapacityError, ConfigError, ContractError, UnsupportedGameError
from sensorgame.estimation import ProcessModel, SteadyStateFilter, steady_state_covariance, trace_gap

PROB_TOL = 1e-12
D_EQUALITY_TOL = 1e-9
DEFAULT_ENUMERATION_CAP = 10**6


@dataclass(frozen=True)
class GameSpec:
    action_sets: tuple[np.ndarray, ...]
    channel: ch.ChannelParams
    models: tuple[ProcessModel, ...]
    filters: tuple[SteadyStateFilter, ...]
    holding_times: tuple[int, ...] | None = None
    energy_caps: tuple[float, ...] | None = None
    ser_curve: ch.SerCurve = ch.PAPER_CURVE
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP

    def __post_init__(self):
        n = len(self.action_sets)
        if n == 0:
            raise ConfigError("a game needs at least one player")
        sets = []
        for i, levels in enumerate(self.action_sets):
            arr = np.array(levels, dtype=float).reshape(-1)
            if arr.size == 0:
                raise ConfigError(f"actions[{i}]: empty action set")
            if np.any(arr < 0):
                raise ConfigError(f"actions[{i}]: energy levels must be non-negative")
            if np.any(np.diff(arr) <= 0):
                raise ConfigError(f"actions[{i}]: energy levels must be strictly ascending")
            arr.setflags(write=False)
            sets.append(arr)
        object.__setattr__(self, "action_sets", tuple(sets))
        if self.channel.n_sensors != n:
            raise ConfigError(f"channel.gains: expected {n} gains, got {self.channel.n_sensors}")
        if len(self.models) != n or len(self.filters) != n:
            raise ConfigError(f"expected {n} process models and filters")
        taus = (0,) * n if self.holding_times is None else tuple(int(t) for t in self.holding_times)
        if len(taus) != n or any(t < 0 for t in taus):
            raise ConfigError("holding_times: need one non-negative integer per player")
        object.__setattr__(self, "holding_times", taus)
        if self.energy_caps is not None:
            caps = tuple(float(c) for c in self.energy_caps)
            if len(caps) != n:
                raise ConfigError(f"energy_caps: expected {n} caps, got {len(caps)}")
            for i, (cap, levels) in enumerate(zip(caps, sets)):
                if not levels[0] < cap < levels[-1]:
                    raise ConfigError(
                        f"energy_caps[{i}]: a strict power constraint requires "
                        f"{levels[0]} < cap < {levels[-1]}, got {cap}"
                    )
            object.__setattr__(self, "energy_caps", caps)

    @classmethod
    def build(cls, models, channel, action_sets, energy_caps=None, holding_times=None, ser_curve=None, **kwargs):
        filters = tuple(steady_state_covariance(m) for m in models)
        return cls(
            action_sets=tuple(action_sets),
            channel=channel,
            models=tuple(models),
            filters=filters,
            holding_times=holding_times,
            energy_caps=energy_caps,
            ser_curve=ser_curve or ch.PAPER_CURVE,
            **kwargs,
        )

    @property
    def n_players(self) -> int:
        return len(self.action_sets)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.action_sets)

    @property
    def n_joint(self) -> int:
        return int(np.prod(self.shape))

    @property
    def constrained(self) -> bool:
        return self.energy_caps is not None

    def without_caps(self) -> GameSpec:
        return replace(self, energy_caps=None)

    def with_caps(self, caps) -> GameSpec:
        return replace(self, energy_caps=tuple(caps))

    def with_holding_times(self, taus) -> GameSpec:
        return replace(self, holding_times=tuple(taus))

    def check_capacity(self, cap: int | None = None) -> None:
        cap = self.enumeration_cap if cap is None else cap
        if self.n_joint > cap:
            raise CapacityError(f"joint action space has {self.n_joint} tuples, enumeration cap is {cap}")

    def powers(self, index: Sequence[int]) -> tuple[float, ...]:
        return tuple(float(self.action_sets[i][l]) for i, l in enumerate(index))

    @cached_property
    def sinr_table(self) -> np.ndarray:
        """SINR of every player at every joint action, shape ``(N, m_1, ..., m_N)``."""
        self.check_capacity()
        out = np.empty((self.n_players,) + self.shape)
        for index in itertools.product(*(range(m) for m in self.shape)):
            powers = self.powers(index)
            for i in range(self.n_players):
                out[(i,) + index] = ch.sinr(i, powers, self.channel)
        out.setflags(write=False)
        return out

    @cached_property
    def ser_table(self) -> np.ndarray:
        flat = [ch.ser(g, self.ser_curve) for g in self.sinr_table.ravel()]
        out = np.array(flat).reshape(self.sinr_table.shape)
        out.setflags(write=False)
        return out

    @cached_property
    def trace_gaps(self) -> np.ndarray:
        return np.array([trace_gap(t, f, m) for t, f, m in zip(self.holding_times, self.filters, self.models)])

    @cached_property
    def steady_traces(self) -> np.ndarray:
        return np.array([f.trace for f in self.filters])

    @cached_property
    def utility_table(self) -> np.ndarray:
        """``u_i(a)`` for every player and joint action, shape ``(N, m_1, ..., m_N)``."""
        expand = (slice(None),) + (None,) * self.n_players
        out = self.ser_table * self.trace_gaps[expand] - self.steady_traces[expand]
        out.setflags(write=False)
        return out


@dataclass(frozen=True)
class MixedProfile:
    """Independent mixed strategies, one probability vector per player."""

    strategies: tuple[np.ndarray, ...]

    def __post_init__(self):
        strats = []
        for i, s in enumerate(self.strategies):
            arr = np.array(s, dtype=float).reshape(-1)
            if np.any(arr < -PROB_TOL) or abs(arr.sum() - 1.0) > PROB_TOL:
                raise ConfigError(f"strategy of player {i} is not a probability vector: {arr}")
            arr = np.clip(arr, 0.0, None)
            arr.setflags(write=False)
            strats.append(arr)
        object.__setattr__(self, "strategies", tuple(strats))

    def __len__(self):
        return len(self.strategies)

    def __getitem__(self, i):
        return self.strategies[i]

    def expected_power(self, game: GameSpec) -> np.ndarray:
        return np.array([s @ levels for s, levels in zip(self.strategies, game.action_sets)])

    @classmethod
    def pure(cls, game: GameSpec, levels: Sequence[int]) -> MixedProfile:
        strats = []
        for m, l in zip(game.shape, levels):
            s = np.zeros(m)
            s[l] = 1.0
            strats.append(s)
        return cls(tuple(strats))


@dataclass(frozen=True)
class JointDistribution:
    """Distribution over joint actions, indexed by level indices."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if np.any(p < -PROB_TOL) or abs(p.sum() - 1.0) > PROB_TOL:
            raise ConfigError(f"not a probability distribution (sum={p.sum()!r}, min={p.min()!r})")
        p = np.clip(p, 0.0, None)
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def shape(self):
        return self.probs.shape

    def marginal(self, i: int) -> np.ndarray:
        axes = tuple(j for j in range(self.probs.ndim) if j != i)
        return self.probs.sum(axis=axes)

    def expected_power(self, game: GameSpec) -> np.ndarray:
        return np.array([self.marginal(i) @ levels for i, levels in enumerate(game.action_sets)])

    def support(self):
        """``(level_index_tuple, probability)`` pairs with positive mass."""
        return [(tuple(int(k) for k in idx), float(self.probs[idx])) for idx in zip(*np.nonzero(self.probs))]

    @classmethod
    def point_mass(cls, shape, index) -> JointDistribution:
        p = np.zeros(shape)
        p[tuple(index)] = 1.0
        return cls(p)


@dataclass(frozen=True)
class CorrelationPolicy:
    """Uniform public signal X picks a sensor; the picked one goes high w.p. alpha, the rest w.p. beta."""

    alpha: tuple[float, ...]
    beta: tuple[float, ...]

    def __post_init__(self):
        alpha = tuple(float(a) for a in self.alpha)
        beta = tuple(float(b) for b in self.beta)
        if len(alpha) != len(beta):
            raise ConfigError("alpha and beta must have one entry per player")
        for name, vals in (("alpha", alpha), ("beta", beta)):
            if any(not 0.0 <= v <= 1.0 for v in vals):
                raise ConfigError(f"{name}: entries must lie in [0, 1], got {vals}")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @classmethod
    def uniform(cls, n: int, alpha: float, beta: float) -> CorrelationPolicy:
        return cls((alpha,) * n, (beta,) * n)

    def expected_power(self, game: GameSpec) -> np.ndarray:
        n = game.n_players
        p_high = np.array([(a + (n - 1) * b) / n for a, b in zip(self.alpha, self.beta)])
        bottom = np.array([s[0] for s in game.action_sets])
        top = np.array([s[-1] for s in game.action_sets])
        return bottom + p_high * (top - bottom)


@dataclass(frozen=True)
class ConstrainedCE:
    """Closed-form correlation policy for the energy-constrained game.

    ``alpha_unclamped`` is what the energy identity ``alpha = N/d - (N-1) beta``
    gives before clamping into [0, 1]; it differs from ``policy.alpha`` when
    the identity overshoots.
    """

    policy: CorrelationPolicy
    d: float
    branch: str
    alpha_unclamped: float
    expected_power: np.ndarray
    candidates: dict = field(default_factory=dict)


def utility(i: int, joint_action: Sequence[int], game: GameSpec) -> float:
    """Payoff of player ``i`` at the joint action given by level indices."""
    if len(joint_action) != game.n_players:
        raise ConfigError(f"joint action needs {game.n_players} entries")
    return float(game.utility_table[(i,) + tuple(joint_action)])


def utility_at_powers(i: int, powers: Sequence[float], game: GameSpec) -> float:
    """Payoff of player ``i`` at arbitrary (not necessarily listed) powers."""
    gamma = ch.sinr(i, powers, game.channel)
    return ch.ser(gamma, game.ser_curve) * float(game.trace_gaps[i]) - float(game.steady_traces[i])


def _check_dist_shape(dist: JointDistribution, game: GameSpec) -> None:
    if dist.shape != game.shape:
        raise ConfigError(f"distribution shape {dist.shape} does not match game shape {game.shape}")


def expected_utility(i: int, dist: JointDistribution, game: GameSpec) -> float:
    game.check_capacity()
    _check_dist_shape(dist, game)
    return float(np.sum(dist.probs * game.utility_table[i]))


def expected_utilities(dist: JointDistribution, game: GameSpec) -> np.ndarray:
    return np.array([expected_utility(i, dist, game) for i in range(game.n_players)])


def expected_ser(i: int, dist: JointDistribution, game: GameSpec) -> float:
    game.check_capacity()
    _check_dist_shape(dist, game)
    return float(np.sum(dist.probs * game.ser_table[i]))


def product_distribution(profile: MixedProfile) -> JointDistribution:
    probs = reduce(np.multiply.outer, profile.strategies)
    return JointDistribution(np.asarray(probs, dtype=float))


def _require_unconstrained(game: GameSpec, what: str) -> None:
    if game.constrained:
        raise ContractError(f"{what} applies to the unconstrained game; use the constrained solver or game.without_caps()")


def ne_unconstrained(game: GameSpec) -> MixedProfile:
    """Everyone transmits at the top level with certainty."""
    _require_unconstrained(game, "ne_unconstrained")
    return MixedProfile.pure(game, [m - 1 for m in game.shape])


def ce_unconstrained(game: GameSpec) -> JointDistribution:
    _require_unconstrained(game, "ce_unconstrained")
    return JointDistribution.point_mass(game.shape, [m - 1 for m in game.shape])


def _require_caps(game: GameSpec, what: str) -> tuple[float, ...]:
    if not game.constrained:
        raise ContractError(f"{what} needs energy caps")
    return game.energy_caps


def top_level_probability(levels: np.ndarray, cap: float) -> Fraction:
    """Exact ``(cap - e_bottom) / (e_top - e_bottom)`` on the float values given."""
    lo, hi = Fraction(float(levels[0])), Fraction(float(levels[-1]))
    return (Fraction(cap) - lo) / (hi - lo)


def ne_constrained(game: GameSpec) -> MixedProfile:
    """Two-point NE: top with probability ``1/d``, bottom otherwise, middle levels unused.

    Each player's expected power equals its cap.
    """
    caps = _require_caps(game, "ne_constrained")
    strats = []
    for levels, cap in zip(game.action_sets, caps):
        p_top = top_level_probability(levels, cap)
        s = np.zeros(len(levels))
        s[-1] = float(p_top)
        s[0] = float(1 - p_top)
        strats.append(s)
    return MixedProfile(tuple(strats))


def normalized_top_ratios(game: GameSpec) -> np.ndarray:
    """``d_i = (e_top - e_bottom) / (cap - e_bottom)`` per player."""
    caps = _require_caps(game, "normalized_top_ratios")
    return np.array([(s[-1] - s[0]) / (cap - s[0]) for s, cap in zip(game.action_sets, caps)])


def policy_joint_distribution(policy: CorrelationPolicy, game: GameSpec) -> JointDistribution:
    """Expand the signal mixture into a distribution over joint actions."""
    n = game.n_players
    if len(policy.alpha) != n:
        raise ConfigError(f"policy has {len(policy.alpha)} entries, game has {n} players")
    total = np.zeros(game.shape)
    for x in range(n):
        vecs = []
        for j, m in enumerate(game.shape):
            p_high = policy.alpha[j] if j == x else policy.beta[j]
            v = np.zeros(m)
            v[0] += 1.0 - p_high
            v[-1] += p_high
            vecs.append(v)
        total += reduce(np.multiply.outer, vecs) if n > 1 else vecs[0]
    return JointDistribution(total / n)


def _branch_candidate(n: int, d: float, beta: float) -> tuple[float, float]:
    alpha_raw = n / d - (n - 1) * beta
    return min(1.0, max(0.0, alpha_raw)), alpha_raw


def ce_constrained(game: GameSpec) -> ConstrainedCE:
    """Closed-form correlation policy shared by all players.

    Requires a common normalized top ratio ``d``. Both beta branches are
    formed; a branch is kept only if it agrees with its own alpha/beta
    ordering. If both survive, the branch that lowers every player's expected
    SER wins (this is tau-free, unlike comparing utilities); with no such
    Pareto winner the alpha > beta branch is returned.
    """
    caps = _require_caps(game, "ce_constrained")
    n = game.n_players
    ds = normalized_top_ratios(game)
    if np.max(ds) - np.min(ds) > D_EQUALITY_TOL:
        raise UnsupportedGameError(f"closed-form CE needs equal normalized top ratios, got {ds.tolist()}")
    d = float(ds[0])

    if n == 1:
        alpha = float(top_level_probability(game.action_sets[0], caps[0]))
        policy = CorrelationPolicy((alpha,), (alpha,))
        return ConstrainedCE(policy, d, "single-player", alpha, policy.expected_power(game))

    candidates = {}
    beta_hi = max(0.0, (n / d - 1.0) / (n - 1))
    alpha_hi, raw_hi = _branch_candidate(n, d, beta_hi)
    if alpha_hi > beta_hi:
        candidates["alpha>beta"] = (alpha_hi, beta_hi, raw_hi)
    beta_lo = min(1.0, (n / d) / (n - 1))
    alpha_lo, raw_lo = _branch_candidate(n, d, beta_lo)
    if alpha_lo < beta_lo:
        candidates["alpha<beta"] = (alpha_lo, beta_lo, raw_lo)

    if not candidates:
        raise UnsupportedGameError(f"no branch of the closed form is self-consistent for N={n}, d={d}")
    if len(candidates) == 1:
        branch = next(iter(candidates))
    else:
        sers = {}
        for name, (a, b, _) in candidates.items():
            dist = policy_joint_distribution(CorrelationPolicy.uniform(n, a, b), game)
            sers[name] = np.array([expected_ser(i, dist, game) for i in range(n)])
        if np.all(sers["alpha<beta"] < sers["alpha>beta"]):
            branch = "alpha<beta"
        else:
            branch = "alpha>beta"
    alpha, beta, raw = candidates[branch]
    policy = CorrelationPolicy.uniform(n, alpha, beta)
    return ConstrainedCE(policy, d, branch, raw, policy.expected_power(game), candidates)


def actions_from_uniforms(strategies: Sequence[np.ndarray], u: np.ndarray) -> np.ndarray:
    """Inverse-CDF sampling of independent level indices; ``u`` has shape ``(..., N)``."""
    u = np.asarray(u)
    out = np.empty(u.shape, dtype=np.int64)
    for j, s in enumerate(strategies):
        cdf = np.cumsum(s)
        cdf[-1] = np.inf
        out[..., j] = np.searchsorted(cdf, u[..., j], side="right")
    return out


def correlated_from_uniforms(policy: CorrelationPolicy, shape, u_signal: np.ndarray, u_players: np.ndarray):
    """Map uniforms to ``(signal, level indices)``; signals are 1-based."""
    n = len(shape)
    u_signal = np.asarray(u_signal)
    signal = np.minimum((u_signal * n).astype(np.int64), n - 1)
    alpha = np.asarray(policy.alpha)
    beta = np.asarray(policy.beta)
    chosen = signal[..., None] == np.arange(n)
    p_high = np.where(chosen, alpha, beta)
    high = np.asarray(u_players) < p_high
    top = np.array([m - 1 for m in shape])
    levels = np.where(high, top, 0)
    return signal + 1, levels


def sample_mixed_actions(profile: MixedProfile, rng: np.random.Generator) -> tuple[int, ...]:
    idx = actions_from_uniforms(profile.strategies, rng.random(len(profile)))
    return tuple(int(k) for k in idx)


def sample_correlated_actions(policy: CorrelationPolicy, game: GameSpec, rng: np.random.Generator):
    """Draw the public signal and the resulting joint action (level indices)."""
    u_signal = rng.random()
    u_players = rng.random(game.n_players)
    signal, levels = correlated_from_uniforms(policy, game.shape, np.asarray(u_signal), u_players)
    return int(signal), tuple(int(k) for k in levels)
