"""Independent checks of equilibrium claims by enumeration and linear programming.

Nothing here uses the closed forms in :mod:`sensorgame.game`; the checkers
read only the utility table.

Energy caps change what counts as a legal deviation:

* NE: a deviation is any own mixed strategy whose expected power stays
  within the cap. The best one is a vertex of that polytope, i.e. a pure
  level below the cap or a two-level mix that spends the cap exactly.
* CE: a deviation is a randomized remapping of recommendations that does not
  spend more expected energy than obeying would. The largest gain is found
  through its one-dimensional Lagrangian dual, ``min over lam >= 0`` of
  ``sum_r max_t [G(r, t) - lam * E(r, t)]``. The minimising ``lam`` is the
  player's shadow price of energy, and the reported slacks are the
  recommendation inequalities of the energy-priced game. Gains that would
  need energy beyond obedience but within the cap are reported separately
  as ``unused_cap_gain``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from sensorgame.errors import CapacityError, ConfigError, ContractError, InfeasibleProfileError, NumericError
from sensorgame.game import GameSpec, JointDistribution, MixedProfile, ne_constrained
from sensorgame.simplex import LPInfeasible, LPSolution, certify, linprog_simplex

CAP_TOL = 1e-12
DEFAULT_LP_CAPACITY = 4096
EXACT_LP_LIMIT = 256
CERTIFICATE_TOL = 1e-9
LP_DIGITS = 12


class Deviation(NamedTuple):
    player: int
    from_action: object
    to_action: object


@dataclass
class DeviationReport:
    max_gain: float
    witness: Deviation | None
    gains: np.ndarray
    tol: float

    @property
    def is_equilibrium(self) -> bool:
        return self.max_gain <= self.tol

    def to_dict(self) -> dict:
        return {
            "max_gain": self.max_gain,
            "is_equilibrium": self.is_equilibrium,
            "tolerance": self.tol,
            "gains": self.gains.tolist(),
            "witness": None if self.witness is None else self.witness._asdict(),
        }


@dataclass
class CeReport:
    min_slack: float
    witness: Deviation | None
    tol: float
    slacks: list = field(default_factory=list)
    zero_probability_slacks: list = field(default_factory=list)
    prices: np.ndarray | None = None
    unused_cap_gain: np.ndarray | None = None

    @property
    def is_equilibrium(self) -> bool:
        return self.min_slack >= -self.tol

    def to_dict(self) -> dict:
        out = {
            "min_slack": self.min_slack,
            "is_equilibrium": self.is_equilibrium,
            "tolerance": self.tol,
            "witness": None if self.witness is None else self.witness._asdict(),
            "slacks": self.slacks,
            "zero_probability_slacks": self.zero_probability_slacks,
        }
        if self.prices is not None:
            out["energy_prices"] = self.prices.tolist()
            out["unused_cap_gain"] = self.unused_cap_gain.tolist()
        return out


def own_level_values(i: int, strategies: Sequence[np.ndarray], game: GameSpec) -> np.ndarray:
    """Expected payoff of each own level of player ``i`` when the others play ``strategies``.

    ``strategies`` is a full-length sequence; entry ``i`` is ignored.
    """
    game.check_capacity()
    vals = game.utility_table[i]
    for j in reversed(range(game.n_players)):
        if j != i:
            vals = np.tensordot(vals, np.asarray(strategies[j], dtype=float), axes=([j], [0]))
    return vals


def best_response(i: int, others: Sequence[np.ndarray], game: GameSpec) -> int:
    """Level index maximising player ``i``'s payoff against the others' mixed strategies.

    ``others`` lists the N-1 other players in order. Exact ties go to the
    lower level.
    """
    if len(others) != game.n_players - 1:
        raise ConfigError(f"expected {game.n_players - 1} opponent strategies, got {len(others)}")
    full = list(others[:i]) + [None] + list(others[i:])
    return int(np.argmax(own_level_values(i, full, game)))


def _cap_vertices(levels: np.ndarray, cap: float):
    """Vertices of ``{s in simplex : s . levels <= cap}`` as ``(description, prob vector)``."""
    out = []
    m = len(levels)
    for l in range(m):
        if levels[l] <= cap:
            s = np.zeros(m)
            s[l] = 1.0
            out.append((float(levels[l]), s))
    for lo in range(m):
        for hi in range(lo + 1, m):
            if levels[lo] < cap < levels[hi]:
                p = (cap - levels[lo]) / (levels[hi] - levels[lo])
                s = np.zeros(m)
                s[hi], s[lo] = p, 1.0 - p
                out.append((((float(levels[lo]), 1.0 - p), (float(levels[hi]), p)), s))
    return out


def _check_caps(expected_power: np.ndarray, game: GameSpec) -> None:
    for i, (e, cap) in enumerate(zip(expected_power, game.energy_caps)):
        if e > cap + CAP_TOL * max(1.0, abs(cap)):
            raise InfeasibleProfileError(f"player {i} expects power {e!r}, above its cap {cap!r}")


def check_ne(profile: MixedProfile, game: GameSpec, tol: float = 1e-9) -> DeviationReport:
    """Largest unilateral improvement available to any player."""
    if len(profile) != game.n_players or tuple(len(s) for s in profile.strategies) != game.shape:
        raise ConfigError("profile does not match the game's action sets")
    if game.constrained:
        _check_caps(profile.expected_power(game), game)
    gains = np.zeros(game.n_players)
    witnesses = []
    for i in range(game.n_players):
        s_i = profile[i]
        vals = own_level_values(i, profile.strategies, game)
        current = float(s_i @ vals)
        levels = game.action_sets[i]
        if game.constrained:
            options = [(desc, float(s @ vals)) for desc, s in _cap_vertices(levels, game.energy_caps[i])]
        else:
            options = [(float(levels[l]), float(vals[l])) for l in range(len(levels))]
        to_desc, best = max(options, key=lambda o: o[1])
        gains[i] = max(0.0, best - current)
        support = np.nonzero(s_i > 0)[0]
        worst = support[np.argmin(vals[support])]
        witnesses.append(Deviation(i, float(levels[worst]), to_desc))
    k = int(np.argmax(gains))
    max_gain = float(gains[k])
    return DeviationReport(max_gain, witnesses[k] if max_gain > 0 else None, gains, tol)


def _dual_min(G: np.ndarray, E: np.ndarray, offset: float = 0.0):
    """Minimise ``sum_r max_t (G - lam E)[r, t] + lam * offset`` over ``lam >= 0``."""
    cands = {0.0}
    for r in range(G.shape[0]):
        for t, t2 in itertools.combinations(range(G.shape[1]), 2):
            de = E[r, t] - E[r, t2]
            if de != 0:
                lam = (G[r, t] - G[r, t2]) / de
                if lam > 0:
                    cands.add(float(lam))
    best_val, best_lam = None, None
    for lam in sorted(cands):
        val = float(np.sum(np.max(G - lam * E, axis=1)) + lam * offset)
        if best_val is None or val < best_val:
            best_val, best_lam = val, lam
    return best_lam, best_val


def check_ce(dist: JointDistribution, game: GameSpec, tol: float = 1e-9) -> CeReport:
    """Smallest recommendation-obedience slack over all (player, recommendation, transition).

    Slacks are conditional on the recommendation, as in the usual CE
    inequalities; zero-probability recommendations are reported against the
    others' marginal for information only.
    """
    game.check_capacity()
    if dist.shape != game.shape:
        raise ConfigError(f"distribution shape {dist.shape} does not match game shape {game.shape}")
    if game.constrained:
        _check_caps(dist.expected_power(game), game)
    n = game.n_players
    slacks, info = [], []
    prices = np.zeros(n) if game.constrained else None
    unused = np.zeros(n) if game.constrained else None
    min_slack, witness = np.inf, None
    for i in range(n):
        m = game.shape[i]
        S = np.moveaxis(dist.probs, i, 0).reshape(m, -1)
        U = np.moveaxis(game.utility_table[i], i, 0).reshape(m, -1)
        W = S @ U.T
        G = W - np.diag(W)[:, None]
        P = S.sum(axis=1)
        levels = game.action_sets[i]
        E = np.zeros((m, m))
        lam = 0.0
        if game.constrained:
            E = P[:, None] * (levels[None, :] - levels[:, None])
            lam, _ = _dual_min(G, E)
            prices[i] = lam
            obey = float(P @ levels)
            _, unused[i] = _dual_min(G, E, offset=game.energy_caps[i] - obey)
        H = G - lam * E
        others = S.sum(axis=0)
        for r in range(m):
            for t in range(m):
                if t == r:
                    continue
                entry = {"player": i, "recommended": float(levels[r]), "transition": float(levels[t])}
                if P[r] > 0:
                    value = float(-H[r, t] / P[r])
                    slacks.append({**entry, "slack": value})
                    if value < min_slack:
                        min_slack, witness = value, Deviation(i, float(levels[r]), float(levels[t]))
                else:
                    value = float(others @ (U[r] - U[t]) + lam * (levels[t] - levels[r]))
                    info.append({**entry, "slack": value})
    if min_slack == np.inf:
        min_slack = 0.0
    if min_slack >= 0:
        witness = None
    return CeReport(float(min_slack), witness, tol, slacks, info, prices, unused)


def energy_prices(game: GameSpec) -> np.ndarray:
    """Per-player shadow price of energy at the closed-form constrained NE.

    The price makes each player indifferent between its bottom and top level
    against the others' NE strategies.
    """
    profile = ne_constrained(game)
    out = np.zeros(game.n_players)
    for i in range(game.n_players):
        vals = own_level_values(i, profile.strategies, game)
        levels = game.action_sets[i]
        out[i] = (vals[-1] - vals[0]) / (levels[-1] - levels[0])
    return out


@dataclass
class LpCeResult:
    distribution: JointDistribution
    objective: float
    certificate: dict
    exact: bool
    prices: np.ndarray
    x_exact: list | None = None


def solve_ce_lp(
    game: GameSpec,
    objective="utilitarian",
    caps: bool = False,
    utility_floor: Sequence[float] | None = None,
    exact: bool | None = None,
    capacity: int = DEFAULT_LP_CAPACITY,
) -> LpCeResult:
    """Correlated equilibrium maximising a linear welfare objective.

    ``objective`` is ``"utilitarian"`` (sum of payoffs) or a weight per
    player. With ``caps=True`` the recommendation inequalities are those of
    the energy-priced game (prices from :func:`energy_prices`) and each
    player's expected power is bounded by its cap; the constrained NE product
    distribution is then always feasible. ``utility_floor`` adds lower
    bounds on each player's expected payoff.
    """
    if game.n_joint > capacity:
        raise CapacityError(f"LP over {game.n_joint} joint actions exceeds capacity {capacity}")
    if caps and not game.constrained:
        raise ContractError("caps=True needs a game with energy caps")
    n = game.n_players
    shape = game.shape
    if isinstance(objective, str):
        if objective != "utilitarian":
            raise ConfigError(f"unknown objective {objective!r}")
        weights = np.ones(n)
    else:
        weights = np.asarray(objective, dtype=float)
        if weights.shape != (n,):
            raise ConfigError(f"objective weights need {n} entries")
    prices = energy_prices(game) if caps else np.zeros(n)

    index = np.indices(shape).reshape(n, -1)
    n_var = index.shape[1]
    Uflat = game.utility_table.reshape(n, -1)
    rows, rhs = [], []
    for i in range(n):
        levels = game.action_sets[i]
        Ui = game.utility_table[i]
        for r in range(shape[i]):
            mask = index[i] == r
            for t in range(shape[i]):
                if t == r:
                    continue
                swapped = index.copy()
                swapped[i] = t
                u_t = Ui[tuple(swapped)]
                row = np.zeros(n_var)
                row[mask] = (u_t - Uflat[i])[mask] - prices[i] * (levels[t] - levels[r])
                rows.append(row)
                rhs.append(0.0)
    if caps:
        for i in range(n):
            rows.append(game.action_sets[i][index[i]])
            rhs.append(game.energy_caps[i])
    if utility_floor is not None:
        for i, floor in enumerate(utility_floor):
            rows.append(-Uflat[i])
            rhs.append(-float(floor))
    A_ub, b_ub = np.array(rows).reshape(-1, n_var), np.array(rhs)
    A_eq, b_eq = np.ones((1, n_var)), np.ones(1)
    c = weights @ Uflat

    use_exact = n_var <= EXACT_LP_LIMIT if exact is None else exact
    try:
        sol = linprog_simplex(c, A_ub, b_ub, A_eq, b_eq, exact=use_exact, digits=LP_DIGITS)
    except LPInfeasible as exc:
        raise NumericError(f"CE linear program is infeasible: {exc}") from exc
    if use_exact:
        # optimality is certified on the rounded data the exact solve used;
        # near-tied payoffs can give huge duals that would amplify rounding
        data = [np.round(v, LP_DIGITS) for v in (c, A_ub, b_ub, A_eq, b_eq)]
        cert = certify(sol, *data)
        raw = certify(LPSolution(sol.x, sol.objective, sol.dual_ub, sol.dual_eq, sol.basis, False), c, A_ub, b_ub, A_eq, b_eq)
        cert["primal_unrounded"] = raw["primal"]
        cert["max"] = max(cert["max"], raw["primal"])
        sol.certificate = cert
    else:
        cert = certify(sol, c, A_ub, b_ub, A_eq, b_eq)
    if cert["max"] > CERTIFICATE_TOL:
        raise NumericError(f"LP optimality certificate failed: {cert}")
    probs = np.clip(sol.x, 0.0, None)
    probs = probs / probs.sum()
    return LpCeResult(
        distribution=JointDistribution(probs.reshape(shape)),
        objective=float(c @ sol.x),
        certificate=cert,
        exact=use_exact,
        prices=prices,
        x_exact=sol.x_exact,
    )


def iterated_elimination(game: GameSpec) -> list[list[int]]:
    """Iteratively delete pure actions strictly dominated by another pure action.

    Returns the surviving level indices per player. No correlated
    equilibrium can recommend a deleted action.
    """
    game.check_capacity()
    alive = [list(range(m)) for m in game.shape]
    changed = True
    while changed:
        changed = False
        for i in range(game.n_players):
            sub = game.utility_table[i][np.ix_(*alive)]
            sub = np.moveaxis(sub, i, 0).reshape(len(alive[i]), -1)
            keep = []
            for r in range(len(alive[i])):
                dominated = any(np.all(sub[t] > sub[r]) for t in range(len(alive[i])) if t != r)
                if not dominated:
                    keep.append(r)
            if len(keep) < len(alive[i]):
                alive[i] = [alive[i][k] for k in keep]
                changed = True
    return alive
