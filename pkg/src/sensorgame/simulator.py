"""Seeded Monte Carlo of the closed loop: policy -> SINR -> arrivals -> holding times.

Every run owns two random streams derived from ``(seed, policy_index,
run_index)`` with :class:`numpy.random.SeedSequence` spawn keys: stream 0
drives the signal, actions and arrivals, stream 1 the process and
measurement noise of the full-state mode. Runs are therefore reproducible in
isolation, and adding a policy never changes another policy's draws.

In covariance-only mode the remote error covariance is read off the holding
time, ``P(k) = h^tau(k)(P_bar)``, so no state vectors are simulated.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from sensorgame import channel as ch
from sensorgame import game as gm
from sensorgame.config import PolicySpec, SimulationConfig
from sensorgame.errors import ConfigError, SensorGameError, UnsupportedGameError
from sensorgame.estimation import KalmanState, holding_time_update, local_kalman_step, remote_trace_table

log = logging.getLogger(__name__)

CHUNK_SIZE = 10_000


class MixedSampler:
    signal_used = False

    def __init__(self, profile: gm.MixedProfile):
        self.profile = profile

    def draw(self, u_signal, u_players):
        levels = gm.actions_from_uniforms(self.profile.strategies, u_players)
        return np.zeros(np.shape(u_signal), dtype=np.int64), levels


class CorrelatedSampler:
    signal_used = True

    def __init__(self, policy: gm.CorrelationPolicy, shape):
        self.policy = policy
        self.shape = shape

    def draw(self, u_signal, u_players):
        return gm.correlated_from_uniforms(self.policy, self.shape, u_signal, u_players)


class JointSampler:
    """Inverse-CDF draw of a whole joint action from the signal uniform."""

    signal_used = False

    def __init__(self, dist: gm.JointDistribution):
        self.dist = dist
        self.cdf = np.cumsum(dist.probs.ravel())
        self.cdf[-1] = np.inf

    def draw(self, u_signal, u_players):
        flat = np.searchsorted(self.cdf, np.asarray(u_signal), side="right")
        levels = np.stack(np.unravel_index(flat, self.dist.shape), axis=-1)
        return np.zeros(np.shape(u_signal), dtype=np.int64), levels


def resolve_policy(spec: PolicySpec, game: gm.GameSpec):
    """Turn a configured policy into ``(sampler, description)``."""
    n = game.n_players
    if spec.kind == "ne":
        if game.constrained:
            profile = gm.ne_constrained(game)
        else:
            profile = gm.ne_unconstrained(game)
        return MixedSampler(profile), {"kind": "ne", "profile": [s.tolist() for s in profile.strategies]}
    if spec.kind == "ce":
        if not game.constrained:
            dist = gm.ce_unconstrained(game)
            return JointSampler(dist), {"kind": "ce", "support": [[list(a), p] for a, p in dist.support()]}
        sol = gm.ce_constrained(game)
        desc = {
            "kind": "ce",
            "alpha": sol.policy.alpha[0],
            "beta": sol.policy.beta[0],
            "alpha_unclamped": sol.alpha_unclamped,
            "branch": sol.branch,
            "d": sol.d,
            "expected_power": sol.expected_power.tolist(),
        }
        return CorrelatedSampler(sol.policy, game.shape), desc
    if spec.kind == "ce_override":
        policy = gm.CorrelationPolicy.uniform(n, spec.alpha, spec.beta)
        desc = {
            "kind": "ce_override",
            "alpha": spec.alpha,
            "beta": spec.beta,
            "expected_power": policy.expected_power(game).tolist(),
        }
        return CorrelatedSampler(policy, game.shape), desc
    if spec.kind == "fixed":
        profile = gm.MixedProfile(tuple(np.array(s) for s in spec.profile))
        if tuple(len(s) for s in profile.strategies) != game.shape:
            raise ConfigError(f"policy {spec.name!r}: profile does not match the action sets")
        return MixedSampler(profile), {"kind": "fixed", "profile": [s.tolist() for s in profile.strategies]}
    raise ConfigError(f"unknown policy kind {spec.kind!r}")


@dataclass
class SimulationContext:
    config: SimulationConfig
    game: gm.GameSpec
    samplers: list
    descriptions: list
    trace_tables: np.ndarray  # (N, horizon + 1)


def build_context(config: SimulationConfig) -> SimulationContext:
    game = config.build_game(constrained=config.energy_caps is not None)
    samplers, descriptions = [], []
    for spec in config.policies:
        sampler, desc = resolve_policy(spec, game)
        samplers.append(sampler)
        descriptions.append(desc)
    tables = np.array([remote_trace_table(config.horizon, f, m) for f, m in zip(game.filters, game.models)])
    return SimulationContext(config, game, samplers, descriptions, tables)


def run_streams(seed: int, policy_index: int, run_index: int):
    """``(game_rng, noise_rng)`` for one run."""
    streams = []
    for purpose in (0, 1):
        ss = np.random.SeedSequence(seed, spawn_key=(policy_index, run_index, purpose))
        streams.append(np.random.Generator(np.random.PCG64(ss)))
    return streams


def _run_uniforms(seed, policy_index, run_index, horizon, n):
    game_rng, _ = run_streams(seed, policy_index, run_index)
    # columns: signal | per-player action | per-player arrival
    return game_rng.random((horizon, 1 + 2 * n))


@dataclass
class GroundTruthTrajectory:
    states: list  # per sensor (H+1, n)
    measurements: list  # per sensor (H, m)
    process_noise: list
    measurement_noise: list
    local_estimates: list
    remote_estimates: list


@dataclass
class SimulationTrace:
    policy: str
    run_index: int
    signal: np.ndarray
    levels: np.ndarray
    powers: np.ndarray
    sinr: np.ndarray
    arrivals: np.ndarray
    taus: np.ndarray
    traces: np.ndarray
    utilities: np.ndarray
    ground_truth: GroundTruthTrajectory | None = None
    sq_errors: np.ndarray | None = None


def _policy_index(config: SimulationConfig, policy) -> int:
    if isinstance(policy, PolicySpec):
        policy = policy.name
    if isinstance(policy, (int, np.integer)):
        if not 0 <= policy < len(config.policies):
            raise ConfigError(f"policy index {policy} out of range")
        return int(policy)
    return config.policy_index(policy)


def run_once(config: SimulationConfig, policy, run_index: int, context: SimulationContext | None = None, full_state: bool | None = None) -> SimulationTrace:
    """Simulate one run step by step. Steps are numbered 1..horizon; ``tau(0) = 0``."""
    ctx = context or build_context(config)
    game = ctx.game
    k_pol = _policy_index(config, policy)
    n, horizon = game.n_players, config.horizon
    full_state = config.full_state_sim if full_state is None else full_state

    u = _run_uniforms(config.seed, k_pol, run_index, horizon, n)
    signal, levels = ctx.samplers[k_pol].draw(u[:, 0], u[:, 1 : n + 1])
    u_arrival = u[:, n + 1 :]

    powers = np.empty((horizon, n))
    gammas = np.empty((horizon, n))
    arrivals = np.zeros((horizon, n), dtype=np.int64)
    taus = np.zeros((horizon, n), dtype=np.int64)
    traces = np.empty((horizon, n))
    utilities = np.empty((horizon, n))
    tau = [0] * n
    for k in range(horizon):
        pw = game.powers(levels[k])
        powers[k] = pw
        for i in range(n):
            gamma = ch.sinr(i, pw, game.channel)
            f = ch.ser(gamma, game.ser_curve)
            gap = ctx.trace_tables[i, 0] - ctx.trace_tables[i, tau[i] + 1]
            utilities[k, i] = f * gap - ctx.trace_tables[i, 0]
            eta = u_arrival[k, i] < 1.0 - f
            tau[i] = holding_time_update(tau[i], eta)
            gammas[k, i] = gamma
            arrivals[k, i] = eta
            taus[k, i] = tau[i]
            traces[k, i] = ctx.trace_tables[i, tau[i]]

    trace = SimulationTrace(
        policy=config.policies[k_pol].name,
        run_index=run_index,
        signal=signal,
        levels=levels,
        powers=powers,
        sinr=gammas,
        arrivals=arrivals,
        taus=taus,
        traces=traces,
        utilities=utilities,
    )
    if full_state:
        _, noise_rng = run_streams(config.seed, k_pol, run_index)
        _simulate_states(trace, game, noise_rng)
    return trace


def _simulate_states(trace: SimulationTrace, game: gm.GameSpec, rng: np.random.Generator) -> None:
    """Evolve plant, local filter and remote estimator alongside a recorded arrival sequence.

    The local filter starts at its steady state: ``x_hat_s(0) = 0`` and the
    initial estimation error is drawn from N(0, P_bar), so the local error
    covariance is P_bar at every step.
    """
    horizon, n = trace.arrivals.shape
    gt = GroundTruthTrajectory([], [], [], [], [], [])
    sq = np.empty((horizon, n))
    for i, (model, filt) in enumerate(zip(game.models, game.filters)):
        nx, ny = model.n_states, model.n_outputs
        x = rng.multivariate_normal(np.zeros(nx), filt.p_bar)
        state = KalmanState(np.zeros(nx), filt.p_bar)
        remote = np.zeros(nx)
        xs, ys, ws, vs, locs, rems = [x], [], [], [], [state.x_hat], [remote]
        for k in range(horizon):
            w = rng.multivariate_normal(np.zeros(nx), model.q_cov)
            v = rng.multivariate_normal(np.zeros(ny), model.r_cov)
            x = model.a_matrix @ x + w
            y = model.c_matrix @ x + v
            state = local_kalman_step(state, y, model)
            if trace.arrivals[k, i]:
                remote = state.x_hat
            else:
                remote = model.a_matrix @ remote
            err = x - remote
            sq[k, i] = float(err @ err)
            xs.append(x)
            ys.append(y)
            ws.append(w)
            vs.append(v)
            locs.append(state.x_hat)
            rems.append(remote)
        gt.states.append(np.array(xs))
        gt.measurements.append(np.array(ys))
        gt.process_noise.append(np.array(ws))
        gt.measurement_noise.append(np.array(vs))
        gt.local_estimates.append(np.array(locs))
        gt.remote_estimates.append(np.array(rems))
    trace.ground_truth = gt
    trace.sq_errors = sq


@dataclass
class Moments:
    """Count, mean and centred sum of squares, merged with Chan's update."""

    count: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def from_samples(cls, x: np.ndarray) -> Moments:
        mean = x.mean(axis=0)
        return cls(x.shape[0], mean, ((x - mean) ** 2).sum(axis=0))

    def merge(self, other: Moments) -> Moments:
        if self.count == 0:
            return other
        if other.count == 0:
            return self
        total = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.count / total)
        m2 = self.m2 + other.m2 + delta**2 * (self.count * other.count / total)
        return Moments(total, mean, m2)

    @property
    def stderr(self) -> np.ndarray:
        if self.count < 2:
            return np.zeros_like(self.mean)
        return np.sqrt(self.m2 / (self.count - 1) / self.count)


@dataclass
class PartialAggregate:
    traces: Moments
    arrivals: np.ndarray  # successes per sensor
    sq_errors: Moments | None = None

    def merge(self, other: PartialAggregate) -> PartialAggregate:
        sq = None
        if self.sq_errors is not None and other.sq_errors is not None:
            sq = self.sq_errors.merge(other.sq_errors)
        return PartialAggregate(self.traces.merge(other.traces), self.arrivals + other.arrivals, sq)


def simulate_batch(ctx: SimulationContext, policy_index: int, run_indices: Sequence[int]) -> dict:
    """Vectorized covariance-only simulation of many runs; identical draws to :func:`run_once`."""
    config, game = ctx.config, ctx.game
    n, horizon = game.n_players, config.horizon
    u = np.stack([_run_uniforms(config.seed, policy_index, r, horizon, n) for r in run_indices])
    signal, levels = ctx.samplers[policy_index].draw(u[..., 0], u[..., 1 : n + 1])
    flat = np.ravel_multi_index(tuple(np.moveaxis(levels, -1, 0)), game.shape)
    ser = np.stack([game.ser_table[i].ravel()[flat] for i in range(n)], axis=-1)
    arrivals = u[..., n + 1 :] < 1.0 - ser
    taus = np.zeros(arrivals.shape, dtype=np.int64)
    tau = np.zeros((len(run_indices), n), dtype=np.int64)
    for k in range(horizon):
        tau = np.where(arrivals[:, k], 0, tau + 1)
        taus[:, k] = tau
    traces = np.stack([ctx.trace_tables[i][taus[..., i]] for i in range(n)], axis=-1)
    return {"signal": signal, "levels": levels, "arrivals": arrivals, "taus": taus, "traces": traces}


def _partial(config: SimulationConfig, policy_index: int, start: int, stop: int, full_state: bool) -> PartialAggregate:
    ctx = build_context(config)
    runs = range(start, stop)
    if full_state:
        recs = [run_once(config, policy_index, r, context=ctx, full_state=True) for r in runs]
        traces = np.stack([t.traces for t in recs])
        arrivals = np.stack([t.arrivals for t in recs])
        sq = Moments.from_samples(np.stack([t.sq_errors for t in recs]))
    else:
        out = simulate_batch(ctx, policy_index, runs)
        traces, arrivals, sq = out["traces"], out["arrivals"], None
    return PartialAggregate(Moments.from_samples(traces), arrivals.sum(axis=(0, 1)), sq)


@dataclass
class AggregateResult:
    policies: tuple[str, ...]
    mean: np.ndarray  # (P, H, N)
    stderr: np.ndarray
    runs: int
    horizon: int
    arrival_counts: np.ndarray  # (P, N)
    sq_error_mean: np.ndarray | None = None
    sq_error_stderr: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def policy(self, name: str) -> int:
        return self.policies.index(name)

    @property
    def arrival_rate(self) -> np.ndarray:
        return self.arrival_counts / (self.runs * self.horizon)


def _config_echo(config: SimulationConfig, descriptions) -> dict:
    return {
        "seed": config.seed,
        "runs": config.runs,
        "horizon": config.horizon,
        "full_state_sim": config.full_state_sim,
        "channel": {
            "gains": list(config.channel.gains),
            "spreading_gain": config.channel.spreading_gain,
            "noise": config.channel.noise,
        },
        "ser_curve": config.ser_curve.kind,
        "actions": [list(a) for a in config.action_sets],
        "energy_caps": None if config.energy_caps is None else list(config.energy_caps),
        "policies": {p.name: desc for p, desc in zip(config.policies, descriptions)},
    }


def _alpha_check(ctx: SimulationContext) -> dict | None:
    """Closed-form CE parameters next to every configured override."""
    if not ctx.game.constrained:
        return None
    try:
        sol = gm.ce_constrained(ctx.game)
    except UnsupportedGameError as exc:
        return {"closed_form": None, "reason": str(exc)}
    out = {
        "closed_form": {
            "alpha": sol.policy.alpha[0],
            "alpha_unclamped": sol.alpha_unclamped,
            "beta": sol.policy.beta[0],
            "branch": sol.branch,
            "expected_power": sol.expected_power.tolist(),
        },
        "overrides": {},
    }
    for spec, desc in zip(ctx.config.policies, ctx.descriptions):
        if spec.kind == "ce_override":
            out["overrides"][spec.name] = {
                "alpha": spec.alpha,
                "beta": spec.beta,
                "alpha_discrepancy": sol.policy.alpha[0] - spec.alpha,
                "beta_discrepancy": sol.policy.beta[0] - spec.beta,
                "expected_power": desc["expected_power"],
                "cap_slack": [c - e for c, e in zip(ctx.game.energy_caps, desc["expected_power"])],
            }
    return out


def monte_carlo(config: SimulationConfig, workers: int = 1, chunk_size: int = CHUNK_SIZE, full_state: bool | None = None) -> AggregateResult:
    """Run every configured policy ``config.runs`` times and aggregate per (policy, step, sensor).

    Work is split into fixed chunks of run indices and merged in chunk order,
    so the result does not depend on ``workers``.
    """
    if not config.policies:
        raise ConfigError("policies: nothing to simulate")
    full_state = config.full_state_sim if full_state is None else full_state
    ctx = build_context(config)
    chunks = [(s, min(s + chunk_size, config.runs)) for s in range(0, config.runs, chunk_size)]
    jobs = [(config, k, s, e, full_state) for k in range(len(config.policies)) for s, e in chunks]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_partial, *zip(*jobs)))
    else:
        parts = [_partial(*job) for job in jobs]

    n_pol = len(config.policies)
    per_policy = []
    for k in range(n_pol):
        agg = None
        for part in parts[k * len(chunks) : (k + 1) * len(chunks)]:
            agg = part if agg is None else agg.merge(part)
        per_policy.append(agg)
        log.info("policy %s: %d runs aggregated", config.policies[k].name, agg.traces.count)

    result = AggregateResult(
        policies=tuple(p.name for p in config.policies),
        mean=np.stack([a.traces.mean for a in per_policy]),
        stderr=np.stack([a.traces.stderr for a in per_policy]),
        runs=config.runs,
        horizon=config.horizon,
        arrival_counts=np.stack([a.arrivals for a in per_policy]),
        meta={"config": _config_echo(config, ctx.descriptions), "ce_parameters": _alpha_check(ctx)},
    )
    if full_state:
        result.sq_error_mean = np.stack([a.sq_errors.mean for a in per_policy])
        result.sq_error_stderr = np.stack([a.sq_errors.stderr for a in per_policy])
    return result


def _gap_block(agg: AggregateResult, base: int, other: int) -> dict:
    gap = agg.mean[base, -1] - agg.mean[other, -1]
    se = np.sqrt(agg.stderr[base, -1] ** 2 + agg.stderr[other, -1] ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, gap / se, np.inf * np.sign(gap))
    inversions = [float((gap[j + 1] - gap[j]) / np.hypot(se[j], se[j + 1])) if np.hypot(se[j], se[j + 1]) > 0 else 0.0 for j in range(len(gap) - 1)]
    return {
        "gap": gap.tolist(),
        "stderr": se.tolist(),
        "z": [float(v) for v in z],
        "non_increasing_across_sensors": bool(np.all(np.diff(gap) <= 0)),
        "max_inversion_in_stderr": max([0.0] + inversions),
    }


def summarize(agg: AggregateResult) -> dict:
    summary = {
        "runs": agg.runs,
        "horizon": agg.horizon,
        "config": agg.meta.get("config"),
        "ce_parameters": agg.meta.get("ce_parameters"),
        "terminal": {
            name: {"mean": agg.mean[k, -1].tolist(), "stderr": agg.stderr[k, -1].tolist()}
            for k, name in enumerate(agg.policies)
        },
        "arrival_rate": {name: agg.arrival_rate[k].tolist() for k, name in enumerate(agg.policies)},
        "gaps": {},
    }
    if "ne" in agg.policies:
        base = agg.policy("ne")
        for k, name in enumerate(agg.policies):
            if k != base:
                summary["gaps"][f"ne-{name}"] = _gap_block(agg, base, k)
    if agg.sq_error_mean is not None:
        summary["full_state"] = {
            name: {"terminal_sq_error": agg.sq_error_mean[k, -1].tolist()} for k, name in enumerate(agg.policies)
        }
    return summary


def emit_results(agg: AggregateResult, out_dir) -> list[Path]:
    """Write ``<policy>.csv`` per policy and ``summary.json``; output is byte-stable."""
    out_dir = Path(out_dir)
    written = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for k, name in enumerate(agg.policies):
            path = out_dir / f"{name}.csv"
            with path.open("w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["step", "sensor", "mean_trace", "stderr", "runs"])
                for step in range(agg.horizon):
                    for i in range(agg.mean.shape[2]):
                        writer.writerow([step + 1, i + 1, repr(float(agg.mean[k, step, i])), repr(float(agg.stderr[k, step, i])), agg.runs])
            written.append(path)
        path = out_dir / "summary.json"
        path.write_text(json.dumps(summarize(agg), indent=2, sort_keys=True, allow_nan=True) + "\n")
        written.append(path)
    except OSError as exc:
        raise SensorGameError(f"{exc.filename or out_dir}: cannot write results: {exc.strerror or exc}") from exc
    return written


def audit_arrivals(traces: Sequence[SimulationTrace], game: gm.GameSpec, sigmas: float = 3.0) -> dict:
    """Compare logged arrival rates with ``1 - ser(gamma)`` per (sensor, joint action).

    Cells whose expected count of successes or failures is below 5 are skipped.
    """
    counts = {}
    for tr in traces:
        for k in range(tr.levels.shape[0]):
            key = tuple(int(v) for v in tr.levels[k])
            for i in range(game.n_players):
                c = counts.setdefault((i, key), [0, 0])
                c[0] += 1
                c[1] += int(tr.arrivals[k, i])
    worst, checked = 0.0, 0
    for (i, key), (n, s) in counts.items():
        p = 1.0 - game.ser_table[(i,) + key]
        if n * p < 5 or n * (1 - p) < 5:
            continue
        z = abs(s / n - p) / np.sqrt(p * (1 - p) / n)
        worst = max(worst, z)
        checked += 1
    return {"cells_checked": checked, "max_z": worst, "passed": worst <= sigmas}


def audit_signal(traces: Sequence[SimulationTrace], n: int, sigmas: float = 3.0) -> dict:
    signals = np.concatenate([tr.signal for tr in traces])
    freq = np.array([(signals == x).mean() for x in range(1, n + 1)])
    se = np.sqrt((1 / n) * (1 - 1 / n) / signals.size)
    z = np.abs(freq - 1 / n) / se
    return {"frequencies": freq.tolist(), "max_z": float(z.max()), "passed": bool(z.max() <= sigmas)}
