"""JSON configuration for the simulator and CLI.

Schema (all matrices may be given as scalars when 1x1)::

    {
      "processes": [{"A": .., "C": .., "Q": .., "R": .., "initial_cov": ..}, ...],
      "channel": {"gains": [..], "spreading_gain": L, "noise": sigma2},
      "ser_curve": {"kind": "paper_qfunc"} | {"kind": "user_table", "table": [[gamma, ser], ..]},
      "actions": [[e_1, .., e_m], ...],
      "energy_caps": [..] | null,
      "horizon": 50, "runs": 100000, "seed": 20170707,
      "full_state_sim": false,
      "policies": [
        {"name": "ne", "kind": "ne"},
        {"name": "ce", "kind": "ce_override", "alpha": 0.75, "beta": 0.25},
        {"name": "ce_closed_form", "kind": "ce"},
        {"name": "silent", "kind": "fixed", "profile": [[1, 0], ...]}
      ]
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from sensorgame.channel import PAPER_QFUNC, ChannelParams, SerCurve
from sensorgame.errors import ConfigError, SensorGameError
from sensorgame.estimation import ProcessModel
from sensorgame.game import GameSpec

POLICY_KINDS = ("ne", "ce", "ce_override", "fixed")


@dataclass(frozen=True)
class PolicySpec:
    name: str
    kind: str
    alpha: float | None = None
    beta: float | None = None
    profile: tuple | None = None

    def to_dict(self) -> dict:
        out = {"name": self.name, "kind": self.kind}
        if self.kind == "ce_override":
            out.update(alpha=self.alpha, beta=self.beta)
        if self.kind == "fixed":
            out["profile"] = [list(p) for p in self.profile]
        return out


@dataclass(frozen=True)
class SimulationConfig:
    processes: tuple[ProcessModel, ...]
    channel: ChannelParams
    action_sets: tuple[tuple[float, ...], ...]
    energy_caps: tuple[float, ...] | None
    ser_curve: SerCurve = SerCurve()
    horizon: int = 50
    runs: int = 1000
    seed: int = 0
    policies: tuple[PolicySpec, ...] = field(default_factory=tuple)
    full_state_sim: bool = False
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError(f"horizon: must be >= 1, got {self.horizon}")
        if self.runs < 1:
            raise ConfigError(f"runs: must be >= 1, got {self.runs}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed: must be a 64-bit unsigned integer, got {self.seed}")
        names = [p.name for p in self.policies]
        if len(set(names)) != len(names):
            raise ConfigError(f"policies: names must be unique, got {names}")

    @property
    def n_sensors(self) -> int:
        return len(self.processes)

    def build_game(self, constrained: bool = True) -> GameSpec:
        caps = self.energy_caps if constrained else None
        return GameSpec.build(self.processes, self.channel, self.action_sets, energy_caps=caps, ser_curve=self.ser_curve)

    def policy_index(self, name: str) -> int:
        for k, p in enumerate(self.policies):
            if p.name == name:
                return k
        raise ConfigError(f"unknown policy {name!r}; configured: {[p.name for p in self.policies]}")

    def with_overrides(self, **kwargs) -> SimulationConfig:
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})


def _require(block: dict, key: str, where: str):
    if not isinstance(block, dict):
        raise ConfigError(f"{where}: expected an object")
    if key not in block or block[key] is None:
        raise ConfigError(f"{where}.{key}: required field missing")
    return block[key]


def _parse_int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    return value


def _parse_policy(raw, k: int, n: int) -> PolicySpec:
    where = f"policies[{k}]"
    kind = _require(raw, "kind", where)
    if kind not in POLICY_KINDS:
        raise ConfigError(f"{where}.kind: expected one of {POLICY_KINDS}, got {kind!r}")
    name = raw.get("name", kind)
    if kind == "ce_override":
        alpha = float(_require(raw, "alpha", where))
        beta = float(_require(raw, "beta", where))
        for key, v in (("alpha", alpha), ("beta", beta)):
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{where}.{key}: must lie in [0, 1], got {v}")
        return PolicySpec(name, kind, alpha=alpha, beta=beta)
    if kind == "fixed":
        profile = _require(raw, "profile", where)
        if len(profile) != n:
            raise ConfigError(f"{where}.profile: expected {n} probability vectors")
        return PolicySpec(name, kind, profile=tuple(tuple(float(x) for x in s) for s in profile))
    return PolicySpec(name, kind)


def parse_config(raw: dict) -> SimulationConfig:
    """Validate a decoded JSON document and build a :class:`SimulationConfig`."""
    try:
        procs_raw = _require(raw, "processes", "config")
        processes = []
        for k, p in enumerate(procs_raw):
            where = f"processes[{k}]"
            try:
                processes.append(
                    ProcessModel(
                        _require(p, "A", where),
                        _require(p, "C", where),
                        _require(p, "Q", where),
                        _require(p, "R", where),
                        p.get("initial_cov"),
                    )
                )
            except ConfigError as exc:
                raise ConfigError(f"{where}: {exc}") from exc
        n = len(processes)
        if n == 0:
            raise ConfigError("processes: at least one process required")

        ch_raw = _require(raw, "channel", "config")
        channel = ChannelParams(
            tuple(_require(ch_raw, "gains", "channel")),
            _require(ch_raw, "spreading_gain", "channel"),
            _require(ch_raw, "noise", "channel"),
        )
        if channel.n_sensors != n:
            raise ConfigError(f"channel.gains: expected {n} entries, got {channel.n_sensors}")

        curve_raw = raw.get("ser_curve") or {"kind": PAPER_QFUNC}
        table = curve_raw.get("table")
        ser_curve = SerCurve(curve_raw.get("kind", PAPER_QFUNC), None if table is None else tuple(map(tuple, table)))

        actions_raw = _require(raw, "actions", "config")
        if len(actions_raw) != n:
            raise ConfigError(f"actions: expected {n} action sets, got {len(actions_raw)}")
        action_sets = tuple(tuple(float(e) for e in levels) for levels in actions_raw)
        caps_raw = raw.get("energy_caps")
        energy_caps = None if caps_raw is None else tuple(float(c) for c in caps_raw)

        policies = tuple(_parse_policy(p, k, n) for k, p in enumerate(raw.get("policies") or [{"name": "ne", "kind": "ne"}]))
        cfg = SimulationConfig(
            processes=tuple(processes),
            channel=channel,
            action_sets=action_sets,
            energy_caps=energy_caps,
            ser_curve=ser_curve,
            horizon=_parse_int(raw.get("horizon", 50), "horizon"),
            runs=_parse_int(raw.get("runs", 1000), "runs"),
            seed=_parse_int(raw.get("seed", 0), "seed"),
            policies=policies,
            full_state_sim=bool(raw.get("full_state_sim", False)),
            raw=raw,
        )
        # game-level invariants (ascending levels, strict caps) are checked here
        cfg.build_game(constrained=energy_caps is not None)
        return cfg
    except ConfigError:
        raise
    except SensorGameError:
        raise
    except (TypeError, ValueError, KeyError, AttributeError) as exc:
        raise ConfigError(f"malformed configuration: {exc}") from exc


def load_config(path) -> SimulationConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read configuration: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    try:
        return parse_config(raw)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
