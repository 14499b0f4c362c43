from pathlib import Path

import numpy as np
import pytest

from sensorgame.channel import ChannelParams
from sensorgame.config import load_config
from sensorgame.estimation import ProcessModel
from sensorgame.game import GameSpec

ROOT = Path(__file__).resolve().parents[1]
TABLE1 = ROOT / "configs" / "table1.json"


@pytest.fixture(scope="session")
def table1_config():
    return load_config(TABLE1)


@pytest.fixture(scope="session")
def table1_game(table1_config):
    return table1_config.build_game(constrained=True)


@pytest.fixture(scope="session")
def table1_free(table1_config):
    return table1_config.build_game(constrained=False)


MIN_SINR = 0.3


def random_game(seed: int, constrained: bool = False, equal_d: bool = False) -> GameSpec:
    """Random scalar-process game whose SINRs stay inside (MIN_SINR, 4).

    Every nonzero level keeps SINR >= MIN_SINR even against full-power
    interference, so its error rate is resolvably below 1 in double
    precision. With ``equal_d`` every player gets the same normalized top
    ratio, as the closed-form correlated policy requires.
    """
    rng = np.random.default_rng(seed)
    while True:
        game = _draw_game(rng, constrained, equal_d)
        if game is not None:
            return game


def _draw_game(rng, constrained, equal_d):
    n = int(rng.integers(2, 5))
    models = [
        ProcessModel(rng.uniform(0.05, 0.99), 1.0, rng.uniform(0.1, 2.0), rng.uniform(0.1, 2.0))
        for _ in range(n)
    ]
    gains = rng.uniform(0.3, 1.0, n)
    L = rng.uniform(1.0, 3.0)
    action_sets = []
    for _ in range(n):
        m = int(rng.integers(2, 4))
        levels = np.concatenate([[0.0], np.sort(rng.uniform(0.1, 1.0, m - 1))])
        if np.any(np.diff(levels) <= 1e-3):
            levels = np.linspace(0.0, 1.0, m)
        action_sets.append(levels)
    # choose noise so that even with no interference gamma_i < 4
    top = max(L * g * a[-1] for g, a in zip(gains, action_sets))
    noise = top / rng.uniform(1.0, 3.9)
    channel = ChannelParams(tuple(gains), L, noise)
    loudest = sum(g * a[-1] for g, a in zip(gains, action_sets))
    for g, a in zip(gains, action_sets):
        if L * g * a[1] / (loudest - g * a[-1] + noise) < MIN_SINR:
            return None
    caps = None
    if constrained:
        if equal_d:
            frac = rng.uniform(0.15, 0.85)
            caps = [a[0] + frac * (a[-1] - a[0]) for a in action_sets]
        else:
            caps = [a[0] + rng.uniform(0.1, 0.9) * (a[-1] - a[0]) for a in action_sets]
    return GameSpec.build(models, channel, action_sets, energy_caps=caps)


@pytest.fixture
def make_random_game():
    return random_game


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
