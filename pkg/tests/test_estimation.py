import itertools
import math

import numpy as np
import pytest

from sensorgame.errors import ConfigError, ConvergenceError
from sensorgame.estimation import (
    KalmanState,
    ProcessModel,
    holding_time_update,
    kalman_cycle,
    local_kalman_step,
    lyapunov_step,
    remote_error_covariance,
    remote_trace_table,
    riccati_update,
    steady_state_covariance,
    trace_gap,
)

TABLE1_A = (0.9, 0.8, 0.7)
TABLE1_C = (1.0, 1.1, 1.2)


def scalar_posterior_fixed_point(a, c, q, r):
    """Positive root of P = (a^2 P + q) r / (c^2 (a^2 P + q) + r).

    Rearranged: c^2 a^2 P^2 + (c^2 q + r - a^2 r) P - q r = 0.
    """
    qa, qb, qc = c * c * a * a, c * c * q + r - a * a * r, -q * r
    return (-qb + math.sqrt(qb * qb - 4 * qa * qc)) / (2 * qa)


@pytest.fixture(scope="module")
def table1_models():
    return [ProcessModel(a, c, 0.8, 0.8) for a, c in zip(TABLE1_A, TABLE1_C)]


def test_lyapunov_examples():
    m = ProcessModel(np.eye(2), np.eye(2), np.zeros((2, 2)), np.eye(2))
    p = np.array([[2.0, 0.3], [0.3, 1.0]])
    np.testing.assert_array_equal(lyapunov_step(p, m), p)
    assert lyapunov_step(1.0, ProcessModel(0.9, 1.0, 0.8, 0.8))[0, 0] == pytest.approx(1.61, abs=1e-15)
    assert lyapunov_step(123.0, ProcessModel(0.0, 1.0, 0.8, 0.8))[0, 0] == pytest.approx(0.8, abs=1e-15)


def test_riccati_examples():
    m0 = ProcessModel(0.9, 0.0, 0.8, 0.8)
    assert riccati_update(1.7, m0)[0, 0] == pytest.approx(1.7, abs=1e-15)
    m = ProcessModel(0.9, 1.0, 0.8, 0.8)
    assert riccati_update(0.0, m)[0, 0] == 0.0
    assert riccati_update(1.0, m)[0, 0] == pytest.approx(1 - 1 / 1.8, abs=1e-15)


def test_riccati_never_increases_trace():
    rng = np.random.default_rng(3)
    for _ in range(50):
        n, k = rng.integers(1, 4, size=2)
        a = rng.normal(size=(n, n))
        c = rng.normal(size=(k, n))
        m = ProcessModel(a, c, np.eye(n), np.eye(k) * rng.uniform(0.1, 2))
        g = rng.normal(size=(n, n))
        p = g @ g.T
        out = riccati_update(p, m)
        assert np.trace(out) <= np.trace(p) + 1e-12
        np.testing.assert_allclose(out, out.T, atol=0)


def test_steady_state_matches_scalar_quadratic(table1_models):
    expected = [scalar_posterior_fixed_point(a, c, 0.8, 0.8) for a, c in zip(TABLE1_A, TABLE1_C)]
    for m, want in zip(table1_models, expected):
        filt = steady_state_covariance(m)
        assert filt.p_bar[0, 0] == pytest.approx(want, abs=1e-12)
        assert filt.residual <= 1e-12
    # frozen values of the same oracle
    assert expected == pytest.approx([0.47792582980, 0.40728062139, 0.35367806658], abs=1e-10)


def test_steady_state_zero_transition():
    # with A = 0 the prior is always Q, so the posterior is g(Q)
    m = ProcessModel(0.0, 1.0, 0.8, 0.8)
    p = 0.8 - 0.8 * 0.8 / (0.8 + 0.8)
    assert steady_state_covariance(m).p_bar[0, 0] == pytest.approx(p, abs=1e-14)
    assert p == pytest.approx(0.4, abs=1e-15)


def test_steady_state_perfect_measurement_limit():
    a = np.array([[0.5, 0.1], [0.0, 0.7]])
    eps_grid = (1e-2, 1e-4, 1e-6)
    # Q = 0: the fixed point is 0 whatever eps is
    for eps in eps_grid:
        assert steady_state_covariance(ProcessModel(a, np.eye(2), np.zeros((2, 2)), eps * np.eye(2), np.eye(2))).trace < 1e-10
    # Q > 0 keeps the limit visible as a trend
    traces = [steady_state_covariance(ProcessModel(a, np.eye(2), 0.3 * np.eye(2), eps * np.eye(2))).trace for eps in eps_grid]
    assert traces[0] > traces[1] > traces[2]
    assert traces[2] < 3e-6


def test_fixed_point_invariant(table1_models):
    for m in table1_models:
        filt = steady_state_covariance(m)
        assert np.max(np.abs(kalman_cycle(filt.p_bar, m) - filt.p_bar)) <= 1e-12
        assert filt.trace <= np.trace(lyapunov_step(filt.p_bar, m))


def test_predict_update_order_at_fixed_point(table1_models):
    # running the Kalman recursion from P_bar returns P_bar
    for m in table1_models:
        filt = steady_state_covariance(m)
        state = KalmanState(np.zeros(1), filt.p_bar)
        for y in (0.3, -1.0, 2.0):
            state = local_kalman_step(state, np.array([y]), m)
            assert np.max(np.abs(state.p - filt.p_bar)) <= 1e-12


def test_steady_state_multidimensional_matches_dare():
    from scipy.linalg import solve_discrete_are

    a = np.array([[1.1, 0.3], [0.0, 0.8]])
    c = np.array([[1.0, 0.0]])
    q = np.diag([0.5, 0.2])
    r = np.array([[0.4]])
    m = ProcessModel(a, c, q, r)
    filt = steady_state_covariance(m)
    prior = solve_discrete_are(a.T, c.T, q, r)
    posterior = prior - prior @ c.T @ np.linalg.inv(c @ prior @ c.T + r) @ c @ prior
    np.testing.assert_allclose(filt.p_bar, posterior, atol=1e-10)


def test_nonconvergence_raises():
    # unobservable unstable mode never settles
    m = ProcessModel(np.diag([1.5, 0.5]), np.array([[0.0, 1.0]]), np.eye(2), np.eye(1))
    with pytest.raises(ConvergenceError) as err:
        steady_state_covariance(m, max_iter=200)
    assert err.value.iterations == 200
    assert err.value.residual > 1.0


def test_model_validation():
    with pytest.raises(ConfigError):
        ProcessModel(np.eye(2), np.eye(3), np.eye(2), np.eye(3))
    with pytest.raises(ConfigError):
        ProcessModel(0.9, 1.0, -0.1, 0.8)
    with pytest.raises(ConfigError):
        ProcessModel(0.9, 1.0, 0.8, 0.0)
    with pytest.raises(ConfigError):
        ProcessModel(np.eye(2), np.eye(2), np.array([[1.0, 0.2], [0.1, 1.0]]), np.eye(2))


def test_kalman_zero_innovation():
    m = ProcessModel(0.9, 1.0, 0.8, 0.8)
    state = KalmanState(np.array([2.0]), np.array([[0.5]]))
    prior = 0.9 * 2.0
    out = local_kalman_step(state, np.array([prior]), m)
    assert out.x_hat[0] == pytest.approx(prior, abs=1e-15)


def test_kalman_without_measurements_predicts():
    m = ProcessModel(np.array([[0.9, 0.2], [0.0, 0.5]]), np.zeros((1, 2)), np.eye(2) * 0.3, np.eye(1))
    state = KalmanState(np.array([1.0, -1.0]), np.eye(2))
    out = local_kalman_step(state, np.array([5.0]), m)
    np.testing.assert_allclose(out.x_hat, m.a_matrix @ state.x_hat)
    np.testing.assert_allclose(out.p, lyapunov_step(state.p, m))


def test_kalman_converges_to_steady_state(table1_models):
    rng = np.random.default_rng(0)
    for m in table1_models:
        filt = steady_state_covariance(m)
        state = KalmanState(np.zeros(1), m.initial_cov)
        for _ in range(60):
            state = local_kalman_step(state, rng.normal(size=1), m)
        assert np.max(np.abs(state.p - filt.p_bar)) <= 10 * 1e-12


def test_holding_time_examples():
    assert holding_time_update(5, 1) == 0
    assert holding_time_update(3, 0) == 4
    assert holding_time_update(0, 0) == 1


def holding_time_direct(etas, k):
    """Steps since the last arrival at or before k; arrivals are 1-indexed, tau(0) = 0."""
    for j in range(k, 0, -1):
        if etas[j - 1]:
            return k - j
    return k


def test_holding_time_bruteforce_all_sequences():
    for etas in itertools.product((0, 1), repeat=10):
        tau = 0
        for k, eta in enumerate(etas, start=1):
            tau = holding_time_update(tau, eta)
            assert tau == holding_time_direct(etas, k)


def test_remote_covariance_examples(table1_models):
    m = table1_models[0]
    filt = steady_state_covariance(m)
    np.testing.assert_array_equal(remote_error_covariance(0, filt, m), filt.p_bar)
    assert remote_error_covariance(1, filt, m)[0, 0] == pytest.approx(0.81 * filt.p_bar[0, 0] + 0.8, abs=1e-15)
    table = remote_trace_table(3, filt, m)
    assert np.all(np.diff(table) > 0)


def test_lemma1_monotonicity(table1_models):
    for m in table1_models:
        filt = steady_state_covariance(m)
        table = remote_trace_table(20, filt, m)
        for t1 in range(21):
            for t2 in range(t1 + 1, 21):
                assert table[t1] < table[t2]


def test_trace_gap(table1_models):
    m = table1_models[0]
    filt = steady_state_covariance(m)
    p = scalar_posterior_fixed_point(0.9, 1.0, 0.8, 0.8)
    assert trace_gap(0, filt, m) == pytest.approx(p - (0.81 * p + 0.8), abs=1e-12)
    assert trace_gap(0, filt, m) == pytest.approx(-0.7091940923, abs=1e-9)
    for m in table1_models:
        filt = steady_state_covariance(m)
        gaps = [trace_gap(t, filt, m) for t in range(11)]
        assert gaps[0] < 0
        assert all(g2 < g1 for g1, g2 in zip(gaps, gaps[1:]))


def test_trace_gap_long_horizon_limit(table1_models):
    for a, m in zip(TABLE1_A, table1_models):
        filt = steady_state_covariance(m)
        p_inf = 0.8 / (1 - a * a)
        assert trace_gap(400, filt, m) == pytest.approx(filt.trace - p_inf, abs=1e-9)
