"""Local Kalman filtering and the remote estimator's error recursion.

Each sensor runs a Kalman filter on its own LTI process and ships the local
estimate to a remote estimator over a lossy channel. Once the local filter is
in steady state, the remote error covariance depends only on the holding
time (steps since the last successful arrival):

    P(k) = h^tau(k)(P_bar),     h(X) = A X A' + Q
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sensorgame.errors import ConfigError, ConvergenceError, NumericError

SYMMETRY_TOL = 1e-12


def _as_matrix(value, name: str) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise ConfigError(f"{name}: expected a matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name}: non-finite entries")
    arr.setflags(write=False)
    return arr


def _symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def _check_psd(m: np.ndarray, name: str, strict: bool = False) -> None:
    if m.shape[0] != m.shape[1]:
        raise ConfigError(f"{name}: must be square, got {m.shape}")
    scale = max(1.0, float(np.max(np.abs(m))))
    if np.max(np.abs(m - m.T)) > SYMMETRY_TOL * scale:
        raise ConfigError(f"{name}: not symmetric")
    eig = np.linalg.eigvalsh(_symmetrize(m))
    if strict and eig.min() <= 0:
        raise ConfigError(f"{name}: must be positive definite (min eigenvalue {eig.min():.3g})")
    if not strict and eig.min() < -SYMMETRY_TOL * scale:
        raise ConfigError(f"{name}: must be positive semi-definite (min eigenvalue {eig.min():.3g})")


@dataclass(frozen=True)
class ProcessModel:
    """One sensor's plant ``x(k+1) = A x(k) + w``, ``y(k) = C x(k) + v``.

    Scalars are accepted for 1x1 blocks. ``initial_cov`` defaults to ``q_cov``.
    """

    a_matrix: np.ndarray
    c_matrix: np.ndarray
    q_cov: np.ndarray
    r_cov: np.ndarray
    initial_cov: np.ndarray | None = None

    def __post_init__(self):
        a = _as_matrix(self.a_matrix, "A")
        c = _as_matrix(self.c_matrix, "C")
        q = _as_matrix(self.q_cov, "Q")
        r = _as_matrix(self.r_cov, "R")
        s0 = q if self.initial_cov is None else _as_matrix(self.initial_cov, "initial_cov")
        n = a.shape[0]
        if a.shape != (n, n):
            raise ConfigError(f"A: must be square, got {a.shape}")
        if c.shape[1] != n:
            raise ConfigError(f"C: expected {n} columns, got shape {c.shape}")
        m = c.shape[0]
        if q.shape != (n, n):
            raise ConfigError(f"Q: expected shape {(n, n)}, got {q.shape}")
        if r.shape != (m, m):
            raise ConfigError(f"R: expected shape {(m, m)}, got {r.shape}")
        if s0.shape != (n, n):
            raise ConfigError(f"initial_cov: expected shape {(n, n)}, got {s0.shape}")
        _check_psd(q, "Q")
        _check_psd(r, "R", strict=True)
        _check_psd(s0, "initial_cov")
        for name, value in (("a_matrix", a), ("c_matrix", c), ("q_cov", q), ("r_cov", r), ("initial_cov", s0)):
            object.__setattr__(self, name, value)

    @property
    def n_states(self) -> int:
        return self.a_matrix.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.c_matrix.shape[0]

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.a_matrix))))


@dataclass(frozen=True)
class SteadyStateFilter:
    p_bar: np.ndarray
    residual: float
    iterations: int

    @property
    def trace(self) -> float:
        return float(np.trace(self.p_bar))


@dataclass(frozen=True)
class KalmanState:
    x_hat: np.ndarray
    p: np.ndarray
    gain: np.ndarray | None = None


def _check_dim(p: np.ndarray, model: ProcessModel) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim == 0:
        p = p.reshape(1, 1)
    n = model.n_states
    if p.shape != (n, n):
        raise ConfigError(f"covariance has shape {p.shape}, model expects {(n, n)}")
    return p


def lyapunov_step(p, model: ProcessModel) -> np.ndarray:
    """Open-loop covariance growth ``A p A' + Q``."""
    p = _check_dim(p, model)
    a = model.a_matrix
    return _symmetrize(a @ p @ a.T + model.q_cov)


def riccati_update(p, model: ProcessModel) -> np.ndarray:
    """Measurement update ``p - p C' (C p C' + R)^-1 C p``."""
    p = _check_dim(p, model)
    c = model.c_matrix
    pct = p @ c.T
    innovation = c @ pct + model.r_cov
    try:
        correction = pct @ np.linalg.solve(innovation, pct.T)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"singular innovation covariance: {exc}") from exc
    return _symmetrize(p - correction)


def kalman_cycle(p, model: ProcessModel) -> np.ndarray:
    """One predict-then-update pass on the posterior covariance."""
    return riccati_update(lyapunov_step(p, model), model)


def steady_state_covariance(model: ProcessModel, tol: float = 1e-12, max_iter: int = 100_000) -> SteadyStateFilter:
    """Iterate the posterior covariance recursion from ``initial_cov`` to its fixed point.

    The recursion is ``P <- g(h(P))`` and the returned residual is the max-abs
    change of one more cycle at the returned matrix. Detectability is not
    checked; a model that violates it surfaces as :class:`ConvergenceError`.
    """
    p = _symmetrize(model.initial_cov.copy())
    residual = np.inf
    for it in range(1, max_iter + 1):
        try:
            with np.errstate(over="raise", invalid="raise"):
                nxt = kalman_cycle(p, model)
        except FloatingPointError:
            nxt = np.full_like(p, np.inf)
        if not np.all(np.isfinite(nxt)):
            raise ConvergenceError(f"covariance iteration diverged after {it} iterations", residual=np.inf, iterations=it)
        residual = float(np.max(np.abs(nxt - p)))
        p = nxt
        if residual <= tol:
            residual = float(np.max(np.abs(kalman_cycle(p, model) - p)))
            if residual <= tol:
                p.setflags(write=False)
                return SteadyStateFilter(p_bar=p, residual=residual, iterations=it)
    raise ConvergenceError(
        f"steady-state iteration did not converge in {max_iter} iterations (residual {residual:.3e})",
        residual=residual,
        iterations=max_iter,
    )


def local_kalman_step(state: KalmanState, y, model: ProcessModel) -> KalmanState:
    x_prev = np.asarray(state.x_hat, dtype=float).reshape(model.n_states)
    y = np.asarray(y, dtype=float).reshape(model.n_outputs)
    a, c = model.a_matrix, model.c_matrix
    x_pred = a @ x_prev
    p_pred = lyapunov_step(state.p, model)
    s = c @ p_pred @ c.T + model.r_cov
    gain = np.linalg.solve(s, c @ p_pred).T
    x_hat = x_pred + gain @ (y - c @ x_pred)
    p = _symmetrize((np.eye(model.n_states) - gain @ c) @ p_pred)
    return KalmanState(x_hat=x_hat, p=p, gain=gain)


def holding_time_update(tau: int, eta) -> int:
    """``(1 - eta) * (tau + 1)``: reset on arrival, otherwise count up."""
    if tau < 0:
        raise ValueError(f"holding time must be non-negative, got {tau}")
    return 0 if eta else int(tau) + 1


def remote_error_covariance(tau: int, filt: SteadyStateFilter, model: ProcessModel) -> np.ndarray:
    """``h^tau(P_bar)`` by repeated Lyapunov steps."""
    p = filt.p_bar
    for _ in range(int(tau)):
        p = lyapunov_step(p, model)
    return p


def remote_trace_table(max_tau: int, filt: SteadyStateFilter, model: ProcessModel) -> np.ndarray:
    """``Tr h^t(P_bar)`` for ``t = 0..max_tau``, computed along one Lyapunov chain."""
    out = np.empty(max_tau + 1)
    p = filt.p_bar
    out[0] = np.trace(p)
    for t in range(1, max_tau + 1):
        p = lyapunov_step(p, model)
        out[t] = np.trace(p)
    return out


def trace_gap(tau: int, filt: SteadyStateFilter, model: ProcessModel) -> float:
    """``Tr(P_bar) - Tr(h^(tau+1)(P_bar))``; negative whenever Q > 0."""
    return float(np.trace(filt.p_bar) - np.trace(remote_error_covariance(tau + 1, filt, model)))
