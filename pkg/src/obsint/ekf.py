"""Linear Kalman filter on a kinematic chain, used as the drift baseline.

The chain ``x_i' = x_{i+1}``, ``x_m' = 0`` is driven by process noise and a
single state (``measured_index``) is observed. Integrating a measured rate
this way assumes zero-mean noise; a biased sensor makes the integral states
drift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .record import RunRecord
from .signals import SignalSource, analytic_truth, sample


@dataclass(frozen=True)
class KfModel:
    order: int = 2
    process_noise_cov: np.ndarray = None
    meas_noise_var: float = 0.01
    measured_index: int = 2

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        Q = self.process_noise_cov
        Q = 1e-4 * np.eye(self.order) if Q is None else np.asarray(Q, dtype=float)
        if Q.shape != (self.order, self.order):
            raise ValueError("process noise covariance has wrong shape")
        if not np.allclose(Q, Q.T) or np.min(np.linalg.eigvalsh(Q)) < -1e-12:
            raise ValueError("process noise covariance must be symmetric PSD")
        object.__setattr__(self, "process_noise_cov", Q)
        if not 1 <= self.measured_index <= self.order:
            raise ValueError("measured_index outside the chain")
        if not self.meas_noise_var > 0:
            raise ValueError("meas_noise_var must be positive")


@dataclass
class KfState:
    mean: np.ndarray
    cov: np.ndarray
    innovation: Optional[float] = None

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float)


def transition(order: int, dt: float) -> np.ndarray:
    """Exact chain transition: entry (i, i+k) is ``dt^k / k!``."""
    F = np.eye(order)
    for k in range(1, order):
        F += np.diag(np.full(order - k, dt**k / math.factorial(k)), k)
    return F


def predict(model: KfModel, state: KfState, dt: float) -> KfState:
    if dt < 0:
        raise ValueError("dt must be >= 0")
    F = transition(model.order, dt)
    P = F @ state.cov @ F.T + model.process_noise_cov * dt
    return KfState(F @ state.mean, 0.5 * (P + P.T))


def update(model: KfModel, state: KfState, z: float) -> KfState:
    """Scalar measurement update with the Joseph-form covariance."""
    j = model.measured_index - 1
    P = state.cov
    innov = float(z) - state.mean[j]
    S = P[j, j] + model.meas_noise_var
    K = P[:, j] / S
    if not np.all(np.isfinite(K)):
        raise FloatingPointError("non-finite Kalman gain")
    I_KH = np.eye(model.order)
    I_KH[:, j] -= K
    P = I_KH @ P @ I_KH.T + model.meas_noise_var * np.outer(K, K)
    return KfState(state.mean + K * innov, 0.5 * (P + P.T), innov)


class ChainFilter:
    """Allocation-light stepping of :func:`predict` / :func:`update` for long runs."""

    def __init__(self, model: KfModel, dt: float, mean=None, cov=None):
        m = model.order
        self.model = model
        self.j = model.measured_index - 1
        self.F = transition(m, dt)
        self.Qd = model.process_noise_cov * dt
        self.R = model.meas_noise_var
        self.x = np.zeros(m) if mean is None else np.asarray(mean, dtype=float).copy()
        self.P = np.eye(m) if cov is None else np.asarray(cov, dtype=float).copy()
        self._eye = np.eye(m)

    def step(self, z: float) -> np.ndarray:
        F, j = self.F, self.j
        x = F @ self.x
        P = F @ self.P @ F.T + self.Qd
        S = P[j, j] + self.R
        K = P[:, j] / S
        x = x + K * (z - x[j])
        A = self._eye.copy()
        A[:, j] -= K
        P = A @ P @ A.T + self.R * np.outer(K, K)
        self.x = x
        self.P = 0.5 * (P + P.T)
        return x


def run_baseline(model: KfModel, src: SignalSource, duration: float, dt: float = 1e-3,
                 mean0=None, cov0=None, truths=None, record_every: int = 1) -> RunRecord:
    """Filter the measured signal and record ``t, z, kf1..kfm`` (+ truth columns).

    ``truths`` optionally names the analytic signal each chain state should
    match (e.g. ``["a01", "a02"]``).
    """
    m = model.order
    nsteps = int(round(duration / dt))
    tgrid = dt * np.arange(nsteps + 1)
    z = np.asarray(sample(src, tgrid), dtype=float)
    kf = ChainFilter(model, dt, mean0, cov0)
    rec_idx = np.arange(0, nsteps + 1, record_every)
    est = np.empty((len(rec_idx), m))
    est[0] = kf.x
    row = 1
    for k in range(1, nsteps + 1):
        x = kf.step(z[k])
        if k % record_every == 0:
            est[row] = x
            row += 1
    if not np.all(np.isfinite(est)):
        raise FloatingPointError("Kalman baseline produced non-finite estimates")
    cols = ["t", "z"] + [f"kf{i}" for i in range(1, m + 1)]
    data = [tgrid[rec_idx], z[rec_idx]] + [est[:, i] for i in range(m)]
    if truths:
        for i, name in enumerate(truths, start=1):
            cols.append(f"truth{i}")
            data.append(analytic_truth(name, tgrid[rec_idx]))
    return RunRecord(cols, np.column_stack(data), {"order": m, "R": model.meas_noise_var})
