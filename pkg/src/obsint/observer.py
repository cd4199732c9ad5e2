"""Generalized differentiation-integration observer.

The observer is the integral chain

    x_i' = x_{i+1},                      i = 1..n-1
    eps^(n+1-c) x_n' = -sum_{i != p} k_i eps^(i-c) x_i - k_p (x_p - a(t))

with ``c = 1`` for ``p = 1`` and ``c = 0`` otherwise. ``x_p`` tracks the signal,
lower indices its repeated integrals and higher indices its derivatives.
Integration is classical fixed-step RK4 with ``eps`` held over each step.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Callable, Union

import numpy as np

from .poly import ObserverGainSet, characteristic_poly, gain_violations, roots
from .record import RunRecord

DEFAULT_DT = 1e-3


class DivergenceError(RuntimeError):
    pass


class GainError(ValueError):
    pass


@dataclass(frozen=True)
class ConstantEps:
    value: float

    def __call__(self, t: float) -> float:
        return self.value

    @property
    def sup(self) -> float:
        return self.value

    @property
    def inf(self) -> float:
        return self.value


@dataclass(frozen=True)
class RampEps:
    """Schedule ``1/eps = min(rate * t, cap)``, clamped so that ``eps <= 1``."""

    rate: float
    cap: float

    def __call__(self, t: float) -> float:
        inv = min(self.rate * t, self.cap)
        return 1.0 if inv <= 1.0 else 1.0 / inv

    @property
    def sup(self) -> float:
        return 1.0

    @property
    def inf(self) -> float:
        return 1.0 / max(self.cap, 1.0)


EpsSchedule = Union[ConstantEps, RampEps]


def as_schedule(eps) -> EpsSchedule:
    if isinstance(eps, (ConstantEps, RampEps)):
        return eps
    return ConstantEps(float(eps))


@dataclass(frozen=True)
class ObserverSpec:
    gains: ObserverGainSet
    eps_schedule: EpsSchedule

    def __post_init__(self):
        at_sup = replace(self.gains, eps=self.eps_schedule.sup)
        bad = gain_violations(at_sup)
        if bad:
            raise GainError(
                f"gains {self.gains.k} violate {', '.join(bad)} "
                f"(n={self.gains.n}, p={self.gains.p}, eps={at_sup.eps:g})"
            )

    @property
    def n(self) -> int:
        return self.gains.n

    @property
    def p(self) -> int:
        return self.gains.p

    def eps(self, t: float) -> float:
        return self.eps_schedule(t)


@dataclass
class ObserverState:
    x: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)


def make_spec(n: int, p: int, k, eps) -> ObserverSpec:
    sched = as_schedule(eps)
    return ObserverSpec(ObserverGainSet(n, p, tuple(k), sched.sup), sched)


def preset_differentiator(n: int, k, eps) -> ObserverSpec:
    """High-order differentiator (p = 1); ``x_i`` estimates the (i-1)th derivative."""
    return make_spec(n, 1, k, eps)


def preset_onefold(k1, k2, eps) -> ObserverSpec:
    return make_spec(2, 2, (k1, k2), eps)


def preset_diffint(k1, k2, k3, eps) -> ObserverSpec:
    """Integral, signal and first derivative from one measured signal (n=3, p=2)."""
    return make_spec(3, 2, (k1, k2, k3), eps)


def preset_double(k1, k2, k3, eps) -> ObserverSpec:
    return make_spec(3, 3, (k1, k2, k3), eps)


def preset_diff_double(k1, k2, k3, k4, eps) -> ObserverSpec:
    return make_spec(4, 3, (k1, k2, k3, k4), eps)


def derivative(spec: ObserverSpec, state: ObserverState, a: float, eps: float | None = None) -> np.ndarray:
    """Right-hand side of the observer at ``state`` for signal value ``a``.

    ``eps`` defaults to the schedule evaluated at ``state.t``.
    """
    if eps is None:
        eps = spec.eps(state.t)
    if not eps > 0:
        raise ValueError("degenerate perturbation")
    g = spec.gains
    x = state.x
    c = g.c
    dx = np.empty(g.n)
    dx[:-1] = x[1:]
    acc = 0.0
    for i in range(1, g.n + 1):
        if i == g.p:
            acc -= g.k[i - 1] * (x[i - 1] - a)
        else:
            acc -= g.k[i - 1] * eps ** (i - c) * x[i - 1]
    dx[-1] = acc / eps ** (g.n + 1 - c)
    return dx


def state_matrices(spec: ObserverSpec, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Linear form ``x' = A x + b a`` of the observer at perturbation ``eps``."""
    g = spec.gains
    n, c = g.n, g.c
    A = np.diag(np.ones(n - 1), 1)
    lead = eps ** (n + 1 - c)
    for i in range(1, n + 1):
        if i == g.p:
            A[-1, i - 1] = -g.k[i - 1] / lead
        else:
            A[-1, i - 1] = -g.k[i - 1] * eps ** (i - c) / lead
    b = np.zeros(n)
    b[-1] = g.k[g.p - 1] / lead
    return A, b


def _rk4(spec, x, t, dt, eps, a0, ah, a1):
    def f(xs, ts, a):
        return derivative(spec, ObserverState(xs, ts), a, eps)

    k1 = f(x, t, a0)
    k2 = f(x + 0.5 * dt * k1, t + 0.5 * dt, ah)
    k3 = f(x + 0.5 * dt * k2, t + 0.5 * dt, ah)
    k4 = f(x + dt * k3, t + dt, a1)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step(spec: ObserverSpec, state: ObserverState, sampler: Callable[[float], float], dt: float) -> ObserverState:
    """Advance one classical RK4 step of length ``dt``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    t = state.t
    eps = spec.eps(t)
    x = _rk4(spec, state.x, t, dt, eps, sampler(t), sampler(t + 0.5 * dt), sampler(t + dt))
    if not np.all(np.isfinite(x)):
        raise DivergenceError(f"divergence at t={t + dt:g}: reduce dt or check gains")
    return ObserverState(x, t + dt)


def rk4_propagator(spec: ObserverSpec, eps: float, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact linear map of one RK4 step at fixed ``eps``.

    Returns ``(Phi, G)`` with ``x+ = Phi x + G @ (a(t), a(t+dt/2), a(t+dt))``.
    Built by pushing unit inputs through the same stage arithmetic as
    :func:`step`.
    """
    n = spec.n
    Phi = np.empty((n, n))
    for j in range(n):
        Phi[:, j] = _rk4(spec, np.eye(n)[j], 0.0, dt, eps, 0.0, 0.0, 0.0)
    z = np.zeros(n)
    G = np.column_stack([
        _rk4(spec, z, 0.0, dt, eps, 1.0, 0.0, 0.0),
        _rk4(spec, z, 0.0, dt, eps, 0.0, 1.0, 0.0),
        _rk4(spec, z, 0.0, dt, eps, 0.0, 0.0, 1.0),
    ])
    return Phi, G


def stable_dt(spec: ObserverSpec) -> float:
    """Step-size guidance ``0.5 * eps_min / |lambda_max|``."""
    eps = spec.eps_schedule.inf
    lam = np.max(np.abs(roots(characteristic_poly(replace(spec.gains, eps=eps)))))
    return 0.5 * eps / lam


def _sample_many(sampler, t: np.ndarray) -> np.ndarray:
    try:
        out = np.asarray(sampler(t), dtype=float)
        if out.shape == t.shape:
            return out
    except (TypeError, ValueError):
        pass
    return np.array([float(sampler(v)) for v in t])


def run(spec: ObserverSpec, sampler, x0=None, duration: float = 10.0, dt: float = DEFAULT_DT,
        record_every: int = 1, t0: float = 0.0) -> RunRecord:
    """Integrate the observer and record ``t, a, x1..xn`` every ``record_every`` steps.

    Constant-``eps`` specs use the precomputed RK4 propagator; time-varying
    schedules step through :func:`step`.
    """
    n = spec.n
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    if x.shape != (n,):
        raise ValueError(f"x0 must have {n} components")
    if dt > stable_dt(spec):
        warnings.warn(f"dt={dt:g} exceeds the stability guidance {stable_dt(spec):.3g}", RuntimeWarning)
    nsteps = int(round(duration / dt))
    if record_every < 1:
        raise ValueError("record_every must be >= 1")
    tgrid = t0 + dt * np.arange(nsteps + 1)
    a_nodes = _sample_many(sampler, tgrid)
    rec_idx = np.arange(0, nsteps + 1, record_every)
    out = np.empty((len(rec_idx), n + 2))
    out[:, 0] = tgrid[rec_idx]
    out[:, 1] = a_nodes[rec_idx]
    out[0, 2:] = x

    if isinstance(spec.eps_schedule, ConstantEps) and nsteps > 0:
        a_mid = _sample_many(sampler, tgrid[:-1] + 0.5 * dt)
        Phi, G = rk4_propagator(spec, spec.eps_schedule.value, dt)
        drive = (G @ np.vstack([a_nodes[:-1], a_mid, a_nodes[1:]])).T
        row = 1
        for k in range(nsteps):
            x = Phi @ x + drive[k]
            if (k + 1) % record_every == 0:
                if not np.all(np.isfinite(x)):
                    raise DivergenceError(f"divergence at t={tgrid[k + 1]:g}: reduce dt or check gains")
                out[row, 2:] = x
                row += 1
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"divergence before t={tgrid[-1]:g}: reduce dt or check gains")
    else:
        state = ObserverState(x, t0)
        row = 1
        for k in range(nsteps):
            state = step(spec, state, sampler, dt)
            if (k + 1) % record_every == 0:
                out[row, 2:] = state.x
                row += 1

    cols = ["t", "a"] + [f"x{i}" for i in range(1, n + 1)]
    g = spec.gains
    meta = {"n": n, "p": g.p, "k": list(g.k), "dt": dt}
    return RunRecord(cols, out, meta)
