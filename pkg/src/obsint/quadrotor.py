"""Quadrotor plant, observer banks, tracking controllers and the closed loop.

State vectors use the layout ``[x, y, z, psi, theta, phi, vx, vy, vz,
dpsi, dtheta, dphi]`` (SI units, Euler angles yaw/pitch/roll).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import observer as obs
from .ekf import ChainFilter, KfModel
from .observer import DivergenceError, RampEps
from .poly import RealPoly, is_hurwitz
from .record import RunRecord
from .signals import NoiseSpec, PulseNoise, RandomNoise

# interleaved order of the initial conditions: (x, vx, y, vy, z, vz, psi, dpsi, ...)
DEFAULT_X0 = (0.5, -0.5, -0.5, 0.5, 0.5, -1.0, 0.2, 0.3, 0.3, -0.1, 0.2, -0.2)
DEFAULT_OBS_X0 = (0, 0, 0, 0, 0, 0, 0, 0, 0, 0.2, 0.3, 0, 0.3, -0.1, 0, 0.2, -0.2, 0)


@dataclass(frozen=True)
class QuadParams:
    m: float = 2.0
    g: float = 9.81
    l: float = 0.2
    Jx: float = 1.25
    Jy: float = 1.25
    Jz: float = 2.5
    b: float = 2.923e-3
    k: float = 5e-4
    kx: float = 0.01
    ky: float = 0.01
    kz: float = 0.01
    kpsi: float = 0.012
    ktheta: float = 0.012
    kphi: float = 0.012

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not value > 0:
                raise ValueError(f"quadrotor parameter {name} must be positive")

    @property
    def J(self) -> np.ndarray:
        """Inertia ordered like the attitude error (yaw, pitch, roll)."""
        return np.array([self.Jz, self.Jy, self.Jx])


def _sin(amp, w):
    return lambda t: amp * math.sin(w * t)


def _zero(t):
    return 0.0


@dataclass(frozen=True)
class DisturbanceSpec:
    dx: Callable[[float], float] = _zero
    dy: Callable[[float], float] = _zero
    dz: Callable[[float], float] = _zero
    dpsi: Callable[[float], float] = _zero
    dtheta: Callable[[float], float] = _zero
    dphi: Callable[[float], float] = _zero

    @classmethod
    def sinusoidal(cls) -> "DisturbanceSpec":
        return cls(_sin(0.5, 1.0), _sin(0.5, 1.0), _sin(0.5, 1.0),
                   _sin(0.2, 0.8), _sin(0.2, 0.8), _sin(0.2, 0.8))

    def __call__(self, t: float) -> tuple:
        return (self.dx(t), self.dy(t), self.dz(t), self.dpsi(t), self.dtheta(t), self.dphi(t))


def state_from_interleaved(values: Sequence[float]) -> np.ndarray:
    """Reorder ``(x, vx, y, vy, z, vz, psi, dpsi, theta, dtheta, phi, dphi)``."""
    v = list(values)
    if len(v) != 12:
        raise ValueError("expected 12 initial values")
    return np.array(v[0::2] + v[1::2], dtype=float)


def rotation_bg(psi: float, theta: float, phi: float) -> np.ndarray:
    """Body-to-ground transformation matrix."""
    cps, sps = math.cos(psi), math.sin(psi)
    cth, sth = math.cos(theta), math.sin(theta)
    cph, sph = math.cos(phi), math.sin(phi)
    return np.array([
        [cps * cth, sps * cph + cps * sth * sph, sps * sph - cps * sth * cph],
        [-sps * cth, cps * cph - sps * sth * sph, cps * sph + sps * sth * cph],
        [sth, -cth * sph, cth * cph],
    ])


def yaw_sum(forces) -> float:
    """``sum_i (-1)^i F_i``."""
    f1, f2, f3, f4 = forces
    return -f1 + f2 - f3 + f4


def dynamics(params: QuadParams, state, forces, dist, t: float, thrust=None) -> np.ndarray:
    """Time derivative of the 12-state plant.

    ``dist`` is a :class:`DisturbanceSpec` or a 6-tuple of values at ``t``.
    ``thrust`` overrides the body-axis thrust vector ``R e3 * sum(F)`` with a
    given ground-frame force.
    """
    p = params
    x, y, z, psi, th, ph, vx, vy, vz, dpsi, dth, dph = state
    d = dist(t) if callable(dist) else dist
    f1, f2, f3, f4 = forces
    if thrust is None:
        F = f1 + f2 + f3 + f4
        cps, sps = math.cos(psi), math.sin(psi)
        cth, sth = math.cos(th), math.sin(th)
        cph, sph = math.cos(ph), math.sin(ph)
        ux = (sps * sph - cps * sth * cph) * F
        uy = (cps * sph + sps * sth * cph) * F
        uz = cth * cph * F
    else:
        ux, uy, uz = thrust
    return np.array([
        vx, vy, vz, dpsi, dth, dph,
        (ux - p.kx * vx + d[0]) / p.m,
        (uy - p.ky * vy + d[1]) / p.m,
        (uz - p.m * p.g - p.kz * vz + d[2]) / p.m,
        (p.k / p.b * (-f1 + f2 - f3 + f4) - p.kpsi * dpsi + d[3]) / p.Jz,
        ((f1 - f3) * p.l - p.l * p.ktheta * dth + d[4]) / p.Jy,
        ((f2 - f4) * p.l - p.l * p.kphi * dph + d[5]) / p.Jx,
    ])


def thrust_magnitude(u_p) -> float:
    return float(np.linalg.norm(np.asarray(u_p, dtype=float)))


def allocate_rotors(params: QuadParams, F: float, u_a) -> tuple[np.ndarray, bool]:
    """Rotor lifts realising total thrust ``F`` and torques ``u_a``.

    Solutions outside ``[0, 4 m g]`` are clamped and reported as saturated.
    """
    p = params
    yaw = p.b / p.k * u_a[0]
    f = np.array([
        (F - yaw) / 4 + u_a[1] / (2 * p.l),
        (F + yaw) / 4 + u_a[2] / (2 * p.l),
        (F - yaw) / 4 - u_a[1] / (2 * p.l),
        (F + yaw) / 4 - u_a[2] / (2 * p.l),
    ])
    upper = 4 * p.m * p.g
    clipped = np.clip(f, 0.0, upper)
    return clipped, bool(np.any(clipped != f))


def recompose(params: QuadParams, forces) -> tuple[float, np.ndarray]:
    """Inverse of :func:`allocate_rotors`: ``(F, u_a)`` produced by ``forces``."""
    f1, f2, f3, f4 = forces
    u_a = np.array([params.k / params.b * yaw_sum(forces), (f1 - f3) * params.l, (f2 - f4) * params.l])
    return f1 + f2 + f3 + f4, u_a


@dataclass(frozen=True)
class Reference:
    h0: float = 30.0
    a: float = 5.0
    km: float = 0.005


def reference_trajectory(t: float, h0: float = 30.0, a: float = 5.0, km: float = 0.005):
    """Vertical take-off profile: returns ``(pos, vel, acc)`` 3-vectors."""
    if min(h0, a, km) <= 0:
        raise ValueError("h0, a and km must be positive")
    c = km * a
    e = math.exp(-0.5 * c * t * t)
    pos = np.array([0.0, 0.0, h0 * (1.0 - e)])
    vel = np.array([0.0, 0.0, h0 * c * t * e])
    acc = np.array([0.0, 0.0, h0 * c * (1.0 - c * t * t) * e])
    return pos, vel, acc


@dataclass(frozen=True)
class QuadGains:
    kp1: float = 16.0
    kp2: float = 8.0
    ka1: float = 28.0
    ka2: float = 8.0
    pos_k: tuple = (6.0, 11.0, 6.0)
    pos_eps: object = RampEps(5.0, 5.0)
    att_k: tuple = (0.1, 2.0, 1.0)
    att_eps: object = 1.0 / 3.0


def position_observer_bank(gains=(6.0, 11.0, 6.0), eps_schedule=RampEps(5.0, 5.0)):
    """Third-order differentiators for x, y, z: position, velocity, acceleration."""
    return [obs.preset_differentiator(3, gains, eps_schedule) for _ in range(3)]


def attitude_observer_bank(gains=(0.1, 2.0, 1.0), eps=1.0 / 3.0):
    """Differentiation-integration observers fed the measured body rates:
    angle (integral), rate, angular acceleration."""
    return [obs.preset_diffint(*gains, eps) for _ in range(3)]


def position_controller(params: QuadParams, ref, est, dhat, kp1=16.0, kp2=8.0):
    """Thrust vector ``u_p`` and its magnitude.

    ``ref`` is ``(pos, vel, acc)``; ``est`` a ``(3, 2)`` array of position and
    velocity estimates; ``dhat`` the force disturbance estimate.
    """
    pos, vel, acc = ref
    m = params.m
    xi = -m * np.asarray(acc, dtype=float) - np.array([0.0, 0.0, m * params.g])
    e = est[:, 0] - pos
    ed = est[:, 1] - vel
    u_p = -xi - np.asarray(dhat, dtype=float) - m * (kp1 * e + kp2 * ed)
    return u_p, thrust_magnitude(u_p)


def attitude_controller(params: QuadParams, ref, est, dhat, ka1=28.0, ka2=8.0):
    """Body torques ``u_a`` (yaw, pitch, roll).

    ``ref`` is ``(angles, rates, accelerations)`` of the desired attitude.
    """
    ang, rate, acc = (np.asarray(v, dtype=float) for v in ref)
    J = params.J
    xi = -J * acc
    e = est[:, 0] - ang
    ed = est[:, 1] - rate
    return -xi - np.asarray(dhat, dtype=float) - J * (ka1 * e + ka2 * ed)


def _final_eps(schedule) -> float:
    return obs.as_schedule(schedule).inf


def loop_polynomials(gains: QuadGains | None = None) -> dict:
    """Characteristic polynomials of the linearised per-axis loops at hover.

    Assumes the filtered disturbance feedforward (exact cancellation of the
    known input), settled ``eps`` and no saturation. The attitude polynomial
    omits the root at ``s = 0`` of the unobservable angle offset.
    """
    g = gains or QuadGains()
    k1, k2, k3 = g.pos_k
    e = _final_eps(g.pos_eps)
    pos = RealPoly([e**3, k3 * e**2, k2 * e, k1, k1 * g.kp2, k1 * g.kp1])
    a1, a2, a3 = g.att_k
    e = _final_eps(g.att_eps)
    att = RealPoly([e**4, a3 * e**3, a2, a1 * e + a2 * g.ka2, a2 * g.ka1])
    return {"position": pos, "attitude": att}


def loop_report(gains: QuadGains | None = None) -> dict:
    """Stability verdict and slowest-decaying pole per linearised loop."""
    out = {}
    for name, poly in loop_polynomials(gains).items():
        r = np.roots(poly.coeffs)
        out[name] = {"stable": is_hurwitz(poly), "max_real_part": float(np.max(r.real))}
    return out


def measurement_noise(base: NoiseSpec | None, seed: int) -> list:
    """Six independent channels sharing ``base`` but with distinct random seeds."""
    if base is None:
        return [None] * 6
    out = []
    for i in range(6):
        rnd = base.random
        if rnd is not None:
            rnd = RandomNoise(rnd.mean, rnd.variance, seed + i, rnd.sample_dt)
        out.append(NoiseSpec(rnd, base.pulse))
    return out


def default_noise(dt: float = 1e-3, width_unit: str = "percent") -> NoiseSpec:
    return NoiseSpec(RandomNoise(0.0, 0.001, 0, dt), PulseNoise(0.001, 1.0, 1.0, 0.0, width_unit))


FEEDFORWARD_MODES = ("filtered", "delayed", "literal")

STATE_NAMES = ["x", "y", "z", "psi", "theta", "phi", "vx", "vy", "vz", "dpsi", "dtheta", "dphi"]


def simulate_closed_loop(params: QuadParams | None = None, dist: DisturbanceSpec | None = None,
                         noise: NoiseSpec | None = None, duration: float = 50.0, dt: float = 1e-3, *,
                         seed: int = 0, x0=None, obs_x0=DEFAULT_OBS_X0, gains: QuadGains | None = None,
                         reference: Reference | None = None, thrust_model: str = "vector",
                         feedforward: str = "filtered", kf_baseline: bool = True,
                         kf_model: KfModel | None = None, record_every: int = 10,
                         on_divergence: str = "raise") -> RunRecord:
    """Co-integrate plant, six observers, controllers and rotor allocation.

    ``thrust_model="vector"`` applies the commanded thrust vector ``u_p`` to the
    translational dynamics; ``"body"`` applies ``R e3 * sum(F_i)`` from the
    actual attitude.

    Disturbance estimates (``feedforward``):

    * ``"filtered"``: ``m (x_i3 - h~_i)`` and ``J (x_i3 - h~_i)``, where ``h~``
      is the known input ``h`` passed through a copy of the observer, so both
      terms carry the same lag.
    * ``"delayed"``: ``m (x_i3 - h_i)`` with the unfiltered ``h`` of the
      previous step. This closes an unstable loop and is kept for comparison.
    * ``"literal"``: ``x_i3`` as is.

    Controls are held over each step. Divergence (non-finite state or
    ``|theta| >= pi/2``) raises :class:`DivergenceError` unless
    ``on_divergence="truncate"``, which returns the rows recorded so far with
    ``meta["diverged_at"]`` set.
    """
    p = params or QuadParams()
    dist = dist or DisturbanceSpec.sinusoidal()
    gains = gains or QuadGains()
    ref = reference or Reference()
    if thrust_model not in ("vector", "body"):
        raise ValueError(f"unknown thrust model {thrust_model!r}")
    if on_divergence not in ("raise", "truncate"):
        raise ValueError(f"unknown on_divergence {on_divergence!r}")
    if feedforward not in FEEDFORWARD_MODES:
        raise ValueError(f"unknown feedforward {feedforward!r}")

    pos_bank = position_observer_bank(gains.pos_k, gains.pos_eps)
    att_bank = attitude_observer_bank(gains.att_k, gains.att_eps)
    bank = pos_bank + att_bank

    plant = state_from_interleaved(DEFAULT_X0) if x0 is None else np.asarray(x0, dtype=float).copy()
    zobs = np.asarray(obs_x0, dtype=float).copy()
    if plant.shape != (12,) or zobs.shape != (18,):
        raise ValueError("x0 needs 12 values and obs_x0 18 values")
    # shadow observers driven by h; their tracking state is h filtered like x_i3
    z = np.concatenate([plant, zobs, np.zeros(18)])
    shadow_idx = [30 + 3 * i + (bank[i].gains.p - 1) for i in range(6)]

    nsteps = int(round(duration / dt))
    tgrid = dt * np.arange(nsteps + 1)
    chans = measurement_noise(noise, seed)
    nz = np.zeros((6, nsteps + 1))
    for i, ch in enumerate(chans):
        if ch is not None:
            nz[i] = ch(tgrid)

    cache = {}

    def obs_matrices(eps_pos, eps_att):
        key = (eps_pos, eps_att)
        if key not in cache:
            A = np.zeros((18, 18))
            B = np.zeros((18, 6))
            for i, spec in enumerate(bank):
                Ai, bi = obs.state_matrices(spec, eps_pos if i < 3 else eps_att)
                A[3 * i:3 * i + 3, 3 * i:3 * i + 3] = Ai
                B[3 * i:3 * i + 3, i] = bi
            if len(cache) > 8:
                cache.clear()
            cache[key] = (A, B)
        return cache[key]

    meas_idx = [0, 1, 2, 9, 10, 11]

    def rhs(zz, t, forces, thrust, A, B, nk, hv):
        d = dist(t)
        dp = dynamics(p, zz[:12], forces, d, t, thrust)
        yv = zz[meas_idx] + nk
        return np.concatenate([dp, A @ zz[12:30] + B @ yv, A @ zz[30:] + B @ hv])

    kf_model = kf_model or KfModel(2, 1e-4 * np.eye(2), max(noise.variance if noise else 0.0, 1e-6), 2)
    kfs = []
    if kf_baseline:
        for i in range(3):
            kfs.append(ChainFilter(kf_model, dt, mean=[plant[3 + i], plant[9 + i]]))

    h_prev = zobs.reshape(6, 3)[:, 2].copy()
    J = p.J
    gvec = np.array([0.0, 0.0, p.g])

    rec_idx = np.arange(0, nsteps + 1, record_every)
    ncols = 12 + 1 + 6 + 18 + 6 + 6 + 4 + 2 + 3
    out = np.empty((len(rec_idx), 1 + ncols))
    row = 0
    diverged_at = None
    eps_att = obs.as_schedule(gains.att_eps)
    eps_pos = obs.as_schedule(gains.pos_eps)

    for k in range(nsteps + 1):
        t = tgrid[k]
        xo = z[12:30].reshape(6, 3)
        refp = reference_trajectory(t, ref.h0, ref.a, ref.km)
        if feedforward == "filtered":
            hf = z[shadow_idx]
            dhat_p = p.m * (xo[:3, 2] - hf[:3])
            dhat_a = J * (xo[3:, 2] - hf[3:])
        elif feedforward == "delayed":
            dhat_p = p.m * (xo[:3, 2] - h_prev[:3])
            dhat_a = J * (xo[3:, 2] - h_prev[3:])
        else:
            dhat_p = xo[:3, 2].copy()
            dhat_a = xo[3:, 2].copy()
        u_p, F = position_controller(p, refp, xo[:3, :2], dhat_p, gains.kp1, gains.kp2)
        zero3 = np.zeros(3)
        u_a = attitude_controller(p, (zero3, zero3, zero3), xo[3:, :2], dhat_a, gains.ka1, gains.ka2)
        forces, sat = allocate_rotors(p, F, u_a)

        if k % record_every == 0:
            d = dist(t)
            s = z[:12]
            dtrue = [
                (d[0] - p.kx * s[6]) / p.m, (d[1] - p.ky * s[7]) / p.m, (d[2] - p.kz * s[8]) / p.m,
                (d[3] - p.kpsi * s[9]) / p.Jz, (d[4] - p.l * p.ktheta * s[10]) / p.Jy,
                (d[5] - p.l * p.kphi * s[11]) / p.Jx,
            ]
            kfv = [kf.x[0] for kf in kfs] if kfs else [math.nan] * 3
            out[row] = np.concatenate([
                [t], s, [refp[0][2]], s[meas_idx] + nz[:, k], z[12:30], dtrue,
                np.concatenate([dhat_p / p.m, dhat_a / J]), forces, [float(sat), F], kfv,
            ])
            row += 1
        if k == nsteps:
            break

        _, u_att = recompose(p, forces)
        h_prev = np.concatenate([u_p / p.m - gvec, u_att / J])
        thrust = u_p if thrust_model == "vector" else None
        A, B = obs_matrices(eps_pos(t), eps_att(t))
        nk = nz[:, k]
        h = dt
        hv = h_prev
        k1 = rhs(z, t, forces, thrust, A, B, nk, hv)
        k2 = rhs(z + 0.5 * h * k1, t + 0.5 * h, forces, thrust, A, B, nk, hv)
        k3 = rhs(z + 0.5 * h * k2, t + 0.5 * h, forces, thrust, A, B, nk, hv)
        k4 = rhs(z + h * k3, t + h, forces, thrust, A, B, nk, hv)
        z = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not (np.all(np.isfinite(z)) and abs(z[4]) < 0.5 * math.pi):
            diverged_at = float(tgrid[k + 1])
            if on_divergence == "raise":
                raise DivergenceError(_divergence_message(diverged_at, gains))
            break
        for i, kf in enumerate(kfs):
            kf.step(z[9 + i] + nz[3 + i, k + 1])

    cols = (["t"] + STATE_NAMES + ["zd"] + [f"y{i}" for i in range(1, 7)]
            + [f"o{i}_{j}" for i in range(1, 7) for j in range(1, 4)]
            + [f"d{i}" for i in range(1, 7)] + [f"dhat{i}" for i in range(1, 7)]
            + ["F1", "F2", "F3", "F4", "saturated", "F", "kf_psi", "kf_theta", "kf_phi"])
    meta = {"dt": dt, "seed": seed, "thrust_model": thrust_model, "feedforward": feedforward,
            "diverged_at": diverged_at}
    return RunRecord(cols, out[:row], meta)


def _divergence_message(t: float, gains: QuadGains) -> str:
    msg = f"closed loop diverged at t={t:g} s"
    bad = [f"{name} loop pole at Re={r['max_real_part']:+.3g}"
           for name, r in loop_report(gains).items() if not r["stable"]]
    if bad:
        msg += "; linearised " + ", ".join(bad) + " (smaller eps or lower derivative gains stabilise it)"
    return msg
