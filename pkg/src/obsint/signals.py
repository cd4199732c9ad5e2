"""Reference signals and the non-zero-mean measurement noise models.

The random component is a zero-order-hold Gaussian sequence whose value on
``[k*dt, (k+1)*dt)`` depends only on ``(seed, k)``, so sampling is
reproducible and independent of query order. The pulse component is a
rectangular wave.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Union

import numpy as np

_CHUNK = 1 << 16


@lru_cache(maxsize=128)
def _gauss_chunk(seed: int, chunk: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(chunk)]))
    out = rng.standard_normal(_CHUNK)
    out.flags.writeable = False
    return out


def gauss_stream(seed: int, idx) -> np.ndarray:
    """Standard normal draw number ``idx`` of stream ``seed`` (vectorised)."""
    idx = np.asarray(idx, dtype=np.int64)
    flat = idx.ravel()
    out = np.empty(flat.shape, dtype=float)
    chunks = flat // _CHUNK
    for c in np.unique(chunks):
        m = chunks == c
        out[m] = _gauss_chunk(seed, int(c))[flat[m] % _CHUNK]
    return out.reshape(idx.shape)


@dataclass(frozen=True)
class RandomNoise:
    mean: float = 0.0
    variance: float = 0.01
    seed: int = 0
    sample_dt: float = 1e-3

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError("variance must be >= 0")
        if not self.sample_dt > 0:
            raise ValueError("sample_dt must be positive")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.floor(t / self.sample_dt + 1e-6).astype(np.int64)
        return self.mean + math.sqrt(self.variance) * gauss_stream(self.seed, idx)


@dataclass(frozen=True)
class PulseNoise:
    """Rectangular pulses of ``amplitude`` every ``period`` seconds.

    ``width`` is a percentage of the period by default; ``width_unit="seconds"``
    reads it as a duration.
    """

    amplitude: float = 0.5
    period: float = 2.0
    width: float = 1.0
    phase_delay: float = 0.0
    width_unit: str = "percent"

    def __post_init__(self):
        if self.width_unit not in ("percent", "seconds"):
            raise ValueError(f"unknown width unit {self.width_unit!r}")
        if not 0 < self.width_seconds <= self.period:
            raise ValueError("pulse width must satisfy 0 < width <= period")

    @property
    def width_seconds(self) -> float:
        if self.width_unit == "percent":
            return self.width / 100.0 * self.period
        return self.width

    @property
    def mean(self) -> float:
        return self.amplitude * self.width_seconds / self.period

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        phase = np.mod(t - self.phase_delay, self.period)
        return np.where(phase < self.width_seconds, self.amplitude, 0.0)


@dataclass(frozen=True)
class NoiseSpec:
    random: Optional[RandomNoise] = None
    pulse: Optional[PulseNoise] = None

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        if self.random is not None:
            out = out + self.random(t)
        if self.pulse is not None:
            out = out + self.pulse(t)
        return out

    @property
    def mean(self) -> float:
        m = 0.0
        if self.random is not None:
            m += self.random.mean
        if self.pulse is not None:
            m += self.pulse.mean
        return m

    @property
    def variance(self) -> float:
        return 0.0 if self.random is None else self.random.variance


def zd(t, h0=30.0, a=5.0, km=0.005):
    return h0 * (1.0 - np.exp(-0.5 * km * a * np.asarray(t) ** 2))


def zd_dot(t, h0=30.0, a=5.0, km=0.005):
    t = np.asarray(t)
    return h0 * km * a * t * np.exp(-0.5 * km * a * t**2)


def zd_ddot(t, h0=30.0, a=5.0, km=0.005):
    t = np.asarray(t)
    return h0 * km * a * (1.0 - km * a * t**2) * np.exp(-0.5 * km * a * t**2)


ANALYTIC = {
    "a01": np.sin,
    "a02": np.cos,
    "a03": lambda t: -np.sin(t),
    "zero": np.zeros_like,
    "zd": zd,
    "zd_dot": zd_dot,
    "zd_ddot": zd_ddot,
}


def analytic_truth(name: str, t):
    try:
        fn = ANALYTIC[name]
    except KeyError:
        raise ValueError(f"unknown signal {name!r}; known: {sorted(ANALYTIC)}") from None
    out = fn(np.asarray(t, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class SignalSource:
    """Measured signal ``base(t) + noise(t) + bias``."""

    base: Union[str, Callable] = "a02"
    noise: Optional[NoiseSpec] = None
    bias: float = 0.0

    def __post_init__(self):
        if isinstance(self.base, str) and self.base not in ANALYTIC:
            raise ValueError(f"unknown signal {self.base!r}")

    def clean(self, t):
        t = np.asarray(t, dtype=float)
        if isinstance(self.base, str):
            return ANALYTIC[self.base](t) + 0.0 * t
        return np.asarray(self.base(t), dtype=float) + 0.0 * t

    def __call__(self, t):
        return sample(self, t)


def sample(src: SignalSource, t):
    """Value of the measured signal at time(s) ``t >= 0``."""
    t_arr = np.asarray(t, dtype=float)
    out = src.clean(t_arr) + src.bias
    if src.noise is not None:
        out = out + src.noise(t_arr)
    return float(out) if np.ndim(out) == 0 else out
