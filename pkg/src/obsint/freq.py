"""Transfer functions and Bode-style frequency responses of the observer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .poly import ObserverGainSet, RealPoly
from .record import RunRecord


def default_grid() -> np.ndarray:
    return np.logspace(-3, 3, 400)


@dataclass(frozen=True)
class RationalTF:
    num: RealPoly
    den: RealPoly

    def __call__(self, s):
        d = self.den(s)
        if np.any(d == 0):
            raise ZeroDivisionError("denominator vanishes on the evaluation grid")
        return self.num(s) / d


@dataclass(frozen=True)
class FrequencyResponse:
    omega: np.ndarray
    magnitude_db: np.ndarray
    phase_deg: np.ndarray


def transfer_function(g: ObserverGainSet, j: int) -> RationalTF:
    """``X_j(s) / A(s) = k_p s^(j-1) / den(s)`` for state ``j`` of the observer.

    ``den = eps^(n+1-c) s^n + sum_{i != p} k_i eps^(i-c) s^(i-1) + k_p s^(p-1)``.
    """
    if not 1 <= j <= g.n:
        raise ValueError(f"state index j={j} outside 1..{g.n}")
    n, p, c, e = g.n, g.p, g.c, g.eps
    den = [0.0] * (n + 1)
    den[0] = e ** (n + 1 - c)
    for i in range(1, n + 1):
        den[n - i + 1] = g.k[i - 1] if i == p else g.k[i - 1] * e ** (i - c)
    num = [g.k[p - 1]] + [0.0] * (j - 1)
    return RationalTF(RealPoly(num), RealPoly(den))


def response(tf: RationalTF, omega) -> FrequencyResponse:
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0):
        raise ValueError("frequencies must be positive")
    h = tf(1j * omega)
    mag = 20.0 * np.log10(np.abs(h))
    phase = np.degrees(np.unwrap(np.angle(h)))
    return FrequencyResponse(omega, mag, phase)


def ideal_response(r: int, omega) -> FrequencyResponse:
    """Response of the ideal operator ``s^r``."""
    omega = np.asarray(omega, dtype=float)
    return FrequencyResponse(omega, 20.0 * r * np.log10(omega), np.full_like(omega, 90.0 * r))


def passband_error(g: ObserverGainSet, j: int, omega) -> np.ndarray:
    """Relative deviation ``|H_j(iw) (iw)^(p-j) - 1|`` from the ideal operator."""
    omega = np.asarray(omega, dtype=float)
    s = 1j * omega
    return np.abs(transfer_function(g, j)(s) * s ** (g.p - j) - 1.0)


def usable_band(g: ObserverGainSet, j: int, omega=None, tol: float = 0.05):
    """Contiguous ``(w_lo, w_hi)`` around the best-matching frequency where the
    deviation stays below ``tol``; ``None`` when no grid point qualifies."""
    omega = default_grid() if omega is None else np.asarray(omega, dtype=float)
    dev = passband_error(g, j, omega)
    best = int(np.argmin(dev))
    if dev[best] >= tol:
        return None
    lo = hi = best
    while lo > 0 and dev[lo - 1] < tol:
        lo -= 1
    while hi < len(omega) - 1 and dev[hi + 1] < tol:
        hi += 1
    return float(omega[lo]), float(omega[hi])


def bode_record(g: ObserverGainSet, omega=None) -> RunRecord:
    """Bode data for every state: ``omega, mag_db_j1.., phase_deg_j1..``."""
    omega = default_grid() if omega is None else np.asarray(omega, dtype=float)
    mags, phases = [], []
    for j in range(1, g.n + 1):
        fr = response(transfer_function(g, j), omega)
        mags.append(fr.magnitude_db)
        phases.append(fr.phase_deg)
    cols = ["omega"] + [f"mag_db_j{j}" for j in range(1, g.n + 1)] + [f"phase_deg_j{j}" for j in range(1, g.n + 1)]
    data = np.column_stack([omega] + mags + phases)
    return RunRecord(cols, data, {"n": g.n, "p": g.p, "k": list(g.k), "eps": g.eps})


def export_bode_svg(g: ObserverGainSet, path, omega=None):
    """Two-panel Bode plot; observer solid, ideal operators ``s^(j-p)`` dashed."""
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "obsint"
    import matplotlib.pyplot as plt

    omega = default_grid() if omega is None else np.asarray(omega, dtype=float)
    fig, (am, ap) = plt.subplots(2, 1, figsize=(8, 7), sharex=True)
    for j in range(1, g.n + 1):
        fr = response(transfer_function(g, j), omega)
        ideal = ideal_response(j - g.p, omega)
        line, = am.semilogx(omega, fr.magnitude_db, "-", linewidth=1.2, label=f"x{j}")
        am.semilogx(omega, ideal.magnitude_db, "--", color=line.get_color(), linewidth=1.0, label=f"s^{j - g.p}")
        ap.semilogx(omega, fr.phase_deg, "-", color=line.get_color(), linewidth=1.2)
        ap.semilogx(omega, ideal.phase_deg, "--", color=line.get_color(), linewidth=1.0)
    am.set_ylabel("magnitude [dB]")
    ap.set_ylabel("phase [deg]")
    ap.set_xlabel("omega [rad/s]")
    am.set_title(f"n={g.n}, p={g.p}, eps={g.eps:g}")
    am.legend(fontsize=8, ncol=2)
    for ax in (am, ap):
        ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return path
