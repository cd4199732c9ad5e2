"""Polynomial stability machinery for the differentiation-integration observer.

Routh tables, strict Hurwitz tests, a companion-matrix root finder used as an
independent oracle, the gain-validity conditions for the supported observer
orders, and eigenvalue-placement gain synthesis.

Polynomials are stored highest degree first, as in ``numpy.polyval``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

# relative size below which a Routh pivot counts as zero
PIVOT_RTOL = 1e-12


class UnsupportedCase(ValueError):
    """Raised for (n, p) pairs where no Hurwitz gain selection exists."""


@dataclass(frozen=True)
class RealPoly:
    """Real polynomial, coefficients highest degree first."""

    coeffs: tuple[float, ...]

    def __init__(self, coeffs: Sequence[float]):
        c = [float(v) for v in coeffs]
        # strip leading zeros so the degree is well defined
        while len(c) > 1 and c[0] == 0.0:
            c.pop(0)
        if not c or c[0] == 0.0:
            raise ValueError("zero polynomial")
        if not all(math.isfinite(v) for v in c):
            raise ValueError("non-finite coefficient")
        object.__setattr__(self, "coeffs", tuple(c))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def monic(self) -> "RealPoly":
        lead = self.coeffs[0]
        return RealPoly([v / lead for v in self.coeffs])

    def __call__(self, s):
        return np.polyval(self.coeffs, s)

    def __repr__(self) -> str:
        return f"RealPoly({list(self.coeffs)})"


@dataclass(frozen=True)
class RouthTable:
    rows: list[list[float]]
    pivot_flags: list[int] = field(default_factory=list)

    @property
    def first_column(self) -> list[float]:
        return [r[0] for r in self.rows]

    @property
    def has_zero_pivot(self) -> bool:
        return bool(self.pivot_flags)

    @property
    def sign_changes(self) -> int:
        """Sign changes in the first column (right-half-plane root count).

        Only meaningful when there is no zero pivot.
        """
        col = [v for v in self.first_column if math.isfinite(v)]
        return sum(1 for a, b in zip(col, col[1:]) if (a > 0) != (b > 0))


def routh_table(poly: RealPoly) -> RouthTable:
    """Build the Routh table of ``poly``.

    The polynomial is normalised to a positive leading coefficient first. A zero
    pivot stops the recurrence: the row index is recorded in ``pivot_flags``
    and the remaining rows are filled with NaN.
    """
    if poly.degree < 1:
        raise ValueError("constant polynomial")
    c = np.asarray(poly.coeffs, dtype=float)
    if c[0] < 0:
        c = -c
    n = poly.degree
    scale = float(np.max(np.abs(c)))
    width = n // 2 + 1
    first = list(c[0::2]) + [0.0] * (width - len(c[0::2]))
    second = list(c[1::2]) + [0.0] * (width - len(c[1::2]))
    rows = [first, second]
    flags: list[int] = []
    if abs(second[0]) <= PIVOT_RTOL * scale:
        flags.append(1)
    for i in range(2, n + 1):
        length = (n - i) // 2 + 1
        if flags:
            rows.append([math.nan] * length)
            continue
        upper, lower = rows[i - 2], rows[i - 1]
        pivot = lower[0]
        row = []
        for j in range(length):
            a = upper[j + 1] if j + 1 < len(upper) else 0.0
            b = lower[j + 1] if j + 1 < len(lower) else 0.0
            row.append((pivot * a - upper[0] * b) / pivot)
        rows.append(row)
        if abs(row[0]) <= PIVOT_RTOL * scale:
            flags.append(i)
    # trim the padding so row lengths follow ceil((n - i + 1) / 2)
    rows = [r[: (n - i) // 2 + 1] for i, r in enumerate(rows)]
    return RouthTable(rows=rows, pivot_flags=flags)


def is_hurwitz(poly: RealPoly) -> bool:
    """Strict Hurwitz test: every first-column Routh entry positive."""
    table = routh_table(poly)
    if table.has_zero_pivot:
        return False
    return all(v > 0 for v in table.first_column)


def roots(poly: RealPoly, max_polish: int = 8) -> np.ndarray:
    """All roots with multiplicity, via companion-matrix eigenvalues.

    Each eigenvalue is polished with a few Newton steps. Residuals are checked
    against the backward-error bound ``1e-8 * sum_i |c_i| |r|^(n-i)``, which
    equals ``1e-8 * ||c||_1`` for roots on the unit disc, with an absolute
    floor at rounding level for roots near zero.
    """
    if poly.degree < 1:
        raise ValueError("constant polynomial")
    c = np.asarray(poly.monic().coeffs, dtype=float)
    n = len(c) - 1
    comp = np.zeros((n, n))
    comp[0, :] = -c[1:]
    if n > 1:
        comp[1:, :-1] = np.eye(n - 1)
    r = np.linalg.eigvals(comp).astype(complex)
    dc = np.polyder(c)
    absc = np.abs(c)
    floor = np.finfo(float).eps * float(np.sum(absc))
    out = np.empty_like(r)
    for idx, z in enumerate(r):
        for _ in range(max_polish):
            f = np.polyval(c, z)
            d = np.polyval(dc, z)
            if d == 0:
                break
            nz = z - f / d
            if abs(np.polyval(c, nz)) >= abs(f):
                break
            z = nz
        bound = 1e-8 * max(np.polyval(absc, abs(z)), floor)
        if not abs(np.polyval(c, z)) <= bound:
            raise ArithmeticError(f"root finder did not converge near {z}")
        out[idx] = z
    # snap near-real roots so conjugate pairs stay paired
    tiny = np.abs(out.imag) <= 1e-12 * np.maximum(1.0, np.abs(out.real))
    out[tiny] = out[tiny].real
    return out[np.lexsort((out.imag, out.real))]


@dataclass(frozen=True)
class ObserverGainSet:
    """Order ``n``, sensor index ``p``, gains ``k[0..n-1]`` and perturbation ``eps``."""

    n: int
    p: int
    k: tuple[float, ...]
    eps: float

    def __post_init__(self):
        object.__setattr__(self, "k", tuple(float(v) for v in self.k))
        if self.n < 1:
            raise ValueError("observer order must be >= 1")
        if not 1 <= self.p <= self.n:
            raise ValueError(f"sensor index p={self.p} outside 1..{self.n}")
        if len(self.k) != self.n:
            raise ValueError(f"expected {self.n} gains, got {len(self.k)}")
        if not 0.0 < self.eps <= 1.0:
            raise ValueError(f"eps={self.eps} outside (0, 1]")

    @property
    def c(self) -> int:
        return 1 if self.p == 1 else 0


def characteristic_poly(g: ObserverGainSet) -> RealPoly:
    """Equivalent characteristic polynomial with the eps powers scaled out.

    ``s^n + sum_{i != p} k_i s^(i-1) + k_p / eps^(p - c(p)) s^(p-1)``. The
    observer's own poles are the roots of this polynomial divided by ``eps``.
    """
    coeffs = [0.0] * (g.n + 1)
    coeffs[0] = 1.0
    for i in range(1, g.n + 1):
        ki = g.k[i - 1]
        if i == g.p:
            ki = ki / g.eps ** (g.p - g.c)
        coeffs[g.n - i + 1] = ki
    return RealPoly(coeffs)


SUPPORTED_CASES = ((2, 2), (3, 2), (3, 3), (4, 3))


def gain_violations(g: ObserverGainSet) -> list[str]:
    """Return the gain conditions that ``g`` fails (empty when valid)."""
    n, p, e = g.n, g.p, g.eps
    k = (None,) + g.k  # 1-based
    if p != 1 and (n, p) not in SUPPORTED_CASES:
        raise UnsupportedCase(f"no gain selection stays Hurwitz as eps -> 0 for n={n}, p={p}")
    bad = [f"k{i} > 0" for i in range(1, n + 1) if not k[i] > 0]
    if p == 1:
        if not bad and not is_hurwitz(RealPoly([1.0] + list(g.k[::-1]))):
            bad.append("s^n + sum k_i s^(i-1) Hurwitz")
        return bad
    if bad:
        return bad
    if (n, p) == (3, 2) and not k[2] > e**2 * k[1] / k[3]:
        bad.append("k2 > eps^2 k1 / k3")
    elif (n, p) == (3, 3) and not k[2] > e**3 * k[1] / k[3]:
        bad.append("k2 > eps^3 k1 / k3")
    elif (n, p) == (4, 3):
        if not k[3] > e**3 * k[2] / k[4]:
            bad.append("k3 > eps^3 k2 / k4")
        if not k[2] > e**3 * (k[4] ** 2 * k[1] + k[2] ** 2) / (k[4] * k[3]):
            bad.append("k2 > eps^3 (k4^2 k1 + k2^2) / (k4 k3)")
    return bad


def gains_valid(g: ObserverGainSet) -> bool:
    return not gain_violations(g)


def gains_onefold(a1: float, a2: float, omega_n: float) -> ObserverGainSet:
    """Onefold integrator gains placing the equivalent poles at -a1, -a2.

    ``eps`` is chosen so that the natural frequency of the second-order
    transfer function equals ``omega_n``.
    """
    if min(a1, a2, omega_n) <= 0:
        raise ValueError("a1, a2 and omega_n must be positive")
    k1 = a1 * a2
    eps = math.sqrt(k1) / omega_n
    if eps >= 1.0:
        raise ValueError("bandwidth too low for these eigenvalues")
    k2 = eps**2 * (a1 + a2)
    return ObserverGainSet(2, 2, (k1, k2), eps)


def gains_double(a1: float, a21: float, a22: float, eps: float) -> ObserverGainSet:
    """Double integrator gains for poles -a1 and -a21 +/- a22 i."""
    if a1 <= 0 or a21 <= 0 or a22 < 0:
        raise ValueError("need a1 > 0, a21 > 0, a22 >= 0")
    r2 = a21**2 + a22**2
    k = (a1 * r2, r2 + 2 * a1 * a21, eps**3 * (a1 + 2 * a21))
    return ObserverGainSet(3, 3, k, eps)


def gains_diffint(a11: float, a12: float, a2: float, eps: float) -> ObserverGainSet:
    """Differentiation-integration gains for poles -a11 +/- a12 i and -a2."""
    if a11 <= 0 or a2 <= 0 or a12 < 0:
        raise ValueError("need a11 > 0, a2 > 0, a12 >= 0")
    r2 = a11**2 + a12**2
    k = (r2 * a2, eps**2 * (r2 + 2 * a11 * a2), 2 * a11 + a2)
    return ObserverGainSet(3, 2, k, eps)
