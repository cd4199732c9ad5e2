import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from obsint.poly import (
    ObserverGainSet,
    RealPoly,
    UnsupportedCase,
    characteristic_poly,
    gains_diffint,
    gains_double,
    gains_onefold,
    is_hurwitz,
    gains_valid,
    roots,
    routh_table,
)
from obsint.freq import transfer_function

pos = st.floats(0.01, 100.0)
eps_st = st.floats(0.01, 0.99)


def assert_roots_match(got, want, rtol=1e-6):
    """Separated roots must match individually (best pairing). Clustered roots
    are only determined to about machine-eps**(1/m) for multiplicity m, so
    those are compared through the polynomial they rebuild."""
    got, want = np.asarray(got, dtype=complex), np.asarray(want, dtype=complex)
    scale = max(1.0, float(np.max(np.abs(want))))
    gaps = np.abs(want[:, None] - want[None, :])[~np.eye(len(want), dtype=bool)]
    if gaps.size == 0 or gaps.min() > 1e-2 * scale:
        best = min(np.max(np.abs(got[list(perm)] - want)) for perm in itertools.permutations(range(len(got))))
        assert best <= rtol * scale
    else:
        assert np.allclose(np.poly(got), np.poly(want), rtol=1e-5, atol=1e-5 * scale ** len(want))


def sorted_roots(r):
    r = np.asarray(r, dtype=complex)
    return r[np.lexsort((r.imag, r.real))]


class TestRouth:
    def test_stable_quadratic_first_column(self):
        assert routh_table(RealPoly([1, 3, 2])).first_column == pytest.approx([1, 3, 2])

    def test_rhp_pair_sign_changes(self):
        t = routh_table(RealPoly([1, -1, 1]))
        assert t.first_column == pytest.approx([1, -1, 1])
        assert t.sign_changes == 2

    def test_diffint_equivalent_poly_all_positive(self):
        eps = 0.1
        p = RealPoly([1, 2, 3 / eps**2, 0.1])
        assert all(v > 0 for v in routh_table(p).first_column)
        assert np.max(roots(p).real) < 0

    def test_row_count_and_lengths(self):
        t = routh_table(RealPoly([1, 2, 3, 4, 5, 6]))
        assert len(t.rows) == 6
        for i in range(len(t.rows) - 2):
            assert len(t.rows[i + 2]) <= len(t.rows[i])

    def test_constant_polynomial_rejected(self):
        with pytest.raises(ValueError, match="constant polynomial"):
            routh_table(RealPoly([3.0]))

    def test_zero_pivot_flagged(self):
        t = routh_table(RealPoly([1, 1, 1, 1, 1, 1]))
        assert t.has_zero_pivot


class TestHurwitz:
    @given(pos, pos)
    def test_second_order_positive_gains(self, k1, k2):
        assert is_hurwitz(RealPoly([1, k2, k1]))

    def test_all_ones_quintic_not_hurwitz(self):
        assert not is_hurwitz(RealPoly([1, 1, 1, 1, 1, 1]))
        assert np.max(roots(RealPoly([1, 1, 1, 1, 1, 1])).real) > -1e-9

    def test_first_order(self):
        assert is_hurwitz(RealPoly([1, 1]))
        assert not is_hurwitz(RealPoly([1, -1]))

    def test_negative_leading_coefficient_normalised(self):
        assert is_hurwitz(RealPoly([-1, -3, -2]))

    @settings(max_examples=300, deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=2, max_size=7))
    def test_matches_root_oracle(self, coeffs):
        if abs(coeffs[0]) < 1e-3:
            return
        p = RealPoly(coeffs)
        m = float(np.max(np.roots(p.coeffs).real))
        if abs(m) < 1e-6:
            return
        assert is_hurwitz(p) == (m < 0)


class TestRoots:
    def test_quadratic(self):
        assert sorted_roots(roots(RealPoly([1, 3, 2]))) == pytest.approx([-2, -1])

    def test_differentiator_gains_cubic(self):
        assert sorted_roots(roots(RealPoly([1, 6, 11, 6]))) == pytest.approx([-3, -2, -1])

    def test_imaginary_pair(self):
        assert sorted_roots(roots(RealPoly([1, 0, 1]))) == pytest.approx([-1j, 1j])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=2, max_size=7))
    def test_residual_bound(self, coeffs):
        if abs(coeffs[0]) < 1e-3:
            return
        p = RealPoly(coeffs)
        c = np.abs(p.coeffs)
        for r in roots(p):
            scale = np.sum(c * np.abs(r) ** np.arange(len(c) - 1, -1, -1))
            assert abs(p(r)) <= 1e-8 * max(scale, 1.0)


class TestCharacteristicPoly:
    def test_onefold(self):
        g = ObserverGainSet(2, 2, (2.0, 3.0), 0.2)
        assert characteristic_poly(g).coeffs == pytest.approx([1, 3 / 0.04, 2])

    def test_diffint(self):
        g = ObserverGainSet(3, 2, (0.1, 3.0, 2.0), 0.1)
        assert characteristic_poly(g).coeffs == pytest.approx([1, 2, 3 / 0.01, 0.1])

    def test_differentiator_has_no_eps(self):
        g = ObserverGainSet(3, 1, (6.0, 11.0, 6.0), 0.3)
        assert characteristic_poly(g).coeffs == pytest.approx([1, 6, 11, 6])

    @pytest.mark.parametrize("n,p,k", [(2, 2, (2, 3)), (3, 2, (0.1, 3, 2)), (3, 3, (0.5, 2.5, 3)),
                                       (4, 3, (0.01, 0.1, 3, 2)), (3, 1, (6, 11, 6))])
    @pytest.mark.parametrize("eps", [0.1, 0.4])
    def test_true_poles_are_scaled_equivalent_roots(self, n, p, k, eps):
        g = ObserverGainSet(n, p, tuple(map(float, k)), eps)
        den = transfer_function(g, 1).den
        assert sorted_roots(roots(den)) == pytest.approx(sorted_roots(roots(characteristic_poly(g)) / eps), rel=1e-7)


class TestGainConditions:
    def test_diffint_bode_gains_valid(self):
        assert gains_valid(ObserverGainSet(3, 2, (0.1, 3.0, 2.0), 0.1))

    def test_double_gains_valid(self):
        assert gains_valid(ObserverGainSet(3, 3, (0.5, 2.5, 3.0), 0.4))

    @pytest.mark.parametrize("n,p", [(4, 2), (5, 2), (5, 5)])
    def test_unsupported_cases(self, n, p):
        with pytest.raises(UnsupportedCase, match="stays Hurwitz as eps"):
            gains_valid(ObserverGainSet(n, p, (1.0,) * n, 0.5))

    def test_boundary_fails(self):
        eps, k1, k3 = 0.5, 1.0, 2.0
        k2 = eps**2 * k1 / k3
        assert not gains_valid(ObserverGainSet(3, 2, (k1, k2, k3), eps))

    def test_p1_needs_hurwitz_gains(self):
        assert not gains_valid(ObserverGainSet(4, 1, (1.0, 1.0, 1.0, 1.0), 0.5))

    @settings(max_examples=200, deadline=None)
    @given(st.sampled_from([(2, 2), (3, 2), (3, 3), (4, 3), (2, 1), (3, 1), (4, 1)]),
           st.lists(st.floats(0.01, 10.0), min_size=4, max_size=4), eps_st)
    def test_valid_gains_are_hurwitz(self, case, ks, eps):
        n, p = case
        g = ObserverGainSet(n, p, tuple(ks[:n]), eps)
        if gains_valid(g):
            assert is_hurwitz(characteristic_poly(g))

    @pytest.mark.parametrize("eps", [0.1, 0.5, 0.9])
    def test_43_condition_is_routh_condition(self, eps):
        rng = np.random.default_rng(3)
        for _ in range(300):
            k = tuple(rng.uniform(0.01, 5.0, 4))
            g = ObserverGainSet(4, 3, k, eps)
            assert gains_valid(g) == is_hurwitz(characteristic_poly(g))


class TestSynthesis:
    def test_onefold_worked_example(self):
        g = gains_onefold(100, 0.02, 8)
        assert g.k[0] == pytest.approx(2.0)
        assert g.eps == pytest.approx(0.1768, abs=5e-4)
        assert g.k[1] == pytest.approx(3.1256, abs=5e-4)

    def test_onefold_substitution(self):
        g = gains_onefold(1, 1, 10)
        assert (g.k[0], g.eps, g.k[1]) == pytest.approx((1.0, 0.1, 0.02))

    def test_onefold_bandwidth_too_low(self):
        with pytest.raises(ValueError, match="bandwidth too low"):
            gains_onefold(2, 2, 1)

    @pytest.mark.parametrize("args,expected", [
        ((46.8218, 0.0266, 0.0999, 0.4), (0.5, 2.5, 3.0)),
        ((15.6190, 0.0030, 0.0800, 0.4), (0.1, 0.1, 1.0)),
        ((1, 1, 0, 0.5), (1.0, 3.0, 0.375)),
    ])
    def test_double(self, args, expected):
        g = gains_double(*args)
        tol = 1e-12 if args[0] == 1 else 1e-2
        assert g.k == pytest.approx(expected, abs=tol)
        assert gains_valid(g)

    def test_diffint_substitution(self):
        assert gains_diffint(1, 0, 1, 0.5).k == pytest.approx((1.0, 0.75, 3.0))

    @settings(max_examples=100, deadline=None)
    @given(pos, st.floats(0.0, 50.0), pos, eps_st)
    def test_diffint_round_trip(self, a11, a12, a2, eps):
        g = gains_diffint(a11, a12, a2, eps)
        assert g.k[1] > eps**2 * g.k[0] / g.k[2]
        assert_roots_match(roots(characteristic_poly(g)), [-a11 + 1j * a12, -a11 - 1j * a12, -a2])

    @settings(max_examples=100, deadline=None)
    @given(pos, pos, st.floats(0.0, 50.0), eps_st)
    def test_double_round_trip(self, a1, a21, a22, eps):
        g = gains_double(a1, a21, a22, eps)
        assert_roots_match(roots(characteristic_poly(g)), [-a1, -a21 + 1j * a22, -a21 - 1j * a22])

    @settings(max_examples=100, deadline=None)
    @given(pos, pos)
    def test_onefold_round_trip(self, a1, a2):
        omega = 2 * math.sqrt(a1 * a2) + 1
        g = gains_onefold(a1, a2, omega)
        assert_roots_match(roots(characteristic_poly(g)), [-a1, -a2], rtol=1e-9)
