"""Tests for exact rational functions in t with poles at 0 and z, and their
two expansions into windowed series."""

from __future__ import annotations

from fractions import Fraction as F

import pytest

from logcalc.scalars import Scalar
from logcalc.tcurrents import RatFn, iota
from logcalc import linalg


def coeff(s, e):
    return s.coeff({"t": e})


class TestExpansions:
    def test_lower_expansion_of_simple_pole(self):
        # 1/(z - t) expanded in negative powers of t: -t^-1 - z t^-2 - ...
        f = RatFn.from_factor("z-t", 1)
        s = iota(f, "-", 6)
        assert coeff(s, -1) == Scalar.rational(-1)
        assert coeff(s, -2) == -Scalar.pow_of("z", 1)
        assert coeff(s, -3) == -Scalar.pow_of("z", 2)
        assert coeff(s, 0).is_zero()

    def test_upper_expansion_of_simple_pole(self):
        # 1/(z - t) expanded in nonnegative powers of t: z^-1 + z^-2 t + ...
        f = RatFn.from_factor("z-t", 1)
        s = iota(f, "+", 6)
        assert coeff(s, 0) == Scalar.pow_of("z", -1)
        assert coeff(s, 1) == Scalar.pow_of("z", -2)
        assert coeff(s, 2) == Scalar.pow_of("z", -3)

    def test_partial_fractions_both_directions(self):
        # 1/(t(z+t)) = (1/z)(1/t - 1/(z+t)) must hold in either expansion
        lhs = RatFn.pole(1, F(1), 1, -1, Scalar.one())
        rhs = RatFn.monomial(-1, Scalar.pow_of("z", -1)).__add__(
            RatFn.pole(1, F(1), 1, 0, -Scalar.pow_of("z", -1))
        )
        for direction in ("+", "-"):
            a = iota(lhs, direction, 6)
            b = iota(rhs, direction, 6)
            ok, mism, checked = a.eq_on_common(b, report=True)
            assert ok, mism
            assert checked

    def test_product_against_partial_fractions(self):
        one_over_t = RatFn.monomial(-1, Scalar.one())
        one_over_zt = RatFn.from_factor("z+t", 1)
        prod = one_over_t * one_over_zt
        direct = RatFn.pole(1, F(1), 1, -1, Scalar.one())
        assert prod == direct


class TestInversionAndTranslation:
    def test_inversion_is_involutive(self):
        f = RatFn.from_factor("z+t", 2) + RatFn.monomial(3, Scalar.rational(5))
        assert f.invert_t().invert_t() == f

    def test_inversion_of_pole_location(self):
        # 1/(z+t) at 1/t becomes t/(1 + z t) = z^-1 t / (z^-1 + t)
        f = RatFn.from_factor("z+t", 1)
        g = f.invert_t()
        h = RatFn.pole(-1, F(1), 1, 1, Scalar.pow_of("z", -1))
        assert g == h

    def test_translation_round_trip(self):
        f = RatFn.from_factor("z+t", 1) + RatFn.monomial(2, Scalar.one())
        g = f.translate(1, F(1)).translate(1, F(-1))
        assert g == f

    def test_translation_cancels_pole(self):
        # substituting t -> t - z turns 1/(z+t) into 1/t
        f = RatFn.from_factor("z+t", 1)
        g = f.translate(1, F(-1))
        assert g == RatFn.monomial(-1, Scalar.one())

    def test_translation_of_monomials(self):
        # t^2 -> (t - z)^2 = t^2 - 2 z t + z^2
        f = RatFn.monomial(2, Scalar.one())
        g = f.translate(1, F(-1))
        want = (
            RatFn.monomial(2, Scalar.one())
            + RatFn.monomial(1, Scalar.pow_of("z", 1) * Scalar.rational(-2))
            + RatFn.monomial(0, Scalar.pow_of("z", 2))
        )
        assert g == want


class TestFactorKinds:
    def test_reflected_factor_signs(self):
        # 1/(z-t)^m = (-1)^m / (-z+t)^m
        for m in (1, 2, 3):
            a = RatFn.from_factor("z-t", m)
            b = RatFn.from_factor("-z+t", m).scale(F(-1) ** m)
            assert a == b
        assert RatFn.from_factor("t-z", 1) == RatFn.from_factor("-z+t", 1)

    def test_inverse_variable_factor(self):
        # 1/(z^-1 - t)^m carries the (-1)^m sign onto a pole at z^-1
        a = RatFn.from_factor("1/z-t", 2)
        b = RatFn.pole(-1, F(-1), 2, 0, Scalar.one())
        assert a == b.scale(1)
        c = RatFn.from_factor("1/z-t", 1)
        d = RatFn.pole(-1, F(-1), 1, 0, Scalar.rational(-1))
        assert c == d

    def test_inverse_variable_factor_expansion(self):
        # 1/(z^-1 - t) = z + z^2 t + z^3 t^2 + ... for t small
        f = RatFn.from_factor("1/z-t", 1)
        s = iota(f, "+", 4)
        for j in range(4):
            assert s.coeff({"t": j}) == Scalar.pow_of("z", j + 1), j

    def test_t_factor(self):
        assert RatFn.from_factor("t", 3) == RatFn.monomial(-3, Scalar.one())


class TestLinearAlgebra:
    def test_rank_and_kernel(self):
        M = [[F(1), F(2)], [F(2), F(4)]]
        assert linalg.rank(M) == 1
        ker = linalg.kernel(M)
        assert len(ker) == 1
        x = ker[0]
        assert x[0] * 1 + x[1] * 2 == 0

    def test_solve_consistent(self):
        M = [[F(1), F(1)], [F(0), F(1)]]
        sol = linalg.solve(M, [F(3), F(1)])
        assert sol == [F(2), F(1)]

    def test_solve_inconsistent(self):
        M = [[F(1), F(1)], [F(1), F(1)]]
        assert linalg.solve(M, [F(1), F(2)]) is None

    def test_kernel_of_empty_matrix(self):
        ker = linalg.kernel([], ncols=3)
        assert len(ker) == 3
