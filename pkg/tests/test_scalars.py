from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from logcalc.scalars import (
    Scalar,
    ScalarError,
    branch_value,
    phase_of_rational_power,
)

F = Fraction


def test_phase_group_law_with_carry():
    # e(2/3)*e(2/3) crosses 1: the sign comes out and the residue wraps
    assert Scalar.phase(F(2, 3)) * Scalar.phase(F(2, 3)) == -Scalar.phase(F(1, 3))
    assert Scalar.phase(0) == Scalar.one()
    assert Scalar.phase(1) == Scalar.rational(-1)
    assert Scalar.phase(2) == Scalar.one()
    # i^2 = -1, i^4 = 1
    assert Scalar.i() * Scalar.i() == Scalar.rational(-1)
    assert Scalar.i() ** 4 == Scalar.one()


def test_phase_constructor_normalizes_any_rational():
    # e(q) * e(2-q) = e(2) = 1; the constructor already reduces 2-q
    q = F(3, 7)
    assert Scalar.phase(q) * Scalar.phase(2 - q) == Scalar.one()
    assert Scalar.phase(-F(1, 2)) == -Scalar.i()


def test_phase_of_rational_power_oracle_values():
    # q=1/2, r=0: e^{pi i/2} = i
    assert phase_of_rational_power(F(1, 2), 0) == Scalar.i()
    # q=1/3, r=1: (2r+1)q = 1, so e^{pi i} = -1 by direct reduction
    assert phase_of_rational_power(F(1, 3), 1) == Scalar.rational(-1)
    # integral q never leaves {1,-1}
    assert phase_of_rational_power(2, 0) == Scalar.one()
    assert phase_of_rational_power(3, -1) == Scalar.rational(-1)


def test_branch_value():
    assert branch_value("z", 0) == Scalar.log_of("z")
    assert branch_value("z", 1) == Scalar.log_of("z") + 2 * Scalar.pi_i()
    assert branch_value("z", -2) == Scalar.log_of("z") - 4 * Scalar.pi_i()


def test_pi_i_is_independent_of_phases():
    # pi_i is a formal symbol: e(1/2) is not pi_i/... and pi_i^2 stays put
    s = Scalar.pi_i() ** 2 + Scalar.i()
    assert not s.is_rational()
    assert s - Scalar.i() == Scalar.pi_i() ** 2


def test_param_power_group_law():
    z = Scalar.pow_of
    assert z("z", F(1, 2)) * z("z", F(3, 2)) == z("z", 2)
    assert z("z", F(1, 2)) * z("z", -F(1, 2)) == Scalar.one()
    assert z("z", 0) == Scalar.one()
    # distinct parameters do not merge
    assert z("z1", 1) * z("z2", 1) != z("z1", 2)


def test_log_and_pow_are_algebraically_independent():
    s = Scalar.log_of("z") - Scalar.pow_of("z", 1)
    assert not s.is_zero()


def test_exp_of_linear_combos():
    # exp(q*pi_i) = phase, exp(q*log z) = z^q, exp(sum) = product
    s = Scalar.pi_i() * F(3, 2) + Scalar.log_of("z") * F(1, 2)
    assert s.exp() == Scalar.phase(F(3, 2)) * Scalar.pow_of("z", F(1, 2))
    assert Scalar.zero().exp() == Scalar.one()
    with pytest.raises(ScalarError):
        Scalar.rational(1).exp()
    with pytest.raises(ScalarError):
        (Scalar.pi_i() ** 2).exp()
    with pytest.raises(ScalarError):
        Scalar.i().exp()


def test_exp_branch_substitution_value():
    # e^{(1/2) l_1(z)} = z^{1/2} e^{pi i} = -z^{1/2}
    val = (branch_value("z", 1) * F(1, 2)).exp()
    assert val == -Scalar.pow_of("z", F(1, 2))


def test_as_rational_and_errors():
    assert Scalar.rational(F(5, 3)).as_rational() == F(5, 3)
    assert Scalar.zero().as_rational() == 0
    with pytest.raises(ScalarError):
        Scalar.i().as_rational()


def test_has_param_and_free_symbols():
    s = Scalar.pow_of("z", F(1, 2)) + Scalar.log_of("w")
    assert s.has_param("z") and s.has_param("w") and not s.has_param("q")
    assert not s.has_free_symbols()
    assert Scalar.sym("c3").has_free_symbols()


def test_repr_is_deterministic():
    s = Scalar.i() + Scalar.pow_of("z", F(1, 2)) * 3 - Scalar.pi_i()
    assert repr(s) == repr(
        Scalar.pow_of("z", F(1, 2)) * 3 + Scalar.i() - Scalar.pi_i()
    )


rationals = st.fractions(max_denominator=12)
small_rats = st.fractions(max_denominator=6)


def scalars(draw_depth=2):
    base = st.one_of(
        rationals.map(Scalar.rational),
        small_rats.map(Scalar.phase),
        st.sampled_from(["z", "z1", "w"]).map(Scalar.log_of),
        st.tuples(st.sampled_from(["z", "w"]), small_rats).map(
            lambda t: Scalar.pow_of(*t)
        ),
        st.just(Scalar.pi_i()),
    )
    return st.lists(base, min_size=1, max_size=draw_depth + 1).map(
        lambda xs: xs[0] if len(xs) == 1 else xs[0] + xs[1]
    )


@given(scalars(), scalars(), scalars())
def test_ring_axioms(a, b, c):
    assert (a + b) + c == a + (b + c)
    assert a + b == b + a
    assert (a * b) * c == a * (b * c)
    assert a * b == b * a
    assert a * (b + c) == a * b + a * c
    assert a + Scalar.zero() == a
    assert a * Scalar.one() == a
    assert a - a == Scalar.zero()


@given(small_rats, small_rats)
def test_phase_multiplicativity(q1, q2):
    assert Scalar.phase(q1) * Scalar.phase(q2) == Scalar.phase(q1 + q2)


@given(small_rats, st.integers(min_value=-3, max_value=3))
def test_phase_of_rational_power_is_exp(q, r):
    assert phase_of_rational_power(q, r) == (
        Scalar.pi_i() * ((2 * r + 1) * q)
    ).exp()
