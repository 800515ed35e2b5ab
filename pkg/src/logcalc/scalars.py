"""Exact scalar ring for the logarithmic calculus.

Scalars are finite rational-linear combinations of monomials built from four
kinds of commuting symbols:

* ``e(q)``: a unit phase ``exp(pi*i*q)`` with ``q`` a rational in ``[0,1)``.
  Phases multiply by the group law with sign extraction across 1, so
  ``e(q1)*e(q2) = -e(q1+q2-1)`` when ``q1+q2 >= 1`` and ``e(0) = 1``.
* ``pi_i``: the formal symbol ``pi*i`` itself, with nonnegative integer
  exponents.  It is algebraically independent from everything else; it is
  *not* the logarithm of the phase tokens.
* ``log[name]``: the principal logarithm of a named parameter, nonnegative
  integer exponents.  The branch-``p`` logarithm is ``log[name] + 2p*pi_i``.
* ``name^q``: a power of a named parameter with rational exponent ``q``
  under the group law ``name^q1 * name^q2 = name^(q1+q2)``; powers never
  evaluate to numbers.
* ``$name``: an opaque free symbol (used for synthetic instances with
  undetermined coefficients), positive integer exponents.

Every scalar has a unique normal form (a sorted term dict), so equality is
dict equality.  There is no division except by nonzero rationals.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable


class ScalarError(ArithmeticError):
    pass


def _fr(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    raise ScalarError(f"not an exact rational: {x!r}")


def _norm_phase(q: Fraction) -> tuple[int, Fraction]:
    """Reduce a phase exponent mod 2 into [0,1), returning (sign, residue)."""
    q = q % 2
    if q >= 1:
        return -1, q - 1
    return 1, q


# monomial = sorted tuple of ((kind, name), exponent); kinds: "pi", "log",
# "pow", "sym".  Exponents are ints except for "pow" (Fraction).
_EMPTY = ()


def _mono_mul(a, b):
    if not a:
        return b
    if not b:
        return a
    acc = dict(a)
    for sym, e in b:
        ne = acc.get(sym, 0) + e
        if ne == 0:
            acc.pop(sym, None)
        else:
            acc[sym] = ne
    return tuple(sorted(acc.items()))


class Scalar:
    __slots__ = ("terms",)

    def __init__(self, terms: dict | None = None):
        # terms: {(phase_q, mono): Fraction}, zero coefficients dropped
        self.terms = terms or {}

    # -- constructors ------------------------------------------------------

    @staticmethod
    def zero() -> "Scalar":
        return Scalar({})

    @staticmethod
    def rational(x) -> "Scalar":
        c = _fr(x)
        if c == 0:
            return Scalar.zero()
        return Scalar({(Fraction(0), _EMPTY): c})

    @staticmethod
    def one() -> "Scalar":
        return Scalar.rational(1)

    @staticmethod
    def phase(q) -> "Scalar":
        """exp(pi*i*q) for rational q, normalized."""
        sign, res = _norm_phase(_fr(q))
        return Scalar({(res, _EMPTY): Fraction(sign)})

    @staticmethod
    def i() -> "Scalar":
        return Scalar.phase(Fraction(1, 2))

    @staticmethod
    def pi_i(power: int = 1) -> "Scalar":
        if power < 0:
            raise ScalarError("pi_i admits nonnegative powers only")
        if power == 0:
            return Scalar.one()
        return Scalar({(Fraction(0), ((("pi", ""), power),)): Fraction(1)})

    @staticmethod
    def log_of(name: str, power: int = 1) -> "Scalar":
        if power < 0:
            raise ScalarError("log admits nonnegative powers only")
        if power == 0:
            return Scalar.one()
        return Scalar({(Fraction(0), ((("log", name), power),)): Fraction(1)})

    @staticmethod
    def pow_of(name: str, q) -> "Scalar":
        q = _fr(q)
        if q == 0:
            return Scalar.one()
        return Scalar({(Fraction(0), ((("pow", name), q),)): Fraction(1)})

    @staticmethod
    def sym(name: str) -> "Scalar":
        return Scalar({(Fraction(0), ((("sym", name), 1),)): Fraction(1)})

    @staticmethod
    def branch_log(name: str, p: int) -> "Scalar":
        """l_p(name) = log[name] + 2*p*pi_i."""
        return Scalar.log_of(name) + Scalar.pi_i() * Fraction(2 * p)

    # -- ring operations ---------------------------------------------------

    def _add_term(self, acc: dict, key, coef: Fraction):
        ne = acc.get(key, Fraction(0)) + coef
        if ne == 0:
            acc.pop(key, None)
        else:
            acc[key] = ne

    def __add__(self, other) -> "Scalar":
        other = _coerce(other)
        acc = dict(self.terms)
        for key, c in other.terms.items():
            self._add_term(acc, key, c)
        return Scalar(acc)

    __radd__ = __add__

    def __neg__(self) -> "Scalar":
        return Scalar({k: -c for k, c in self.terms.items()})

    def __sub__(self, other) -> "Scalar":
        return self + (-_coerce(other))

    def __rsub__(self, other) -> "Scalar":
        return _coerce(other) + (-self)

    def __mul__(self, other) -> "Scalar":
        other = _coerce(other)
        acc: dict = {}
        for (q1, m1), c1 in self.terms.items():
            for (q2, m2), c2 in other.terms.items():
                sign, q = _norm_phase(q1 + q2)
                self._add_term(acc, (q, _mono_mul(m1, m2)), sign * c1 * c2)
        return Scalar(acc)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Scalar":
        c = _fr(other)
        if c == 0:
            raise ZeroDivisionError
        return Scalar({k: v / c for k, v in self.terms.items()})

    def __pow__(self, n: int) -> "Scalar":
        if n < 0:
            raise ScalarError("negative scalar powers are not defined")
        out = Scalar.one()
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, Fraction)):
            other = Scalar.rational(other)
        if not isinstance(other, Scalar):
            return NotImplemented
        return self.terms == other.terms

    __hash__ = None  # mutable container semantics

    # -- predicates and extraction -----------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    def is_rational(self) -> bool:
        return all(q == 0 and m == _EMPTY for (q, m) in self.terms)

    def as_rational(self) -> Fraction:
        if self.is_zero():
            return Fraction(0)
        if not self.is_rational():
            raise ScalarError(f"not a rational scalar: {self}")
        return next(iter(self.terms.values()))

    def has_param(self, name: str) -> bool:
        """True if log[name] or name^q occurs in some term."""
        for (_, mono) in self.terms:
            for (kind, nm), _e in mono:
                if nm == name and kind in ("log", "pow"):
                    return True
        return False

    def has_free_symbols(self) -> bool:
        return any(
            kind == "sym" for (_, mono) in self.terms for (kind, _), _e in mono
        )

    def scale(self, c) -> "Scalar":
        # uniform interface shared with vector coefficients
        if isinstance(c, Scalar):
            return self * c
        return Scalar({k: v * _fr(c) for k, v in self.terms.items()})

    # -- exponential of pi_i / log-linear combinations ----------------------

    def exp(self) -> "Scalar":
        """exp(self) when self is a rational combination of pi_i and log
        symbols (plus 0).  exp(q*pi_i) is the phase e(q); exp(q*log[name])
        is name^q.  Anything else has no exact value here.
        """
        out = Scalar.one()
        for (q, mono), c in self.terms.items():
            if q != 0:
                raise ScalarError("cannot exponentiate a phase-bearing term")
            if mono == _EMPTY:
                if c != 0:
                    raise ScalarError("exp of a nonzero rational is not exact")
                continue
            if len(mono) != 1 or mono[0][1] != 1:
                raise ScalarError(f"exp undefined for term {mono}")
            (kind, name), _ = mono[0]
            if kind == "pi":
                out = out * Scalar.phase(c)
            elif kind == "log":
                out = out * Scalar.pow_of(name, c)
            else:
                raise ScalarError(f"exp undefined for symbol kind {kind!r}")
        return out

    # -- display -----------------------------------------------------------

    def __repr__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for (q, mono), c in sorted(self.terms.items(), key=_term_sort_key):
            factors = []
            if c != 1 or (q == 0 and not mono):
                factors.append(str(c))
            if q != 0:
                factors.append(f"e({q})")
            for (kind, name), e in mono:
                if kind == "pi":
                    base = "pi_i"
                elif kind == "log":
                    base = f"log[{name}]"
                elif kind == "pow":
                    base = name
                else:
                    base = f"${name}"
                factors.append(base if e == 1 else f"{base}^({e})")
            parts.append("*".join(factors))
        return " + ".join(parts)


def _term_sort_key(item):
    (q, mono), _c = item
    return (q, tuple((kind, name, str(e)) for (kind, name), e in mono))


def _coerce(x) -> Scalar:
    if isinstance(x, Scalar):
        return x
    if isinstance(x, (int, Fraction)):
        return Scalar.rational(x)
    raise ScalarError(f"cannot coerce {x!r} to Scalar")


ZERO = Scalar.zero()
ONE = Scalar.one()


def phase_of_rational_power(q, r: int) -> Scalar:
    """The unit scalar exp((2r+1)*pi*i*q) produced by substituting the
    branch-r exponential into a power x^q."""
    return Scalar.phase((2 * r + 1) * _fr(q))


def branch_value(name: str, p: int) -> Scalar:
    """The value of the branch-p logarithm of the parameter ``name``."""
    return Scalar.branch_log(name, p)
