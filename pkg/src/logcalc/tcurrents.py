"""Exact rational functions of one variable t with poles at 0 and c*z^p.

These are the coefficient currents fed to module actions by the dual-pairing
constructions.  A function is a sum of terms

    coef * t^e / prod_i (c_i z^(p_i) + t)^(m_i)

with exact scalar coefficients, integer e, and pole atoms (p in {1,-1},
c a nonzero rational).  Everything stays rational until one of the two
expansions is applied:

* ``iota(f, "+")``: Laurent expansion at t = 0 (nonnegative powers of t in
  each pole factor);
* ``iota(f, "-")``: expansion at t = infinity.

Both land in ``WSeries`` over the variable "t" with the appropriate support
shape, so downstream products remain certified.
"""

from __future__ import annotations

from fractions import Fraction

from logcalc.scalars import Scalar
from logcalc.series import WSeries, binom, key_make

F = Fraction


def _z_pow(q, zname: str = "z") -> Scalar:
    q = F(q) if not isinstance(q, Fraction) else q
    if q == 0:
        return Scalar.one()
    return Scalar.pow_of(zname, q)


class RatFn:
    """Sum of terms keyed by (t-exponent, pole signature)."""

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        self.terms = {}
        for key, c in (terms or {}).items():
            self._add(key, c)

    def _add(self, key, c):
        if key in self.terms:
            s = self.terms[key] + c
            if s.is_zero():
                del self.terms[key]
            else:
                self.terms[key] = s
        elif not c.is_zero():
            self.terms[key] = c

    # -- constructors -------------------------------------------------------

    @staticmethod
    def zero() -> "RatFn":
        return RatFn()

    @staticmethod
    def monomial(e: int, coef=1) -> "RatFn":
        c = coef if isinstance(coef, Scalar) else Scalar.rational(coef)
        return RatFn({(e, ()): c})

    @staticmethod
    def pole(p: int, c, mult: int = 1, e: int = 0, coef=1) -> "RatFn":
        """coef * t^e / (c z^p + t)^mult."""
        c = F(c)
        if c == 0:
            raise ValueError("zero pole offset; use a plain monomial")
        cf = coef if isinstance(coef, Scalar) else Scalar.rational(coef)
        return RatFn({(e, (((p, c), mult),)): cf})

    @staticmethod
    def from_factor(kind: str, mult: int = 1) -> "RatFn":
        """Reciprocal of a named linear factor to the given power.  Kinds:
        "t", "z+t", "-z+t", "z-t", "t-z", "1/z-t"."""
        if kind == "t":
            return RatFn.monomial(-mult)
        table = {
            "z+t": ((1, F(1)), 1),
            "-z+t": ((1, F(-1)), 1),
            "z-t": ((1, F(-1)), -1),
            "t-z": ((1, F(-1)), 1),
            "1/z-t": ((-1, F(-1)), -1),
        }
        if kind not in table:
            raise ValueError(f"unknown factor kind {kind!r}")
        atom, sign = table[kind]
        coef = Scalar.rational(sign**mult)
        return RatFn({(0, ((atom, mult),)): coef})

    # -- ring operations ----------------------------------------------------

    def __add__(self, other: "RatFn") -> "RatFn":
        out = RatFn(dict(self.terms))
        for key, c in other.terms.items():
            out._add(key, c)
        return out

    def __neg__(self) -> "RatFn":
        return self.scale(-1)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, s) -> "RatFn":
        s = s if isinstance(s, Scalar) else Scalar.rational(s)
        return RatFn({k: c * s for k, c in self.terms.items()})

    def __mul__(self, other):
        if isinstance(other, (int, Fraction, Scalar)):
            return self.scale(other)
        out = RatFn()
        for (e1, d1), c1 in self.terms.items():
            for (e2, d2), c2 in other.terms.items():
                dens = dict(d1)
                for atom, m in d2:
                    dens[atom] = dens.get(atom, 0) + m
                out._add((e1 + e2, tuple(sorted(dens.items()))), c1 * c2)
        return out

    __rmul__ = __mul__

    def shift_t(self, k: int) -> "RatFn":
        """Multiply by t^k."""
        return RatFn({(e + k, d): c for (e, d), c in self.terms.items()})

    def is_zero(self) -> bool:
        return not self.terms

    def __eq__(self, other):
        if not isinstance(other, RatFn):
            return NotImplemented
        return (self - other).is_zero()

    __hash__ = None

    def __repr__(self):
        if not self.terms:
            return "RatFn(0)"
        bits = []
        for (e, d), c in sorted(self.terms.items(), key=lambda kv: (kv[0][0], repr(kv[0][1]))):
            den = "".join(
                f"/({c0}z^{p}+t)^{m}" for ((p, c0), m) in d
            )
            bits.append(f"({c!r})t^{e}{den}")
        return "RatFn[" + " + ".join(bits) + "]"

    # -- the exact operator calculus ----------------------------------------

    def invert_t(self, zname: str = "z") -> "RatFn":
        """f(t) -> f(1/t), exactly."""
        out = RatFn()
        for (e, dens), c in self.terms.items():
            ne = -e
            ndens = {}
            factor = Scalar.one()
            for (p, c0), m in dens:
                # (a + 1/t)^-m = t^m a^-m (1/a + t)^-m
                ne += m
                factor = factor * _z_pow(-p * m, zname) * Scalar.rational(F(1) / c0**m)
                na = (-p, F(1) / c0)
                ndens[na] = ndens.get(na, 0) + m
            out._add((ne, tuple(sorted(ndens.items()))), c * factor)
        return out

    def translate(self, p: int, c0, zname: str = "z") -> "RatFn":
        """f(t) -> f(t + a) for a = c0 * z^p, exactly."""
        c0 = F(c0)
        out = RatFn()
        for (e, dens), c in self.terms.items():
            pieces = RatFn.monomial(0, c)
            # numerator power: (t+a)^e
            if e >= 0:
                expanded = RatFn()
                for j in range(e + 1):
                    expanded._add(
                        (j, ()),
                        Scalar.rational(binom(e, j)) * _z_pow(p * (e - j), zname) * Scalar.rational(c0 ** (e - j)),
                    )
                pieces = pieces * expanded
            elif e < 0:
                pieces = pieces * RatFn({(0, (((p, c0), -e),)): Scalar.one()})
            for (pp, cc), m in dens:
                if pp == p:
                    nc = cc + c0
                    if nc == 0:
                        pieces = pieces.shift_t(-m)
                    else:
                        pieces = pieces * RatFn({(0, (((pp, nc), m),)): Scalar.one()})
                else:
                    # mixed-power translation leaves the atom family
                    raise ValueError(
                        "translation offset and pole atom carry different powers of z"
                    )
            for key, cc in pieces.terms.items():
                out._add(key, cc)
        return out


def iota(f: RatFn, direction: str, window=8, zname: str = "z") -> WSeries:
    """Expand each pole factor of f as a series in t: direction "+" expands
    at t = 0, "-" at t = infinity.  The result is certified on the window."""
    if direction not in ("+", "-"):
        raise ValueError("direction must be '+' or '-'")
    lo, hi = (-F(window), F(window)) if isinstance(window, (int, Fraction)) else window
    acc = {}
    for (e, dens), c in f.terms.items():
        coeffs = {e: c}
        for (p, c0), m in dens:
            a_pow, a_c = p, c0
            new = {}
            if direction == "+":
                # (a+t)^-m = sum_j C(-m,j) a^(-m-j) t^j
                for base_e, base_c in coeffs.items():
                    j = 0
                    while base_e + j <= hi:
                        w = Scalar.rational(binom(-m, j) * a_c ** (-m - j)) * _z_pow(
                            a_pow * (-m - j), zname
                        )
                        ne = base_e + j
                        nc = base_c * w
                        new[ne] = new.get(ne, Scalar.zero()) + nc
                        j += 1
            else:
                # (a+t)^-m = sum_j C(-m,j) a^j t^(-m-j)
                for base_e, base_c in coeffs.items():
                    j = 0
                    while base_e - m - j >= lo:
                        w = Scalar.rational(binom(-m, j) * a_c**j) * _z_pow(a_pow * j, zname)
                        ne = base_e - m - j
                        nc = base_c * w
                        new[ne] = new.get(ne, Scalar.zero()) + nc
                        j += 1
            coeffs = new
        for ne, nc in coeffs.items():
            if lo <= ne <= hi:
                acc[ne] = acc.get(ne, Scalar.zero()) + nc
    kind = "lower" if direction == "+" else "upper"
    # support bound: the expansion direction gives one-sided support
    bounds = []
    for (e, dens), _c in f.terms.items():
        md = sum(m for _a, m in dens)
        bounds.append(e if direction == "+" else e - md)
    if not bounds:
        kind = "bounded"
        swin = (F(0), F(0))
    elif direction == "+":
        swin = (F(min(bounds)), hi)
    else:
        swin = (lo, F(max(bounds)))
    return WSeries(
        {key_make({"t": n}): c for n, c in acc.items() if not c.is_zero()},
        {"t": swin},
        {"t": kind},
        0,
    )
