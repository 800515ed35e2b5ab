"""Windowed formal series in several variables with log slots.

A series here is a sparse map from exponent keys to coefficients.  A key
records, per variable, a rational exponent and a nonnegative integer power of
that variable's logarithm.  Coefficients are exact scalars (see
``logcalc.scalars``) or vectors over a labelled basis.

Infinite objects (delta kernels and friends) are handled by certification
rather than truncation-and-hope.  Each series carries, per variable:

* a *window* ``[lo, hi]``: stored keys lie inside it;
* a *kind* describing the true support of the object it represents:

  - ``bounded``: the true support lies inside the window and the data is
    complete; the series IS the object.
  - ``lower``: true exponents are ``>= lo`` (the window edge is a proven
    truncation bound) and the data is complete up to ``hi``.
  - ``upper``: mirror image.
  - ``all``: nothing is claimed outside the window; the data is complete
    exactly on ``[lo, hi]``.

The *known region* of a variable (where the stored coefficient, zero if
absent, equals the true one) is therefore: everything for ``bounded``,
``(-inf, hi]`` for ``lower``, ``[lo, inf)`` for ``upper`` and ``[lo, hi]``
for ``all``.  Equality of two series means equality on the intersection of
their known regions; only fully bounded series can be pronounced identically
equal.

Series built from delta kernels additionally carry their affine
parametrization (a ``Family``): the set of monomials is the image of a
parameter lattice under an affine map, with binomial coefficients attached.
The product routine uses these parametrizations to certify products whose
supports are coupled across variables (per-variable reasoning alone cannot
multiply two delta kernels sharing a variable).  Certification works by
interval propagation over the affine constraints; when some parameter cannot
be bounded the product is refused (``ShapeConflict``), which is exactly what
happens for ``delta(x)*delta(x)``.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

from logcalc.scalars import Scalar


DEFAULT_WINDOW = 8
DEFAULT_LOG_BOUND = 8


class ShapeConflict(ArithmeticError):
    """Raised when an operation's result is not provably finite per key."""


class WindowTooSmall(ArithmeticError):
    """Raised when certification needs data outside an operand's window."""


class LogInResidueVariable(ArithmeticError):
    """Raised when taking a residue in a variable that carries log terms."""


F = Fraction


def _fr(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


def binom(a, k: int) -> Fraction:
    """Generalized binomial coefficient: a any rational, k an integer."""
    if k < 0:
        return Fraction(0)
    a = _fr(a)
    num = Fraction(1)
    for j in range(k):
        num *= a - j
    import math

    return num / math.factorial(k)


# ---------------------------------------------------------------------------
# exponent keys


KEY_ONE = ((), ())


def key_make(pows: dict | None = None, logs: dict | None = None):
    p = tuple(sorted((v, _fr(e)) for v, e in (pows or {}).items() if e != 0))
    l = tuple(sorted((v, int(k)) for v, k in (logs or {}).items() if k != 0))
    return (p, l)


def key_mul(k1, k2):
    if k1 == KEY_ONE:
        return k2
    if k2 == KEY_ONE:
        return k1
    p = dict(k1[0])
    for v, e in k2[0]:
        ne = p.get(v, F(0)) + e
        if ne == 0:
            p.pop(v, None)
        else:
            p[v] = ne
    l = dict(k1[1])
    for v, k in k2[1]:
        nk = l.get(v, 0) + k
        if nk == 0:
            l.pop(v, None)
        else:
            l[v] = nk
    return (tuple(sorted(p.items())), tuple(sorted(l.items())))


def key_pow(key, var) -> Fraction:
    for v, e in key[0]:
        if v == var:
            return e
    return F(0)


def key_log(key, var) -> int:
    for v, k in key[1]:
        if v == var:
            return k
    return 0


def key_drop(key, var):
    return (
        tuple((v, e) for v, e in key[0] if v != var),
        tuple((v, k) for v, k in key[1] if v != var),
    )


def key_vars(key):
    return {v for v, _ in key[0]} | {v for v, _ in key[1]}


# ---------------------------------------------------------------------------
# coefficients: scalars or labelled vectors


class Vec:
    """Sparse vector over a labelled basis, with a completeness flag.

    ``complete=False`` records that entries were dropped by a weight cap; an
    incomplete vector is data about a partially known object, and checkers
    must treat comparisons involving it as uncertified rather than failed.
    """

    __slots__ = ("entries", "complete")

    def __init__(self, entries: dict | None = None, complete: bool = True):
        self.entries = {
            k: v for k, v in (entries or {}).items() if not _as_scalar(v).is_zero()
        }
        for k in list(self.entries):
            self.entries[k] = _as_scalar(self.entries[k])
        self.complete = complete

    @staticmethod
    def unit(label, c=1) -> "Vec":
        return Vec({label: _as_scalar(c)})

    @staticmethod
    def zero() -> "Vec":
        return Vec({})

    def add(self, other: "Vec") -> "Vec":
        acc = dict(self.entries)
        for k, v in other.entries.items():
            nv = acc.get(k, Scalar.zero()) + v
            if nv.is_zero():
                acc.pop(k, None)
            else:
                acc[k] = nv
        return Vec(acc, self.complete and other.complete)

    def scale(self, s) -> "Vec":
        s = _as_scalar(s)
        if s.is_zero():
            return Vec({}, self.complete)
        return Vec({k: v * s for k, v in self.entries.items()}, self.complete)

    def neg(self) -> "Vec":
        return self.scale(-1)

    def sub(self, other: "Vec") -> "Vec":
        return self.add(other.neg())

    def is_zero(self) -> bool:
        return not self.entries

    def get(self, label) -> Scalar:
        return self.entries.get(label, Scalar.zero())

    def items(self):
        return self.entries.items()

    def __eq__(self, other):
        return isinstance(other, Vec) and self.entries == other.entries

    __hash__ = None

    def __repr__(self):
        if not self.entries:
            return "Vec{}"
        body = ", ".join(
            f"{k!r}: {v!r}" for k, v in sorted(self.entries.items(), key=lambda t: repr(t[0]))
        )
        tag = "" if self.complete else " (incomplete)"
        return "Vec{" + body + "}" + tag


def _as_scalar(x) -> Scalar:
    if isinstance(x, Scalar):
        return x
    if isinstance(x, (int, Fraction)):
        return Scalar.rational(x)
    raise TypeError(f"not a scalar: {x!r}")


def c_add(a, b):
    if isinstance(a, Vec) or isinstance(b, Vec):
        if isinstance(a, Vec) and isinstance(b, Vec):
            return a.add(b)
        raise TypeError("cannot add a vector and a scalar coefficient")
    return _as_scalar(a) + _as_scalar(b)


def c_scale(a, s):
    if isinstance(a, Vec):
        return a.scale(s)
    return _as_scalar(a) * _as_scalar(s)


def c_mul(a, b):
    if isinstance(a, Vec) and isinstance(b, Vec):
        raise TypeError("product of two vector-valued series is undefined")
    if isinstance(a, Vec):
        return a.scale(b)
    if isinstance(b, Vec):
        return b.scale(a)
    return _as_scalar(a) * _as_scalar(b)


def c_is_zero(a) -> bool:
    return a.is_zero()


def c_neg(a):
    return c_scale(a, -1)


# ---------------------------------------------------------------------------
# intervals with None = unbounded


def iv_add(a, b):
    return (
        None if a[0] is None or b[0] is None else a[0] + b[0],
        None if a[1] is None or b[1] is None else a[1] + b[1],
    )


def iv_neg(a):
    return (None if a[1] is None else -a[1], None if a[0] is None else -a[0])


def iv_sub(a, b):
    return iv_add(a, iv_neg(b))


def iv_scale(a, c: int):
    if c == 0:
        return (F(0), F(0))
    lo = None if a[0] is None else a[0] * c
    hi = None if a[1] is None else a[1] * c
    return (lo, hi) if c > 0 else (hi, lo)


def iv_div(a, c: int):
    lo = None if a[0] is None else a[0] / c
    hi = None if a[1] is None else a[1] / c
    return (lo, hi) if c > 0 else (hi, lo)


def iv_meet(a, b):
    lo = b[0] if a[0] is None else (a[0] if b[0] is None else max(a[0], b[0]))
    hi = b[1] if a[1] is None else (a[1] if b[1] is None else min(a[1], b[1]))
    return (lo, hi)


def iv_empty(a) -> bool:
    return a[0] is not None and a[1] is not None and a[0] > a[1]


def iv_bounded(a) -> bool:
    return a[0] is not None and a[1] is not None


# ---------------------------------------------------------------------------
# windows and support kinds

KINDS = ("bounded", "lower", "upper", "all")


def known_region(kind: str, lo, hi):
    if kind == "bounded":
        return (None, None)
    if kind == "lower":
        return (None, hi)
    if kind == "upper":
        return (lo, None)
    return (lo, hi)


def support_region(kind: str, lo, hi):
    if kind == "bounded":
        return (lo, hi)
    if kind == "lower":
        return (lo, None)
    if kind == "upper":
        return (None, hi)
    return (None, None)


def make_box(vars, window) -> dict:
    """Normalize a window spec (None, int, or per-variable dict) to a box."""
    if window is None:
        window = DEFAULT_WINDOW
    if isinstance(window, (int, Fraction)):
        w = _fr(window)
        return {v: (-w, w) for v in vars}
    box = {}
    for v in vars:
        if v in window:
            lo, hi = window[v]
            box[v] = (_fr(lo), _fr(hi))
        else:
            box[v] = (F(-DEFAULT_WINDOW), F(DEFAULT_WINDOW))
    return box


# ---------------------------------------------------------------------------
# affine families (parametrized monomial sets behind delta kernels)


class Family:
    """Monomials ``prod_v v^(exp_v(p))`` with ``p`` ranging over a lattice.

    ``domains``: per parameter, ``"int"`` or ``"nat"``.
    ``exps``: var -> affine expression ``(const, ((param_index, coef), ...))``.
    ``coef``: callable taking the parameter tuple, returning a Scalar.
    """

    __slots__ = ("domains", "exps", "coef")

    def __init__(self, domains, exps, coef):
        self.domains = tuple(domains)
        self.exps = dict(exps)
        self.coef = coef

    def support(self, var):
        aff = self.exps.get(var)
        if aff is None:
            return (F(0), F(0))
        iv = (aff[0], aff[0])
        for idx, c in aff[1]:
            dom = (F(0), None) if self.domains[idx] == "nat" else (None, None)
            iv = iv_add(iv, iv_scale(dom, c))
        return iv


def aff_eval(aff, vals) -> Fraction:
    out = aff[0]
    for idx, c in aff[1]:
        out += c * vals[idx]
    return out


# slots for delta kernels ----------------------------------------------------


class VarSlot:
    """A (signed, possibly inverted) series variable in a delta argument."""

    __slots__ = ("var", "sign", "invert")

    def __init__(self, var: str, sign: int = 1, invert: bool = False):
        self.var, self.sign, self.invert = var, sign, invert


class ParamSlot:
    """A scalar parameter: powers become Scalar symbols, not key exponents."""

    __slots__ = ("name", "sign")

    def __init__(self, name: str, sign: int = 1):
        self.name, self.sign = name, sign


class CompSlot:
    """A two-term argument ``s_hi*hi + s_lo*lo`` expanded in nonnegative
    powers of ``lo`` (finite binomial for nonnegative exponents, dominant-hi
    iota-expansion for negative ones)."""

    __slots__ = ("hi", "lo", "hi_sign", "lo_sign")

    def __init__(self, hi: str, lo: str, hi_sign: int = 1, lo_sign: int = 1):
        self.hi, self.lo, self.hi_sign, self.lo_sign = hi, lo, hi_sign, lo_sign


def _slot(s):
    return VarSlot(s) if isinstance(s, str) else s


class _FamBuilder:
    def __init__(self):
        self.domains = []
        self.exps = {}
        self.factors = []  # ('binom', top_aff, bot_aff) | ('sgn', aff) | ('pow', name, aff)

    def param(self, dom: str) -> int:
        self.domains.append(dom)
        return len(self.domains) - 1

    def add_exp(self, var: str, aff):
        cur = self.exps.get(var, (F(0), ()))
        coefs = dict(cur[1])
        for idx, c in aff[1]:
            coefs[idx] = coefs.get(idx, 0) + c
            if coefs[idx] == 0:
                del coefs[idx]
        self.exps[var] = (cur[0] + aff[0], tuple(sorted(coefs.items())))

    def attach(self, slot, aff):
        """Multiply the family by slot**aff."""
        if isinstance(slot, VarSlot):
            if slot.sign < 0:
                self.factors.append(("sgn", aff))
            self.add_exp(slot.var, _aff_neg(aff) if slot.invert else aff)
        elif isinstance(slot, ParamSlot):
            if slot.sign < 0:
                self.factors.append(("sgn", aff))
            self.factors.append(("pow", slot.name, aff))
        elif isinstance(slot, CompSlot):
            i = self.param("nat")
            iaff = (F(0), ((i, 1),))
            rest = _aff_sub(aff, iaff)
            self.factors.append(("binom", aff, iaff))
            if slot.hi_sign < 0:
                self.factors.append(("sgn", rest))
            if slot.lo_sign < 0:
                self.factors.append(("sgn", iaff))
            self.add_exp(slot.hi, rest)
            self.add_exp(slot.lo, iaff)
        else:
            raise TypeError(f"not a slot: {slot!r}")

    def build(self) -> Family:
        factors = tuple(self.factors)

        def coef(vals):
            out = Fraction(1)
            powers = []
            for f in factors:
                if f[0] == "binom":
                    out *= binom(aff_eval(f[1], vals), int(aff_eval(f[2], vals)))
                elif f[0] == "sgn":
                    e = aff_eval(f[1], vals)
                    assert e.denominator == 1
                    if int(e) % 2:
                        out = -out
                else:
                    powers.append((f[1], aff_eval(f[2], vals)))
                if out == 0:
                    return Scalar.zero()
            s = Scalar.rational(out)
            for name, e in powers:
                s = s * Scalar.pow_of(name, e)
            return s

        return Family(self.domains, self.exps, coef)


def _aff_neg(aff):
    return (-aff[0], tuple((i, -c) for i, c in aff[1]))


def _aff_sub(a, b):
    coefs = dict(a[1])
    for i, c in b[1]:
        coefs[i] = coefs.get(i, 0) - c
        if coefs[i] == 0:
            del coefs[i]
    return (a[0] - b[0], tuple(sorted(coefs.items())))


def delta_family(var: str) -> Family:
    b = _FamBuilder()
    n = b.param("int")
    b.add_exp(var, (F(0), ((n, 1),)))
    return b.build()


def delta3_family(den, first, second, inverted: bool = False) -> Family:
    """The kernel ``den^{-1} delta((first + second)/den)`` expanded, per the
    binomial convention, in nonnegative powers of the second argument; with
    ``inverted=True`` instead ``den * delta((first + second) * den)``."""
    den, first, second = _slot(den), _slot(first), _slot(second)
    b = _FamBuilder()
    n = b.param("int")
    k = b.param("nat")
    naff = (F(0), ((n, 1),))
    kaff = (F(0), ((k, 1),))
    den_aff = (F(1), ((n, 1),)) if inverted else (F(-1), ((n, -1),))
    b.attach(den, den_aff)
    b.factors.append(("binom", naff, kaff))
    b.attach(first, _aff_sub(naff, kaff))
    b.attach(second, kaff)
    return b.build()


# ---------------------------------------------------------------------------
# the series class


class WSeries:
    __slots__ = ("coeffs", "window", "kind", "log_bound", "family")

    def __init__(self, coeffs, window, kind=None, log_bound=DEFAULT_LOG_BOUND, family=None):
        self.window = {v: (_fr(lo), _fr(hi)) for v, (lo, hi) in window.items()}
        self.kind = dict(kind) if kind else {}
        for v in self.window:
            self.kind.setdefault(v, "all")
        self.coeffs = {}
        for key, c in coeffs.items():
            if c_is_zero(c):
                continue
            for v in key_vars(key):
                if v not in self.window:
                    raise ValueError(f"key uses undeclared variable {v!r}")
            self.coeffs[key] = c
        self.log_bound = log_bound
        self.family = family

    # -- constructors ------------------------------------------------------

    @staticmethod
    def from_coeff(c, vars=()) -> "WSeries":
        w = {v: (F(0), F(0)) for v in vars}
        return WSeries({KEY_ONE: c}, w, {v: "bounded" for v in vars})

    @staticmethod
    def monomial(c, pows=None, logs=None) -> "WSeries":
        key = key_make(pows or {}, logs or {})
        vs = key_vars(key) | set((pows or {})) | set((logs or {}))
        w = {v: (key_pow(key, v), key_pow(key, v)) for v in vs}
        return WSeries({key: c}, w, {v: "bounded" for v in vs})

    @staticmethod
    def from_terms(terms, window, kind=None, log_bound=DEFAULT_LOG_BOUND) -> "WSeries":
        """terms: iterable of (coeff, pow-dict, log-dict)."""
        acc = {}
        for c, pows, logs in terms:
            key = key_make(pows, logs)
            acc[key] = c_add(acc[key], c) if key in acc else c
        return WSeries(acc, window, kind, log_bound)

    # -- structure ---------------------------------------------------------

    @property
    def vars(self):
        return set(self.window)

    def known(self, var):
        if var not in self.window:
            return (None, None)
        lo, hi = self.window[var]
        return known_region(self.kind.get(var, "all"), lo, hi)

    def support(self, var):
        if var not in self.window:
            return (F(0), F(0))
        lo, hi = self.window[var]
        return support_region(self.kind.get(var, "all"), lo, hi)

    def is_zero_on_known(self) -> bool:
        return not self.coeffs

    def coeff(self, pows=None, logs=None):
        """Certified coefficient lookup; raises if the key is not in the
        known region of every variable."""
        key = key_make(pows or {}, logs or {})
        for v in self.vars | key_vars(key):
            e = key_pow(key, v)
            k = self.known(v)
            if (k[0] is not None and e < k[0]) or (k[1] is not None and e > k[1]):
                raise WindowTooSmall(
                    f"coefficient at {v}^{e} is outside the certified region {k}"
                )
        return self.coeffs.get(key, Scalar.zero())

    def terms(self):
        return self.coeffs.items()

    def map_coeffs(self, fn) -> "WSeries":
        return WSeries(
            {k: fn(c) for k, c in self.coeffs.items()},
            self.window,
            self.kind,
            self.log_bound,
            self.family,
        )

    # -- linear operations ---------------------------------------------------

    def scale(self, s) -> "WSeries":
        if isinstance(s, (int, Fraction)):
            s = Scalar.rational(s)
        fam = self.family
        if fam is not None:
            old = fam.coef
            fam = Family(fam.domains, fam.exps, lambda vals, _o=old, _s=s: _o(vals) * _s)
        return WSeries(
            {k: c_scale(c, s) for k, c in self.coeffs.items()},
            self.window,
            self.kind,
            self.log_bound,
            fam,
        )

    def __neg__(self):
        return self.scale(-1)

    def __add__(self, other: "WSeries") -> "WSeries":
        if not isinstance(other, WSeries):
            return NotImplemented
        window, kind = {}, {}
        for v in self.vars | other.vars:
            S = iv_add(self.support(v), (F(0), F(0)))  # copy
            S = (
                None
                if (self.support(v)[0] is None or other.support(v)[0] is None)
                else min(self.support(v)[0], other.support(v)[0]),
                None
                if (self.support(v)[1] is None or other.support(v)[1] is None)
                else max(self.support(v)[1], other.support(v)[1]),
            )
            K = iv_meet(self.known(v), other.known(v))
            window[v], kind[v] = _realize(S, K, v)
        acc = {}
        for k, c in itertools.chain(self.coeffs.items(), other.coeffs.items()):
            acc[k] = c_add(acc[k], c) if k in acc else c
        out = WSeries({}, window, kind, max(self.log_bound, other.log_bound))
        out.coeffs = _clip(acc, window)
        return out

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, (int, Fraction, Scalar)):
            return self.scale(other)
        if isinstance(other, WSeries):
            return multiply([self, other])
        return NotImplemented

    __rmul__ = __mul__

    # -- calculus ------------------------------------------------------------

    def derivative(self, var: str) -> "WSeries":
        acc = {}
        for key, c in self.coeffs.items():
            n = key_pow(key, var)
            m = key_log(key, var)
            if n != 0:
                k1 = key_mul(key_drop(key, var), key_make({var: n - 1}, {var: m}))
                _acc_add(acc, k1, c_scale(c, n))
            if m != 0:
                k2 = key_mul(key_drop(key, var), key_make({var: n - 1}, {var: m - 1}))
                _acc_add(acc, k2, c_scale(c, m))
        window = dict(self.window)
        lo, hi = window.get(var, (F(0), F(0)))
        window[var] = (lo - 1, hi - 1)
        out = WSeries({}, window, self.kind, self.log_bound)
        out.coeffs = _clip(acc, window)
        return out

    def residue(self, var: str) -> "WSeries":
        """Coefficient of var^{-1}; an error if logs of var sit at that
        exponent, since their residue is not part of this calculus."""
        k = self.known(var)
        if (k[0] is not None and k[0] > -1) or (k[1] is not None and k[1] < -1):
            raise WindowTooSmall(
                f"residue needs the coefficient at {var}^-1, outside the known region"
            )
        acc = {}
        for key, c in self.coeffs.items():
            if key_pow(key, var) != -1:
                continue
            if key_log(key, var) != 0:
                raise LogInResidueVariable(
                    f"residue in {var} undefined: log {var} present at exponent -1"
                )
            _acc_add(acc, key_drop(key, var), c)
        window = {v: w for v, w in self.window.items() if v != var}
        kind = {v: kk for v, kk in self.kind.items() if v != var}
        return WSeries(acc, window, kind, self.log_bound)

    # -- comparison ----------------------------------------------------------

    def eq_on_common(self, other: "WSeries", report: bool = False):
        """Equality on the intersection of known regions (log powers always
        compare; they are genuinely polynomial)."""
        mismatches = []
        checked = 0
        allvars = self.vars | other.vars
        for key in set(self.coeffs) | set(other.coeffs):
            inside = True
            for v in allvars | key_vars(key):
                e = key_pow(key, v)
                for s in (self, other):
                    kn = s.known(v)
                    if (kn[0] is not None and e < kn[0]) or (
                        kn[1] is not None and e > kn[1]
                    ):
                        inside = False
            if not inside:
                continue
            checked += 1
            a = self.coeffs.get(key)
            b = other.coeffs.get(key)
            if a is None:
                bad = not c_is_zero(b)
            elif b is None:
                bad = not c_is_zero(a)
            else:
                try:
                    bad = not c_is_zero(c_add(a, c_neg(b)))
                except TypeError:
                    bad = True
            if bad:
                mismatches.append(key)
        ok = not mismatches
        if report:
            return ok, mismatches, checked
        return ok

    def identically_equal(self, other: "WSeries") -> bool:
        for s in (self, other):
            for v in s.vars:
                if s.kind.get(v) != "bounded":
                    raise ShapeConflict(
                        f"series not complete in {v}; only windowed equality applies"
                    )
        return self.eq_on_common(other)

    def as_coeff(self):
        """Collapse a series with no remaining exponents to its coefficient."""
        if not self.coeffs:
            return Scalar.zero()
        if set(self.coeffs) != {KEY_ONE}:
            raise ShapeConflict("series still depends on its variables")
        return self.coeffs[KEY_ONE]

    def __repr__(self):
        n = len(self.coeffs)
        vs = ",".join(sorted(self.window))
        return f"<WSeries {n} terms in ({vs})>"


def _acc_add(acc, key, c):
    if key in acc:
        s = c_add(acc[key], c)
        if c_is_zero(s):
            del acc[key]
        else:
            acc[key] = s
    elif not c_is_zero(c):
        acc[key] = c


def _clip(acc, window):
    out = {}
    for key, c in acc.items():
        if c_is_zero(c):
            continue
        ok = True
        for v, (lo, hi) in window.items():
            e = key_pow(key, v)
            if e < lo or e > hi:
                ok = False
                break
        if ok:
            out[key] = c
    return out


def _realize(S, K, var):
    """Turn (support, known) intervals into (window, kind); the window must
    come out finite or no sound storage bound exists."""
    lo_b = S[0] is not None
    hi_b = S[1] is not None
    if lo_b and hi_b:
        kind = "bounded"
        win = (S[0], S[1])
        # completeness everywhere requires the known region to cover S
        if (K[0] is not None and K[0] > S[0]) or (K[1] is not None and K[1] < S[1]):
            kind = "all"
            win = (
                S[0] if K[0] is None else max(S[0], K[0]),
                S[1] if K[1] is None else min(S[1], K[1]),
            )
    elif lo_b:
        kind = "lower"
        if K[1] is None:
            raise ShapeConflict(f"no completeness frontier in {var}")
        win = (S[0], K[1])
    elif hi_b:
        kind = "upper"
        if K[0] is None:
            raise ShapeConflict(f"no completeness frontier in {var}")
        win = (K[0], S[1])
    else:
        kind = "all"
        if K[0] is None or K[1] is None:
            raise ShapeConflict(f"unbounded known region with unbounded support in {var}")
        win = K
    if win[0] > win[1]:
        raise WindowTooSmall(f"empty certified window in {var}")
    return win, kind


# ---------------------------------------------------------------------------
# products


def multiply(ops, window=None, log_bound=None):
    """Product of several series, certified on a box.

    Operands carrying an affine family are treated exactly through their
    parametrization; plain operands contribute their stored keys.  Interval
    propagation over the joint constraints either bounds every parameter and
    every needed plain exponent (then the product is enumerated and certified
    on the box, shrinking it when an operand's window demands), or the
    product is refused.
    """
    ops = list(ops)
    if not ops:
        raise ValueError("empty product")
    all_vars = set()
    for op in ops:
        all_vars |= op.vars
    box = make_box(all_vars, window)

    for _round in range(14):
        solved = _propagate(ops, box)
        if solved == "empty":
            kind = {v: "all" for v in all_vars}
            return WSeries({}, box, kind, 0)
        param_ivs, need = solved
        # parameters must be enumerable
        for i, op in enumerate(ops):
            if op.family is not None:
                for j, iv in enumerate(param_ivs[i]):
                    if not iv_bounded(iv):
                        raise ShapeConflict(
                            "product not provably finite: a delta parameter "
                            f"of operand {i} is unbounded on the box"
                        )
        # plain operands: needed exponents must sit in known regions; where
        # they do not, shrink the box (at most once per variable per round,
        # then re-propagate: the deficits were computed jointly)
        lo_fix, hi_fix = {}, {}
        for i, op in enumerate(ops):
            if op.family is not None:
                continue
            for v in op.vars:
                nd = iv_meet(need[i][v], op.support(v))
                if iv_empty(nd):
                    continue
                kn = op.known(v)
                if nd[0] is None or nd[1] is None:
                    raise ShapeConflict(
                        f"product not provably finite in {v}: unbounded "
                        "contributions from an operand with unbounded support"
                    )
                if kn[1] is not None and nd[1] > kn[1]:
                    hi_fix[v] = max(hi_fix.get(v, 0), nd[1] - kn[1])
                if kn[0] is not None and nd[0] < kn[0]:
                    lo_fix[v] = max(lo_fix.get(v, 0), kn[0] - nd[0])
        if not lo_fix and not hi_fix:
            break
        for v in set(lo_fix) | set(hi_fix):
            box[v] = (box[v][0] + lo_fix.get(v, 0), box[v][1] - hi_fix.get(v, 0))
            if box[v][0] > box[v][1]:
                raise WindowTooSmall(
                    f"no certifiable window left in {v}; operand windows too small"
                )
    else:
        raise WindowTooSmall("certified box did not stabilize")

    # contributions per operand
    contribs = []
    for i, op in enumerate(ops):
        if op.family is not None:
            fam = op.family
            ranges = []
            for iv in param_ivs[i]:
                lo = -(-iv[0].numerator // iv[0].denominator)  # ceil
                hi = iv[1].numerator // iv[1].denominator  # floor
                ranges.append(range(lo, hi + 1))
            cs = []
            for vals in itertools.product(*ranges):
                c = fam.coef(vals)
                if c_is_zero(c):
                    continue
                key = key_make({v: aff_eval(aff, vals) for v, aff in fam.exps.items()})
                cs.append((key, c))
            contribs.append(cs)
        else:
            cs = []
            for key, c in op.coeffs.items():
                ok = True
                for v in key_vars(key):
                    nd = need[i].get(v, (None, None))
                    e = key_pow(key, v)
                    if (nd[0] is not None and e < nd[0]) or (
                        nd[1] is not None and e > nd[1]
                    ):
                        ok = False
                        break
                if ok:
                    cs.append((key, c))
            contribs.append(cs)

    # staged product with pruning against the remaining supports
    supports = [
        {v: (op.family.support(v) if op.family is not None else op.support(v)) for v in all_vars}
        for op in ops
    ]
    rem = []
    tail = {v: (F(0), F(0)) for v in all_vars}
    for i in range(len(ops) - 1, -1, -1):
        rem.append(dict(tail))
        for v in all_vars:
            tail[v] = iv_add(tail[v], supports[i][v])
    rem.reverse()

    partial = {KEY_ONE: Scalar.one()}
    for i, cs in enumerate(contribs):
        stage_iv = {
            v: (
                None if rem[i][v][1] is None else box[v][0] - rem[i][v][1],
                None if rem[i][v][0] is None else box[v][1] - rem[i][v][0],
            )
            for v in all_vars
        }
        nxt = {}
        for pk, pc in partial.items():
            for k, c in cs:
                nk = key_mul(pk, k)
                ok = True
                for v, e in nk[0]:
                    iv = stage_iv[v]
                    if (iv[0] is not None and e < iv[0]) or (
                        iv[1] is not None and e > iv[1]
                    ):
                        ok = False
                        break
                if ok:
                    _acc_add(nxt, nk, c_mul(pc, c))
        partial = nxt
        if not partial:
            break

    window_out, kind_out = {}, {}
    for v in all_vars:
        S = (F(0), F(0))
        for i in range(len(ops)):
            S = iv_add(S, supports[i][v])
        lo, hi = box[v]
        k = "all"
        lo_ok = S[0] is not None and S[0] >= lo
        hi_ok = S[1] is not None and S[1] <= hi
        if lo_ok and hi_ok:
            k = "bounded"
        elif lo_ok:
            k = "lower"
        elif hi_ok:
            k = "upper"
        window_out[v] = (max(lo, S[0]) if S[0] is not None else lo,
                         min(hi, S[1]) if S[1] is not None else hi)
        if window_out[v][0] > window_out[v][1]:
            window_out[v] = (lo, hi)
            k = "all"
        kind_out[v] = k

    lb = sum(op.log_bound for op in ops if op.family is None)
    out = WSeries({}, window_out, kind_out, lb if log_bound is None else log_bound)
    out.coeffs = _clip(partial, window_out)
    return out


def _propagate(ops, box):
    """Interval propagation over the product constraints.  Returns
    (param intervals per operand, needed exponent intervals per operand)
    or "empty" when no contribution can land in the box."""
    all_vars = set()
    for op in ops:
        all_vars |= op.vars
    param_ivs = []
    need = []
    for op in ops:
        if op.family is not None:
            param_ivs.append(
                [
                    (F(0), None) if d == "nat" else (None, None)
                    for d in op.family.domains
                ]
            )
            need.append(None)
        else:
            param_ivs.append(None)
            need.append({v: op.support(v) for v in op.vars})

    def term_iv(i, v):
        op = ops[i]
        if op.family is not None:
            aff = op.family.exps.get(v)
            if aff is None:
                return (F(0), F(0))
            iv = (aff[0], aff[0])
            for idx, c in aff[1]:
                iv = iv_add(iv, iv_scale(param_ivs[i][idx], c))
            return iv
        return need[i].get(v, (F(0), F(0)))

    for _sweep in range(40):
        changed = False
        for v in all_vars:
            tivs = [term_iv(i, v) for i in range(len(ops))]
            total = (box[v][0], box[v][1])
            for i, op in enumerate(ops):
                others = (F(0), F(0))
                for j in range(len(ops)):
                    if j != i:
                        others = iv_add(others, tivs[j])
                residual = iv_sub(total, others)
                if op.family is not None:
                    aff = op.family.exps.get(v)
                    if aff is None:
                        continue
                    for idx, c in aff[1]:
                        rest = (aff[0], aff[0])
                        for idx2, c2 in aff[1]:
                            if idx2 != idx:
                                rest = iv_add(rest, iv_scale(param_ivs[i][idx2], c2))
                        cand = iv_div(iv_sub(residual, rest), c)
                        newiv = iv_meet(param_ivs[i][idx], cand)
                        if newiv != param_ivs[i][idx]:
                            param_ivs[i][idx] = newiv
                            changed = True
                        if iv_empty(newiv):
                            return "empty"
                elif v in op.vars:
                    newiv = iv_meet(need[i][v], residual)
                    if newiv != need[i][v]:
                        need[i][v] = newiv
                        changed = True
                    if iv_empty(newiv):
                        return "empty"
        if not changed:
            break
    return param_ivs, need


# ---------------------------------------------------------------------------
# delta constructors


def delta(var: str, window=None) -> WSeries:
    """The formal sum of all integer powers of one variable."""
    return materialize(delta_family(var), window)


def delta3(den, first, second, window=None, inverted: bool = False) -> WSeries:
    """Three-slot delta kernel; see ``delta3_family`` for conventions.
    Slots can be variable names, ``VarSlot``, ``ParamSlot`` or ``CompSlot``."""
    return materialize(delta3_family(den, first, second, inverted), window)


def materialize(fam: Family, window=None) -> WSeries:
    box = make_box(set(fam.exps), window)
    shell = WSeries({}, box, {v: "all" for v in box}, 0, fam)
    out = multiply([shell], box)
    out.family = fam
    return out


# ---------------------------------------------------------------------------
# substitutions


def rename_var(s: WSeries, old: str, new: str) -> WSeries:
    if old not in s.vars:
        return s
    if new in s.vars:
        raise ValueError(f"variable {new!r} already present")
    acc = {}
    for key, c in s.coeffs.items():
        pows = {(new if v == old else v): e for v, e in key[0]}
        logs = {(new if v == old else v): k for v, k in key[1]}
        acc[key_make(pows, logs)] = c
    window = {(new if v == old else v): w for v, w in s.window.items()}
    kind = {(new if v == old else v): k for v, k in s.kind.items()}
    fam = s.family
    if fam is not None:
        fam = Family(
            fam.domains,
            {(new if v == old else v): aff for v, aff in fam.exps.items()},
            fam.coef,
        )
    return WSeries(acc, window, kind, s.log_bound, fam)


def invert_var(s: WSeries, var: str) -> WSeries:
    """Substitute var -> var^{-1}: powers negate and log var picks up a sign
    per occurrence (the formal rule used by the adjoint operators)."""
    acc = {}
    for key, c in s.coeffs.items():
        n, m = key_pow(key, var), key_log(key, var)
        nk = key_mul(key_drop(key, var), key_make({var: -n}, {var: m}))
        _acc_add(acc, nk, c_scale(c, Scalar.rational((-1) ** m)))
    window = dict(s.window)
    if var in window:
        lo, hi = window[var]
        window[var] = (-hi, -lo)
    kind = dict(s.kind)
    if var in kind:
        kind[var] = {"lower": "upper", "upper": "lower"}.get(kind[var], kind[var])
    return WSeries(acc, window, kind, s.log_bound)


def twist_by_unit(s: WSeries, var: str, c: Scalar) -> WSeries:
    """Substitute var -> e^c * var for a scalar exponent c (a phase times
    possibly 2 pi i multiples): powers pick up exp(n*c), logs shift by c."""
    acc = {}
    for key, coef in s.coeffs.items():
        n, m = key_pow(key, var), key_log(key, var)
        base = key_drop(key, var)
        unit = (c * n).exp() if n != 0 else Scalar.one()
        for j in range(m + 1):
            nk = key_mul(base, key_make({var: n}, {var: m - j}))
            factor = unit * Scalar.rational(binom(m, j)) * c**j
            _acc_add(acc, nk, c_scale(coef, factor))
    return WSeries(acc, s.window, s.kind, s.log_bound)


def eval_at_exp(s: WSeries, var: str, zeta: Scalar) -> WSeries:
    """Substitute var -> e^zeta, collapsing the variable into scalars.
    Requires completeness in var (the collapsed sum must be finite)."""
    if s.kind.get(var, "all") != "bounded" and any(
        key_pow(k, var) != 0 or key_log(k, var) != 0 for k in s.coeffs
    ):
        raise ShapeConflict(f"cannot evaluate an incomplete series at {var}=exp(...)")
    acc = {}
    for key, coef in s.coeffs.items():
        n, m = key_pow(key, var), key_log(key, var)
        factor = (zeta * n).exp() * zeta**m
        _acc_add(acc, key_drop(key, var), c_scale(coef, factor))
    window = {v: w for v, w in s.window.items() if v != var}
    kind = {v: k for v, k in s.kind.items() if v != var}
    return WSeries(acc, window, kind, s.log_bound)


def scale_by_var(s: WSeries, var: str, yvar: str) -> WSeries:
    """Substitute var -> var*y: x^n -> x^n y^n, log x -> log x + log y."""
    acc = {}
    for key, coef in s.coeffs.items():
        n, m = key_pow(key, var), key_log(key, var)
        base = key_drop(key, var)
        for j in range(m + 1):
            nk = key_mul(
                base,
                key_make({var: n, yvar: n}, {var: m - j, yvar: j}),
            )
            _acc_add(acc, nk, c_scale(coef, Scalar.rational(binom(m, j))))
    window = dict(s.window)
    kind = dict(s.kind)
    window[yvar] = window.get(var, (F(0), F(0)))
    kind[yvar] = kind.get(var, "all")
    return WSeries(acc, window, kind, s.log_bound)


def _mono(c, pows, logs, window, kind):
    return WSeries({key_make(pows, logs): c}, window, kind)


def shift_var(s: WSeries, var: str, yvar: str, ybound: int = None) -> WSeries:
    """Substitute var -> var + y, expanding in nonnegative powers of the
    second summand; log var becomes log var plus the alternating series in
    y/var, truncated at total y-degree ybound."""
    if ybound is None:
        ybound = DEFAULT_WINDOW
    ywin = {yvar: (F(0), F(ybound))}
    out = None
    for key, coef in s.coeffs.items():
        n, m = key_pow(key, var), key_log(key, var)
        base = key_drop(key, var)
        # (var + y)^n expanded
        powpart = WSeries(
            {
                key_make({var: n - i, yvar: i}): Scalar.rational(binom(n, i))
                for i in range(ybound + 1)
            },
            {var: (n - ybound, n), yvar: (F(0), F(ybound))},
            {var: "upper", yvar: "lower"},
            0,
        )
        pieces = [powpart]
        if m > 0:
            lam = WSeries(
                {
                    key_make({var: -i, yvar: i}): Scalar.rational(
                        Fraction((-1) ** (i - 1), i)
                    )
                    for i in range(1, ybound + 1)
                },
                {var: (F(-ybound), F(-1)), yvar: (F(1), F(ybound))},
                {var: "upper", yvar: "lower"},
                0,
            )
            box_log = {var: (F(-ybound), F(0)), yvar: (F(0), F(ybound))}
            logpart = None
            lam_j = WSeries.from_coeff(Scalar.one())
            for j in range(m + 1):
                term = multiply(
                    [
                        _mono(
                            Scalar.rational(binom(m, j)),
                            {},
                            {var: m - j},
                            {var: (F(0), F(0)), yvar: (F(0), F(0))},
                            {var: "bounded", yvar: "bounded"},
                        ),
                        lam_j,
                    ],
                    box_log,
                )
                logpart = term if logpart is None else logpart + term
                if j < m:
                    lam_j = multiply([lam_j, lam], box_log)
            pieces.append(logpart)
        prod = multiply(pieces, _shift_box(s, var, yvar, ybound))
        if base != KEY_ONE:
            rest = WSeries(
                {base: Scalar.one()},
                {v: (key_pow(base, v), key_pow(base, v)) for v in key_vars(base)},
                {v: "bounded" for v in key_vars(base)},
            )
            prod = multiply([prod, rest], _mixed_box(prod, base, s))
        prod = prod.map_coeffs(lambda c2, _c=coef: c_mul(_c, c2))
        out = prod if out is None else out + prod
    if out is None:
        window = dict(s.window)
        window[yvar] = (F(0), F(ybound))
        kind = dict(s.kind)
        kind[yvar] = "lower"
        return WSeries({}, window, kind, s.log_bound)
    return out


def _shift_box(s, var, yvar, ybound):
    lo, hi = s.window.get(var, (F(-DEFAULT_WINDOW), F(DEFAULT_WINDOW)))
    return {var: (lo - ybound, hi), yvar: (F(0), F(ybound))}


def _mixed_box(prod, base, s):
    box = {v: prod.window[v] for v in prod.vars}
    for v in key_vars(base):
        e = key_pow(base, v)
        lo, hi = s.window.get(v, (e, e))
        box[v] = (lo, hi)
    return box


def scale_by_exp(s: WSeries, var: str, yvar: str, ybound: int = None) -> WSeries:
    """Substitute var -> var*e^y: x^n -> x^n e^{ny} (truncated at y^ybound),
    log x -> log x + y exactly."""
    if ybound is None:
        ybound = DEFAULT_WINDOW
    acc = {}
    for key, coef in s.coeffs.items():
        n, m = key_pow(key, var), key_log(key, var)
        base = key_drop(key, var)
        for i in range(ybound + 1):
            ei = Fraction(n) ** i / _fact(i)
            if ei == 0 and i > 0:
                continue
            for j in range(min(m, ybound - i) + 1):
                nk = key_mul(
                    base, key_make({var: n, yvar: i + j}, {var: m - j})
                )
                factor = Scalar.rational(ei * binom(m, j))
                _acc_add(acc, nk, c_scale(coef, factor))
    window = dict(s.window)
    window[yvar] = (F(0), F(ybound))
    kind = dict(s.kind)
    kind[yvar] = "lower"
    return WSeries(acc, window, kind, s.log_bound)


def _fact(n: int) -> Fraction:
    import math

    return Fraction(math.factorial(n))


def substitute(s: WSeries, var: str, rule: str, **kw) -> WSeries:
    """Dispatcher over the substitution rules, named by what they do."""
    if rule == "shift":
        return shift_var(s, var, kw["yvar"], kw.get("ybound"))
    if rule == "scale-exp":
        return scale_by_exp(s, var, kw["yvar"], kw.get("ybound"))
    if rule == "scale-var":
        return scale_by_var(s, var, kw["yvar"])
    if rule == "eval-exp":
        return eval_at_exp(s, var, kw["zeta"])
    if rule == "unit-twist":
        return twist_by_unit(s, var, kw["c"])
    if rule == "invert":
        return invert_var(s, var)
    if rule == "rename":
        return rename_var(s, var, kw["new"])
    raise ValueError(f"unknown substitution rule {rule!r}")


def exp_operator(s: WSeries, var: str, yvar: str, ybound: int, generator: str) -> WSeries:
    """Apply exp(y*D) termwise, D = d/dvar or var*d/dvar, truncating the
    operator exponential at y^ybound."""
    if generator not in ("d/dx", "x d/dx"):
        raise ValueError(f"unknown generator {generator!r}")
    out = None
    cur = s
    for k in range(ybound + 1):
        piece = cur.map_coeffs(lambda c: c_scale(c, Fraction(1, 1)))
        ymono = WSeries(
            {key_make({yvar: k}): Scalar.rational(Fraction(1) / _fact(k))},
            {yvar: (F(k), F(k))},
            {yvar: "bounded"},
        )
        box = {v: cur.window[v] for v in cur.vars}
        box[yvar] = (F(0), F(ybound))
        term = multiply([piece, ymono], box)
        out = term if out is None else out + term
        if k < ybound:
            cur = cur.derivative(var)
            if generator == "x d/dx":
                cur = multiply(
                    [cur, _mono(Scalar.one(), {var: 1}, {}, {var: (F(1), F(1))}, {var: "bounded"})],
                    {v: (s.window[v][0] - ybound, s.window[v][1] + ybound) if v == var else cur.window[v] for v in cur.vars},
                )
    # the y-direction is complete up to ybound
    window = dict(out.window)
    window[yvar] = (F(0), F(ybound))
    kind = dict(out.kind)
    kind[yvar] = "lower"
    res = WSeries({}, window, kind, out.log_bound)
    res.coeffs = _clip(out.coeffs, window)
    return res
