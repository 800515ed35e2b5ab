"""Dual actions of localized currents on functionals of tensor products.

A current ``v (x) f(t)``, with ``f`` rational in ``t`` and poles only at the
origin and at points ``c z^p``, acts on a functional of a pair or triple of
module vectors.  Each tensor slot receives a dressed and translated copy of
the current, expanded in nonnegative powers of ``t`` around the origin; the
component sums are finite because module weights are bounded below.  Three
localizations are supported, differing only in the per-slot plan:

* ``P(z)``: slot one is dressed by the adjoint operator and then translated
  by ``z``; slot two is dressed only; both terms are added.
* ``Q(z)``: slot one is translated by ``-z`` and then dressed; slot two is
  translated by ``-z`` with no dressing and its term is subtracted.
* ``P(z1,z2)``: three slots, the first two dressed then translated by their
  own parameter, the third dressed only; all terms are added.

On top of the raw action the module provides the induced sl(2) operators,
the compatibility condition tying localized currents to plain modes, the
commutator and kernel identities for the dual modes, the finite-dimensional
compatible-subspace computation with its stability and fusion consequences,
and the companion coaction on tensors adjoint to the dual action.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

from logcalc import linalg
from logcalc.algebras import (
    CommVertexAlgebra,
    ContragredientModule,
    FreeBoson,
    TruncatedCurrentAlgebra,
    vec_of,
)
from logcalc.scalars import Scalar
from logcalc.series import Vec, WSeries, binom, key_make
from logcalc.tcurrents import RatFn, iota

F = Fraction


# ---------------------------------------------------------------------------
# slots and functionals


class SlotHandle:
    """Uniform view of one graded slot: components, weights, sl(2) operators,
    the weight floor that cuts component sums, and whether nonnegative
    components vanish (true on commutative instances)."""

    __slots__ = ("name", "comp", "weight", "L", "wt_floor", "labels", "nonneg_kills", "adeg")

    def __init__(self, name, comp, weight, L, wt_floor, labels=None, nonneg_kills=False, adeg=None):
        self.name = name
        self.comp = comp
        self.weight = weight
        self.L = L
        self.wt_floor = F(wt_floor)
        self.labels = tuple(labels) if labels is not None else None
        self.nonneg_kills = bool(nonneg_kills)
        self.adeg = adeg


def comm_slot(V: CommVertexAlgebra, name="A", adeg=None) -> SlotHandle:
    """The algebra as a module over itself, graded trivially.  The zero
    grading is compatible with the adjoint dressing exactly when the
    derivation vanishes, which is the regime the dual-action checks use."""

    def L(j, v):
        return V.der(vec_of(v)) if j == -1 else Vec.zero()

    return SlotHandle(name, V.comp, lambda lbl: F(0), L, F(0), V.basis, True, adeg)


def current_slot(T: TruncatedCurrentAlgebra, name="T") -> SlotHandle:
    """The truncated current algebra over itself, with its genuine grading
    and sl(2) action."""
    return SlotHandle(name, T.comp, T.weight, T.L, F(-T.M), T.basis, True, None)


def boson_slot(B: FreeBoson, name="F") -> SlotHandle:
    return SlotHandle(name, B.comp, B.weight, B.L, F(0), None, False, None)


def contragredient_slot(M: ContragredientModule, name="W'") -> SlotHandle:
    return SlotHandle(name, M.comp, M.weight, M.L, M.wt_floor, None, False, None)


class DualFunctional:
    """A functional on tuples of module basis labels, extended multilinearly
    to ``Vec`` arguments, with cached evaluations.  ``ceiling``, when known,
    maps the top weight of an algebra vector to the largest mode index whose
    dual action can be nonzero; mode sums are cut there."""

    __slots__ = ("arity", "_fn", "_cache", "ceiling", "table", "tag")

    def __init__(self, arity, fn, ceiling=None, table=None, tag=""):
        self.arity = int(arity)
        self._fn = fn
        self._cache = {}
        self.ceiling = ceiling
        self.table = table
        self.tag = tag

    @staticmethod
    def from_table(arity, table, ceiling=None, tag="") -> DualFunctional:
        tbl = {}
        for k, v in table.items():
            tbl[tuple(k)] = v if isinstance(v, Scalar) else Scalar.rational(v)

        def fn(*labels):
            return tbl.get(labels, Scalar.zero())

        return DualFunctional(arity, fn, ceiling=ceiling, table=tbl, tag=tag)

    def value(self, *labels) -> Scalar:
        hit = self._cache.get(labels)
        if hit is None:
            hit = self._fn(*labels)
            self._cache[labels] = hit
        return hit

    def __call__(self, *args) -> Scalar:
        for i, a in enumerate(args):
            if isinstance(a, Vec):
                total = Scalar.zero()
                for lbl, c in a.items():
                    total = total + c * self(*args[:i], lbl, *args[i + 1 :])
                return total
        return self.value(*args)


# ---------------------------------------------------------------------------
# the action itself


class DualActionContext:
    """One localized dual action: the algebra handle, the module slots, and
    the parameter names.  The per-slot plan says whether the current is
    dressed before or after the translation, which parameter translates the
    slot, the translation sign, and the sign of the slot's term."""

    PLANS = {
        "P(z)": (
            ("dress-then-shift", 0, 1, 1),
            ("dress", None, None, 1),
        ),
        "Q(z)": (
            ("shift-then-dress", 0, -1, 1),
            ("shift", 0, -1, -1),
        ),
        "P(z1,z2)": (
            ("dress-then-shift", 0, 1, 1),
            ("dress-then-shift", 1, 1, 1),
            ("dress", None, None, 1),
        ),
    }

    __slots__ = ("kind", "algebra", "slots", "znames")

    def __init__(self, kind, algebra: SlotHandle, slots, znames=None):
        if kind not in self.PLANS:
            raise ValueError(f"unknown localization {kind!r}")
        need = len(self.PLANS[kind])
        if len(slots) != need:
            raise ValueError(f"{kind} needs {need} slots, got {len(slots)}")
        self.kind = kind
        self.algebra = algebra
        self.slots = tuple(slots)
        if znames is None:
            znames = ("z1", "z2") if need == 3 else ("z",)
        self.znames = tuple(znames)

    def plan(self):
        return self.PLANS[self.kind]


def opposite_current(alg: SlotHandle, v, f: RatFn, zname="z"):
    """Adjoint dressing of a current: a homogeneous state of integral weight
    k paired with f(t) becomes the sum over m of
    ((-1)^k L(1)^m v / m!) (x) t^(2k-m-2) f(1/t)."""
    finv = f.invert_t(zname)
    groups = {}
    for lbl, c in vec_of(v).items():
        k = alg.weight(lbl)
        groups.setdefault(k, {})[lbl] = c
    out = []
    for k in sorted(groups):
        if F(k).denominator != 1:
            raise ValueError("adjoint needs integral weights on the algebra side")
        kk = int(k)
        cur = Vec(groups[k])
        m = 0
        while not cur.is_zero():
            g = finv.shift_t(2 * kk - m - 2)
            out.append((cur.scale(F(-1) ** kk / F(math.factorial(m))), g))
            cur = alg.L(1, cur)
            m += 1
            if m > 240:
                raise RuntimeError("the L(1) chain did not terminate")
    return out


def compat_current(n: int, m: int, zname="z") -> RatFn:
    """The rational function (1/t - z)^n t^m with its pole tracked exactly;
    for n >= 0 it is a Laurent polynomial in t."""
    if n >= 0:
        out = None
        for i in range(n + 1):
            c = Scalar.rational(binom(n, i) * F(-1) ** i)
            if i:
                c = c * Scalar.pow_of(zname, i)
            piece = RatFn.monomial(m + i - n, c)
            out = piece if out is None else out + piece
        return out
    # (1/t - z)^n = z^n t^(-n) (1/z - t)^n, and the last factor is a pure
    # pole at t = 1/z
    out = RatFn.pole(-1, F(-1), -n, 0, Scalar.rational(F(-1) ** n))
    return out.shift_t(m - n).scale(Scalar.pow_of(zname, n))


def _has_atoms(g: RatFn) -> bool:
    return any(atoms for _, atoms in g.terms)


def _shift_current(g: RatFn, c0: int, zname: str, fsym: str, slot: SlotHandle):
    """Translate t -> t + c0*z in the slot parameter.  When the current is
    localized in a different parameter the shifted poles all sit away from
    the origin, so the slot only sees nonnegative components: on a
    commutative slot the term drops, elsewhere the expansion would need a
    direction for the mixed denominators and we refuse."""
    if fsym == zname or not _has_atoms(g):
        return g.translate(1, c0, zname)
    if slot.nonneg_kills:
        return None
    raise ValueError("mixed localization: expand the current in the slot parameter first")


def _slot_currents(ctx: DualActionContext, v: Vec, f: RatFn, fsym: str):
    """Per slot: (sign, expansion symbol, list of (state, rational part))."""
    out = []
    if v.is_zero():
        return [(sign, fsym, []) for (_, _, _, sign) in ctx.plan()]
    for i, (stage, zi, c0, sign) in enumerate(ctx.plan()):
        zn = ctx.znames[zi] if zi is not None else fsym
        slot = ctx.slots[i]
        if stage == "dress-then-shift":
            cur = []
            for u, g in opposite_current(ctx.algebra, v, f, fsym):
                gs = _shift_current(g, c0, zn, fsym, slot)
                if gs is not None and gs.terms:
                    cur.append((u, gs))
        elif stage == "dress":
            cur = opposite_current(ctx.algebra, v, f, fsym)
        elif stage == "shift-then-dress":
            gs = _shift_current(f, c0, zn, fsym, slot)
            cur = [] if gs is None else opposite_current(ctx.algebra, v, gs, fsym)
        else:  # plain shift
            gs = _shift_current(f, c0, zn, fsym, slot)
            cur = [] if gs is None else [(v, gs)]
        out.append((sign, zn, cur))
    return out


def _hi_weight(weight_fn, v: Vec):
    return max(weight_fn(lbl) for lbl, _ in v.items())


def _act(handle: SlotHandle, u: Vec, g: RatFn, w: Vec, zname: str, h_hi) -> Vec:
    """Apply the current u (x) g to a slot vector: expand g in nonnegative
    powers of t and feed each coefficient to the matching component.  The
    sum is cut where the component would land below the weight floor."""
    if u.is_zero() or w.is_zero() or not g.terms:
        return Vec.zero()
    j_lo = min(e for e, _ in g.terms)
    w_hi = max(handle.weight(lbl) for lbl, _ in w.items())
    j_hi = math.floor(w_hi + h_hi - 1 - handle.wt_floor)
    if j_hi < j_lo:
        return Vec.zero()
    s = iota(g, "+", (j_lo, j_hi), zname)
    out = Vec.zero()
    for j in range(int(j_lo), int(j_hi) + 1):
        c = s.coeff({"t": j})
        if c.is_zero():
            continue
        t = handle.comp(u, j, w)
        if not t.is_zero():
            out = out.add(t.scale(c))
    return out


def _parts_value(ctx, parts, lam, labels) -> Scalar:
    total = Scalar.zero()
    for i, (sign, zn, cur) in enumerate(parts):
        handle = ctx.slots[i]
        for u, g in cur:
            h_hi = _hi_weight(ctx.algebra.weight, u)
            wmod = _act(handle, u, g, Vec.unit(labels[i]), zn, h_hi)
            if wmod.is_zero():
                continue
            args = list(labels)
            args[i] = wmod
            val = lam(*args)
            if sign > 0:
                total = total + val
            else:
                total = total - val
    return total


def tau_value(ctx, v, f: RatFn, lam, labels, fsym=None) -> Scalar:
    """One evaluation of the dual action of v (x) f on lam."""
    fsym = fsym or ctx.znames[0]
    parts = _slot_currents(ctx, vec_of(v), f, fsym)
    return _parts_value(ctx, parts, lam, tuple(labels))


def tau_apply(ctx, v, f: RatFn, lam, fsym=None, tag="") -> DualFunctional:
    """The dual action of v (x) f on lam as a lazy functional; the slot
    currents are prepared once and reused across evaluations."""
    fsym = fsym or ctx.znames[0]
    parts = _slot_currents(ctx, vec_of(v), f, fsym)

    def fn(*labels):
        return _parts_value(ctx, parts, lam, labels)

    return DualFunctional(len(ctx.slots), fn, tag=tag or f"tau[{ctx.kind}]")


def dual_mode(ctx, v, n: int, lam) -> DualFunctional:
    """The n-th dual mode, the action of v (x) t^n."""
    return tau_apply(ctx, v, RatFn.monomial(n), lam, tag=f"mode[{n}]")


def dual_series(ctx, v, lam, labels, xvar="x", window=4) -> WSeries:
    """Generating series of dual-mode evaluations at a fixed tuple."""
    w = int(window)
    coeffs = {}
    for e in range(-w, w + 1):
        val = tau_value(ctx, v, RatFn.monomial(-e - 1), lam, labels)
        if not val.is_zero():
            coeffs[key_make({xvar: F(e)})] = val
    return WSeries(coeffs, {xvar: (-F(w), F(w))}, {xvar: "all"}, 0)


# ---------------------------------------------------------------------------
# induced sl(2) operators


def lprime(ctx, j: int, lam) -> DualFunctional:
    """The induced sl(2) operators on functionals: each translated slot
    receives the binomial spread of L(j), the plain slots receive L(-j)
    or L(j-i) directly.  Matches the action of the dressed conformal
    current whenever the algebra has one."""
    if j not in (-1, 0, 1):
        raise ValueError("only the sl(2) slice j in {-1, 0, 1} is defined")
    slots = ctx.slots
    if ctx.kind == "P(z)":
        zn = ctx.znames[0]

        def fn(l1, l2):
            total = lam(Vec.unit(l1), slots[1].L(-j, Vec.unit(l2)))
            for i in range(0, 2 - j):
                c = binom(1 - j, i)
                if not c:
                    continue
                s = Scalar.rational(c)
                if i:
                    s = s * Scalar.pow_of(zn, i)
                total = total + s * lam(slots[0].L(-j - i, Vec.unit(l1)), Vec.unit(l2))
            return total

    elif ctx.kind == "Q(z)":
        zn = ctx.znames[0]

        def fn(l1, l2):
            total = Scalar.zero()
            for i in range(0, j + 2):
                c = binom(j + 1, i) * F(-1) ** i
                if not c:
                    continue
                s = Scalar.rational(c)
                if i:
                    s = s * Scalar.pow_of(zn, i)
                a = lam(slots[0].L(i - j, Vec.unit(l1)), Vec.unit(l2))
                b = lam(Vec.unit(l1), slots[1].L(j - i, Vec.unit(l2)))
                total = total + s * (a - b)
            return total

    else:
        z1, z2 = ctx.znames

        def fn(l1, l2, l3):
            total = lam(Vec.unit(l1), Vec.unit(l2), slots[2].L(-j, Vec.unit(l3)))
            for i in range(0, 2 - j):
                c = binom(1 - j, i)
                if not c:
                    continue
                s1 = Scalar.rational(c)
                s2 = Scalar.rational(c)
                if i:
                    s1 = s1 * Scalar.pow_of(z1, i)
                    s2 = s2 * Scalar.pow_of(z2, i)
                total = total + s1 * lam(
                    slots[0].L(-j - i, Vec.unit(l1)), Vec.unit(l2), Vec.unit(l3)
                )
                total = total + s2 * lam(
                    Vec.unit(l1), slots[1].L(-j - i, Vec.unit(l2)), Vec.unit(l3)
                )
            return total

    return DualFunctional(len(slots), fn, tag=f"L'({j})")


def check_sl2_dual(ctx, lam, tuples):
    """Bracket relations of the induced operators on sample tuples."""
    for j1 in (-1, 0, 1):
        for j2 in (-1, 0, 1):
            if j1 + j2 not in (-1, 0, 1):
                continue
            a = lprime(ctx, j1, lprime(ctx, j2, lam))
            b = lprime(ctx, j2, lprime(ctx, j1, lam))
            c = lprime(ctx, j1 + j2, lam)
            for tp in tuples:
                lhs = a.value(*tp) - b.value(*tp)
                rhs = Scalar.rational(j1 - j2) * c.value(*tp)
                if not (lhs - rhs).is_zero():
                    return False, (j1, j2, tp)
    return True, None


def check_mode_weight_bracket(ctx, v, lam, tuples, window=2):
    """[L'(0), A(v, n)] = A(L(0)v, n) + A(L(-1)v, n+1) on sample tuples."""
    l0lam = lprime(ctx, 0, lam)
    v = vec_of(v)
    v0 = ctx.algebra.L(0, v)
    vm = ctx.algebra.L(-1, v)
    for n in range(-window, window + 1):
        left = lprime(ctx, 0, dual_mode(ctx, v, n, lam))
        right = dual_mode(ctx, v, n, l0lam)
        r1 = dual_mode(ctx, v0, n, lam)
        r2 = dual_mode(ctx, vm, n + 1, lam)
        for tp in tuples:
            lhs = left.value(*tp) - right.value(*tp)
            rhs = r1.value(*tp) + r2.value(*tp)
            if not (lhs - rhs).is_zero():
                return False, (n, tp)
    return True, None


def check_unit_and_derivative(ctx, unit_vec, vs, lam, tuples, window=3):
    """The unit current acts as the identity concentrated at mode -1, and
    applying the derivation shifts-and-scales the mode index."""
    fails = []
    for n in range(-window, window + 1):
        mode = dual_mode(ctx, unit_vec, n, lam)
        for tp in tuples:
            want = lam(*tp) if n == -1 else Scalar.zero()
            if not (mode.value(*tp) - want).is_zero():
                fails.append(("unit", n, tp))
    for v in vs:
        dv = ctx.algebra.L(-1, vec_of(v))
        for n in range(-window, window + 1):
            a = dual_mode(ctx, dv, n, lam)
            b = dual_mode(ctx, vec_of(v), n - 1, lam)
            for tp in tuples:
                lhs = a.value(*tp)
                rhs = Scalar.rational(-n) * b.value(*tp)
                if not (lhs - rhs).is_zero():
                    fails.append(("derivative", n, tp))
    return (not fails), fails


# ---------------------------------------------------------------------------
# compatibility, commutator and kernel identities


def basis_tuples(slots):
    if any(s.labels is None for s in slots):
        raise ValueError("slot basis is not finite; pass explicit tuples")
    return list(itertools.product(*[s.labels for s in slots]))


def _ceiling_for(lam, ceiling, h_hi):
    if ceiling is not None:
        return int(ceiling)
    if lam.ceiling is not None:
        return int(lam.ceiling(h_hi))
    raise ValueError("no mode ceiling known; pass one or use a functional that carries it")


def check_compatibility(ctx, lam, gens=None, tuples=None, window=2, margin=2, ceiling=None):
    """The localized currents act consistently with the plain modes: the
    action of v (x) (1/t - z)^n t^m equals the binomial spread of the dual
    modes.  Also probes that modes vanish above the ceiling (truncation).
    Returns (ok, failures); each failure names the generator, the exponent
    pair or probe index, and the tuple."""
    if ctx.kind != "P(z)":
        raise ValueError("compatibility is formulated for the single-parameter P-type action")
    zn = ctx.znames[0]
    if gens is None:
        if ctx.algebra.labels is None:
            raise ValueError("algebra basis is not finite; pass gens")
        gens = [Vec.unit(b) for b in ctx.algebra.labels]
    if tuples is None:
        tuples = basis_tuples(ctx.slots)
    fails = []
    for v in gens:
        v = vec_of(v)
        h_hi = _hi_weight(ctx.algebra.weight, v)
        K = _ceiling_for(lam, ceiling, h_hi)
        for k in range(K + 1, K + margin + 1):
            probe = dual_mode(ctx, v, k, lam)
            for tp in tuples:
                if not probe.value(*tp).is_zero():
                    fails.append(("truncation", str(v), k, tp))
        modes = {}
        for n in range(-window, window + 1):
            for m in range(-window, window + 1):
                cur = compat_current(n, m, zn)
                for tp in tuples:
                    lhs = tau_value(ctx, v, cur, lam, tp)
                    rhs = Scalar.zero()
                    i = 0
                    while True:
                        if n >= 0 and i > n:
                            break
                        k = m - n + i
                        if k > K:
                            break
                        c = binom(n, i) * F(-1) ** i
                        if c:
                            if k not in modes:
                                modes[k] = dual_mode(ctx, v, k, lam)
                            s = Scalar.rational(c)
                            if i:
                                s = s * Scalar.pow_of(zn, i)
                            rhs = rhs + s * modes[k].value(*tp)
                        i += 1
                    if not (lhs - rhs).is_zero():
                        fails.append(("spread", str(v), (n, m), tp))
    return (not fails), fails


def check_commutator_formula(ctx, lam, us, vs, tuples, window=2):
    """[A(u, m), A(v, k)] = sum_i C(m, i) A(u_i v, m+k-i); holds for every
    functional, no compatibility needed."""
    alg = ctx.algebra
    for u in us:
        u = vec_of(u)
        hu = _hi_weight(alg.weight, u)
        for v in vs:
            v = vec_of(v)
            hv = _hi_weight(alg.weight, v)
            i_hi = math.floor(hu + hv - 1 - alg.wt_floor)
            for m in range(-window, window + 1):
                for k in range(-window, window + 1):
                    left = dual_mode(ctx, u, m, dual_mode(ctx, v, k, lam))
                    right = dual_mode(ctx, v, k, dual_mode(ctx, u, m, lam))
                    parts = []
                    top = min(i_hi, m) if m >= 0 else i_hi
                    for i in range(0, top + 1):
                        c = binom(m, i)
                        if not c:
                            continue
                        uv = alg.comp(u, i, v)
                        if uv.is_zero():
                            continue
                        parts.append((c, dual_mode(ctx, uv, m + k - i, lam)))
                    for tp in tuples:
                        lhs = left.value(*tp) - right.value(*tp)
                        rhs = Scalar.zero()
                        for c, fun in parts:
                            rhs = rhs + Scalar.rational(c) * fun.value(*tp)
                        if not (lhs - rhs).is_zero():
                            return False, (m, k, tp)
    return True, None


def jacobi_on_compatible(ctx, lam, u, v, tuples, window=1, extra=(), ceiling=None):
    """The component kernel identity for the dual modes of two states on a
    compatible functional, over exponent triples in the window box plus any
    extra triples.  Mode sums are cut by the ceiling and by truncation of
    components in the algebra."""
    alg = ctx.algebra
    u, v = vec_of(u), vec_of(v)
    hu = _hi_weight(alg.weight, u)
    hv = _hi_weight(alg.weight, v)
    Ku = _ceiling_for(lam, ceiling, hu)
    Kv = _ceiling_for(lam, ceiling, hv)
    i_alg = math.floor(hu + hv - 1 - alg.wt_floor)
    triples = list(itertools.product(range(-window, window + 1), repeat=3))
    triples.extend(extra)
    inner_u = {}
    inner_v = {}
    for a, b, c in triples:
        for tp in tuples:
            lhs = Scalar.zero()
            i = 0
            while c + i <= Kv and (a < 0 or i <= a):
                cc = binom(a, i)
                if cc:
                    if c + i not in inner_v:
                        inner_v[c + i] = dual_mode(ctx, v, c + i, lam)
                    val = dual_mode(ctx, u, a + b - i, inner_v[c + i]).value(*tp)
                    lhs = lhs + Scalar.rational(cc * F(-1) ** i) * val
                i += 1
            i = 0
            sign_a = F(-1) ** a
            while b + i <= Ku and (a < 0 or i <= a):
                cc = binom(a, i)
                if cc:
                    if b + i not in inner_u:
                        inner_u[b + i] = dual_mode(ctx, u, b + i, lam)
                    val = dual_mode(ctx, v, a + c - i, inner_u[b + i]).value(*tp)
                    lhs = lhs - Scalar.rational(sign_a * cc * F(-1) ** i) * val
                i += 1
            rhs = Scalar.zero()
            i = 0
            while a + i <= i_alg and (b < 0 or i <= b):
                cc = binom(b, i)
                if cc:
                    uv = alg.comp(u, a + i, v)
                    if not uv.is_zero():
                        val = dual_mode(ctx, uv, b + c - i, lam).value(*tp)
                        rhs = rhs + Scalar.rational(cc) * val
                i += 1
            if not (lhs - rhs).is_zero():
                return False, (a, b, c, tp)
    return True, None


# ---------------------------------------------------------------------------
# the pairing functional of a dual vector


def boson_pz_functional(B: FreeBoson, w3p, zname="z") -> DualFunctional:
    """The functional pairing a dual vector against the canonical localized
    map: the pair (w1, w2) goes to the w3p-coefficient of the generating
    series of components of w1 acting on w2.  One component index
    contributes for each homogeneous piece, fixed by weight matching."""
    w3p = vec_of(w3p)
    whi = max((B.weight(l) for l, _ in w3p.items()), default=F(0))

    def fn(l1, l2):
        total = Scalar.zero()
        for l3, c3 in w3p.items():
            n = B.weight(l1) + B.weight(l2) - B.weight(l3) - 1
            if F(n).denominator != 1:
                continue
            val = B.comp(Vec.unit(l1), int(n), Vec.unit(l2)).get(l3)
            if val.is_zero():
                continue
            s = val * c3
            e = int(-n - 1)
            if e:
                s = s * Scalar.pow_of(zname, e)
            total = total + s
        return total

    return DualFunctional(2, fn, ceiling=lambda h: int(whi + h - 1), tag="pairing")


def check_dual_pairing_intertwines(B: FreeBoson, w3p, currents, tuples, js=(-1, 0, 1)):
    """The pairing functional intertwines the contragredient action with the
    dual action: acting on the dual vector and then pairing agrees with
    pairing and then acting, both for currents and for the sl(2) slice."""
    bs = boson_slot(B)
    ctx = DualActionContext("P(z)", bs, (bs, bs))
    M3p = ContragredientModule(B, B.weight, lambda u: B.L(1, u), B.basis_at)
    cslot = contragredient_slot(M3p)
    w3p = vec_of(w3p)
    base = boson_pz_functional(B, w3p)
    fails = []
    for v, f in currents:
        v = vec_of(v)
        moved = _act(cslot, v, f, w3p, "z", _hi_weight(B.weight, v))
        lhs = boson_pz_functional(B, moved)
        rhs = tau_apply(ctx, v, f, base)
        for tp in tuples:
            if not (lhs.value(*tp) - rhs.value(*tp)).is_zero():
                fails.append(("current", tp))
    for j in js:
        lhs = boson_pz_functional(B, M3p.L(j, w3p))
        rhs = lprime(ctx, j, base)
        for tp in tuples:
            if not (lhs.value(*tp) - rhs.value(*tp)).is_zero():
                fails.append(("sl2", j, tp))
    return (not fails), fails


# ---------------------------------------------------------------------------
# the compatible subspace of the full dual, for finite instances


def compatible_subspace_finite(V: CommVertexAlgebra):
    """All functionals on A (x) A compatible with the dual action, for a
    finite commutative instance with zero derivation: the kernel of the
    shuttle constraints lam(v a (x) b) = lam(a (x) v b).  Returns the
    dimension, the basis as functionals, and the column order."""
    if any(not V.der(Vec.unit(b)).is_zero() for b in V.basis):
        raise ValueError("finite compatible-subspace computation assumes a zero derivation")
    pairs = list(itertools.product(V.basis, repeat=2))
    col = {p: i for i, p in enumerate(pairs)}
    rows = []
    for v in V.basis:
        for a, b in pairs:
            row = [F(0)] * len(pairs)
            for lbl, c in V.alg.product(Vec.unit(v), Vec.unit(a)).items():
                row[col[(lbl, b)]] += c.as_rational()
            for lbl, c in V.alg.product(Vec.unit(v), Vec.unit(b)).items():
                row[col[(a, lbl)]] -= c.as_rational()
            if any(row):
                rows.append(row)
    basis = linalg.kernel(rows, len(pairs))
    funcs = []
    for vecvals in basis:
        table = {pairs[i]: Scalar.rational(c) for i, c in enumerate(vecvals) if c}
        funcs.append(DualFunctional.from_table(2, table, ceiling=lambda h: -1))
    return len(basis), funcs, pairs


def check_subspace_stability(ctx, funcs, tuples, window=2):
    """The span of the given functionals is preserved by every dual mode and
    by the induced sl(2) operators, witnessed by rank comparisons."""
    if ctx.algebra.labels is None:
        raise ValueError("stability check needs a finite algebra basis")
    mat = [[f.value(*tp).as_rational() for tp in tuples] for f in funcs]
    r0 = linalg.rank(mat)
    gens = [Vec.unit(b) for b in ctx.algebra.labels]
    for f in funcs:
        for v in gens:
            for n in range(-window, window + 1):
                g = dual_mode(ctx, v, n, f)
                row = [g.value(*tp).as_rational() for tp in tuples]
                if linalg.rank(mat + [row]) != r0:
                    return False, ("mode", n)
        for j in (-1, 0, 1):
            g = lprime(ctx, j, f)
            row = [g.value(*tp).as_rational() for tp in tuples]
            if linalg.rank(mat + [row]) != r0:
                return False, ("sl2", j)
    return True, None


def check_vacuum_fusion(V: CommVertexAlgebra):
    """For W2 = A the compatible subspace is exactly the image of the full
    dual of A under precomposition with multiplication, and the induced map
    eta(w) = (canonical map)(1 (x) w) is the identity; so the fusion of A
    with W2 recovers W2.  Returns (name, passed, detail) triples."""
    results = []
    dim, funcs, pairs = compatible_subspace_finite(V)
    n = len(V.basis)
    results.append(("dimension", dim == n, f"kernel dimension {dim} vs dual dimension {n}"))

    kernel_rows = [[f.value(*p).as_rational() for p in pairs] for f in funcs]
    mult_rows = []
    for b in V.basis:
        row = []
        for a1, a2 in pairs:
            row.append(V.alg.product(Vec.unit(a1), Vec.unit(a2)).get(b).as_rational())
        mult_rows.append(row)
    rk = linalg.rank(kernel_rows)
    rm = linalg.rank(mult_rows)
    rb = linalg.rank(kernel_rows + mult_rows)
    same = rk == rm == rb == dim
    results.append(("span", same, f"ranks kernel {rk}, multiplication {rm}, joint {rb}"))

    one = V.unit_vec()
    ok = all(
        V.alg.product(one, Vec.unit(b)).sub(Vec.unit(b)).is_zero() for b in V.basis
    )
    results.append(("unit-section", ok, "eta recovers each basis vector"))
    return results


# ---------------------------------------------------------------------------
# the companion coaction on tensors


def sigma_apply(ctx, v, f: RatFn, tensor, fsym=None):
    """The coaction adjoint to the dual action: the same slot currents act
    directly on a tensor, given as a map from label tuples to coefficients.
    Satisfies lam(sigma(xi) w) = (tau(xi) lam)(w)."""
    fsym = fsym or ctx.znames[0]
    parts = _slot_currents(ctx, vec_of(v), f, fsym)
    out = {}
    for i, (sign, zn, cur) in enumerate(parts):
        handle = ctx.slots[i]
        for key, c in tensor.items():
            for u, g in cur:
                h_hi = _hi_weight(ctx.algebra.weight, u)
                wmod = _act(handle, u, g, Vec.unit(key[i]), zn, h_hi)
                for lbl, cc in wmod.items():
                    nk = key[:i] + (lbl,) + key[i + 1 :]
                    val = c * cc
                    if sign < 0:
                        val = Scalar.zero() - val
                    out[nk] = out.get(nk, Scalar.zero()) + val
    return {k: s for k, s in out.items() if not s.is_zero()}


def delta_apply(ctx, v, f: RatFn, tensor, fsym=None):
    """The coaction composed with the adjoint dressing; on the first slot
    the two dressings cancel, leaving the plain translated current."""
    fsym = fsym or ctx.znames[0]
    out = {}
    for u, g in opposite_current(ctx.algebra, vec_of(v), f, fsym):
        part = sigma_apply(ctx, u, g, tensor, fsym)
        for k, s in part.items():
            out[k] = out.get(k, Scalar.zero()) + s
    return {k: s for k, s in out.items() if not s.is_zero()}


def check_sigma_adjoint(ctx, v, f: RatFn, lam, tensors, fsym=None):
    """Adjointness of the coaction against sample tensors."""
    moved = tau_apply(ctx, v, f, lam, fsym)
    for tensor in tensors:
        image = sigma_apply(ctx, v, f, tensor, fsym)
        lhs = Scalar.zero()
        for key, c in tensor.items():
            lhs = lhs + c * moved.value(*key)
        rhs = Scalar.zero()
        for key, c in image.items():
            rhs = rhs + c * lam(*key)
        if not (lhs - rhs).is_zero():
            return False, tensor
    return True, None


# ---------------------------------------------------------------------------
# auxiliary degree bookkeeping


def degree_component(lam, adegs, d: int) -> DualFunctional:
    """Restrict a functional to tensors of one auxiliary degree."""

    def fn(*labels):
        degs = [adegs[i](labels[i]) for i in range(len(labels))]
        if any(x is None for x in degs) or sum(degs) != d:
            return Scalar.zero()
        return lam(*labels)

    return DualFunctional(lam.arity, fn, ceiling=lam.ceiling, tag=f"deg[{d}]")


def check_degree_shift(ctx, v, f: RatFn, lam, alpha: int, tuples, fsym=None):
    """Acting by a current of auxiliary degree alpha turns a functional
    supported in tensor degree d into one supported in degree d - alpha."""
    adegs = [s.adeg for s in ctx.slots]
    if any(a is None for a in adegs):
        raise ValueError("every slot needs an auxiliary degree for this check")
    seen = {sum(adegs[i](tp[i]) for i in range(len(tp))) for tp in tuples}
    for d in sorted(seen):
        lam_d = degree_component(lam, adegs, d)
        moved = tau_apply(ctx, v, f, lam_d, fsym)
        for tp in tuples:
            dd = sum(adegs[i](tp[i]) for i in range(len(tp)))
            if dd != d - alpha and not moved.value(*tp).is_zero():
                return False, (d, tp)
    return True, None


# ---------------------------------------------------------------------------
# the two-parameter consequence on shuttling functionals


def product_functional(V: CommVertexAlgebra, phi) -> DualFunctional:
    """lam(w1, w2, w3) = phi(w1 w2 w3); multiplication shuttles the algebra
    action freely between the slots."""

    def fn(l1, l2, l3):
        p = V.alg.product(Vec.unit(l1), V.alg.product(Vec.unit(l2), Vec.unit(l3)))
        total = Scalar.zero()
        for lbl, c in p.items():
            w = phi.get(lbl)
            if w is not None:
                ws = w if isinstance(w, Scalar) else Scalar.rational(w)
                total = total + c * ws
        return total

    return DualFunctional(3, fn, ceiling=lambda h: -1, tag="phi-mult")


def check_res_consequence(ctx, lam, gens, tuples, window=2, ceiling=-1):
    """On a three-slot functional, the current localized at the second
    parameter spreads into the binomially shifted dual modes.  Needs the
    functional to shuttle the action between the last two slots; on other
    functionals the identity fails fast, which the negative controls use."""
    if ctx.kind != "P(z1,z2)":
        raise ValueError("this consequence concerns the two-parameter action")
    z2 = ctx.znames[1]
    K = int(ceiling)
    fails = []
    for v in gens:
        v = vec_of(v)
        modes = {}
        for n in range(-window, window + 1):
            for m in range(-window, window + 1):
                cur = compat_current(n, m, z2)
                for tp in tuples:
                    lhs = tau_value(ctx, v, cur, lam, tp, fsym=z2)
                    rhs = Scalar.zero()
                    i = 0
                    while True:
                        if n >= 0 and i > n:
                            break
                        k = m - n + i
                        if k > K:
                            break
                        c = binom(n, i) * F(-1) ** i
                        if c:
                            if k not in modes:
                                modes[k] = dual_mode(ctx, v, k, lam)
                            s = Scalar.rational(c)
                            if i:
                                s = s * Scalar.pow_of(z2, i)
                            rhs = rhs + s * modes[k].value(*tp)
                        i += 1
                    if not (lhs - rhs).is_zero():
                        fails.append((n, m, tp))
    return (not fails), fails
