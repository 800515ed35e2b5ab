"""Tests for the logarithmic operator families and their transforms."""

from __future__ import annotations

from fractions import Fraction

import pytest

from logcalc.scalars import Scalar
from logcalc.series import Vec
from logcalc.algebras import TruncatedCurrentAlgebra, FreeBoson, ContragredientModule
from logcalc.intertwiners import (
    GradedSpace,
    IntertwiningMapData,
    a_transform,
    b_pairing_side,
    b_transform,
    boson_graded_space,
    check_intertwiner_axioms,
    check_split_grading,
    current_graded_space,
    exchange_module_action,
    from_intertwining_map,
    from_module_action,
    nilpotent_defect,
    omega,
    pascal_inverse,
    pascal_matrix,
    random_graded_space,
    recover_component,
    rotate_variable,
    synthetic_intertwiner,
    to_intertwining_map,
    twist_family,
    weight_projection,
    xt_operator,
)

F = Fraction


def synthetic_triple(seed=5):
    W1 = random_graded_space("u", 1, coset=F(1, 2))
    W2 = random_graded_space("v", 2)
    W3 = random_graded_space("t", 3)
    return W1, W2, W3, synthetic_intertwiner(W1, W2, W3, seed)


def current_action(M=3):
    S = TruncatedCurrentAlgebra(M)
    T = current_graded_space(S)
    return S, T, from_module_action(S, T, T)


class TestGradedSpaces:
    def test_random_spaces_have_split_gradings(self):
        for seed in range(30):
            assert check_split_grading(random_graded_space("w", seed))

    def test_chain3_spaces_reach_nilpotency_three(self):
        found = False
        for seed in range(8):
            W = random_graded_space("w", seed, coset=F(1, 3), chain3=True)
            assert check_split_grading(W)
            if W.nilpotency() == 3:
                found = True
        assert found

    def test_dual_transposes_and_is_involutive(self):
        W = random_graded_space("w", 4)
        Wd = W.dual()
        assert check_split_grading(Wd)
        for l in W.labels:
            for m in W.labels:
                lhs = Wd.apply_up(Vec.unit(l)).get(m)
                rhs = W.apply_down(Vec.unit(m)).get(l)
                assert (lhs - rhs).is_zero()
        Wdd = Wd.dual()
        for table in ("N", "up", "down"):
            a, b = getattr(W, table), getattr(Wdd, table)
            assert set(a) == set(b)
            for l in a:
                assert a[l].sub(b[l]).is_zero()

    def test_exp_phase_splits_weight_and_nilpotent_parts(self):
        W = random_graded_space("w", 1, coset=F(1, 2))
        lbl = next(l for l in W.labels if not W.apply_N(Vec.unit(l)).is_zero())
        v = W.exp_L0_phase(Vec.unit(lbl), 2)
        expect = Vec.unit(lbl, Scalar.phase(2 * W.weight(lbl))).add(
            W.apply_N(Vec.unit(lbl)).scale(Scalar.phase(2 * W.weight(lbl)) * Scalar.pi_i() * 2)
        )
        assert v.sub(expect).is_zero()

    def test_current_and_boson_spaces(self):
        S, T, _ = current_action(3)
        assert check_split_grading(T)
        assert T.weight_span() == (F(-3), F(0))
        B = FreeBoson()
        VB = boson_graded_space(B, 4)
        assert check_split_grading(VB)
        assert len(VB.basis_at(4)) == 5


class TestSyntheticFamilies:
    def test_axioms_hold_by_construction(self):
        _, _, _, Y = synthetic_triple()
        assert Y.log_bound == 3
        for name, ok in check_intertwiner_axioms(Y):
            assert ok, name

    def test_log_powers_are_populated(self):
        W1, W2, _, Y = synthetic_triple()
        seen = set()
        for l1 in W1.labels:
            for l2 in W2.labels:
                for _, k in Y.support(Vec.unit(l1), Vec.unit(l2)):
                    seen.add(k)
        assert 0 in seen and max(seen) >= 1

    def test_nilpotent_defect_vanishes_at_top_log_power(self):
        W1, W2, _, Y = synthetic_triple()
        w1, w2 = Vec.unit(W1.labels[0]), Vec.unit(W2.labels[0])
        for n, k in Y.support(w1, w2):
            assert nilpotent_defect(Y, w1, n, k, w2).is_zero()

    def test_components_respect_coset(self):
        _, _, _, Y = synthetic_triple()
        assert Y.offset == F(1, 2)
        assert Y.comp(Vec.unit(Y.W1.labels[0]), 0, 0, Vec.unit(Y.W2.labels[0])).is_zero()

    def test_series_carries_log_keys(self):
        W1, W2, _, Y = synthetic_triple()
        pair = None
        for l1 in W1.labels:
            for l2 in W2.labels:
                if any(k >= 1 for _, k in Y.support(Vec.unit(l1), Vec.unit(l2))):
                    pair = (l1, l2)
        assert pair is not None
        s = Y.series(Vec.unit(pair[0]), Vec.unit(pair[1]), "x")
        assert s.kind["x"] == "bounded"
        assert any(key[1] for key in s.coeffs)


class TestExchangeTransform:
    def test_involution_on_synthetic(self):
        _, _, _, Y = synthetic_triple()
        for r in (-1, 0, 1):
            assert omega(omega(Y, r), -r - 1).equals(Y)

    def test_involution_on_current_module_action(self):
        _, _, YW = current_action()
        for r in (-1, 0, 1):
            assert omega(omega(YW, r), -r - 1).equals(YW)

    def test_composition_is_variable_rotation_and_index_twist(self):
        _, _, _, Y = synthetic_triple()
        for r, s in ((0, 0), (-1, 1), (1, 0)):
            OO = omega(omega(Y, r), s)
            assert OO.equals(rotate_variable(Y, r + s + 1))
            assert OO.equals(twist_family(Y, r + s + 1, -(r + s + 1), -(r + s + 1)))

    def test_zero_twist_is_identity(self):
        _, _, _, Y = synthetic_triple()
        assert twist_family(Y, 0, 0, 0).equals(Y)

    def test_module_action_exchange_is_branch_independent(self):
        _, _, YW = current_action()
        O = omega(YW, 0)
        assert O.equals(omega(YW, 1))
        assert O.equals(omega(YW, -1))
        assert O.equals(exchange_module_action(YW))


class TestContragredientTransform:
    def test_involution_on_synthetic(self):
        _, _, _, Y = synthetic_triple()
        for r in (-1, 0, 1):
            assert a_transform(a_transform(Y, r), -r - 1).equals(Y)

    def test_involution_on_current_module_action(self):
        _, _, YW = current_action()
        for r in (-1, 0, 1):
            assert a_transform(a_transform(YW, r), -r - 1).equals(YW)

    def test_composition_is_middle_twist(self):
        _, _, _, Y = synthetic_triple()
        for r, s in ((0, 0), (-1, 1)):
            AA = a_transform(a_transform(Y, r), s)
            assert AA.equals(twist_family(Y, 0, r + s + 1, 0))

    def test_equals_contragredient_action_on_boson(self):
        B = FreeBoson()
        cap = 6
        VB = boson_graded_space(B, cap)
        YB = from_module_action(B, VB, VB)
        Bp = ContragredientModule(B, B.weight, lambda v: B.L(1, v), B.basis_at)
        A = a_transform(YB, 0)
        checked = 0
        for v in [(1,), (1, 1), (2,)]:
            for l3 in [(), (1,), (2,), (2, 1)]:
                for m in range(-2, 4):
                    if B.weight(v) + B.weight(l3) - m - 1 > cap:
                        continue
                    got = A.comp(Vec.unit(v), m, 0, Vec.unit(l3))
                    want = Bp.comp(Vec.unit(v), m, Vec.unit(l3))
                    assert got.sub(want).is_zero()
                    checked += 1
        assert checked > 30

    def test_branch_independent_for_integral_weights(self):
        _, _, YW = current_action()
        assert a_transform(YW, 0).equals(a_transform(YW, 1))


class TestCompositeTransform:
    def test_split_independence(self):
        _, _, YW = current_action()
        assert b_transform(YW, 1, split=0).equals(b_transform(YW, 1, split=-1))
        assert b_transform(YW, 0, split=0).equals(b_transform(YW, 0, split=1))

    def test_defining_pairing_on_current_algebra(self):
        _, T, YW = current_action()
        Br = b_transform(YW, 1, split=0)
        for l1 in T.labels[:3]:
            for l3 in T.labels[:3]:
                for l2 in T.labels[:3]:
                    for m in range(-4, 4):
                        lhs = Br.comp(Vec.unit(l3), m, 0, Vec.unit(l2)).get(l1)
                        rhs = b_pairing_side(YW, l1, l3, l2, 1, m)
                        assert (lhs - rhs).is_zero()

    def test_type_bookkeeping(self):
        _, _, _, Y = synthetic_triple()
        Br = b_transform(Y, 0)
        assert Br.W1.labels == Y.W3.labels
        assert Br.W2.labels == Y.W2.labels
        assert Br.W3.labels == Y.W1.labels


class TestLogSlotShift:
    def test_shift_zero_is_identity(self):
        _, _, _, Y = synthetic_triple()
        assert xt_operator(Y, 0).equals(Y)

    def test_shift_past_bound_vanishes(self):
        W1, W2, _, Y = synthetic_triple()
        X = xt_operator(Y, Y.log_bound + 1)
        for l1 in W1.labels:
            for l2 in W2.labels:
                assert not X.support(Vec.unit(l1), Vec.unit(l2))

    def test_shifted_family_still_satisfies_axioms(self):
        _, _, _, Y = synthetic_triple()
        for name, ok in check_intertwiner_axioms(xt_operator(Y, 1)):
            assert ok, name

    def test_congruence_filter(self):
        _, _, _, Y = synthetic_triple()
        X = xt_operator(Y, 0, residue=Y.offset + F(1, 3))
        for l1 in Y.W1.labels:
            for l2 in Y.W2.labels:
                assert not X.support(Vec.unit(l1), Vec.unit(l2))


class TestParameterMaps:
    def test_roundtrip_on_current_module_action(self):
        _, _, YW = current_action(2)
        for p in (0, 2):
            I = to_intertwining_map(YW, "P", "z", p)
            assert from_intertwining_map(I, p).equals(YW)

    def test_module_action_map_is_branch_independent(self):
        _, _, YW = current_action(2)
        I = to_intertwining_map(YW, "P", "z", 0)
        assert from_intertwining_map(I, 3).equals(YW)

    def test_roundtrip_on_twisted_synthetic_member(self):
        _, _, _, Y = synthetic_triple()
        Yt = twist_family(Y, 1, -1, -1)
        for p in (0, 1, -2):
            I = to_intertwining_map(Yt, "P", "z", p)
            assert from_intertwining_map(I, p).equals(Yt)

    def test_branch_change_is_an_index_twist(self):
        _, _, _, Y = synthetic_triple()
        I = to_intertwining_map(Y, "P", "z", 0)
        Y2 = from_intertwining_map(I, 2)
        assert Y2.equals(twist_family(Y, -2, 2, 2))
        assert Y2.equals(rotate_variable(Y, -2))

    def test_q_kind_routes_through_duals(self):
        _, _, _, Y = synthetic_triple()
        Q = to_intertwining_map(Y, "Q", "z", 1)
        assert Q.kind == "Q"
        assert Q.W3.labels == Y.W1.labels
        assert from_intertwining_map(Q, 1).equals(Y)
        l3 = Y.W3.labels[0]
        l2 = Y.W2.labels[0]
        vals = Q.value(Y.W1.labels[0], l2)
        direct = Q.components.get((l3, l2))
        if direct is not None:
            assert (vals.get(l3) - direct.get(Y.W1.labels[0])).is_zero()

    def test_zero_map_gives_zero_operator(self):
        W1, W2, W3, Y = synthetic_triple()
        I = IntertwiningMapData("P", "z", {}, W1, W2, W3, Y.offset, 0)
        assert I.is_zero()
        Z = from_intertwining_map(I, 0)
        for l1 in W1.labels:
            for l2 in W2.labels:
                assert not Z.support(Vec.unit(l1), Vec.unit(l2))


class TestPascalRecovery:
    def test_inverse_matrix_oracle(self):
        assert pascal_inverse(3) == [
            [F(1), F(-1), F(1)],
            [F(0), F(1), F(-2)],
            [F(0), F(0), F(1)],
        ]

    def test_matrix_times_inverse_is_identity(self):
        for K in range(1, 7):
            P, Q = pascal_matrix(K), pascal_inverse(K)
            for i in range(K):
                for j in range(K):
                    s = sum(P[i][t] * Q[t][j] for t in range(K))
                    assert s == (1 if i == j else 0)

    def test_log_free_recovery_is_direct_projection(self):
        _, _, YW = current_action(2)
        w1, w2 = Vec.unit("t1"), Vec.unit("t2")
        for n, _ in YW.support(w1, w2):
            pi0 = weight_projection(YW, w1, n, w2, 0)
            assert pi0.get(0, Vec.zero()).sub(YW.comp(w1, n, 0, w2)).is_zero()
            got = recover_component(YW, w1, n, w2, 0, K=1)
            assert got.sub(YW.comp(w1, n, 0, w2)).is_zero()

    def test_synthetic_recovery_round_trip(self):
        checked = 0
        for seed in range(12):
            W1 = random_graded_space("u", seed, coset=F(seed % 3, 3), chain3=(seed % 4 == 0))
            W2 = random_graded_space("v", seed + 100)
            W3 = random_graded_space("t", seed + 200, chain3=(seed % 3 == 0))
            Y = synthetic_intertwiner(W1, W2, W3, seed + 300)
            assert Y.log_bound + 1 <= 6
            for l1 in W1.labels[:2]:
                for l2 in W2.labels[:2]:
                    w1, w2 = Vec.unit(l1), Vec.unit(l2)
                    for n, _ in Y.support(w1, w2)[:4]:
                        for r in range(Y.log_bound + 1):
                            got = recover_component(Y, w1, n, w2, r)
                            assert got.sub(Y.comp(w1, n, r, w2)).is_zero()
                            checked += 1
        assert checked >= 200

    def test_understated_log_bound_is_detected(self):
        W1, W2, _, Y = synthetic_triple()
        pair = None
        for l1 in W1.labels:
            for l2 in W2.labels:
                for n, k in Y.support(Vec.unit(l1), Vec.unit(l2)):
                    if k >= 1:
                        pair = (l1, n, l2)
                        break
        assert pair is not None
        l1, n, l2 = pair
        with pytest.raises(ValueError):
            recover_component(Y, Vec.unit(l1), n, Vec.unit(l2), 0, K=1)


class TestModuleActionWrapper:
    def test_no_logs_and_integral_exponents(self):
        _, _, YW = current_action()
        assert YW.log_bound == 0
        assert YW.offset == 0
        assert YW.grading_compatible
        assert YW.comp(Vec.unit("t1"), F(1, 2), 0, Vec.unit("t1")).is_zero()

    def test_axioms(self):
        _, _, YW = current_action()
        for name, ok in check_intertwiner_axioms(YW):
            assert ok, name

    def test_boson_action_axioms_on_samples(self):
        B = FreeBoson()
        VB = boson_graded_space(B, 4)
        YB = from_module_action(B, VB, VB)
        pairs = [((1,), (1,)), ((2,), (1, 1)), ((1, 1), ())]
        for name, ok in check_intertwiner_axioms(YB, sample_pairs=pairs):
            assert ok, name