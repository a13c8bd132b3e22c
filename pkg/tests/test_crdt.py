import itertools
import random
from functools import reduce

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causalac.crdt import (
    Assign,
    CrdtType,
    CrdtTypeError,
    Dot,
    Effect,
    FlagSet,
    Increment,
    MapKey,
    MapUpdate,
    MvRegState,
    OrSetState,
    PolicyAssign,
    PolicyState,
    SetUpdate,
    apply_all,
    apply_effect,
    crdt_merge_equivalence_oracle,
    empty_state,
    generate_effect,
    map_remove,
    map_update,
    read_value,
    set_add,
    set_remove,
)
from histories import linear_extensions, random_history

d1, d2, d3 = Dot("r1", 1), Dot("r2", 1), Dot("r3", 1)


class TestGenerateEffect:
    def test_assign_supersedes_visible_entry(self):
        state = MvRegState(entries=frozenset({(b"a", d1)}), applied=frozenset({d1}))
        e = generate_effect(state, Assign(b"b"), d2)
        assert e == Effect(Assign(b"b"), d2, frozenset({d1}))

    def test_policy_assign_on_empty_observes_nothing(self):
        e = generate_effect(PolicyState(), PolicyAssign({b"r", b"w"}), d1)
        assert e.observed == frozenset()

    def test_set_remove_covers_all_visible_tags(self):
        state = OrSetState(entries=frozenset({(b"x", d1), (b"x", d2)}))
        e = generate_effect(state, set_remove(b"x"), d3)
        assert e.observed == {d1, d2}

    def test_type_mismatch(self):
        with pytest.raises(CrdtTypeError):
            generate_effect(MvRegState(), set_add(b"x"), d1)

    def test_nested_type_mismatch(self):
        with pytest.raises(CrdtTypeError):
            MapUpdate([(MapKey(b"k", CrdtType.ORSET), Assign(b"v"))])


class TestApplyAndRead:
    def test_concurrent_assigns_both_retained_in_either_order(self):
        base = apply_effect(MvRegState(), Effect(Assign(b"a"), d1))
        eb = Effect(Assign(b"b"), d2, frozenset({d1}))
        ec = Effect(Assign(b"c"), d3, frozenset({d1}))
        one = apply_all(base, [eb, ec])
        other = apply_all(base, [ec, eb])
        assert one.entries == {(b"b", d2), (b"c", d3)}
        assert one == other

    def test_policy_concurrent_retention_and_intersection(self):
        base = apply_effect(PolicyState(), Effect(PolicyAssign({b"r"}), d1))
        e2 = Effect(PolicyAssign({b"r", b"w"}), d2, frozenset({d1}))
        e3 = Effect(PolicyAssign({b"w", b"d"}), d3, frozenset({d1}))
        state = apply_all(base, [e2, e3])
        assert state.entries == {(frozenset({b"r", b"w"}), d2), (frozenset({b"w", b"d"}), d3)}
        assert read_value(state) == {b"w"}

    def test_policy_single_entry(self):
        state = apply_effect(PolicyState(), Effect(PolicyAssign({b"r", b"w"}), d2))
        assert read_value(state) == {b"r", b"w"}

    def test_policy_disjoint_grants_read_empty(self):
        state = apply_all(
            PolicyState(),
            [Effect(PolicyAssign({b"cA"}), d2), Effect(PolicyAssign({b"cB"}), d3)],
        )
        assert read_value(state) == frozenset()

    def test_empty_reads(self):
        assert read_value(empty_state(CrdtType.POLICY)) == frozenset()
        assert read_value(empty_state(CrdtType.MVREG)) == frozenset()
        assert read_value(empty_state(CrdtType.ORSET)) == frozenset()
        assert read_value(empty_state(CrdtType.MAP)) == {}
        assert read_value(empty_state(CrdtType.COUNTER)) == 0
        assert read_value(empty_state(CrdtType.FLAG)) is False

    def test_duplicate_application_is_ignored(self):
        e = Effect(set_add(b"x"), d1)
        once = apply_effect(OrSetState(), e)
        assert apply_effect(once, e) == once

    def test_add_wins_over_concurrent_remove(self):
        s0 = apply_effect(OrSetState(), Effect(set_add(b"x"), d1))
        rm = generate_effect(s0, set_remove(b"x"), d2)
        add = generate_effect(s0, set_add(b"x"), d3)
        assert read_value(apply_all(s0, [rm, add])) == {b"x"}
        assert read_value(apply_all(s0, [add, rm])) == {b"x"}

    def test_map_update_wins_over_concurrent_remove(self):
        key = MapKey(b"k", CrdtType.MVREG)
        s0 = apply_effect(empty_state(CrdtType.MAP), generate_effect(empty_state(CrdtType.MAP), map_update(b"k", Assign(b"v")), d1))
        rm = generate_effect(s0, map_remove(b"k", CrdtType.MVREG), d2)
        up = generate_effect(s0, map_update(b"k", Assign(b"w")), d3)
        for order in ([rm, up], [up, rm]):
            assert read_value(apply_all(s0, order)) == {key: {b"w"}}

    def test_map_remove_drops_binding(self):
        s0 = apply_effect(empty_state(CrdtType.MAP), generate_effect(empty_state(CrdtType.MAP), map_update(b"k", Assign(b"v")), d1))
        s1 = apply_effect(s0, generate_effect(s0, map_remove(b"k", CrdtType.MVREG), d2))
        assert read_value(s1) == {}

    def test_enable_wins_flag(self):
        s0 = apply_effect(empty_state(CrdtType.FLAG), Effect(FlagSet(True), d1, frozenset()))
        off = generate_effect(s0, FlagSet(False), d2)
        on = generate_effect(s0, FlagSet(True), d3)
        assert read_value(apply_all(s0, [off, on])) is True
        assert read_value(apply_all(s0, [on, off])) is True

    def test_counter_sums(self):
        s = apply_all(
            empty_state(CrdtType.COUNTER),
            [Effect(Increment(3), d1), Effect(Increment(-1), d2)],
        )
        assert read_value(s) == 2


class TestOracle:
    def test_sequential_overwrite(self):
        effects = [Effect(Assign(b"a"), d1), Effect(Assign(b"b"), d2, frozenset({d1}))]
        assert crdt_merge_equivalence_oracle(CrdtType.MVREG, effects) == {b"b"}

    def test_concurrent(self):
        effects = [Effect(Assign(b"a"), d1), Effect(Assign(b"b"), d2)]
        assert crdt_merge_equivalence_oracle(CrdtType.MVREG, effects) == {b"a", b"b"}

    def test_cycle_rejected(self):
        import graphlib

        effects = [
            Effect(Assign(b"a"), d1, frozenset({d2})),
            Effect(Assign(b"b"), d2, frozenset({d1})),
        ]
        with pytest.raises(graphlib.CycleError):
            crdt_merge_equivalence_oracle(CrdtType.MVREG, effects)

    @pytest.mark.parametrize(
        "crdt_type",
        [CrdtType.MVREG, CrdtType.POLICY, CrdtType.ORSET, CrdtType.MAP, CrdtType.FLAG, CrdtType.COUNTER],
    )
    def test_six_effect_histories_agree_across_all_orders(self, crdt_type):
        for seed in range(25):
            effects, preds = random_history(random.Random(seed), crdt_type, 6)
            expected = crdt_merge_equivalence_oracle(crdt_type, effects)
            orders = 0
            for order in linear_extensions(effects, preds):
                assert read_value(apply_all(empty_state(crdt_type), order)) == expected
                orders += 1
            assert orders >= 1


def _policy_effect(perms, dot, observed=()):
    return Effect(PolicyAssign(perms), dot, frozenset(observed))


TOKENS = [b"r", b"w", b"d", b"x", b"o"]
token_sets = st.frozensets(st.sampled_from(TOKENS))


class TestPolicyProperties:
    @given(st.lists(token_sets, min_size=1, max_size=4))
    def test_read_is_subset_of_every_entry(self, sets):
        effects = [_policy_effect(s, Dot(f"r{i}", 1)) for i, s in enumerate(sets)]
        state = apply_all(PolicyState(), effects)
        for perms, _ in state.entries:
            assert read_value(state) <= perms

    @given(st.lists(token_sets, min_size=1, max_size=6))
    def test_sequential_assigns_read_last(self, sets):
        state = PolicyState()
        for i, s in enumerate(sets):
            state = apply_effect(state, generate_effect(state, PolicyAssign(s), Dot("r1", i + 1)))
        assert read_value(state) == sets[-1]

    @given(st.lists(token_sets, min_size=1, max_size=4), st.randoms())
    def test_concurrent_assigns_commute(self, sets, rnd):
        effects = [_policy_effect(s, Dot(f"r{i}", 1)) for i, s in enumerate(sets)]
        shuffled = list(effects)
        rnd.shuffle(shuffled)
        assert apply_all(PolicyState(), effects) == apply_all(PolicyState(), shuffled)

    @settings(max_examples=50)
    @given(token_sets, token_sets)
    def test_assign_covering_all_live_dots_wins(self, a, b):
        s = apply_all(PolicyState(), [_policy_effect(a, d1), _policy_effect(b, d2)])
        s = apply_effect(s, generate_effect(s, PolicyAssign({b"o"}), d3))
        assert read_value(s) == {b"o"}


def test_policy_intersection_against_direct_oracle():
    rng = random.Random(7)
    for _ in range(2000):
        base_perms = frozenset(t for t in TOKENS if rng.random() < 0.5)
        base = apply_effect(PolicyState(), _policy_effect(base_perms, Dot("r0", 1)))
        sets = [frozenset(t for t in TOKENS if rng.random() < 0.6) for _ in range(rng.choice([2, 3]))]
        effects = [generate_effect(base, PolicyAssign(s), Dot(f"r{i + 1}", 1)) for i, s in enumerate(sets)]
        for order in itertools.permutations(effects):
            assert read_value(apply_all(base, order)) == reduce(frozenset.intersection, sets)
