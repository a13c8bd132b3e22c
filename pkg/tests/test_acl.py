import itertools
import random
import struct

import pytest

from causalac.acl import (
    SECURITY_PREFIX,
    AccessControl,
    AccessDenied,
    BootstrapClosed,
    ConstantProcedure,
    DecisionProcedure,
    InvalidBucket,
    LayerDefinition,
    TokenProcedure,
    assign_policy,
    is_policy_bucket,
    policy_storage_key,
    read_policy,
    resolve_layers,
    secured_read,
    secured_update,
    start_secured_transaction,
)
from causalac.crdt import CrdtType, FlagSet, map_update, set_add
from causalac.store import BoundObject, Store

DOC = BoundObject(b"app", b"doc", CrdtType.ORSET)
R, W, OWN = TokenProcedure.READ, TokenProcedure.WRITE, TokenProcedure.OWN


def world(replicas=("r1",), grants=()):
    store = Store(list(replicas))
    ac = AccessControl(store)
    if grants:
        ac.bootstrap(replicas[0], grants)
        store.flush()
    return store, ac


class Recorder(DecisionProcedure):
    """Allows everything and records the arguments it was called with."""

    def __init__(self, layers=()):
        self.calls = []
        self.layer_def = LayerDefinition(layers)

    def requested_policies(self, current_user, obj):
        return self.layer_def

    def decide_read(self, current_user, obj, user_data, layers):
        self.calls.append(("read", current_user, user_data, layers))
        return True

    def decide_update(self, current_user, obj, op, user_data, layers):
        self.calls.append(("update", current_user, op, layers))
        return True

    def decide_policy_read(self, current_user, obj, target_user, user_data, layers):
        return True

    def decide_policy_assign(self, current_user, obj, target_user, new, old, user_data, layers):
        self.calls.append(("assign", new, old))
        return True


class TestPolicyStorageKey:
    def test_layout(self):
        key = policy_storage_key(BoundObject(b"app", b"lecture1", CrdtType.MAP), b"u7")
        assert key.bucket == b"acl$app"
        assert key.key == struct.pack(">I", 8) + b"lecture1" + struct.pack(">I", 2) + b"u7"
        assert key.crdt_type is CrdtType.POLICY

    def test_naive_concatenation_collision_avoided(self):
        a = policy_storage_key(BoundObject(b"app", b"ab", CrdtType.MAP), b"c")
        b = policy_storage_key(BoundObject(b"app", b"a", CrdtType.MAP), b"bc")
        assert a != b

    def test_deterministic(self):
        assert policy_storage_key(DOC, b"u") == policy_storage_key(DOC, b"u")

    def test_injective_brute_force(self):
        alphabet = [b"", b"a", b"b", b"\x00", b"\x00\x00\x00\x01", b"ab"]
        seen = {}
        for parts in itertools.product(alphabet, repeat=4):
            key, user = parts[0] + parts[1], parts[2] + parts[3]
            out = policy_storage_key(BoundObject(b"app", key, CrdtType.MAP), user)
            assert seen.setdefault(out, (key, user)) == (key, user)
        rng = random.Random(3)
        for _ in range(20000):
            key = bytes(rng.randrange(3) for _ in range(rng.randrange(6)))
            user = bytes(rng.randrange(3) for _ in range(rng.randrange(1, 6)))
            out = policy_storage_key(BoundObject(b"app", key, CrdtType.MAP), user)
            assert seen.setdefault(out, (key, user)) == (key, user)


class TestMediation:
    def test_constant_true_is_pass_through(self):
        store, ac = world()
        plain = store.begin_transaction("r1")
        plain.update(DOC, set_add(b"x"))
        plain.commit()
        stx = ac.start_transaction("r1", b"u", ConstantProcedure(True))
        assert stx.read(DOC) == store.begin_transaction("r1").read(DOC) == {b"x"}

    def test_constant_false_denies_without_touching_data(self):
        store, ac = world()
        stx = ac.start_transaction("r1", b"u", ConstantProcedure(False))
        before = store.op_counts["read"]
        with pytest.raises(AccessDenied) as info:
            stx.read(DOC)
        assert info.value.action == "read" and info.value.user == b"u"
        assert store.op_counts["read"] == before
        assert ac.counters["data_reads"] == 0

    def test_denial_leaves_transaction_usable(self):
        store, ac = world(grants=[(DOC, b"u", {R})])
        stx = ac.start_transaction("r1", b"u", TokenProcedure())
        with pytest.raises(AccessDenied):
            stx.update(DOC, set_add(b"x"))
        assert stx.read(DOC) == frozenset()
        stx.commit()

    def test_every_operation_is_decided(self):
        store, ac = world(grants=[(DOC, b"u", {R, W, OWN})])
        stx = ac.start_transaction("r1", b"u", TokenProcedure())
        stx.read(DOC)
        stx.update(DOC, set_add(b"x"))
        stx.assign_policy(DOC, b"v", {R})
        stx.read_policy(DOC, b"v")
        c = ac.counters
        assert c["intercepted"] == c["decisions"] == 4
        assert c["data_reads"] + c["data_updates"] + c["policy_assigns"] + c["policy_reads"] == 4

    def test_decisions_see_current_user_and_user_data(self):
        store, ac = world()
        rec = Recorder()
        stx = start_secured_transaction(ac, "r1", b"alice", rec, user_data={"ip": "x"})
        secured_read(stx, DOC)
        assert rec.calls[0][1] == b"alice" and rec.calls[0][2] == {"ip": "x"}

    def test_type_mismatch_rejected_before_decision(self):
        from causalac.crdt import CrdtTypeError

        store, ac = world()
        stx = ac.start_transaction("r1", b"u", ConstantProcedure(True))
        with pytest.raises(CrdtTypeError):
            secured_update(stx, DOC, FlagSet(True))
        assert ac.counters["decisions"] == 0

    def test_deny_by_default(self):
        store, ac = world()
        stx = ac.start_transaction("r1", b"u", TokenProcedure())
        for action in (
            lambda: stx.read(DOC),
            lambda: stx.update(DOC, set_add(b"x")),
            lambda: stx.assign_policy(DOC, b"u", {OWN}),
        ):
            with pytest.raises(AccessDenied):
                action()


class TestPolicies:
    def test_never_assigned_reads_empty(self):
        store, ac = world()
        stx = ac.start_transaction("r1", b"u", TokenProcedure())
        assert read_policy(stx, DOC, b"u") == frozenset()

    def test_sequential_assigns_read_last(self):
        store, ac = world(grants=[(DOC, b"o", {OWN})])
        for perms in ({R}, {R, W}):
            stx = ac.start_transaction("r1", b"o", TokenProcedure())
            assign_policy(stx, DOC, b"u", perms)
            stx.commit()
        stx = ac.start_transaction("r1", b"o", TokenProcedure())
        assert stx.read_policy(DOC, b"u") == {R, W}

    def test_concurrent_assigns_intersect_and_feed_old_permissions(self):
        store, ac = world(("r1", "r2"), grants=[(DOC, b"o", {OWN})])
        for rid, perms in (("r1", {R, W}), ("r2", {W})):
            stx = ac.start_transaction(rid, b"o", TokenProcedure())
            stx.assign_policy(DOC, b"u", perms)
            stx.commit()
        store.flush()
        stx = ac.start_transaction("r1", b"o", TokenProcedure())
        assert stx.read_policy(DOC, b"u") == {W}
        rec = Recorder()
        stx = ac.start_transaction("r1", b"o", rec)
        stx.assign_policy(DOC, b"u", {R})
        assert rec.calls == [("assign", frozenset({R}), frozenset({W}))]

    def test_new_transaction_sees_committed_policy(self):
        store, ac = world(grants=[(DOC, b"o", {OWN})])
        stx = ac.start_transaction("r1", b"o", TokenProcedure())
        stx.assign_policy(DOC, b"u", {R})
        stx.commit()
        layers = resolve_layers(
            ac.start_transaction("r1", b"u", TokenProcedure()), LayerDefinition([("object", DOC)])
        )
        assert layers.permissions("object") == {R}

    def test_grant_and_data_travel_together(self):
        store, ac = world(("r1", "r2"), grants=[(DOC, b"o", {OWN})])
        stx = ac.start_transaction("r1", b"o", TokenProcedure())
        stx.assign_policy(DOC, b"u", {R})
        stx.update(DOC, set_add(b"x"))
        commit = stx.commit()
        assert len(commit.effects) == 2
        (msg,) = store.in_flight
        assert {obj for obj, _ in msg.commit.effects} == {DOC, policy_storage_key(DOC, b"u")}


class TestLayers:
    LECTURE = BoundObject(b"app", b"lecture", CrdtType.MAP)
    EXERCISE = BoundObject(b"app", b"exercise", CrdtType.MAP)
    PARTICIPANT = BoundObject(b"app", b"participant", CrdtType.MAP)

    def definition(self):
        return LayerDefinition(
            [("lecture", self.LECTURE), ("exercise", self.EXERCISE), ("participant", self.PARTICIPANT)]
        )

    def test_empty_definition(self):
        store, ac = world()
        layers = ac.start_transaction("r1", b"u", TokenProcedure()).resolve_layers(LayerDefinition())
        assert layers.names == [] and layers.union() == frozenset()

    def test_union_over_layers(self):
        store, ac = world(grants=[(self.LECTURE, b"u", {b"assistant"})])
        layers = ac.start_transaction("r1", b"u", TokenProcedure()).resolve_layers(self.definition())
        assert layers.permissions("participant") == frozenset()
        assert b"assistant" in layers.union()
        assert layers.has(b"assistant") and not layers.has(b"assistant", "participant")

    def test_layer_data_is_readable(self):
        store, ac = world()
        tx = store.begin_transaction("r1")
        flag = b"registration_open"
        tx.update(self.EXERCISE, map_update(flag, FlagSet(True)))
        tx.commit()
        before = ac.counters["decision_reads"]
        layers = ac.start_transaction("r1", b"u", TokenProcedure()).resolve_layers(self.definition())
        (value,) = layers.data("exercise").values()
        assert value is True
        assert ac.counters["decision_reads"] == before + 3 + 1

    def test_duplicate_layer_names(self):
        with pytest.raises(ValueError):
            LayerDefinition([("a", DOC), ("a", DOC)])

    def test_decision_and_operation_share_snapshot(self):
        """A remote revocation landing mid-transaction changes nothing for it."""
        store, ac = world(("r1", "r2"), grants=[(DOC, b"o", {OWN}), (DOC, b"u", {R})])
        stx = ac.start_transaction("r1", b"u", TokenProcedure())
        revoke = ac.start_transaction("r2", b"o", TokenProcedure())
        revoke.assign_policy(DOC, b"u", set())
        revoke.commit()
        store.flush()
        assert stx.read(DOC) == frozenset()
        with pytest.raises(AccessDenied):
            ac.start_transaction("r1", b"u", TokenProcedure()).read(DOC)


class TestIsolation:
    def test_reserved_character_rejected(self):
        store, ac = world()
        stx = ac.start_transaction("r1", b"u", ConstantProcedure(True))
        with pytest.raises(InvalidBucket):
            stx.read(BoundObject(b"acl$app", b"x", CrdtType.ORSET))

    def test_policy_and_data_buckets_disjoint(self):
        store, ac = world(("r1", "r2"), grants=[(DOC, b"o", {OWN})])
        stx = ac.start_transaction("r1", b"o", TokenProcedure())
        stx.assign_policy(DOC, b"u", {R})
        stx.update(DOC, set_add(b"x"))
        stx.commit()
        store.flush()
        for replica in store.replicas.values():
            policy = {o.bucket for o in replica.object_states if o.crdt_type is CrdtType.POLICY}
            data = {o.bucket for o in replica.object_states if o.crdt_type is not CrdtType.POLICY}
            assert policy and data and not policy & data
            assert all(is_policy_bucket(b) and b.startswith(SECURITY_PREFIX) for b in policy)


class TestBootstrap:
    def test_closed_after_first_secured_transaction(self):
        store, ac = world()
        ac.bootstrap("r1", [(DOC, b"o", {OWN})])
        ac.start_transaction("r1", b"o", TokenProcedure())
        with pytest.raises(BootstrapClosed):
            ac.bootstrap("r1", [(DOC, b"mallory", {OWN})])

    def test_empty_user_rejected(self):
        store, ac = world()
        with pytest.raises(ValueError):
            ac.start_transaction("r1", b"", TokenProcedure())
