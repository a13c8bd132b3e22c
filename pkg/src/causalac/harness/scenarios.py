"""Small replicated scenarios showing why causality and intersection matter."""

from __future__ import annotations

import itertools
import random
from dataclasses import asdict, dataclass, field

from ..acl import AccessControl, AccessDenied, TokenProcedure
from ..crdt import CrdtType, set_add
from ..store import CAUSAL, EVENTUAL, BoundObject, Store

ALBUM = BoundObject(b"photos", b"alice/album", CrdtType.ORSET)
PARTY_PHOTO = b"party.jpg"
# ground truth: content that must stay hidden from Bob once he is removed
CONFIDENTIAL = frozenset({PARTY_PHOTO})


def _schedules(n_messages: int, schedule_count: int | None, seed: int) -> list[tuple[int, ...]]:
    perms = list(itertools.permutations(range(n_messages)))
    if schedule_count is None or schedule_count >= len(perms):
        return perms
    return sorted(random.Random(seed).sample(perms, schedule_count))


@dataclass
class LeakReport:
    scenario: str
    mode: str
    schedules: int
    leaky_schedules: int
    leaks: int
    reads: int
    counterexamples: list[list[str]] = field(default_factory=list)

    def as_dict(self) -> dict:
        return asdict(self)


def run_alice_bob(mode: str = CAUSAL, schedule_count: int | None = None, seed: int = 0) -> LeakReport:
    """Alice grants Bob access, removes him, then uploads party photos.

    All three commits happen at Alice's replica.  Bob reads from the other
    replica after every delivery step of every schedule; a read that returns
    confidential content is a leak.
    """
    store = Store(["alice", "bob"], mode=mode)
    ac = AccessControl(store)
    ac.bootstrap("alice", [(ALBUM, b"alice", {TokenProcedure.OWN})])
    store.flush()
    proc = TokenProcedure()

    labels = ["grant", "revoke", "upload"]
    tx = ac.start_transaction("alice", b"alice", proc)
    tx.assign_policy(ALBUM, b"bob", {TokenProcedure.READ})
    tx.commit()
    tx = ac.start_transaction("alice", b"alice", proc)
    tx.assign_policy(ALBUM, b"bob", set())
    tx.commit()
    tx = ac.start_transaction("alice", b"alice", proc)
    tx.update(ALBUM, set_add(PARTY_PHOTO))
    tx.commit()
    messages = list(store.in_flight)

    report = LeakReport("alicebob", mode, 0, 0, 0, 0)
    for schedule in _schedules(len(messages), schedule_count, seed):
        world = store.clone()
        world.in_flight = []
        bob_ac = AccessControl(world)
        trace, leaked = [], 0
        for step in (None, *schedule):
            if step is not None:
                world.deliver("bob", messages[step].commit)
                trace.append(f"deliver {labels[step]} to bob")
            stx = bob_ac.start_transaction("bob", b"bob", proc)
            report.reads += 1
            try:
                seen = stx.read(ALBUM)
            except AccessDenied:
                trace.append("bob read denied")
                continue
            if seen & CONFIDENTIAL:
                leaked += 1
                trace.append(f"LEAK bob read {sorted(x.decode() for x in seen)}")
            else:
                trace.append(f"bob read {sorted(x.decode() for x in seen)}")
        report.schedules += 1
        if leaked:
            report.leaky_schedules += 1
            report.leaks += leaked
            report.counterexamples.append(trace)
    return report


@dataclass
class CharlyReport:
    scenario: str
    mode: str
    concurrent: dict[str, list[str]]
    sequential: dict[str, list[str]]
    visible_states: int
    both_granted_states: int
    agree: bool

    def as_dict(self) -> dict:
        return asdict(self)


CONSULTING = BoundObject(b"corp", b"consulting", CrdtType.MVREG)
CONSULTANT_A = b"consultant:A"
CONSULTANT_B = b"consultant:B"


def _charly_world(mode: str):
    store = Store(["r1", "r2"], mode=mode)
    ac = AccessControl(store)
    ac.bootstrap(
        "r1",
        [(CONSULTING, b"hr1", {TokenProcedure.OWN}), (CONSULTING, b"hr2", {TokenProcedure.OWN})],
    )
    store.flush()
    return store, ac


def _grant(ac: AccessControl, replica: str, admin: bytes, token: bytes) -> None:
    tx = ac.start_transaction(replica, admin, TokenProcedure())
    tx.assign_policy(CONSULTING, b"charly", {token})
    tx.commit()


def _charly_view(store: Store) -> dict[str, frozenset[bytes]]:
    ac = AccessControl(store)
    out = {}
    for rid in store.replicas:
        stx = ac.start_transaction(rid, b"charly", TokenProcedure())
        out[rid] = stx.read_policy(CONSULTING, b"charly")
    return out


def run_charly(seed: int = 0, mode: str = CAUSAL) -> CharlyReport:
    """Two administrators appoint Charly as consultant for different companies.

    Concurrent appointments must never leave Charly consultant for both; the
    ``seed`` picks which replica issues first.
    """
    order = [("r1", b"hr1", CONSULTANT_A), ("r2", b"hr2", CONSULTANT_B)]
    random.Random(seed).shuffle(order)

    store, ac = _charly_world(mode)
    for replica, admin, token in order:
        _grant(ac, replica, admin, token)
    messages = list(store.in_flight)
    visible = both = 0
    finals = []
    for schedule in itertools.permutations(range(len(messages))):
        world = store.clone()
        world.in_flight = []
        for step in (None, *schedule):
            if step is not None:
                msg = messages[step]
                world.deliver(msg.dest, msg.commit)
            for perms in _charly_view(world).values():
                visible += 1
                if {CONSULTANT_A, CONSULTANT_B} <= perms:
                    both += 1
        finals.append(_charly_view(world))

    seq_store, seq_ac = _charly_world(mode)
    for replica, admin, token in order:
        _grant(seq_ac, replica, admin, token)
        seq_store.flush()
    sequential = _charly_view(seq_store)

    concurrent = finals[0]
    agree = all(f == concurrent for f in finals) and len(set(concurrent.values())) == 1
    agree = agree and len(set(sequential.values())) == 1

    def show(view):
        return {rid: sorted(p.decode() for p in perms) for rid, perms in view.items()}

    return CharlyReport("charly", mode, show(concurrent), show(sequential), visible, both, agree)


__all__ = ["run_alice_bob", "run_charly", "LeakReport", "CharlyReport", "CAUSAL", "EVENTUAL"]
