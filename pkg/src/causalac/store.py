"""Simulated multi-replica store with causally consistent, highly available transactions.

All replicas live in one :class:`Store`.  A transaction reads from the
snapshot its replica had applied when it began, buffers updates locally, and
commits without talking to any other replica.  Commits travel as explicit
messages in :attr:`Store.in_flight`; whoever drives the simulation decides
when and in which order they are delivered.

In ``causal`` mode a delivered commit waits in the replica's pending buffer
until everything it depends on has been applied.  ``eventual`` mode skips that
check and exists to reproduce ordering anomalies.
"""

from __future__ import annotations

import logging
from collections import Counter
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

from .crdt import (
    CrdtState,
    CrdtType,
    Dot,
    Effect,
    UpdateOp,
    apply_effect,
    empty_state,
    generate_effect,
    read_value,
)

log = logging.getLogger(__name__)

CAUSAL = "causal"
EVENTUAL = "eventual"


class StoreError(Exception):
    pass


class UnknownReplica(StoreError, KeyError):
    pass


class TransactionClosed(StoreError):
    pass


@dataclass(frozen=True)
class VectorClock:
    """Immutable vector clock; missing replicas count as zero."""

    entries: tuple[tuple[str, int], ...] = ()

    @classmethod
    def of(cls, mapping: Mapping[str, int] | None = None, **kw: int) -> VectorClock:
        merged = dict(mapping or {}, **kw)
        return cls(tuple(sorted((r, c) for r, c in merged.items() if c)))

    def __getitem__(self, replica: str) -> int:
        for r, c in self.entries:
            if r == replica:
                return c
        return 0

    def as_dict(self) -> dict[str, int]:
        return dict(self.entries)

    def __le__(self, other: VectorClock) -> bool:
        return all(c <= other[r] for r, c in self.entries)

    def __lt__(self, other: VectorClock) -> bool:
        return self <= other and self != other

    def concurrent(self, other: VectorClock) -> bool:
        return not (self <= other or other <= self)

    def merge(self, other: VectorClock) -> VectorClock:
        out = self.as_dict()
        for r, c in other.entries:
            out[r] = max(out.get(r, 0), c)
        return VectorClock.of(out)

    def with_entry(self, replica: str, value: int) -> VectorClock:
        return VectorClock.of(self.as_dict(), **{replica: value})

    def __str__(self) -> str:
        return "{" + ", ".join(f"{r}:{c}" for r, c in self.entries) + "}"


@dataclass(frozen=True, order=True)
class BoundObject:
    bucket: bytes
    key: bytes
    crdt_type: CrdtType

    def __str__(self) -> str:
        return f"{self.bucket.decode(errors='replace')}/{self.key.decode(errors='replace')}:{self.crdt_type.value}"


@dataclass(frozen=True)
class TransactionCommit:
    origin: str
    seq: int
    effects: tuple[tuple[BoundObject, Effect], ...]
    snapshot_clock: VectorClock
    commit_clock: VectorClock

    @property
    def id(self) -> tuple[str, int]:
        return (self.origin, self.seq)

    def objects(self) -> set[BoundObject]:
        return {obj for obj, _ in self.effects}


@dataclass
class Replica:
    id: str
    applied_clock: VectorClock = field(default_factory=VectorClock)
    # replaced wholesale on every commit so open snapshots stay untouched
    object_states: dict[BoundObject, CrdtState] = field(default_factory=dict)
    pending: list[TransactionCommit] = field(default_factory=list)
    log: list[TransactionCommit] = field(default_factory=list)
    applied_ids: set[tuple[str, int]] = field(default_factory=set)

    def copy(self) -> Replica:
        return Replica(
            self.id,
            self.applied_clock,
            self.object_states,
            list(self.pending),
            list(self.log),
            set(self.applied_ids),
        )

    def state(self, obj: BoundObject) -> CrdtState:
        return self.object_states.get(obj, empty_state(obj.crdt_type))


@dataclass(frozen=True)
class Message:
    dest: str
    commit: TransactionCommit


class Transaction:
    """Handle on one open transaction; obtained from :meth:`Store.begin_transaction`."""

    def __init__(self, store: Store, replica: Replica):
        self.store = store
        self.replica_id = replica.id
        self.snapshot_clock = replica.applied_clock
        self._snapshot = replica.object_states
        self._overlay: dict[BoundObject, CrdtState] = {}
        self._ops: list[tuple[BoundObject, UpdateOp]] = []
        self.status = "open"

    def _check_open(self) -> None:
        if self.status != "open":
            raise TransactionClosed(f"transaction already {self.status}")

    def _view(self, obj: BoundObject) -> CrdtState:
        if obj in self._overlay:
            return self._overlay[obj]
        return self._snapshot.get(obj, empty_state(obj.crdt_type))

    def read_state(self, obj: BoundObject) -> CrdtState:
        self._check_open()
        self.store.op_counts["read"] += 1
        return self._view(obj)

    def read(self, obj: BoundObject):
        return read_value(self.read_state(obj))

    def update(self, obj: BoundObject, op: UpdateOp) -> None:
        self._check_open()
        # provisional dot; final dots are assigned at commit
        eff = generate_effect(self._view(obj), op, Dot(self.replica_id, 0, len(self._ops)))
        self._overlay[obj] = apply_effect(self._view(obj), eff)
        self._ops.append((obj, op))
        self.store.op_counts["update"] += 1

    @property
    def buffered(self) -> tuple[tuple[BoundObject, UpdateOp], ...]:
        return tuple(self._ops)

    def commit(self) -> TransactionCommit:
        self._check_open()
        self.status = "committed"
        return self.store._commit(self)

    def abort(self) -> None:
        self._check_open()
        self.status = "aborted"


class Store:
    """A cluster of fully replicated replicas driven by explicit message delivery."""

    def __init__(self, replica_ids: Iterable[str] = ("r1",), mode: str = CAUSAL):
        if mode not in (CAUSAL, EVENTUAL):
            raise ValueError(f"unknown consistency mode {mode!r}")
        self.mode = mode
        self.replicas = {rid: Replica(rid) for rid in replica_ids}
        if not self.replicas:
            raise ValueError("a store needs at least one replica")
        self.in_flight: list[Message] = []
        self.op_counts: Counter[str] = Counter()

    def replica(self, replica_id: str) -> Replica:
        try:
            return self.replicas[replica_id]
        except KeyError:
            raise UnknownReplica(replica_id) from None

    def clone(self) -> Store:
        other = Store.__new__(Store)
        other.mode = self.mode
        other.replicas = {rid: r.copy() for rid, r in self.replicas.items()}
        other.in_flight = list(self.in_flight)
        other.op_counts = Counter(self.op_counts)
        return other

    def begin_transaction(self, replica_id: str) -> Transaction:
        return Transaction(self, self.replica(replica_id))

    def _commit(self, tx: Transaction) -> TransactionCommit:
        replica = self.replica(tx.replica_id)
        seq = replica.applied_clock[replica.id] + 1
        work: dict[BoundObject, CrdtState] = {}
        effects = []
        for index, (obj, op) in enumerate(tx.buffered):
            state = work[obj] if obj in work else tx._snapshot.get(obj, empty_state(obj.crdt_type))
            eff = generate_effect(state, op, Dot(replica.id, seq, index))
            work[obj] = apply_effect(state, eff)
            effects.append((obj, eff))
        commit = TransactionCommit(
            origin=replica.id,
            seq=seq,
            effects=tuple(effects),
            snapshot_clock=tx.snapshot_clock,
            commit_clock=tx.snapshot_clock.with_entry(replica.id, seq),
        )
        self._apply(replica, commit)
        replica.log.append(commit)
        for rid in self.replicas:
            if rid != replica.id:
                self.in_flight.append(Message(rid, commit))
        return commit

    def _apply(self, replica: Replica, commit: TransactionCommit) -> None:
        states = dict(replica.object_states)
        for obj, eff in commit.effects:
            states[obj] = apply_effect(states.get(obj, empty_state(obj.crdt_type)), eff)
        replica.object_states = states
        replica.applied_clock = replica.applied_clock.merge(commit.commit_clock)
        replica.applied_ids.add(commit.id)

    @staticmethod
    def deliverable(replica: Replica, commit: TransactionCommit) -> bool:
        clock = replica.applied_clock
        if clock[commit.origin] != commit.seq - 1:
            return False
        return all(c <= clock[r] for r, c in commit.snapshot_clock.entries if r != commit.origin)

    @staticmethod
    def already_seen(replica: Replica, commit: TransactionCommit) -> bool:
        return commit.id in replica.applied_ids or any(p.id == commit.id for p in replica.pending)

    def deliver(self, replica_id: str, commit: TransactionCommit) -> str:
        """Hand ``commit`` to a replica.

        Returns ``"applied"``, ``"buffered"``, ``"duplicate"`` or ``"self"``.
        """
        if self.mode == EVENTUAL:
            return self.eventual_mode_deliver(replica_id, commit)
        replica = self.replica(replica_id)
        if commit.origin == replica.id:
            return "self"
        if self.already_seen(replica, commit):
            return "duplicate"
        if not self.deliverable(replica, commit):
            replica.pending.append(commit)
            log.debug("replica %s buffers %s", replica.id, commit.id)
            return "buffered"
        self._apply(replica, commit)
        self._drain_pending(replica)
        return "applied"

    def _drain_pending(self, replica: Replica) -> None:
        progress = True
        while progress:
            progress = False
            for commit in list(replica.pending):
                if self.deliverable(replica, commit):
                    replica.pending.remove(commit)
                    self._apply(replica, commit)
                    progress = True

    def eventual_mode_deliver(self, replica_id: str, commit: TransactionCommit) -> str:
        """Apply immediately without any dependency check."""
        if self.mode != EVENTUAL:
            raise StoreError("eventual delivery requires a store in eventual mode")
        replica = self.replica(replica_id)
        if commit.origin == replica.id:
            return "self"
        if commit.id in replica.applied_ids:
            return "duplicate"
        self._apply(replica, commit)
        return "applied"

    def deliver_message(self, index: int) -> str:
        msg = self.in_flight.pop(index)
        return self.deliver(msg.dest, msg.commit)

    def flush(self) -> None:
        """Deliver every in-flight message in send order."""
        while self.in_flight:
            self.deliver_message(0)

    def read(self, replica_id: str, obj: BoundObject):
        """Read the latest applied state outside any transaction (diagnostics)."""
        return read_value(self.replica(replica_id).state(obj))
