"""Exhaustive check of the protection relation over small replicated histories.

A history shape fixes, for each of ``n`` commits, the replica issuing it and
whether it is a policy commit (the owner re-assigns the reader's permissions
on a shared object) or a data commit (the owner updates that object).  For
each shape every interleaving of issues and message deliveries is explored;
explicit states are deduplicated.

Invariant: if policy commit ``p`` was applied at the origin of data commit
``d`` when ``d`` was issued, then every replica that has applied ``d`` has
applied ``p`` and its policy state contains ``p``'s effect.
"""

from __future__ import annotations

import itertools
import random
import time
from dataclasses import asdict, dataclass, field

from ..acl import AccessControl, TokenProcedure, policy_storage_key
from ..crdt import CrdtType, set_add
from ..store import CAUSAL, EVENTUAL, BoundObject, Store

MAX_HISTORY = 5
MAX_REPLICAS = 3

SHARED = BoundObject(b"mc", b"shared", CrdtType.ORSET)
OWNER = b"owner"
READER = b"reader"
POLICY, DATA = "policy", "data"


@dataclass
class Verdict:
    mode: str
    history_size: int
    replica_count: int
    shapes: int
    vacuous_shapes: int
    states: int
    violations: int
    violating_shapes: int
    elapsed_s: float
    counterexample: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def as_dict(self) -> dict:
        # wall time is left out so reports are reproducible byte for byte
        out = {"kind": "modelcheck", **asdict(self), "ok": self.ok}
        del out["elapsed_s"]
        return out


def history_shapes(history_size: int, replica_count: int):
    """Yield ``((origin, kind), ...)`` with origins numbered by first use."""
    for kinds in itertools.product((POLICY, DATA), repeat=history_size):
        yield from _origin_sequences(kinds, replica_count)


def _origin_sequences(kinds, replica_count: int, prefix=(), used=0):
    if len(prefix) == len(kinds):
        yield tuple(zip(prefix, kinds))
        return
    for origin in range(min(used + 1, replica_count)):
        yield from _origin_sequences(kinds, replica_count, prefix + (origin,), max(used, origin + 1))


def is_vacuous(shape) -> bool:
    """No data commit is issued after some policy commit, so nothing is protected."""
    seen_policy = False
    for _, kind in shape:
        if kind == POLICY:
            seen_policy = True
        elif seen_policy:
            return False
    return True


def _replica_name(i: int) -> str:
    return f"r{i}"


def _initial_store(replica_count: int, mode: str) -> Store:
    store = Store([_replica_name(i) for i in range(replica_count)], mode=mode)
    AccessControl(store).bootstrap(
        _replica_name(0), [(SHARED, OWNER, {TokenProcedure.OWN, TokenProcedure.WRITE})]
    )
    store.flush()
    return store


def _issue(store: Store, index: int, origin: int, kind: str):
    tx = AccessControl(store).start_transaction(_replica_name(origin), OWNER, TokenProcedure())
    if kind == POLICY:
        grant = {TokenProcedure.READ} if index % 2 == 0 else set()
        tx.assign_policy(SHARED, READER, grant)
    else:
        tx.update(SHARED, set_add(f"item{index}".encode()))
    return tx.commit()


_POLICY_OBJ = policy_storage_key(SHARED, READER)


def _violation(store: Store, protects: dict, policy_dots: dict, only=None) -> str | None:
    for rid, replica in store.replicas.items():
        if only is not None and rid != only:
            continue
        applied = replica.applied_ids
        policy_applied = replica.state(_POLICY_OBJ).applied
        for d, needed in protects.items():
            if d not in applied:
                continue
            for p in needed:
                if p not in applied or not policy_dots[p] <= policy_applied:
                    return f"{rid} applied data commit {d} without policy commit {p}"
    return None


def _state_key(store: Store, issued: int, commits: dict, focus) -> tuple:
    replicas = tuple(
        (frozenset(r.applied_ids), frozenset(c.id for c in r.pending))
        for r in store.replicas.values()
    )
    flight = frozenset((m.dest, m.commit.id) for m in store.in_flight)
    snapshots = tuple(c.snapshot_clock.entries for c in commits.values())
    return focus, issued, replicas, flight, snapshots


def _delivery_key(key: tuple, replica_index: int, dest: str, commit_id) -> tuple:
    """Key after a delivery that applies ``commit_id`` directly at ``dest``."""
    focus, issued, replicas, flight, snapshots = key
    applied, pending = replicas[replica_index]
    replicas = (
        replicas[:replica_index]
        + ((applied | {commit_id}, pending),)
        + replicas[replica_index + 1 :]
    )
    return focus, issued, replicas, flight - {(dest, commit_id)}, snapshots


def check_history(shape, replica_count: int, mode: str = CAUSAL, stop_at_first: bool = True):
    """Explore every execution of one history shape.

    Deliveries to different replicas commute and a replica's state only
    influences others when it issues, so while commits remain to be issued
    only deliveries to the next issuer are explored; afterwards each replica
    receives its outstanding messages in every order, independently of the
    others.  Every per-replica state of the full interleaving space is
    reached this way.  In causal mode a message that would only be buffered
    is not delivered: it gets applied exactly when delivering it later would
    apply it, so skipping it loses no sequence of applied sets.

    Returns ``(states, violations, counterexample_trace)``.
    """
    base = _initial_store(replica_count, mode)
    names = list(base.replicas)
    start_key = _state_key(base, 0, {}, None)
    # the last field names the replica a transition changed; only it can newly
    # break the invariant
    stack = [(start_key, base, 0, {}, {}, {}, (), None, None)]
    seen = {start_key}
    violations, counterexample = 0, []

    def push(key, *entry):
        if key not in seen:
            seen.add(key)
            stack.append((key, *entry))

    while stack:
        key, store, issued, commits, protects, policy_dots, trace, focus, changed = stack.pop()
        problem = changed and _violation(store, protects, policy_dots, changed)
        if problem:
            violations += 1
            if not counterexample:
                counterexample = list(trace) + [f"VIOLATION {problem}"]
            if stop_at_first:
                break
            continue
        done = issued == len(shape)
        if done and focus is None:
            for rid in reversed(names):
                push((rid,) + key[1:], store, issued, commits, protects, policy_dots, trace, rid, None)
            continue
        target = focus if done else _replica_name(shape[issued][0])
        target_index = names.index(target)
        for i in reversed(range(len(store.in_flight))):
            msg = store.in_flight[i]
            if msg.dest != target:
                continue
            if mode == CAUSAL and not Store.deliverable(store.replica(target), msg.commit):
                continue
            nxt_key = _delivery_key(key, target_index, target, msg.commit.id)
            if nxt_key in seen:
                continue
            nxt = store.clone()
            status = nxt.deliver_message(i)
            label = f"deliver {msg.commit.id} to {msg.dest} ({status})"
            push(nxt_key, nxt, issued, commits, protects, policy_dots, trace + (label,), focus, target)
        if not done:
            origin, kind = shape[issued]
            nxt = store.clone()
            visible = frozenset(
                cid for cid in nxt.replica(_replica_name(origin)).applied_ids if cid in policy_dots
            )
            commit = _issue(nxt, issued, origin, kind)
            new_commits = {**commits, commit.id: commit}
            new_protects, new_dots = protects, policy_dots
            if kind == POLICY:
                new_dots = {**policy_dots, commit.id: frozenset(e.dot for _, e in commit.effects)}
            elif visible:
                new_protects = {**protects, commit.id: visible}
            label = f"issue {kind} commit {commit.id} at {_replica_name(origin)}"
            push(
                _state_key(nxt, issued + 1, new_commits, None),
                nxt, issued + 1, new_commits, new_protects, new_dots, trace + (label,), None,
                _replica_name(origin),
            )
    return len(seen), violations, counterexample


def model_check_protection(
    history_size: int = MAX_HISTORY,
    replica_count: int = MAX_REPLICAS,
    mode: str = CAUSAL,
    max_shapes: int | None = None,
    seed: int = 0,
) -> Verdict:
    """Check the protection relation for every history shape of the given size.

    ``max_shapes`` samples that many non-vacuous shapes with ``seed`` instead
    of checking all of them.
    """
    if not 1 <= history_size <= MAX_HISTORY:
        raise ValueError(f"history_size must be between 1 and {MAX_HISTORY}")
    if not 1 <= replica_count <= MAX_REPLICAS:
        raise ValueError(f"replica_count must be between 1 and {MAX_REPLICAS}")
    started = time.perf_counter()
    shapes = list(history_shapes(history_size, replica_count))
    live = [s for s in shapes if not is_vacuous(s)]
    if max_shapes is not None and max_shapes < len(live):
        live = random.Random(seed).sample(live, max_shapes)
    verdict = Verdict(mode, history_size, replica_count, len(live), len(shapes) - len(live), 0, 0, 0, 0.0)
    for shape in live:
        states, violations, trace = check_history(shape, replica_count, mode)
        verdict.states += states
        if violations:
            verdict.violations += violations
            verdict.violating_shapes += 1
            if not verdict.counterexample:
                verdict.counterexample = trace
    verdict.elapsed_s = round(time.perf_counter() - started, 3)
    return verdict


__all__ = [
    "Verdict",
    "check_history",
    "history_shapes",
    "is_vacuous",
    "model_check_protection",
    "CAUSAL",
    "EVENTUAL",
]
