"""Operation-based CRDTs with dotted effects.

Every state is an immutable value.  An update is turned into an
:class:`Effect` against the state visible to the issuer
(:func:`generate_effect`), shipped, and later folded into any replica's
state with :func:`apply_effect`.  Effects carry the dots they supersede, so
concurrent effects commute once their causal predecessors have been applied.

Supported types:

* multi-value register (``MVREG``)
* policy register (``POLICY``) - a multi-value register of permission sets
  whose read is the intersection of all concurrently assigned sets
* add-wins observed-remove set (``ORSET``)
* map of nested CRDTs keyed by ``(key, type)`` with update-wins removal
* counter (``COUNTER``)
* enable-wins flag (``FLAG``)
"""

from __future__ import annotations

import enum
import graphlib
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field, replace
from functools import reduce
from typing import NamedTuple, Union


class CrdtType(str, enum.Enum):
    MVREG = "mvreg"
    POLICY = "policy"
    ORSET = "orset"
    MAP = "map"
    COUNTER = "counter"
    FLAG = "flag"


class CrdtTypeError(TypeError):
    """Raised when an update does not fit the CRDT it targets."""


@dataclass(frozen=True, order=True)
class Dot:
    """Unique tag of one update's contribution.

    ``index`` disambiguates several effects produced by one commit.
    """

    replica: str
    counter: int
    index: int = 0

    def __str__(self) -> str:
        return f"{self.replica}:{self.counter}.{self.index}"


class MapKey(NamedTuple):
    key: bytes
    type: CrdtType


# --------------------------------------------------------------------------
# update operations


@dataclass(frozen=True)
class Assign:
    value: bytes
    crdt_type = CrdtType.MVREG


@dataclass(frozen=True)
class PolicyAssign:
    permissions: frozenset[bytes]
    crdt_type = CrdtType.POLICY

    def __init__(self, permissions: Iterable[bytes]):
        object.__setattr__(self, "permissions", frozenset(permissions))


@dataclass(frozen=True)
class SetUpdate:
    adds: frozenset[bytes] = frozenset()
    removes: frozenset[bytes] = frozenset()
    crdt_type = CrdtType.ORSET

    def __init__(self, adds: Iterable[bytes] = (), removes: Iterable[bytes] = ()):
        object.__setattr__(self, "adds", frozenset(adds))
        object.__setattr__(self, "removes", frozenset(removes))


@dataclass(frozen=True)
class Increment:
    delta: int = 1
    crdt_type = CrdtType.COUNTER


@dataclass(frozen=True)
class FlagSet:
    value: bool
    crdt_type = CrdtType.FLAG


@dataclass(frozen=True)
class MapUpdate:
    """Batch of nested updates and key removals on one map.

    Removals are applied before updates, so a key both removed and updated
    by the same operation ends up bound.
    """

    updates: tuple[tuple[MapKey, "UpdateOp"], ...] = ()
    removes: tuple[MapKey, ...] = ()
    crdt_type = CrdtType.MAP

    def __init__(self, updates=(), removes=()):
        if isinstance(updates, Mapping):
            updates = updates.items()
        ups = tuple((MapKey(*k), op) for k, op in updates)
        for k, op in ups:
            if op.crdt_type is not k.type:
                raise CrdtTypeError(
                    f"nested op {type(op).__name__} does not fit map key "
                    f"{k.key!r} of type {k.type.value}"
                )
        object.__setattr__(self, "updates", ups)
        object.__setattr__(self, "removes", tuple(MapKey(*k) for k in removes))

    def updated_keys(self) -> set[bytes]:
        return {k.key for k, _ in self.updates}

    def removed_keys(self) -> set[bytes]:
        return {k.key for k in self.removes}


UpdateOp = Union[Assign, PolicyAssign, SetUpdate, Increment, FlagSet, MapUpdate]


def set_add(*elems: bytes) -> SetUpdate:
    return SetUpdate(adds=elems)


def set_remove(*elems: bytes) -> SetUpdate:
    return SetUpdate(removes=elems)


def map_update(key: bytes, op: UpdateOp) -> MapUpdate:
    return MapUpdate(updates=[(MapKey(key, op.crdt_type), op)])


def map_remove(key: bytes, crdt_type: CrdtType) -> MapUpdate:
    return MapUpdate(removes=[MapKey(key, crdt_type)])


# --------------------------------------------------------------------------
# effects and states


@dataclass(frozen=True)
class Effect:
    """A generated update ready to be applied anywhere.

    ``observed`` holds every dot this effect supersedes.  For map effects
    the supersession is recorded per binding in ``children`` and ``resets``
    because one dot may tag contributions under several keys.
    """

    op: UpdateOp
    dot: Dot
    observed: frozenset[Dot] = frozenset()
    children: tuple[tuple[MapKey, "Effect"], ...] = ()
    resets: tuple[tuple[MapKey, frozenset[Dot]], ...] = ()


@dataclass(frozen=True)
class MvRegState:
    entries: frozenset[tuple[bytes, Dot]] = frozenset()
    applied: frozenset[Dot] = frozenset()
    crdt_type = CrdtType.MVREG


@dataclass(frozen=True)
class PolicyState:
    entries: frozenset[tuple[frozenset[bytes], Dot]] = frozenset()
    applied: frozenset[Dot] = frozenset()
    crdt_type = CrdtType.POLICY


@dataclass(frozen=True)
class OrSetState:
    # (element, add-tag) pairs; an element is present while it has a tag
    entries: frozenset[tuple[bytes, Dot]] = frozenset()
    applied: frozenset[Dot] = frozenset()
    crdt_type = CrdtType.ORSET

    @property
    def elements(self) -> dict[bytes, frozenset[Dot]]:
        out: dict[bytes, set[Dot]] = {}
        for elem, tag in self.entries:
            out.setdefault(elem, set()).add(tag)
        return {e: frozenset(t) for e, t in out.items()}


@dataclass(frozen=True)
class CounterState:
    entries: frozenset[tuple[int, Dot]] = frozenset()
    applied: frozenset[Dot] = frozenset()
    crdt_type = CrdtType.COUNTER


@dataclass(frozen=True)
class FlagState:
    entries: frozenset[Dot] = frozenset()
    applied: frozenset[Dot] = frozenset()
    crdt_type = CrdtType.FLAG


@dataclass(frozen=True, eq=True)
class MapState:
    # bindings without live dots are dropped, keeping the state canonical
    bindings: dict[MapKey, "CrdtState"] = field(default_factory=dict)
    applied: frozenset[Dot] = frozenset()
    crdt_type = CrdtType.MAP


CrdtState = Union[MvRegState, PolicyState, OrSetState, CounterState, FlagState, MapState]

_EMPTY = {
    CrdtType.MVREG: MvRegState(),
    CrdtType.POLICY: PolicyState(),
    CrdtType.ORSET: OrSetState(),
    CrdtType.COUNTER: CounterState(),
    CrdtType.FLAG: FlagState(),
    CrdtType.MAP: MapState(),
}


def empty_state(crdt_type: CrdtType) -> CrdtState:
    return _EMPTY[CrdtType(crdt_type)]


def live_dots(state: CrdtState) -> frozenset[Dot]:
    if isinstance(state, FlagState):
        return state.entries
    if isinstance(state, MapState):
        return frozenset().union(*(live_dots(s) for s in state.bindings.values()))
    return frozenset(dot for _, dot in state.entries)


def _reset(state: CrdtState, observed: frozenset[Dot]) -> CrdtState:
    """Drop every contribution tagged with an observed dot."""
    if not observed:
        return state
    if isinstance(state, FlagState):
        return replace(state, entries=state.entries - observed)
    if isinstance(state, MapState):
        bindings = {}
        for k, nested in state.bindings.items():
            nested = _reset(nested, observed)
            if live_dots(nested):
                bindings[k] = nested
        return replace(state, bindings=bindings)
    return replace(state, entries=frozenset(e for e in state.entries if e[1] not in observed))


def _check_type(state: CrdtState, op: UpdateOp) -> None:
    if op.crdt_type is not state.crdt_type:
        raise CrdtTypeError(
            f"{type(op).__name__} cannot be applied to a {state.crdt_type.value} object"
        )


def generate_effect(state: CrdtState, op: UpdateOp, dot: Dot) -> Effect:
    """Prepare ``op`` against the visible ``state``; the state is not changed."""
    _check_type(state, op)
    if isinstance(op, (Assign, PolicyAssign, FlagSet)):
        return Effect(op, dot, live_dots(state))
    if isinstance(op, SetUpdate):
        observed = frozenset(t for e, t in state.entries if e in op.removes)
        return Effect(op, dot, observed)
    if isinstance(op, Increment):
        return Effect(op, dot)
    # MapUpdate
    resets = []
    for k in op.removes:
        nested = state.bindings.get(k)
        if nested is not None:
            resets.append((k, live_dots(nested)))
    children = []
    for k, nested_op in op.updates:
        nested = state.bindings.get(k, empty_state(k.type))
        if any(rk == k for rk, _ in resets):
            nested = empty_state(k.type)
        children.append((k, generate_effect(nested, nested_op, dot)))
    observed = frozenset().union(
        *(obs for _, obs in resets), *(c.observed for _, c in children)
    )
    return Effect(op, dot, observed, tuple(children), tuple(resets))


def _apply(state: CrdtState, e: Effect) -> CrdtState:
    op = e.op
    if isinstance(op, Assign):
        kept = {x for x in state.entries if x[1] not in e.observed}
        return replace(state, entries=frozenset(kept | {(op.value, e.dot)}))
    if isinstance(op, PolicyAssign):
        kept = {x for x in state.entries if x[1] not in e.observed}
        return replace(state, entries=frozenset(kept | {(op.permissions, e.dot)}))
    if isinstance(op, SetUpdate):
        kept = {
            (x, t) for x, t in state.entries if not (x in op.removes and t in e.observed)
        }
        return replace(state, entries=frozenset(kept | {(a, e.dot) for a in op.adds}))
    if isinstance(op, Increment):
        return replace(state, entries=state.entries | {(op.delta, e.dot)})
    if isinstance(op, FlagSet):
        kept = state.entries - e.observed
        return replace(state, entries=kept | {e.dot} if op.value else kept)
    bindings = dict(state.bindings)
    for k, obs in e.resets:
        if k in bindings:
            bindings[k] = _reset(bindings[k], obs)
    for k, child in e.children:
        bindings[k] = _apply(bindings.get(k, empty_state(k.type)), child)
    bindings = {k: s for k, s in bindings.items() if live_dots(s)}
    return replace(state, bindings=bindings)


def apply_effect(state: CrdtState, e: Effect) -> CrdtState:
    """Fold ``e`` into ``state``.  Re-applying an already applied dot is a no-op."""
    _check_type(state, e.op)
    if e.dot in state.applied:
        return state
    return replace(_apply(state, e), applied=state.applied | {e.dot})


def read_value(state: CrdtState):
    if isinstance(state, MvRegState):
        return frozenset(v for v, _ in state.entries)
    if isinstance(state, PolicyState):
        return policy_read(state)
    if isinstance(state, OrSetState):
        return frozenset(x for x, _ in state.entries)
    if isinstance(state, CounterState):
        return sum(d for d, _ in state.entries)
    if isinstance(state, FlagState):
        return bool(state.entries)
    return {k: read_value(s) for k, s in state.bindings.items()}


def policy_read(state: PolicyState) -> frozenset[bytes]:
    """Intersection of all concurrently assigned permission sets.

    An unassigned policy reads as the empty set (deny by default).
    """
    sets = [perms for perms, _ in state.entries]
    if not sets:
        return frozenset()
    return reduce(frozenset.intersection, sets)


def apply_all(state: CrdtState, effects: Iterable[Effect]) -> CrdtState:
    for e in effects:
        state = apply_effect(state, e)
    return state


# --------------------------------------------------------------------------
# independent oracle


def causal_order(effects: Iterable[Effect]) -> dict[Dot, set[Dot]]:
    """Predecessor relation implied by the effects' observed sets."""
    effects = list(effects)
    known = {e.dot for e in effects}
    return {e.dot: {d for d in e.observed if d in known} for e in effects}


def _contributions(e: Effect, path=()):
    """Yield (path, element, payload) contributions and (path, element, dots) kills.

    ``element`` is ``None`` for whole-register contributions and for kills
    that reach everything under ``path``.
    """
    op = e.op
    if isinstance(op, MapUpdate):
        for k, obs in e.resets:
            yield "kill", path + (k,), None, obs
        for k, child in e.children:
            yield from _contributions(child, path + (k,))
    elif isinstance(op, SetUpdate):
        for x in op.removes:
            yield "kill", path, x, e.observed
        for x in op.adds:
            yield "add", path, x, e.dot
    elif isinstance(op, Increment):
        yield "add", path, op.delta, e.dot
    elif isinstance(op, FlagSet):
        yield "kill", path, None, e.observed
        if op.value:
            yield "add", path, True, e.dot
    else:
        value = op.value if isinstance(op, Assign) else op.permissions
        yield "kill", path, None, e.observed
        yield "add", path, value, e.dot


def crdt_merge_equivalence_oracle(crdt_type: CrdtType, effects: Iterable[Effect]):
    """Read of a causally closed effect set computed without :func:`apply_effect`.

    A contribution survives unless some effect in the set observed its dot
    at the same place (or at an enclosing map binding).  Raises
    :class:`graphlib.CycleError` when the observed relation is cyclic.
    """
    effects = list(effects)
    tuple(graphlib.TopologicalSorter(causal_order(effects)).static_order())

    adds, kills = [], []
    for e in effects:
        for kind, path, elem, x in _contributions(e):
            (adds if kind == "add" else kills).append((path, elem, x))

    def killed(path, elem, dot):
        for kpath, kelem, obs in kills:
            if dot not in obs:
                continue
            if kpath == path and (kelem is None or kelem == elem):
                return True
            if len(kpath) < len(path) and path[: len(kpath)] == kpath and kelem is None:
                return True
        return False

    survivors: dict[tuple, list] = {}
    for path, elem, dot in adds:
        if not killed(path, elem, dot):
            survivors.setdefault(path, []).append(elem)
    return _assemble(CrdtType(crdt_type), (), survivors)


def _assemble(crdt_type: CrdtType, path, survivors):
    vals = survivors.get(path, [])
    if crdt_type in (CrdtType.MVREG, CrdtType.ORSET):
        return frozenset(vals)
    if crdt_type is CrdtType.POLICY:
        return reduce(frozenset.intersection, vals) if vals else frozenset()
    if crdt_type is CrdtType.COUNTER:
        return sum(vals)
    if crdt_type is CrdtType.FLAG:
        return bool(vals)
    out = {}
    for p in survivors:
        if len(p) == len(path) + 1 and p[: len(path)] == path:
            out[p[-1]] = None
    # nested maps only appear through deeper paths
    for p in survivors:
        if len(p) > len(path) + 1 and p[: len(path)] == path:
            out.setdefault(p[len(path)], None)
    return {k: _assemble(k.type, path + (k,), survivors) for k in out}
