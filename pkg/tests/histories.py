"""Random causally closed effect histories for convergence tests."""

from __future__ import annotations

import random

from causalac.crdt import (
    Assign,
    CrdtType,
    Dot,
    FlagSet,
    Increment,
    MapKey,
    MapUpdate,
    PolicyAssign,
    SetUpdate,
    apply_effect,
    empty_state,
    generate_effect,
)

VALUES = [b"a", b"b", b"c"]
TOKENS = [b"r", b"w", b"d"]
ELEMS = [b"x", b"y", b"z"]
MAP_KEYS = [
    MapKey(b"reg", CrdtType.MVREG),
    MapKey(b"set", CrdtType.ORSET),
    MapKey(b"flag", CrdtType.FLAG),
    MapKey(b"sub", CrdtType.MAP),
]
SUB_KEYS = [MapKey(b"inner", CrdtType.ORSET), MapKey(b"n", CrdtType.COUNTER)]


def _subset(rng: random.Random, pool, min_size=0):
    return [x for x in pool if rng.random() < 0.5] or pool[:min_size]


def random_op(rng: random.Random, crdt_type: CrdtType, depth: int = 0):
    if crdt_type is CrdtType.MVREG:
        return Assign(rng.choice(VALUES))
    if crdt_type is CrdtType.POLICY:
        return PolicyAssign(_subset(rng, TOKENS))
    if crdt_type is CrdtType.ORSET:
        adds = _subset(rng, ELEMS)
        removes = [x for x in ELEMS if x not in adds and rng.random() < 0.5]
        return SetUpdate(adds, removes)
    if crdt_type is CrdtType.COUNTER:
        return Increment(rng.choice([-2, -1, 1, 3]))
    if crdt_type is CrdtType.FLAG:
        return FlagSet(rng.random() < 0.5)
    keys = MAP_KEYS if depth == 0 else SUB_KEYS
    chosen = rng.sample(keys, rng.randint(0, 2))
    removes = [k for k in keys if k not in chosen and rng.random() < 0.3]
    if not chosen and not removes:
        chosen = [rng.choice(keys)]
    return MapUpdate([(k, random_op(rng, k.type, depth + 1)) for k in chosen], removes)


def random_history(rng: random.Random, crdt_type: CrdtType, size: int, replicas: int = 3):
    """``size`` effects issued at ``replicas`` replicas with random gossip.

    Returns ``(effects, preds)`` where ``preds[dot]`` is the set of dots the
    issuing replica had applied, i.e. the effect's causal past.
    """
    known = [[] for _ in range(replicas)]
    states = [empty_state(crdt_type) for _ in range(replicas)]
    counters = [0] * replicas
    effects, preds = [], {}
    while len(effects) < size:
        r = rng.randrange(replicas)
        if rng.random() < 0.35 and replicas > 1:
            # r catches up with everything another replica knows, in its order
            src = rng.choice([x for x in range(replicas) if x != r])
            for e in known[src]:
                if e not in known[r]:
                    known[r].append(e)
                    states[r] = apply_effect(states[r], e)
            continue
        counters[r] += 1
        dot = Dot(f"r{r}", counters[r])
        e = generate_effect(states[r], random_op(rng, crdt_type), dot)
        preds[dot] = {x.dot for x in known[r]}
        known[r].append(e)
        states[r] = apply_effect(states[r], e)
        effects.append(e)
    return effects, preds


def linear_extensions(effects, preds):
    """Every application order consistent with ``preds``."""
    by_dot = {e.dot: e for e in effects}

    def walk(done: list, remaining: set):
        if not remaining:
            yield [by_dot[d] for d in done]
            return
        placed = set(done)
        for d in sorted(remaining):
            if preds[d] <= placed:
                yield from walk(done + [d], remaining - {d})

    yield from walk([], set(by_dot))
