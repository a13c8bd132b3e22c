"""A small language of structural constraints over update operations.

Decision procedures use it to say what an update may look like, e.g. that a
student may only add or remove their own id from a participant set::

    may_participate = is_map_update(and_(
        assigns_only(b"participants"),
        constrain_assigns(key_constrain(b"participants", is_set_update(or_(
            and_(set_adds_only(sid), no_set_removes()),
            and_(set_removes_only(sid), no_set_adds()),
        )))),
        no_map_removes(),
    ))
    may_participate.applies_to(op)

Predicates that inspect a map (or a set) evaluate to ``False`` on any other
kind of operation, so a constraint never admits an update it does not
understand.

Constraints render to a textual form that :func:`parse` reads back::

    constraint := NAME | NAME "(" [arg ("," arg)*] ")"
    arg        := constraint | STRING | "{" [STRING ("," STRING)*] "}"
                | "keyConstrain(" STRING "," constraint ")"

``STRING`` is a JSON string literal holding the latin-1 decoding of a key or
element.
"""

from __future__ import annotations

import json
import re
from collections.abc import Iterable
from dataclasses import dataclass

from .crdt import MapUpdate, SetUpdate, UpdateOp


class Constraint:
    """Base class; subclasses are immutable, comparable AST nodes."""

    def applies_to(self, op: UpdateOp) -> bool:
        raise NotImplementedError

    def render(self) -> str:
        raise NotImplementedError

    def __str__(self) -> str:
        return self.render()


def _s(b: bytes) -> str:
    return json.dumps(b.decode("latin-1"))


def _set(items: frozenset[bytes]) -> str:
    return "{" + ", ".join(_s(x) for x in sorted(items)) + "}"


@dataclass(frozen=True)
class TrueC(Constraint):
    def applies_to(self, op):
        return True

    def render(self):
        return "true"


@dataclass(frozen=True)
class FalseC(Constraint):
    def applies_to(self, op):
        return False

    def render(self):
        return "false"


@dataclass(frozen=True)
class And(Constraint):
    parts: tuple[Constraint, ...]

    def applies_to(self, op):
        return all(c.applies_to(op) for c in self.parts)

    def render(self):
        return "and(" + ", ".join(c.render() for c in self.parts) + ")"


@dataclass(frozen=True)
class Or(Constraint):
    parts: tuple[Constraint, ...]

    def applies_to(self, op):
        return any(c.applies_to(op) for c in self.parts)

    def render(self):
        return "or(" + ", ".join(c.render() for c in self.parts) + ")"


@dataclass(frozen=True)
class IsMapUpdate(Constraint):
    inner: Constraint

    def applies_to(self, op):
        return isinstance(op, MapUpdate) and self.inner.applies_to(op)

    def render(self):
        return f"isMapUpdate({self.inner.render()})"


@dataclass(frozen=True)
class IsSetUpdate(Constraint):
    inner: Constraint

    def applies_to(self, op):
        return isinstance(op, SetUpdate) and self.inner.applies_to(op)

    def render(self):
        return f"isSetUpdate({self.inner.render()})"


@dataclass(frozen=True)
class AssignsOnly(Constraint):
    keys: frozenset[bytes]

    def applies_to(self, op):
        return isinstance(op, MapUpdate) and op.updated_keys() <= self.keys

    def render(self):
        return f"assignsOnly({_set(self.keys)})"


@dataclass(frozen=True)
class KeyConstraint:
    key: bytes
    inner: Constraint

    def render(self):
        return f"keyConstrain({_s(self.key)}, {self.inner.render()})"


@dataclass(frozen=True)
class ConstrainAssigns(Constraint):
    items: tuple[KeyConstraint, ...]

    def applies_to(self, op):
        if not isinstance(op, MapUpdate):
            return False
        for kc in self.items:
            for k, nested in op.updates:
                if k.key == kc.key and not kc.inner.applies_to(nested):
                    return False
        return True

    def render(self):
        return "constrainAssigns(" + ", ".join(kc.render() for kc in self.items) + ")"


@dataclass(frozen=True)
class NoMapRemoves(Constraint):
    def applies_to(self, op):
        return isinstance(op, MapUpdate) and not op.removes

    def render(self):
        return "noMapRemoves"


@dataclass(frozen=True)
class RemovesOnly(Constraint):
    keys: frozenset[bytes]

    def applies_to(self, op):
        return isinstance(op, MapUpdate) and op.removed_keys() <= self.keys

    def render(self):
        return f"removesOnly({_set(self.keys)})"


@dataclass(frozen=True)
class SetAddsOnly(Constraint):
    elements: frozenset[bytes]

    def applies_to(self, op):
        return isinstance(op, SetUpdate) and op.adds <= self.elements

    def render(self):
        return f"setAddsOnly({_set(self.elements)})"


@dataclass(frozen=True)
class SetRemovesOnly(Constraint):
    elements: frozenset[bytes]

    def applies_to(self, op):
        return isinstance(op, SetUpdate) and op.removes <= self.elements

    def render(self):
        return f"setRemovesOnly({_set(self.elements)})"


@dataclass(frozen=True)
class NoSetAdds(Constraint):
    def applies_to(self, op):
        return isinstance(op, SetUpdate) and not op.adds

    def render(self):
        return "noSetAdds"


@dataclass(frozen=True)
class NoSetRemoves(Constraint):
    def applies_to(self, op):
        return isinstance(op, SetUpdate) and not op.removes

    def render(self):
        return "noSetRemoves"


TRUE = TrueC()
FALSE = FalseC()


def applies_to(c: Constraint, op: UpdateOp) -> bool:
    return c.applies_to(op)


# --------------------------------------------------------------------------
# constructors


def _keys(items: Iterable[bytes] | bytes) -> frozenset[bytes]:
    if isinstance(items, bytes):
        return frozenset([items])
    return frozenset(items)


def and_(*parts: Constraint) -> Constraint:
    return And(tuple(parts)) if parts else TRUE


def or_(*parts: Constraint) -> Constraint:
    return Or(tuple(parts)) if parts else FALSE


def is_map_update(inner: Constraint = TRUE) -> Constraint:
    return IsMapUpdate(inner)


def is_set_update(inner: Constraint = TRUE) -> Constraint:
    return IsSetUpdate(inner)


def assigns_only(*keys: bytes) -> Constraint:
    return AssignsOnly(frozenset(keys))


def key_constrain(key: bytes, inner: Constraint) -> KeyConstraint:
    return KeyConstraint(key, inner)


def constrain_assigns(*items: KeyConstraint) -> Constraint:
    return ConstrainAssigns(tuple(items))


def no_map_removes() -> Constraint:
    return NoMapRemoves()


def removes_only(*keys: bytes) -> Constraint:
    return RemovesOnly(frozenset(keys))


def set_adds_only(*elements: bytes) -> Constraint:
    return SetAddsOnly(frozenset(elements))


def set_removes_only(*elements: bytes) -> Constraint:
    return SetRemovesOnly(frozenset(elements))


def no_set_adds() -> Constraint:
    return NoSetAdds()


def no_set_removes() -> Constraint:
    return NoSetRemoves()


# --------------------------------------------------------------------------
# parsing the rendered form

_TOKEN = re.compile(r"\s*(?:(?P<name>[A-Za-z]+)|(?P<punct>[(),{}])|(?P<str>\"))")
_decoder = json.JSONDecoder()

_NULLARY = {
    "true": TRUE,
    "false": FALSE,
    "noMapRemoves": NoMapRemoves(),
    "noSetAdds": NoSetAdds(),
    "noSetRemoves": NoSetRemoves(),
}
_KEYSETS = {
    "assignsOnly": AssignsOnly,
    "removesOnly": RemovesOnly,
    "setAddsOnly": SetAddsOnly,
    "setRemovesOnly": SetRemovesOnly,
}


class ParseError(ValueError):
    pass


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def _next(self):
        m = _TOKEN.match(self.text, self.pos)
        if not m:
            raise ParseError(f"unexpected input at {self.pos}: {self.text[self.pos:self.pos + 20]!r}")
        if m.group("str"):
            start = m.start("str")
            value, end = _decoder.raw_decode(self.text, start)
            self.pos = end
            return "str", value.encode("latin-1")
        self.pos = m.end()
        if m.group("name"):
            return "name", m.group("name")
        return "punct", m.group("punct")

    def _peek(self):
        saved = self.pos
        try:
            return self._next()
        finally:
            self.pos = saved

    def _expect(self, punct):
        kind, value = self._next()
        if (kind, value) != ("punct", punct):
            raise ParseError(f"expected {punct!r} at {self.pos}, got {value!r}")

    def _string(self) -> bytes:
        kind, value = self._next()
        if kind != "str":
            raise ParseError(f"expected a string at {self.pos}")
        return value

    def _keyset(self) -> frozenset[bytes]:
        self._expect("{")
        items = []
        if self._peek() != ("punct", "}"):
            items.append(self._string())
            while self._peek() == ("punct", ","):
                self._next()
                items.append(self._string())
        self._expect("}")
        return frozenset(items)

    def _list(self, item):
        self._expect("(")
        out = []
        if self._peek() != ("punct", ")"):
            out.append(item())
            while self._peek() == ("punct", ","):
                self._next()
                out.append(item())
        self._expect(")")
        return out

    def _key_constraint(self) -> KeyConstraint:
        kind, name = self._next()
        if name != "keyConstrain":
            raise ParseError(f"expected keyConstrain at {self.pos}")
        self._expect("(")
        key = self._string()
        self._expect(",")
        inner = self.constraint()
        self._expect(")")
        return KeyConstraint(key, inner)

    def constraint(self) -> Constraint:
        kind, name = self._next()
        if kind != "name":
            raise ParseError(f"expected a constraint name at {self.pos}")
        if name in _NULLARY:
            return _NULLARY[name]
        if name in ("and", "or"):
            parts = tuple(self._list(self.constraint))
            return And(parts) if name == "and" else Or(parts)
        if name in ("isMapUpdate", "isSetUpdate"):
            (inner,) = self._list(self.constraint)
            return IsMapUpdate(inner) if name == "isMapUpdate" else IsSetUpdate(inner)
        if name in _KEYSETS:
            self._expect("(")
            keys = self._keyset()
            self._expect(")")
            return _KEYSETS[name](keys)
        if name == "constrainAssigns":
            return ConstrainAssigns(tuple(self._list(self._key_constraint)))
        raise ParseError(f"unknown constraint {name!r}")


def parse(text: str) -> Constraint:
    p = _Parser(text)
    c = p.constraint()
    if text[p.pos:].strip():
        raise ParseError(f"trailing input at {p.pos}")
    return c
