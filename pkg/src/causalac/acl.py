"""Access control monitor on top of the transactional store.

Every operation of a :class:`SecuredTransaction` is checked by an
application supplied :class:`DecisionProcedure` before it reaches the store.
The decision and the operation share one transaction snapshot, and policy
state lives in the same store as the data, so a policy change and the data
updates it protects travel together under causal consistency.

Policies are kept per (object, user) in a Policy CRDT stored under a separate
bucket namespace (see :func:`policy_storage_key`).
"""

from __future__ import annotations

import abc
import logging
import struct
from collections import Counter
from collections.abc import Callable, Iterable
from dataclasses import dataclass

from .crdt import CrdtType, CrdtTypeError, PolicyAssign, UpdateOp, policy_read, read_value
from .store import BoundObject, Store, Transaction, TransactionCommit

log = logging.getLogger(__name__)

SECURITY_PREFIX = b"acl$"
RESERVED = b"$"


class AccessDenied(PermissionError):
    def __init__(self, action: str, obj: BoundObject, user: bytes):
        super().__init__(f"{user.decode(errors='replace')} may not {action} {obj}")
        self.action = action
        self.object = obj
        self.user = user


class InvalidBucket(ValueError):
    pass


class BootstrapClosed(RuntimeError):
    pass


def _lp(b: bytes) -> bytes:
    return struct.pack(">I", len(b)) + b


def policy_storage_key(obj: BoundObject, user: bytes) -> BoundObject:
    """Location of ``user``'s permission set on ``obj``.

    The key is the length-prefixed object key followed by the
    length-prefixed user id, so distinct pairs never share a key.
    """
    return BoundObject(SECURITY_PREFIX + obj.bucket, _lp(obj.key) + _lp(user), CrdtType.POLICY)


def is_policy_bucket(bucket: bytes) -> bool:
    return bucket.startswith(SECURITY_PREFIX)


def check_data_bucket(obj: BoundObject) -> None:
    if RESERVED in obj.bucket:
        raise InvalidBucket(f"bucket {obj.bucket!r} uses the reserved character '$'")


@dataclass(frozen=True)
class Layer:
    name: str
    object: BoundObject


class LayerDefinition(tuple):
    """Ordered layers of an object's protection hierarchy."""

    def __new__(cls, layers: Iterable[Layer | tuple[str, BoundObject]] = ()):
        items = tuple(x if isinstance(x, Layer) else Layer(*x) for x in layers)
        names = [layer.name for layer in items]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate layer names in {names}")
        return super().__new__(cls, items)


class SecurityLayers:
    """Permissions of the acting user on every layer, read from one snapshot.

    Data of a layer object and any other object or policy can be looked up
    lazily; each lookup is counted as a decision read.
    """

    def __init__(self, stx: SecuredTransaction, definition: LayerDefinition):
        self._stx = stx
        self.definition = definition
        self._objects = {layer.name: layer.object for layer in definition}
        self._perms = {
            layer.name: stx._policy_of(layer.object, stx.user) for layer in definition
        }
        self._data: dict[str, object] = {}

    @property
    def names(self) -> list[str]:
        return list(self._objects)

    def __contains__(self, name: str) -> bool:
        return name in self._objects

    def object(self, name: str) -> BoundObject:
        return self._objects[name]

    def permissions(self, name: str) -> frozenset[bytes]:
        return self._perms.get(name, frozenset())

    def union(self) -> frozenset[bytes]:
        return frozenset().union(*self._perms.values())

    def has(self, token: bytes, *names: str) -> bool:
        """Whether ``token`` is granted on any of ``names`` (default: any layer)."""
        layers = names or self._perms.keys()
        return any(token in self._perms.get(n, ()) for n in layers)

    def data(self, name: str):
        if name not in self._data:
            self._data[name] = self._stx._decision_read(self._objects[name])
        return self._data[name]

    def lookup(self, obj: BoundObject):
        return self._stx._decision_read(obj)

    def permissions_on(self, obj: BoundObject) -> frozenset[bytes]:
        return self._stx._policy_of(obj, self._stx.user)


class DecisionProcedure(abc.ABC):
    """Application policy.  Every method must only read through ``layers``."""

    @abc.abstractmethod
    def decide_read(self, current_user: bytes, obj: BoundObject, user_data, layers: SecurityLayers) -> bool:
        ...

    @abc.abstractmethod
    def decide_update(
        self, current_user: bytes, obj: BoundObject, op: UpdateOp, user_data, layers: SecurityLayers
    ) -> bool:
        ...

    @abc.abstractmethod
    def decide_policy_read(
        self, current_user: bytes, obj: BoundObject, target_user: bytes, user_data, layers: SecurityLayers
    ) -> bool:
        ...

    @abc.abstractmethod
    def decide_policy_assign(
        self,
        current_user: bytes,
        obj: BoundObject,
        target_user: bytes,
        new_permissions: frozenset[bytes],
        old_permissions: frozenset[bytes],
        user_data,
        layers: SecurityLayers,
    ) -> bool:
        ...

    @abc.abstractmethod
    def requested_policies(self, current_user: bytes, obj: BoundObject) -> LayerDefinition:
        ...


class ConstantProcedure(DecisionProcedure):
    """Allows or denies everything; requests no layers."""

    def __init__(self, allow: bool):
        self.allow = allow

    def decide_read(self, current_user, obj, user_data, layers):
        return self.allow

    def decide_update(self, current_user, obj, op, user_data, layers):
        return self.allow

    def decide_policy_read(self, current_user, obj, target_user, user_data, layers):
        return self.allow

    def decide_policy_assign(self, current_user, obj, target_user, new, old, user_data, layers):
        return self.allow

    def requested_policies(self, current_user, obj):
        return LayerDefinition()


class TokenProcedure(DecisionProcedure):
    """Permission tokens on the object itself: ``read``, ``write`` and ``own``.

    Owners may read and change anybody's permissions on the object.
    """

    READ, WRITE, OWN = b"read", b"write", b"own"

    def requested_policies(self, current_user, obj):
        return LayerDefinition([("object", obj)])

    def decide_read(self, current_user, obj, user_data, layers):
        return layers.has(self.READ) or layers.has(self.OWN)

    def decide_update(self, current_user, obj, op, user_data, layers):
        return layers.has(self.WRITE) or layers.has(self.OWN)

    def decide_policy_read(self, current_user, obj, target_user, user_data, layers):
        return target_user == current_user or layers.has(self.OWN)

    def decide_policy_assign(self, current_user, obj, target_user, new, old, user_data, layers):
        return layers.has(self.OWN)


DecisionObserver = Callable[[str, BoundObject], None]


class AccessControl:
    """Secure front end of a :class:`Store`.

    ``counters`` tracks every intercepted operation, every decision and every
    read issued on behalf of a decision.  ``observer`` is called once per
    decision; the benchmark harness uses it to charge remote decision latency.
    """

    def __init__(self, store: Store, observer: DecisionObserver | None = None):
        self.store = store
        self.observer = observer
        self.counters: Counter[str] = Counter()
        self._started = False

    def bootstrap(
        self, replica_id: str, grants: Iterable[tuple[BoundObject, bytes, Iterable[bytes]]]
    ) -> TransactionCommit:
        """Install initial policies without any decision.

        Only allowed before the first secured transaction; afterwards every
        policy change has to pass a decision procedure.
        """
        if self._started:
            raise BootstrapClosed("bootstrap is only possible before the first secured transaction")
        tx = self.store.begin_transaction(replica_id)
        for obj, user, perms in grants:
            check_data_bucket(obj)
            tx.update(policy_storage_key(obj, user), PolicyAssign(perms))
        return tx.commit()

    def start_transaction(
        self, replica_id: str, user: bytes, procedure: DecisionProcedure, user_data=None
    ) -> SecuredTransaction:
        if not user:
            raise ValueError("user id must be non-empty")
        tx = self.store.begin_transaction(replica_id)
        self._started = True
        return SecuredTransaction(self, tx, user, procedure, user_data)


def start_secured_transaction(
    ac: AccessControl, replica_id: str, user: bytes, procedure: DecisionProcedure, user_data=None
) -> SecuredTransaction:
    return ac.start_transaction(replica_id, user, procedure, user_data)


class SecuredTransaction:
    """A store transaction executed on behalf of one user.

    A denied operation raises :class:`AccessDenied` and leaves the
    transaction open; the caller decides whether to continue or abort.
    """

    def __init__(self, ac: AccessControl, tx: Transaction, user: bytes, procedure: DecisionProcedure, user_data):
        self.ac = ac
        self.tx = tx
        self.user = user
        self.procedure = procedure
        self.user_data = user_data

    @property
    def snapshot_clock(self):
        return self.tx.snapshot_clock

    # reads made on behalf of decisions -------------------------------------

    def _policy_of(self, obj: BoundObject, user: bytes) -> frozenset[bytes]:
        self.ac.counters["decision_reads"] += 1
        return policy_read(self.tx.read_state(policy_storage_key(obj, user)))

    def _decision_read(self, obj: BoundObject):
        check_data_bucket(obj)
        self.ac.counters["decision_reads"] += 1
        return read_value(self.tx.read_state(obj))

    def resolve_layers(self, definition: LayerDefinition) -> SecurityLayers:
        return SecurityLayers(self, LayerDefinition(definition))

    def _decide(self, action: str, obj: BoundObject, ask) -> None:
        check_data_bucket(obj)
        self.ac.counters["intercepted"] += 1
        layers = self.resolve_layers(self.procedure.requested_policies(self.user, obj))
        self.ac.counters["decisions"] += 1
        if self.ac.observer is not None:
            self.ac.observer(action, obj)
        if not ask(layers):
            self.ac.counters["denials"] += 1
            log.debug("denied %s on %s for %r", action, obj, self.user)
            raise AccessDenied(action, obj, self.user)

    # intercepted operations ------------------------------------------------

    def read(self, obj: BoundObject):
        p, u = self.procedure, self.user
        self._decide("read", obj, lambda layers: p.decide_read(u, obj, self.user_data, layers))
        self.ac.counters["data_reads"] += 1
        return self.tx.read(obj)

    def update(self, obj: BoundObject, op: UpdateOp) -> None:
        if op.crdt_type is not obj.crdt_type:
            raise CrdtTypeError(f"{type(op).__name__} does not fit {obj}")
        p, u = self.procedure, self.user
        self._decide("update", obj, lambda layers: p.decide_update(u, obj, op, self.user_data, layers))
        self.ac.counters["data_updates"] += 1
        self.tx.update(obj, op)

    def read_policy(self, obj: BoundObject, target_user: bytes) -> frozenset[bytes]:
        p, u = self.procedure, self.user
        self._decide(
            "read policy of",
            obj,
            lambda layers: p.decide_policy_read(u, obj, target_user, self.user_data, layers),
        )
        self.ac.counters["policy_reads"] += 1
        return policy_read(self.tx.read_state(policy_storage_key(obj, target_user)))

    def assign_policy(self, obj: BoundObject, target_user: bytes, permissions: Iterable[bytes]) -> None:
        new = frozenset(permissions)
        old = self._policy_of(obj, target_user)
        p, u = self.procedure, self.user
        self._decide(
            "assign policy on",
            obj,
            lambda layers: p.decide_policy_assign(u, obj, target_user, new, old, self.user_data, layers),
        )
        self.ac.counters["policy_assigns"] += 1
        self.tx.update(policy_storage_key(obj, target_user), PolicyAssign(new))

    def commit(self) -> TransactionCommit:
        return self.tx.commit()

    def abort(self) -> None:
        self.tx.abort()


# functional interface over a secured transaction


def secured_read(stx: SecuredTransaction, obj: BoundObject):
    return stx.read(obj)


def secured_update(stx: SecuredTransaction, obj: BoundObject, op: UpdateOp) -> None:
    stx.update(obj, op)


def assign_policy(stx: SecuredTransaction, obj: BoundObject, target_user: bytes, permissions) -> None:
    stx.assign_policy(obj, target_user, permissions)


def read_policy(stx: SecuredTransaction, obj: BoundObject, target_user: bytes) -> frozenset[bytes]:
    return stx.read_policy(obj, target_user)


def resolve_layers(stx: SecuredTransaction, definition: LayerDefinition) -> SecurityLayers:
    return stx.resolve_layers(definition)
