"""Access control for a causally consistent, replicated CRDT store."""

from .acl import (
    AccessControl,
    AccessDenied,
    DecisionProcedure,
    LayerDefinition,
    SecuredTransaction,
    SecurityLayers,
    TokenProcedure,
    assign_policy,
    policy_storage_key,
    read_policy,
    secured_read,
    secured_update,
    start_secured_transaction,
)
from .crdt import CrdtType, Dot, MapKey, apply_effect, generate_effect, read_value
from .store import CAUSAL, EVENTUAL, BoundObject, Store, Transaction, VectorClock

__all__ = [
    "AccessControl",
    "AccessDenied",
    "BoundObject",
    "CAUSAL",
    "CrdtType",
    "DecisionProcedure",
    "Dot",
    "EVENTUAL",
    "LayerDefinition",
    "MapKey",
    "SecuredTransaction",
    "SecurityLayers",
    "Store",
    "TokenProcedure",
    "Transaction",
    "VectorClock",
    "apply_effect",
    "assign_policy",
    "generate_effect",
    "policy_storage_key",
    "read_policy",
    "read_value",
    "secured_read",
    "secured_update",
    "start_secured_transaction",
]
