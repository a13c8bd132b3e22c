"""Student achievement tracking: object layout, policy and workload."""

from .policy import StatsProcedure, stats_decision_procedure
from .workload import AppOperation, WorkloadConfig, apply_app_operation, generate_workload

__all__ = [
    "AppOperation",
    "StatsProcedure",
    "WorkloadConfig",
    "apply_app_operation",
    "generate_workload",
    "stats_decision_procedure",
]
