"""Benchmark, anomaly scenarios and model checking."""

from .bench import Metrics, NetworkModel, ScenarioConfig, run_benchmark
from .modelcheck import Verdict, model_check_protection
from .scenarios import run_alice_bob, run_charly

__all__ = [
    "Metrics",
    "NetworkModel",
    "ScenarioConfig",
    "Verdict",
    "model_check_protection",
    "run_alice_bob",
    "run_benchmark",
    "run_charly",
]
