"""Throughput of the STATS workload under different access control deployments.

Time is simulated.  A single client replays the workload one application
action (one transaction) at a time:

* ``no-ac``: every datastore operation costs ``store_op_ms``
* ``local``: decisions run next to the store; every read made on behalf of a
  decision is one more datastore operation
* ``central``: each intercepted operation is decided by one remote server,
  costing a round trip of ``net_delay_ms`` plus ``base_delay_ms`` processing;
  the server keeps policies in memory so its reads are free
* ``eventual``: like ``local`` on a store without causal delivery

``store_op_ms`` defaults to the per-operation cost implied by the measured
local deployment: 1,079.2 application ops/s with 216,923 decision reads on
top of 135,852 application operations.
"""

from __future__ import annotations

import heapq
import itertools
import logging
from collections import Counter
from dataclasses import asdict, dataclass, field

from ..acl import AccessControl, AccessDenied, policy_storage_key
from ..crdt import PolicyAssign
from ..stats import schema
from ..stats.policy import stats_decision_procedure
from ..stats.workload import ADMIN_USER, AppOperation, WorkloadConfig, apply_app_operation, generate_workload
from ..store import CAUSAL, EVENTUAL, Store

log = logging.getLogger(__name__)

LOCAL, CENTRAL, NO_AC, EVENTUAL_MODE = "local", "central", "no-ac", "eventual"
MODES = (LOCAL, CENTRAL, NO_AC, EVENTUAL_MODE)
MODE_ALIASES = {"local-acgregate": LOCAL, "central-ac": CENTRAL, "eventual-mode": EVENTUAL_MODE}

DEFAULT_BASE_DELAY_MS = 0.3
DEFAULT_STORE_OP_MS = 1000.0 / (1079.2 * (1 + 216_923 / 135_852))


def normalize_mode(mode: str) -> str:
    mode = MODE_ALIASES.get(mode, mode)
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")
    return mode


@dataclass(frozen=True)
class NetworkModel:
    net_delay_ms: float = 0.0
    base_delay_ms: float = DEFAULT_BASE_DELAY_MS

    def __post_init__(self):
        if self.net_delay_ms < 0 or self.base_delay_ms < 0:
            raise ValueError("delays must be non-negative")

    @property
    def request_delay_ms(self) -> float:
        return self.net_delay_ms + self.base_delay_ms


@dataclass(frozen=True)
class ScenarioConfig:
    mode: str = LOCAL
    net_delay_ms: float = 0.0
    base_delay_ms: float = DEFAULT_BASE_DELAY_MS
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    seed: int = 0
    schedule_count: int | None = None
    store_op_ms: float = DEFAULT_STORE_OP_MS

    def __post_init__(self):
        object.__setattr__(self, "mode", normalize_mode(self.mode))
        if self.store_op_ms < 0:
            raise ValueError("store_op_ms must be non-negative")
        self.network  # validates the delays
        self.workload.validate()

    @property
    def network(self) -> NetworkModel:
        return NetworkModel(self.net_delay_ms, self.base_delay_ms)


@dataclass(frozen=True)
class Metrics:
    app_ops: int
    app_reads: int
    app_updates: int
    decisions: int
    decision_reads: int
    denials: int
    leaks_detected: int
    elapsed_s: float
    throughput_ops_per_s: float
    request_delay_ms: float | None
    wall_duration: str
    # decision reads relative to all application ops and to application reads
    overhead_vs_ops: float
    overhead_vs_reads: float

    def as_dict(self) -> dict:
        return asdict(self)


def format_duration(seconds: float) -> str:
    seconds = int(round(seconds))
    h, rest = divmod(seconds, 3600)
    m, s = divmod(rest, 60)
    return f"{h}:{m:02d}:{s:02d}" if h else f"{m}:{s:02d}"


class EventLoop:
    """Minimal discrete-event scheduler over virtual milliseconds."""

    def __init__(self):
        self.now = 0.0
        self._queue: list = []
        self._seq = itertools.count()

    def schedule(self, delay_ms: float, action) -> None:
        heapq.heappush(self._queue, (self.now + delay_ms, next(self._seq), action))

    def run(self) -> float:
        while self._queue:
            self.now, _, action = heapq.heappop(self._queue)
            action()
        return self.now


class DecisionServer:
    """The single decision point of the central deployment; serves requests in order."""

    def __init__(self, network: NetworkModel):
        self.network = network
        self.busy_until = 0.0
        self.requests = 0

    def round_trip(self, sent_at: float) -> float:
        """Time at which the answer to a request sent at ``sent_at`` is back."""
        half = self.network.net_delay_ms / 2
        start = max(sent_at + half, self.busy_until)
        self.busy_until = start + self.network.base_delay_ms
        self.requests += 1
        return self.busy_until + half


class PlainSession:
    """Unchecked pass-through with the secured transaction's interface."""

    def __init__(self, tx, counters: Counter):
        self.tx = tx
        self.counters = counters

    def read(self, obj):
        self.counters["data_reads"] += 1
        return self.tx.read(obj)

    def update(self, obj, op):
        self.counters["data_updates"] += 1
        self.tx.update(obj, op)

    def assign_policy(self, obj, user, permissions):
        self.counters["policy_assigns"] += 1
        self.tx.update(policy_storage_key(obj, user), PolicyAssign(permissions))

    def commit(self):
        return self.tx.commit()

    def abort(self):
        self.tx.abort()


def _bootstrap(ac: AccessControl) -> None:
    ac.bootstrap("r1", [(schema.system(), ADMIN_USER.encode(), {schema.ADMIN})])


def run_benchmark(cfg: ScenarioConfig, ops: list[AppOperation] | None = None) -> Metrics:
    """Replay the workload for ``cfg`` and measure simulated throughput."""
    if ops is None:
        ops = generate_workload(cfg.workload)
    store = Store(["r1"], mode=EVENTUAL if cfg.mode == EVENTUAL_MODE else CAUSAL)
    ac = AccessControl(store)
    _bootstrap(ac)
    procedure = stats_decision_procedure()
    loop = EventLoop()
    server = DecisionServer(cfg.network)
    counters = ac.counters

    def app_ops() -> int:
        return counters["data_reads"] + counters["data_updates"] + counters["policy_assigns"]

    def step(i: int) -> None:
        if i == len(ops):
            return
        op = ops[i]
        before_ops, before_reads = app_ops(), counters["decision_reads"]
        before_decisions = counters["decisions"]
        if cfg.mode == NO_AC:
            tx = PlainSession(store.begin_transaction("r1"), counters)
        else:
            tx = ac.start_transaction("r1", op.actor.encode(), procedure)
        try:
            apply_app_operation(tx, op)
            tx.commit()
        except AccessDenied:
            tx.abort()
        store_ops = app_ops() - before_ops
        if cfg.mode == CENTRAL:
            t = loop.now + store_ops * cfg.store_op_ms
            for _ in range(counters["decisions"] - before_decisions):
                t = server.round_trip(t)
            cost = t - loop.now
        else:
            store_ops += counters["decision_reads"] - before_reads
            cost = store_ops * cfg.store_op_ms
        loop.schedule(cost, lambda: step(i + 1))

    loop.schedule(0.0, lambda: step(0))
    elapsed_ms = loop.run()

    n = app_ops()
    reads = counters["data_reads"]
    decision_reads = counters["decision_reads"]
    elapsed_s = elapsed_ms / 1000.0
    return Metrics(
        app_ops=n,
        app_reads=reads,
        app_updates=counters["data_updates"] + counters["policy_assigns"],
        decisions=counters["decisions"],
        decision_reads=decision_reads,
        denials=counters["denials"],
        leaks_detected=0,
        elapsed_s=round(elapsed_s, 9),
        throughput_ops_per_s=round(n / elapsed_s, 6) if elapsed_s else 0.0,
        request_delay_ms=cfg.network.request_delay_ms if cfg.mode == CENTRAL else None,
        wall_duration=format_duration(elapsed_s),
        overhead_vs_ops=round(decision_reads / n, 6) if n else 0.0,
        overhead_vs_reads=round(decision_reads / reads, 6) if reads else 0.0,
    )


def bench_record(cfg: ScenarioConfig, metrics: Metrics) -> dict:
    return {
        "kind": "bench",
        "mode": cfg.mode,
        "net_delay_ms": cfg.net_delay_ms,
        "base_delay_ms": cfg.base_delay_ms,
        "store_op_ms": round(cfg.store_op_ms, 9),
        "seed": cfg.seed,
        "workload_students": cfg.workload.students,
        **metrics.as_dict(),
    }
