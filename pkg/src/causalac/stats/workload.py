"""Application operations of STATS and a synthetic workload generator.

An :class:`AppOperation` is one user-level action (``join_group``,
``enter_points``...).  :func:`apply_app_operation` translates it into the
datastore reads, updates and policy assignments it consists of, all inside
one secured transaction.

:func:`generate_workload` replays a semester history (accounts, role grants,
registrations, point entry, exam lifecycle) for a synthetic population.
Views are interleaved so that datastore reads outnumber updates by the
captured production ratio of 102,861 : 32,991 at every prefix.

Workloads serialise to JSON lines with the fields ``actor``, ``action``,
``target`` and ``payload``.
"""

from __future__ import annotations

import json
import math
import random
from collections.abc import Iterable
from dataclasses import asdict, dataclass, field, replace

from ..crdt import Assign, CrdtType, FlagSet, MapKey, MapUpdate, map_remove, map_update, set_add, set_remove
from . import schema as s

READ_UPDATE_RATIO = 102_861 / 32_991
CAPTURED_OPS = 102_861 + 32_991
ADMIN_USER = "admin"


@dataclass(frozen=True)
class AppOperation:
    actor: str
    action: str
    target: str
    payload: dict = field(default_factory=dict, hash=False)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> AppOperation:
        d = json.loads(line)
        return cls(d["actor"], d["action"], d["target"], d.get("payload", {}))


def dump_jsonl(ops: Iterable[AppOperation]) -> str:
    return "".join(op.to_json() + "\n" for op in ops)


def load_jsonl(text: str) -> list[AppOperation]:
    return [AppOperation.from_json(line) for line in text.splitlines() if line.strip()]


def _mvregs(**fields: str) -> MapUpdate:
    return MapUpdate(updates=[(MapKey(k.encode(), CrdtType.MVREG), Assign(v.encode())) for k, v in fields.items()])


# --------------------------------------------------------------------------
# translation of application actions
#
# Each handler receives the open (secured) transaction, the parsed target ids
# and the payload.  SHAPE records how many datastore reads and updates
# (policy assignments included) each action issues.

SHAPE: dict[str, tuple[int, int]] = {}
_HANDLERS = {}


def _action(name: str, reads: int, updates: int):
    def register(fn):
        SHAPE[name] = (reads, updates)
        _HANDLERS[name] = fn
        return fn

    return register


@_action("create_account", 1, 1)
def _create_account(tx, ids, p):
    (sid,) = ids
    tx.read(s.student(sid))
    tx.update(s.student(sid), _mvregs(name=p["name"], student_id=sid, email=p["email"]))


@_action("create_exercise", 1, 2)
def _create_exercise(tx, ids, p):
    (eid,) = ids
    tx.read(s.exercise(eid))
    tx.update(s.exercise(eid), _mvregs(title=p["title"]))
    tx.assign_policy(s.exercise(eid), p["assistant"].encode(), {s.ASSISTANT})


@_action("set_registration", 1, 1)
def _set_registration(tx, ids, p):
    (eid,) = ids
    tx.read(s.exercise(eid))
    tx.update(s.exercise(eid), map_update(s.REGISTRATION_OPEN.key, FlagSet(bool(p["open"]))))


@_action("create_group", 2, 2)
def _create_group(tx, ids, p):
    eid, gid = ids
    tx.read(s.exercise(eid))
    tx.read(s.group(eid, gid))
    tx.update(s.group(eid, gid), _mvregs(slot=p["slot"], day=p["day"], location=p["location"]))
    tx.update(s.exercise(eid), map_update(s.GROUPS.key, set_add(gid.encode())))


@_action("assign_tutor", 1, 2)
def _assign_tutor(tx, ids, p):
    eid, gid = ids
    tutor = p["tutor"].encode()
    tx.read(s.group(eid, gid))
    tx.update(s.group(eid, gid), map_update(s.TUTORS.key, set_add(tutor)))
    tx.assign_policy(s.group(eid, gid), tutor, {s.TUTOR})


@_action("remove_tutor", 1, 2)
def _remove_tutor(tx, ids, p):
    eid, gid = ids
    tutor = p["tutor"].encode()
    tx.read(s.group(eid, gid))
    tx.update(s.group(eid, gid), map_update(s.TUTORS.key, set_remove(tutor)))
    tx.assign_policy(s.group(eid, gid), tutor, set())


@_action("delete_group", 1, 2)
def _delete_group(tx, ids, p):
    eid, gid = ids
    tx.read(s.exercise(eid))
    tx.update(s.exercise(eid), map_update(s.GROUPS.key, set_remove(gid.encode())))
    tx.update(
        s.group(eid, gid),
        MapUpdate(removes=[s.SLOT, s.DAY, s.LOCATION, s.TUTORS, s.MEMBERS, s.TEAMS]),
    )


@_action("create_sheet", 2, 2)
def _create_sheet(tx, ids, p):
    eid, shid = ids
    tx.read(s.exercise(eid))
    tx.read(s.sheet(eid, shid))
    tx.update(s.sheet(eid, shid), _mvregs(title=p["title"], max_points=str(p["max_points"])))
    tx.update(s.exercise(eid), map_update(s.SHEETS.key, set_add(shid.encode())))


@_action("register_exercise", 2, 1)
def _register_exercise(tx, ids, p):
    eid, sid = ids
    tx.read(s.exercise(eid))
    tx.read(s.student(sid))
    tx.update(s.exercise(eid), map_update(s.PARTICIPANTS.key, set_add(sid.encode())))


@_action("unregister_exercise", 1, 1)
def _unregister_exercise(tx, ids, p):
    eid, sid = ids
    tx.read(s.exercise(eid))
    tx.update(s.exercise(eid), map_update(s.PARTICIPANTS.key, set_remove(sid.encode())))


@_action("join_group", 3, 2)
def _join_group(tx, ids, p):
    eid, gid, sid = ids
    tx.read(s.exercise(eid))
    tx.read(s.group(eid, gid))
    tx.read(s.participant(eid, sid))
    tx.update(s.group(eid, gid), map_update(s.MEMBERS.key, set_add(sid.encode())))
    tx.update(s.participant(eid, sid), map_update(s.GROUP.key, Assign(gid.encode())))


@_action("leave_group", 3, 2)
def _leave_group(tx, ids, p):
    eid, gid, sid = ids
    tx.read(s.exercise(eid))
    tx.read(s.group(eid, gid))
    tx.read(s.participant(eid, sid))
    tx.update(s.group(eid, gid), map_update(s.MEMBERS.key, set_remove(sid.encode())))
    tx.update(s.participant(eid, sid), map_remove(s.GROUP.key, s.GROUP.type))


@_action("move_student", 2, 3)
def _move_student(tx, ids, p):
    """Assistant moves a student between groups."""
    eid, sid = ids
    old, new = p["from"], p["to"]
    tx.read(s.group(eid, old))
    tx.read(s.group(eid, new))
    tx.update(s.group(eid, old), map_update(s.MEMBERS.key, set_remove(sid.encode())))
    tx.update(s.group(eid, new), map_update(s.MEMBERS.key, set_add(sid.encode())))
    tx.update(s.participant(eid, sid), map_update(s.GROUP.key, Assign(new.encode())))


@_action("assign_team", 1, 1)
def _assign_team(tx, ids, p):
    eid, gid = ids
    tx.read(s.group(eid, gid))
    tx.update(
        s.group(eid, gid),
        map_update(s.TEAMS.key, map_update(p["team"].encode(), set_add(p["student"].encode()))),
    )


@_action("enter_points", 3, 1)
def _enter_points(tx, ids, p):
    eid, sid = ids
    tx.read(s.participant(eid, sid))
    tx.read(s.sheet(eid, p["sheet"]))
    tx.read(s.result(eid, sid))
    tx.update(s.result(eid, sid), map_update(p["sheet"].encode(), Assign(str(p["points"]).encode())))


@_action("view_results", 2, 0)
def _view_results(tx, ids, p):
    eid, sid = ids
    tx.read(s.exercise(eid))
    tx.read(s.result(eid, sid))


@_action("view_exercise", 1, 0)
def _view_exercise(tx, ids, p):
    (eid,) = ids
    tx.read(s.exercise(eid))


@_action("view_account", 1, 0)
def _view_account(tx, ids, p):
    (sid,) = ids
    tx.read(s.student(sid))


@_action("create_exam", 1, 2)
def _create_exam(tx, ids, p):
    (xid,) = ids
    tx.read(s.exam(xid))
    tx.update(s.exam(xid), _mvregs(title=p["title"]))
    tx.assign_policy(s.exam(xid), p["examiner"].encode(), {s.EXAMINER})


@_action("set_exam_open", 1, 1)
def _set_exam_open(tx, ids, p):
    (xid,) = ids
    tx.read(s.exam(xid))
    tx.update(s.exam(xid), map_update(s.OPEN.key, FlagSet(bool(p["open"]))))


@_action("add_task", 1, 1)
def _add_task(tx, ids, p):
    (xid,) = ids
    tx.read(s.exam(xid))
    tx.update(s.exam(xid), map_update(s.TASKS.key, set_add(p["task"].encode())))


@_action("set_grade_threshold", 1, 1)
def _set_grade_threshold(tx, ids, p):
    (xid,) = ids
    tx.read(s.exam(xid))
    tx.update(
        s.exam(xid),
        map_update(s.GRADES.key, map_update(p["grade"].encode(), Assign(str(p["points"]).encode()))),
    )


@_action("register_exam", 2, 1)
def _register_exam(tx, ids, p):
    xid, sid = ids
    tx.read(s.exam(xid))
    tx.read(s.student(sid))
    tx.update(s.exam(xid), map_update(s.PARTICIPANTS.key, set_add(sid.encode())))


@_action("unregister_exam", 1, 1)
def _unregister_exam(tx, ids, p):
    xid, sid = ids
    tx.read(s.exam(xid))
    tx.update(s.exam(xid), map_update(s.PARTICIPANTS.key, set_remove(sid.encode())))


@_action("add_exam_participant", 1, 1)
def _add_exam_participant(tx, ids, p):
    xid, sid = ids
    tx.read(s.exam(xid))
    tx.update(s.exam(xid), map_update(s.PARTICIPANTS.key, set_add(sid.encode())))


@_action("enter_exam_result", 2, 1)
def _enter_exam_result(tx, ids, p):
    xid, sid = ids
    tx.read(s.exam(xid))
    tx.read(s.exam_result(xid, sid))
    tx.update(s.exam_result(xid, sid), map_update(s.task_key(p["task"]).key, Assign(str(p["points"]).encode())))


@_action("set_grade", 1, 1)
def _set_grade(tx, ids, p):
    xid, sid = ids
    tx.read(s.exam_result(xid, sid))
    tx.update(s.exam_result(xid, sid), map_update(s.GRADE.key, Assign(p["grade"].encode())))


@_action("publish_exam", 1, 1)
def _publish_exam(tx, ids, p):
    (xid,) = ids
    tx.read(s.exam(xid))
    tx.update(s.exam(xid), map_update(s.PUBLISHED.key, FlagSet(bool(p.get("published", True)))))


@_action("view_exam_result", 2, 0)
def _view_exam_result(tx, ids, p):
    xid, sid = ids
    tx.read(s.exam(xid))
    tx.read(s.exam_result(xid, sid))


def apply_app_operation(tx, op: AppOperation) -> str:
    """Run ``op`` inside ``tx`` (a secured transaction or anything with the same
    ``read``/``update``/``assign_policy`` methods).

    :class:`~causalac.acl.AccessDenied` propagates; the caller decides about
    the transaction.
    """
    try:
        handler = _HANDLERS[op.action]
    except KeyError:
        raise ValueError(f"unknown action {op.action!r}") from None
    handler(tx, tuple(op.target.split("/")), op.payload)
    return "ack"


# --------------------------------------------------------------------------
# workload generation


@dataclass(frozen=True)
class WorkloadConfig:
    students: int = 20
    exercises: int = 1
    groups_per_exercise: int = 3
    sheets_per_exercise: int = 3
    exams: int = 1
    tasks_per_exam: int = 2
    seed: int = 0

    @classmethod
    def from_scale(cls, ops: int, seed: int = 0) -> WorkloadConfig:
        """Population sized so the history issues roughly ``ops`` datastore operations."""
        if ops < 100:
            raise ValueError("scale must be at least 100 operations")
        exercises = max(1, min(4, round(ops / 4000)))
        exams = max(1, min(6, round(ops / 3000)))
        groups = max(2, min(12, round(ops / 400 / exercises)))
        sheets = max(2, min(12, round(math.sqrt(ops / 50))))
        tasks = 2 if ops < 5000 else 5
        cfg = cls(4, exercises, groups, sheets, exams, tasks, seed)
        # the op count grows linearly in the number of students
        for _ in range(3):
            base = sum(op_count(generate_workload(replace(cfg, students=1))))
            per_student = sum(op_count(generate_workload(cfg))) - base
            per_student /= cfg.students - 1
            cfg = replace(cfg, students=max(4, round(1 + (ops - base) / per_student)))
        return cfg

    @property
    def scale_factor(self) -> float:
        return sum(op_count(generate_workload(self))) / CAPTURED_OPS

    def validate(self) -> None:
        for name in ("students", "exercises", "groups_per_exercise", "sheets_per_exercise"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.exams < 0 or self.tasks_per_exam < 1:
            raise ValueError("exams must be >= 0 and tasks_per_exam >= 1")


def op_count(ops: Iterable[AppOperation]) -> tuple[int, int]:
    """(reads, updates) issued by replaying ``ops``."""
    reads = updates = 0
    for op in ops:
        r, u = SHAPE[op.action]
        reads += r
        updates += u
    return reads, updates


class _History:
    """Accumulates operations and tops reads up with views."""

    def __init__(self, rng: random.Random):
        self.rng = rng
        self.ops: list[AppOperation] = []
        self.reads = self.updates = 0
        self.views: list[tuple[str, str, str]] = []

    def add(self, actor: str, action: str, target: str, **payload) -> None:
        self.ops.append(AppOperation(actor, action, target, payload))
        r, u = SHAPE[action]
        self.reads += r
        self.updates += u
        if u:
            self._top_up()

    def _top_up(self) -> None:
        while self.views and self.reads < READ_UPDATE_RATIO * self.updates:
            actor, action, target = self.rng.choice(self.views)
            self.ops.append(AppOperation(actor, action, target, {}))
            self.reads += SHAPE[action][0]

    def viewable(self, actor: str, action: str, target: str) -> None:
        self.views.append((actor, action, target))


def generate_workload(cfg: WorkloadConfig) -> list[AppOperation]:
    """Deterministic operation stream for ``cfg``; every op is allowed for its actor."""
    cfg.validate()
    rng = random.Random(cfg.seed)
    h = _History(rng)
    students = [f"s{i:05d}" for i in range(cfg.students)]
    days = ["mon", "tue", "wed", "thu", "fri"]

    for sid in students:
        h.add(sid, "create_account", sid, name=f"Student {sid}", email=f"{sid}@example.org")
        h.viewable(sid, "view_account", sid)

    for e in range(cfg.exercises):
        eid = f"ex{e}"
        assistant = f"assistant{e}"
        h.add(ADMIN_USER, "create_exercise", eid, title=f"Exercise {e}", assistant=assistant)
        for sid in students:
            h.viewable(sid, "view_exercise", eid)

        groups = [f"g{g}" for g in range(cfg.groups_per_exercise)]
        n_tutors = max(1, math.ceil(len(groups) / 2))
        tutors = [f"tutor{e}_{t}" for t in range(n_tutors)]
        tutor_of = {g: tutors[i % n_tutors] for i, g in enumerate(groups)}
        for i, g in enumerate(groups):
            h.add(assistant, "create_group", f"{eid}/{g}", slot=f"{8 + 2 * (i % 5)}:00",
                  day=days[i % len(days)], location=f"room {100 + i}")
            h.add(assistant, "assign_tutor", f"{eid}/{g}", tutor=tutor_of[g])
        sheets = [f"sh{k}" for k in range(cfg.sheets_per_exercise)]
        h.add(assistant, "create_sheet", f"{eid}/{sheets[0]}", title="Sheet 0", max_points=20)

        h.add(assistant, "set_registration", eid, open=True)
        members: dict[str, str] = {}
        participants = [sid for sid in students if rng.random() < 0.9]
        for sid in participants:
            h.add(sid, "register_exercise", f"{eid}/{sid}")
            h.viewable(sid, "view_results", f"{eid}/{sid}")
            h.viewable(assistant, "view_results", f"{eid}/{sid}")
        for sid in participants:
            g = rng.choice(groups)
            h.add(sid, "join_group", f"{eid}/{g}/{sid}")
            members[sid] = g
        for sid in participants:
            if rng.random() < 0.1 and len(groups) > 1:
                old = members[sid]
                new = rng.choice([g for g in groups if g != old])
                h.add(sid, "leave_group", f"{eid}/{old}/{sid}")
                h.add(sid, "join_group", f"{eid}/{new}/{sid}")
                members[sid] = new
        h.add(assistant, "set_registration", eid, open=False)

        # assistants may still rearrange groups after registration closed
        for sid in participants:
            if rng.random() < 0.05 and len(groups) > 1:
                old = members[sid]
                new = rng.choice([g for g in groups if g != old])
                h.add(assistant, "move_student", f"{eid}/{sid}", **{"from": old, "to": new})
                members[sid] = new
        for sid in participants:
            h.viewable(tutor_of[members[sid]], "view_results", f"{eid}/{sid}")

        for g in groups:
            team_members = [sid for sid in participants if members[sid] == g]
            for j, sid in enumerate(team_members):
                h.add(tutor_of[g], "assign_team", f"{eid}/{g}", team=f"t{j // 2}", student=sid)

        for k, shid in enumerate(sheets):
            if k:
                h.add(assistant, "create_sheet", f"{eid}/{shid}", title=f"Sheet {k}", max_points=20)
            for sid in participants:
                if rng.random() < 0.95:
                    h.add(tutor_of[members[sid]], "enter_points", f"{eid}/{sid}",
                          sheet=shid, points=rng.randint(0, 20))

    for x in range(cfg.exams):
        xid = f"exam{x}"
        examiner = f"examiner{x}"
        h.add(ADMIN_USER, "create_exam", xid, title=f"Exam {x}", examiner=examiner)
        tasks = [f"task{t}" for t in range(cfg.tasks_per_exam)]
        for t in tasks:
            h.add(examiner, "add_task", xid, task=t)
        for grade, points in (("1.0", 90), ("4.0", 50)):
            h.add(examiner, "set_grade_threshold", xid, grade=grade, points=points)
        h.add(examiner, "set_exam_open", xid, open=True)
        registered = [sid for sid in students if rng.random() < 0.8]
        for sid in registered:
            h.add(sid, "register_exam", f"{xid}/{sid}")
        h.add(examiner, "set_exam_open", xid, open=False)
        for sid in registered:
            h.viewable(examiner, "view_exam_result", f"{xid}/{sid}")
            for t in tasks:
                h.add(examiner, "enter_exam_result", f"{xid}/{sid}", task=t, points=rng.randint(0, 50))
            h.add(examiner, "set_grade", f"{xid}/{sid}", grade=rng.choice(["1.0", "2.0", "3.0", "4.0", "5.0"]))
        h.add(examiner, "publish_exam", xid, published=True)
        for sid in registered:
            h.viewable(sid, "view_exam_result", f"{xid}/{sid}")
    return h.ops
