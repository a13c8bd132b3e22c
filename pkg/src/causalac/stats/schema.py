"""Object layout of the student achievement tracking system.

Every entity is a map CRDT in bucket ``stats``.  Keys encode the hierarchy
(``group/<exercise>/<group>``) so a decision procedure can derive security
layers from the key alone.  Identifiers must not contain ``/``.
"""

from __future__ import annotations

from ..crdt import CrdtType, MapKey
from ..store import BoundObject

BUCKET = b"stats"

# permission tokens; each is granted on the object that scopes the role
ADMIN = b"admin"
ASSISTANT = b"assistant"
TUTOR = b"tutor"
EXAMINER = b"examiner"

# map fields
TITLE = MapKey(b"title", CrdtType.MVREG)
NAME = MapKey(b"name", CrdtType.MVREG)
STUDENT_ID = MapKey(b"student_id", CrdtType.MVREG)
EMAIL = MapKey(b"email", CrdtType.MVREG)
REGISTRATION_OPEN = MapKey(b"registration_open", CrdtType.FLAG)
PARTICIPANTS = MapKey(b"participants", CrdtType.ORSET)
GROUPS = MapKey(b"groups", CrdtType.ORSET)
SHEETS = MapKey(b"sheets", CrdtType.ORSET)
SLOT = MapKey(b"slot", CrdtType.MVREG)
DAY = MapKey(b"day", CrdtType.MVREG)
LOCATION = MapKey(b"location", CrdtType.MVREG)
TUTORS = MapKey(b"tutors", CrdtType.ORSET)
MEMBERS = MapKey(b"members", CrdtType.ORSET)
TEAMS = MapKey(b"teams", CrdtType.MAP)
MAX_POINTS = MapKey(b"max_points", CrdtType.MVREG)
GROUP = MapKey(b"group", CrdtType.MVREG)
OPEN = MapKey(b"open", CrdtType.FLAG)
PUBLISHED = MapKey(b"published", CrdtType.FLAG)
TASKS = MapKey(b"tasks", CrdtType.ORSET)
GRADES = MapKey(b"grades", CrdtType.MAP)
GRADE = MapKey(b"grade", CrdtType.MVREG)


def _obj(*parts: str) -> BoundObject:
    for p in parts[1:]:
        if not p or "/" in p:
            raise ValueError(f"invalid identifier {p!r}")
    return BoundObject(BUCKET, "/".join(parts).encode(), CrdtType.MAP)


def system() -> BoundObject:
    return _obj("system")


def student(sid: str) -> BoundObject:
    return _obj("student", sid)


def exercise(eid: str) -> BoundObject:
    return _obj("exercise", eid)


def group(eid: str, gid: str) -> BoundObject:
    return _obj("group", eid, gid)


def sheet(eid: str, shid: str) -> BoundObject:
    return _obj("sheet", eid, shid)


def participant(eid: str, sid: str) -> BoundObject:
    """Group assignment of one student within one exercise."""
    return _obj("participant", eid, sid)


def result(eid: str, sid: str) -> BoundObject:
    """Exercise points of one student: sheet id -> points."""
    return _obj("result", eid, sid)


def exam(xid: str) -> BoundObject:
    return _obj("exam", xid)


def exam_result(xid: str, sid: str) -> BoundObject:
    return _obj("examresult", xid, sid)


_ARITY = {
    "system": 0,
    "student": 1,
    "exercise": 1,
    "group": 2,
    "sheet": 2,
    "participant": 2,
    "result": 2,
    "exam": 1,
    "examresult": 2,
}


def parse_key(obj: BoundObject) -> tuple[str, tuple[str, ...]]:
    """``(kind, ids)`` for a STATS object, ``("", ())`` for anything else."""
    if obj.bucket != BUCKET or obj.crdt_type is not CrdtType.MAP:
        return "", ()
    kind, *ids = obj.key.decode(errors="replace").split("/")
    if _ARITY.get(kind) != len(ids) or not all(ids):
        return "", ()
    return kind, tuple(ids)


def task_key(task: str) -> MapKey:
    return MapKey(b"task:" + task.encode(), CrdtType.MVREG)


def sheet_key(shid: str) -> MapKey:
    return MapKey(shid.encode(), CrdtType.MVREG)


def team_key(team: str) -> MapKey:
    return MapKey(team.encode(), CrdtType.ORSET)


def field(value: dict, key: MapKey, default=frozenset()):
    """Read one field out of a map read, with the type's empty value as default."""
    if key in value:
        return value[key]
    if key.type is CrdtType.FLAG:
        return False
    if key.type is CrdtType.MAP:
        return {}
    if key.type is CrdtType.COUNTER:
        return 0
    return default
