"""Access control policy of the student achievement tracking system.

Roles are permission tokens on the object that scopes them: ``admin`` on the
system object, ``assistant`` on an exercise, ``tutor`` on a group and
``examiner`` on an exam.  Students act under their own student id.

Update rules
    * admins may do everything
    * assistants change their exercise (attributes, registration flag,
      groups, sheets), its groups (including members and tutors), its sheets
      and the group assignment of its participants; they may grant and revoke
      the tutor role on their groups
    * tutors assign students of their groups to teams and change the results
      of students in their groups
    * examiners change their exam (attributes, participants, tasks, grades,
      registration and publish flags) and its results
    * students may always register for (or leave) an exercise; they may join
      or leave a group of an exercise they participate in only while its
      registration is open, and register for an exam only while it is open

Read rules
    * structural objects (exercises, groups, sheets, exams) are readable by
      everyone
    * results are visible to the student, to the exercise's assistants and to
      the tutors of the student's group
    * exam results are visible to the exam's examiners, and to the student
      once the exam is published
    * personal records only to their owner
"""

from __future__ import annotations

from ..acl import DecisionProcedure, LayerDefinition, SecurityLayers
from ..constraints import (
    Constraint,
    and_,
    assigns_only,
    constrain_assigns,
    is_map_update,
    is_set_update,
    key_constrain,
    no_map_removes,
    no_set_adds,
    no_set_removes,
    or_,
    removes_only,
    set_adds_only,
    set_removes_only,
)
from ..crdt import UpdateOp
from ..store import BoundObject
from . import schema as s

STRUCTURAL = {"system", "exercise", "group", "sheet", "exam"}


def self_membership(key: bytes, sid: bytes) -> Constraint:
    """Only ``key`` is touched, and only by adding or removing ``sid`` itself."""
    return is_map_update(
        and_(
            assigns_only(key),
            constrain_assigns(
                key_constrain(
                    key,
                    is_set_update(
                        or_(
                            and_(set_adds_only(sid), no_set_removes()),
                            and_(set_removes_only(sid), no_set_adds()),
                        )
                    ),
                )
            ),
            no_map_removes(),
        )
    )


TEAMS_ONLY = is_map_update(and_(assigns_only(s.TEAMS.key), no_map_removes()))
GROUP_CHOICE = is_map_update(
    or_(
        and_(assigns_only(s.GROUP.key), no_map_removes()),
        and_(assigns_only(), removes_only(s.GROUP.key)),
    )
)


class StatsProcedure(DecisionProcedure):
    def requested_policies(self, current_user: bytes, obj: BoundObject) -> LayerDefinition:
        kind, ids = s.parse_key(obj)
        layers = [("system", s.system())]
        if kind == "student":
            layers.append(("student", obj))
        elif kind == "exercise":
            layers.append(("exercise", obj))
        elif kind in ("group", "sheet", "participant", "result"):
            eid, other = ids
            layers.append(("exercise", s.exercise(eid)))
            if kind == "group":
                layers.append(("group", obj))
            elif kind == "sheet":
                layers.append(("sheet", obj))
            else:
                layers.append(("participant", s.participant(eid, other)))
        elif kind in ("exam", "examresult"):
            layers.append(("exam", s.exam(ids[0])))
        return LayerDefinition(layers)

    # helpers ----------------------------------------------------------------

    @staticmethod
    def _admin(layers: SecurityLayers) -> bool:
        return layers.has(s.ADMIN, "system")

    @staticmethod
    def _owner(user: bytes, sid: str) -> bool:
        return user == sid.encode()

    @staticmethod
    def _tutors_student(user: bytes, eid: str, layers: SecurityLayers) -> bool:
        """The user tutors every group the student is assigned to (at least one)."""
        groups = s.field(layers.data("participant"), s.GROUP)
        if not groups:
            return False
        return all(
            s.TUTOR in layers.permissions_on(s.group(eid, g.decode())) for g in groups
        )

    @staticmethod
    def _registration_open(layers: SecurityLayers) -> bool:
        return s.field(layers.data("exercise"), s.REGISTRATION_OPEN)

    # decisions --------------------------------------------------------------

    def decide_update(self, current_user, obj, op: UpdateOp, user_data, layers) -> bool:
        if self._admin(layers):
            return True
        kind, ids = s.parse_key(obj)
        user = current_user
        if kind == "student":
            return self._owner(user, ids[0])
        if kind == "exercise":
            if layers.has(s.ASSISTANT, "exercise"):
                return True
            return self_membership(s.PARTICIPANTS.key, user).applies_to(op)
        if kind == "group":
            if layers.has(s.ASSISTANT, "exercise"):
                return True
            if layers.has(s.TUTOR, "group") and TEAMS_ONLY.applies_to(op):
                return True
            if not self_membership(s.MEMBERS.key, user).applies_to(op):
                return False
            exercise = layers.data("exercise")
            return bool(s.field(exercise, s.REGISTRATION_OPEN)) and user in s.field(
                exercise, s.PARTICIPANTS
            )
        if kind == "sheet":
            return layers.has(s.ASSISTANT, "exercise")
        if kind == "participant":
            if layers.has(s.ASSISTANT, "exercise"):
                return True
            return (
                self._owner(user, ids[1])
                and GROUP_CHOICE.applies_to(op)
                and self._registration_open(layers)
            )
        if kind == "result":
            return self._tutors_student(user, ids[0], layers)
        if kind == "exam":
            if layers.has(s.EXAMINER, "exam"):
                return True
            if not self_membership(s.PARTICIPANTS.key, user).applies_to(op):
                return False
            return bool(s.field(layers.data("exam"), s.OPEN))
        if kind == "examresult":
            return layers.has(s.EXAMINER, "exam")
        return False

    def decide_read(self, current_user, obj, user_data, layers) -> bool:
        if self._admin(layers):
            return True
        kind, ids = s.parse_key(obj)
        if kind in STRUCTURAL:
            return True
        if kind == "student":
            return self._owner(current_user, ids[0])
        if kind in ("participant", "result"):
            eid, sid = ids
            return (
                self._owner(current_user, sid)
                or layers.has(s.ASSISTANT, "exercise")
                or self._tutors_student(current_user, eid, layers)
            )
        if kind == "examresult":
            if layers.has(s.EXAMINER, "exam"):
                return True
            return self._owner(current_user, ids[1]) and bool(
                s.field(layers.data("exam"), s.PUBLISHED)
            )
        return False

    def decide_policy_read(self, current_user, obj, target_user, user_data, layers) -> bool:
        if self._admin(layers) or target_user == current_user:
            return True
        kind, _ = s.parse_key(obj)
        return kind in ("exercise", "group") and layers.has(s.ASSISTANT, "exercise")

    def decide_policy_assign(
        self, current_user, obj, target_user, new_permissions, old_permissions, user_data, layers
    ) -> bool:
        if self._admin(layers):
            return True
        kind, _ = s.parse_key(obj)
        if kind == "group" and layers.has(s.ASSISTANT, "exercise"):
            return (new_permissions | old_permissions) <= {s.TUTOR}
        return False


def stats_decision_procedure() -> StatsProcedure:
    return StatsProcedure()
