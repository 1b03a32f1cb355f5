"""Separation-of-duties decisions over MER sets.

A MER set ``(roles, k, kind)`` is violated by a role collection that
contains ``k`` or more of its members.  Static sets constrain what a user
may hold; dynamic sets constrain what a session may have active.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

from .errors import UnknownRoleError
from .model import MerKind, MerSet


@dataclass(frozen=True)
class SodDecision:
    allowed: bool
    violated: MerSet | None = None

    def __bool__(self) -> bool:
        return self.allowed


ALLOWED = SodDecision(True)


@dataclass(frozen=True)
class Violation:
    subject: str  # user public key
    scope: str  # "assignment" or "session"
    mer_set: MerSet

    def to_json(self) -> dict:
        return {"subject": self.subject, "scope": self.scope, "mer_set": self.mer_set.to_json()}


def _check(held: Iterable[str], candidate: str, mer_sets: Iterable[MerSet], kind: MerKind,
           known_roles) -> SodDecision:
    roles = set(held)
    roles.add(candidate)
    for m in mer_sets:
        if known_roles is not None:
            for r in m.roles:
                if r not in known_roles:
                    raise UnknownRoleError(r)
        if m.kind is kind and m.violated_by(roles):
            return SodDecision(False, m)
    return ALLOWED


def check_ssod(assigned_roles: Iterable[str], candidate: str, static_mer_sets: Iterable[MerSet],
               known_roles=None) -> SodDecision:
    """Grant-time check; only Static sets are considered."""
    return _check(assigned_roles, candidate, static_mer_sets, MerKind.STATIC, known_roles)


def check_dsod(active_roles: Iterable[str], candidate: str, dynamic_mer_sets: Iterable[MerSet],
               known_roles=None) -> SodDecision:
    """Activation-time check; only Dynamic sets are considered."""
    return _check(active_roles, candidate, dynamic_mer_sets, MerKind.DYNAMIC, known_roles)


def assert_policy_consistency(assignments: Mapping[str, Iterable[str]],
                              sessions: Mapping[str, Iterable[str]],
                              mer_sets: Iterable[MerSet]) -> list[Violation]:
    mer_sets = list(mer_sets)
    out = []
    for user in sorted(assignments):
        held = set(assignments[user])
        out.extend(Violation(user, "assignment", m) for m in mer_sets
                   if m.kind is MerKind.STATIC and m.violated_by(held))
    for user in sorted(sessions):
        active = set(sessions[user])
        out.extend(Violation(user, "session", m) for m in mer_sets
                   if m.kind is MerKind.DYNAMIC and m.violated_by(active))
    return out
