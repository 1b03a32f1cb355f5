"""Domain types: permissions, conditions, roles, MER sets, delegations,
sessions and request events, with their canonical JSON encodings."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Any, Iterable, Mapping

from .clock import format_ts, parse_ts
from .errors import ConditionParseError, InvalidPermissionError, ValidationError


class Operation(str, Enum):
    READ = "R"
    WRITE = "W"

    @property
    def full_name(self) -> str:
        return "Read" if self is Operation.READ else "Write"

    @classmethod
    def parse(cls, text: str) -> "Operation":
        """Accept the single-letter code or the full name ("Read"/"Write")."""
        for op in cls:
            if text == op.value or text == op.full_name:
                return op
        raise InvalidPermissionError(f"unknown operation {text!r}; expected R or W")


class ConditionKind(str, Enum):
    NULL = "Null"
    TIME_WINDOW = "TimeWindow"


_TS = r"\d{4}-\d{2}-\d{2} \d{2}:\d{2}:\d{2}"
_WINDOW_RE = re.compile(rf"st:({_TS}),\s*ed:({_TS})")


@dataclass(frozen=True)
class Condition:
    kind: ConditionKind = ConditionKind.NULL
    start: datetime | None = None
    end: datetime | None = None

    def __post_init__(self):
        if self.kind is ConditionKind.NULL:
            if self.start is not None or self.end is not None:
                raise ValidationError("Null condition carries no time bounds")
        elif self.start is None or self.end is None or not self.start < self.end:
            raise ValidationError("time window requires start < end")

    @classmethod
    def window(cls, start: datetime, end: datetime) -> "Condition":
        return cls(ConditionKind.TIME_WINDOW, start, end)

    def encode(self) -> str:
        return encode_condition(self)

    def evaluate(self, now: datetime) -> bool:
        return evaluate_condition(self, now)


NULL_CONDITION = Condition()


def evaluate_condition(condition: Condition, now: datetime) -> bool:
    if condition.kind is ConditionKind.NULL:
        return True
    # half-open window: start inclusive, end exclusive
    return condition.start <= now < condition.end


def encode_condition(condition: Condition) -> str:
    if condition.kind is ConditionKind.NULL:
        return "null"
    return f"st:{format_ts(condition.start)},ed:{format_ts(condition.end)}"


def decode_condition(text: str) -> Condition:
    """Parse ``null`` or ``st:<ts>,ed:<ts>``.

    Location, key or history conditions have no grammar and are rejected.
    """
    if text == "null":
        return NULL_CONDITION
    m = _WINDOW_RE.fullmatch(text.strip())
    if m is None:
        raise ConditionParseError(
            f"unsupported condition {text!r}; expected 'null' or 'st:YYYY-MM-DD HH:MM:SS,ed:YYYY-MM-DD HH:MM:SS'"
        )
    try:
        start, end = parse_ts(m.group(1)), parse_ts(m.group(2))
    except ValueError as exc:
        raise ConditionParseError(f"bad timestamp in condition {text!r}: {exc}") from None
    if not start < end:
        raise ConditionParseError(f"condition window must satisfy start < end: {text!r}")
    return Condition.window(start, end)


@dataclass(frozen=True)
class Permission:
    object_id: str
    operations: frozenset[Operation]
    condition: Condition = NULL_CONDITION

    def __post_init__(self):
        if not self.object_id:
            raise InvalidPermissionError("permission object_id must be non-empty")
        if not self.operations:
            raise InvalidPermissionError(f"permission on {self.object_id!r} has no operations")
        object.__setattr__(self, "operations", frozenset(Operation.parse(o) if isinstance(o, str) else o
                                                         for o in self.operations))

    @classmethod
    def of(cls, object_id: str, ops: str | Iterable[str], condition: str | Condition = "null") -> "Permission":
        """``Permission.of("Score-DB", "RW")`` shorthand."""
        if isinstance(condition, str):
            condition = decode_condition(condition)
        return cls(object_id, frozenset(Operation.parse(o) for o in ops), condition)

    def triples(self) -> frozenset[tuple[str, str, str]]:
        """(object, operation, canonical condition) triples used for inclusion tests."""
        cond = encode_condition(self.condition)
        return frozenset((self.object_id, op.value, cond) for op in self.operations)

    def allows(self, object_id: str, op: Operation) -> bool:
        return self.object_id == object_id and op in self.operations

    def to_json(self) -> dict:
        return {
            "object_id": self.object_id,
            "operations": sorted(op.value for op in self.operations),
            "condition": encode_condition(self.condition),
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "Permission":
        try:
            ops = data["operations"]
            if isinstance(ops, str):
                ops = list(ops)
            return cls(str(data["object_id"]), frozenset(Operation.parse(o) for o in ops),
                       decode_condition(data.get("condition", "null")))
        except KeyError as exc:
            raise InvalidPermissionError(f"permission missing field {exc}") from None


def permission_triples(permissions: Iterable[Permission]) -> frozenset[tuple[str, str, str]]:
    out: set[tuple[str, str, str]] = set()
    for p in permissions:
        out |= p.triples()
    return frozenset(out)


@dataclass(frozen=True)
class Role:
    role_id: str
    valid_period: int  # seconds
    permissions: frozenset[Permission] = frozenset()
    child_roles: frozenset[str] = frozenset()

    def __post_init__(self):
        if not self.role_id:
            raise ValidationError("role_id must be non-empty")
        if isinstance(self.valid_period, bool) or not isinstance(self.valid_period, int) or self.valid_period <= 0:
            raise ValidationError(f"valid_period of {self.role_id!r} must be a positive integer (seconds)")
        object.__setattr__(self, "permissions", frozenset(self.permissions))
        object.__setattr__(self, "child_roles", frozenset(self.child_roles))

    def to_json(self) -> dict:
        return {
            "role_id": self.role_id,
            "valid_period": self.valid_period,
            "child_roles": sorted(self.child_roles),
            "permissions": sorted((p.to_json() for p in self.permissions),
                                  key=lambda d: (d["object_id"], d["operations"], d["condition"])),
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "Role":
        try:
            return cls(
                role_id=str(data["role_id"]),
                valid_period=data["valid_period"],
                permissions=frozenset(Permission.from_json(p) for p in data.get("permissions", [])),
                child_roles=frozenset(data.get("child_roles", [])),
            )
        except KeyError as exc:
            raise ValidationError(f"role missing field {exc}") from None


class MerKind(str, Enum):
    STATIC = "Static"
    DYNAMIC = "Dynamic"


@dataclass(frozen=True)
class MerSet:
    """Mutually exclusive roles: holding (Static) or activating (Dynamic)
    ``k`` or more members at once is forbidden."""

    roles: frozenset[str]
    k: int
    kind: MerKind

    def __post_init__(self):
        object.__setattr__(self, "roles", frozenset(self.roles))
        object.__setattr__(self, "kind", MerKind(self.kind))
        if len(self.roles) < 2:
            raise ValidationError("a MER set needs at least 2 roles")
        if isinstance(self.k, bool) or not isinstance(self.k, int) or not 2 <= self.k <= len(self.roles):
            raise ValidationError(f"MER cardinality must satisfy 2 <= k <= {len(self.roles)}, got {self.k!r}")

    def violated_by(self, roles: Iterable[str]) -> bool:
        return len(self.roles.intersection(roles)) >= self.k

    def to_json(self) -> dict:
        return {"roles": sorted(self.roles), "k": self.k, "kind": self.kind.value}

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "MerSet":
        try:
            return cls(frozenset(data["roles"]), data["k"], MerKind(data["kind"]))
        except KeyError as exc:
            raise ValidationError(f"MER set missing field {exc}") from None
        except ValueError as exc:
            raise ValidationError(str(exc)) from None


@dataclass(frozen=True)
class DelegationRecord:
    delegator_pubkey: str
    delegate_pubkey: str
    role_id: str
    expires_at: datetime
    revoked: bool = False

    def active_at(self, now: datetime) -> bool:
        return not self.revoked and now < self.expires_at

    def to_json(self) -> dict:
        return {
            "delegator_pubkey": self.delegator_pubkey,
            "delegate_pubkey": self.delegate_pubkey,
            "role_id": self.role_id,
            "expires_at": format_ts(self.expires_at),
            "revoked": self.revoked,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "DelegationRecord":
        return cls(data["delegator_pubkey"], data["delegate_pubkey"], data["role_id"],
                   parse_ts(data["expires_at"]), bool(data.get("revoked", False)))


@dataclass(frozen=True)
class Session:
    user_pubkey: str
    active_roles: Mapping[str, datetime] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"user_pubkey": self.user_pubkey,
                "active_roles": {r: format_ts(t) for r, t in sorted(self.active_roles.items())}}

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "Session":
        return cls(data["user_pubkey"], {r: parse_ts(t) for r, t in data.get("active_roles", {}).items()})


class Result(str, Enum):
    ALLOWED = "Allowed"
    DENIED = "Denied"


class Reason(str, Enum):
    NOT_ASSIGNED = "NotAssigned"
    OWNERSHIP_FAILED = "OwnershipFailed"
    ROLE_EXPIRED = "RoleExpired"
    DSOD_VIOLATION = "DsodViolation"
    PERMISSION_MISSING = "PermissionMissing"
    CONDITION_UNSATISFIED = "ConditionUnsatisfied"
    SSOD_VIOLATION = "SsodViolation"
    MALFORMED_REQUEST = "MalformedRequest"


@dataclass(frozen=True)
class RoleRequestEvent:
    user_pubkey: str
    request_time: str
    required_role: str
    result: Result
    reason: Reason | None = None

    def to_json(self) -> dict:
        return {
            "user_pubkey": self.user_pubkey,
            "request_time": self.request_time,
            "required_role": self.required_role,
            "result": Result(self.result).value,
            "reason": Reason(self.reason).value if self.reason else None,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "RoleRequestEvent":
        return cls(data["user_pubkey"], data["request_time"], data["required_role"],
                   Result(data["result"]), Reason(data["reason"]) if data.get("reason") else None)


@dataclass(frozen=True)
class AccessRequestEvent:
    user_pubkey: str
    request_time: str
    object_id: str
    required_role: str
    required_operation: str  # "Read" / "Write"
    result: Result
    reason: Reason | None = None

    def to_json(self) -> dict:
        return {
            "user_pubkey": self.user_pubkey,
            "request_time": self.request_time,
            "object_id": self.object_id,
            "required_role": self.required_role,
            "required_operation": self.required_operation,
            "result": Result(self.result).value,
            "reason": Reason(self.reason).value if self.reason else None,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "AccessRequestEvent":
        return cls(data["user_pubkey"], data["request_time"], data["object_id"], data["required_role"],
                   data["required_operation"], Result(data["result"]),
                   Reason(data["reason"]) if data.get("reason") else None)
