"""Transactional RBAC engine.

Each public method is one (or, for automatic revocation, two) ledger
transactions.  Mutating methods run under a single lock, so the
read-check-write of every decision is atomic with respect to the others.

World-state keys::

    meta/genesis  role/<id>  mer/<n>  assign/<pubkey>  deleg/<n>  session/<pubkey>
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from datetime import datetime, timedelta
from enum import Enum
from typing import Any, Iterable, Mapping

from . import hierarchy
from .auth import SIGNATURE_SCHEME, ChallengeStore
from .clock import format_ts, parse_ts
from .errors import (AlreadyAssignedError, ChallengeError, DelegatorLacksRoleError, NotAssignedError,
                     RoleExpiredError, SelfDelegationError, SsodViolationError, UnauthorizedCallerError,
                     UnknownRoleError, ValidationError)
from .ledger import HASH_NAME, MAGIC, Ledger, LedgerTransaction
from .model import (AccessRequestEvent, DelegationRecord, MerSet, Operation, Permission, Reason, Result, Role,
                    RoleRequestEvent, Session)
from .sod import Violation, assert_policy_consistency, check_dsod, check_ssod


class CallerKind(str, Enum):
    ADMIN = "admin"
    CSP = "csp"
    USER = "user"


@dataclass(frozen=True)
class Caller:
    kind: CallerKind
    pubkey: str | None = None

    @property
    def invoker(self) -> str:
        return f"user:{self.pubkey}" if self.kind is CallerKind.USER else self.kind.value

    @classmethod
    def user(cls, pubkey: str) -> "Caller":
        return cls(CallerKind.USER, pubkey)


ADMIN = Caller(CallerKind.ADMIN)
CSP = Caller(CallerKind.CSP)


@dataclass(frozen=True)
class Decision:
    result: Result
    reason: Reason | None
    tx_id: int

    @property
    def allowed(self) -> bool:
        return self.result is Result.ALLOWED

    def to_json(self) -> dict:
        return {"result": self.result.value, "reason": self.reason.value if self.reason else None,
                "tx_id": self.tx_id}


@dataclass(frozen=True)
class SodConstraintResult:
    tx_id: int
    index: int
    violations: list[Violation]


@dataclass(frozen=True)
class _Grant:
    """Where a user's claim on a role comes from."""
    source: str  # "assign" or "deleg"
    expires_at: datetime
    deleg_index: int | None = None
    delegator: str | None = None


def _ts(dt: datetime) -> str:
    return format_ts(dt)


class Engine:
    def __init__(self, ledger: Ledger, clock=None, challenges: ChallengeStore | None = None):
        self.ledger = ledger
        self.clock = clock or ledger.clock
        self.challenges = challenges or ChallengeStore(self.clock)
        self._lock = threading.RLock()
        self._mer_cache: list[MerSet] | None = None
        self._deleg_cache: list[DelegationRecord] | None = None
        self.last_tx_id: int | None = None
        if ledger.get("meta/genesis") is None and not ledger.keys():
            self._commit(ADMIN, "Genesis", "Genesis",
                         {"format": MAGIC.decode(), "hash": HASH_NAME, "signature_scheme": SIGNATURE_SCHEME},
                         writes={"meta/genesis": {"format": MAGIC.decode(), "hash": HASH_NAME,
                                                  "signature_scheme": SIGNATURE_SCHEME}})

    # -- plumbing ---------------------------------------------------------

    def now(self) -> datetime:
        """Decision time, truncated to whole seconds (the wire resolution)."""
        return self.clock.now().replace(microsecond=0)

    @staticmethod
    def _require(caller: Caller, *kinds: CallerKind) -> None:
        if caller.kind not in kinds:
            allowed = "/".join(k.value for k in kinds)
            raise UnauthorizedCallerError(f"caller {caller.invoker!r} may not invoke this method ({allowed} only)")

    def _commit(self, caller: Caller, method: str, op: str, args: dict, result: Any = None,
                writes: Mapping[str, Any] | None = None) -> int:
        writes = dict(writes or {})
        if any(k.startswith("mer/") for k in writes):
            self._mer_cache = None
        if any(k.startswith("deleg/") for k in writes):
            self._deleg_cache = None
        payload = {"op": op, "args": args, "result": result, "writes": writes}
        self.last_tx_id = self.ledger.append_tx(caller.invoker, method, payload)
        return self.last_tx_id

    # -- reads --------------------------------------------------------------

    def role(self, role_id: str) -> Role | None:
        data = self.ledger.get_json(f"role/{role_id}")
        return None if data is None else Role.from_json(data)

    def roles(self) -> dict[str, Role]:
        return {k[len("role/"):]: Role.from_json(self.ledger.get_json(k)) for k in self.ledger.keys("role/")}

    def mer_sets(self) -> list[MerSet]:
        cached = self._mer_cache
        if cached is None:
            keys = sorted(self.ledger.keys("mer/"), key=lambda k: int(k.split("/", 1)[1]))
            cached = self._mer_cache = [MerSet.from_json(self.ledger.get_json(k)) for k in keys]
        return list(cached)

    def delegations(self) -> list[DelegationRecord]:
        cached = self._deleg_cache
        if cached is None:
            keys = sorted(self.ledger.keys("deleg/"), key=lambda k: int(k.split("/", 1)[1]))
            cached = self._deleg_cache = [DelegationRecord.from_json(self.ledger.get_json(k)) for k in keys]
        return list(cached)

    def assignment(self, user_pubkey: str) -> dict[str, datetime]:
        data = self.ledger.get_json(f"assign/{user_pubkey}")
        return {} if data is None else {r: parse_ts(t) for r, t in data["roles"].items()}

    def assignments(self) -> dict[str, dict[str, datetime]]:
        return {k[len("assign/"):]: self.assignment(k[len("assign/"):]) for k in self.ledger.keys("assign/")}

    def session(self, user_pubkey: str) -> Session:
        data = self.ledger.get_json(f"session/{user_pubkey}")
        return Session(user_pubkey) if data is None else Session.from_json(data)

    def sessions(self) -> dict[str, Session]:
        return {k[len("session/"):]: self.session(k[len("session/"):]) for k in self.ledger.keys("session/")}

    def held_roles(self, user_pubkey: str, now: datetime | None = None) -> set[str]:
        """Assigned roles plus roles currently delegated to the user."""
        now = now or self.now()
        held = set(self.assignment(user_pubkey))
        held.update(d.role_id for d in self.delegations()
                    if d.delegate_pubkey == user_pubkey and d.active_at(now))
        return held

    def policy_violations(self) -> list[Violation]:
        now = self.now()
        held = {u: self.held_roles(u, now) for u in self.assignments()}
        for d in self.delegations():
            if d.active_at(now):
                held.setdefault(d.delegate_pubkey, self.held_roles(d.delegate_pubkey, now))
        active = {u: set(s.active_roles) for u, s in self.sessions().items()}
        return assert_policy_consistency(held, active, self.mer_sets())

    def _grant(self, user_pubkey: str, role_id: str, now: datetime) -> _Grant | None:
        assigned = self.assignment(user_pubkey)
        role = self.role(role_id)
        if role_id in assigned and role is not None:
            return _Grant("assign", assigned[role_id] + timedelta(seconds=role.valid_period))
        for i, d in enumerate(self.delegations()):
            if d.delegate_pubkey == user_pubkey and d.role_id == role_id and d.active_at(now):
                # capped by what the delegator still holds
                cap = self.assignment(d.delegator_pubkey).get(role_id)
                limit = d.expires_at
                if cap is not None and role is not None:
                    limit = min(limit, cap + timedelta(seconds=role.valid_period))
                return _Grant("deleg", limit, i, d.delegator_pubkey)
        return None

    # -- configuration ------------------------------------------------------

    def set_role_configuration(self, caller: Caller, role_id: str, permissions: Iterable[Permission | dict],
                               valid_period: int) -> int:
        self._require(caller, CallerKind.ADMIN)
        perms = frozenset(p if isinstance(p, Permission) else Permission.from_json(p) for p in permissions)
        with self._lock:
            existing = self.role(role_id)
            role = Role(role_id, valid_period, perms, existing.child_roles if existing else frozenset())
            return self._commit(caller, "SetRoleConfiguration", "SetRoleConfiguration", role.to_json(),
                                writes={f"role/{role_id}": role.to_json()})

    def set_sod_constraint(self, caller: Caller, mer_set: MerSet) -> SodConstraintResult:
        """Store a MER set.  Existing grants that violate it are reported, not revoked."""
        self._require(caller, CallerKind.ADMIN)
        with self._lock:
            for r in sorted(mer_set.roles):
                if self.role(r) is None:
                    raise UnknownRoleError(r)
            index = len(self.ledger.keys("mer/"))
            self._mer_cache = None
            # violations are computed against the state including the new set
            mers = self.mer_sets() + [mer_set]
            now = self.now()
            held = {u: self.held_roles(u, now) for u in self.assignments()}
            active = {u: set(s.active_roles) for u, s in self.sessions().items()}
            violations = assert_policy_consistency(held, active, mers)
            tx = self._commit(caller, "SetSoDConstraint", "SetSoDConstraint", mer_set.to_json(),
                              result={"violations": [v.to_json() for v in violations]},
                              writes={f"mer/{index}": mer_set.to_json()})
            return SodConstraintResult(tx, index, violations)

    def append_req_role_history_entity(self, caller: Caller, event: RoleRequestEvent) -> int:
        self._require(caller, CallerKind.ADMIN, CallerKind.CSP)
        with self._lock:
            return self._commit(caller, "AppendReqRoleHistoryEntity", "AppendReqRoleHistoryEntity",
                                event.to_json())

    def append_req_history_entity(self, caller: Caller, event: AccessRequestEvent) -> int:
        self._require(caller, CallerKind.CSP)
        with self._lock:
            return self._commit(caller, "AppendReqHistoryEntity", "AppendReqHistoryEntity", event.to_json())

    # -- role management ----------------------------------------------------

    def request_role_for_user(self, caller: Caller, user_pubkey: str, required_role: str) -> Decision:
        self._require(caller, CallerKind.ADMIN)
        with self._lock:
            if self.role(required_role) is None:
                raise UnknownRoleError(required_role)
            assigned = self.assignment(user_pubkey)
            if required_role in assigned:
                raise AlreadyAssignedError(f"{required_role!r} already assigned to {user_pubkey}")
            now = self.now()
            held = self.held_roles(user_pubkey, now) - {required_role}
            verdict = check_ssod(held, required_role, self.mer_sets())
            writes = {}
            if verdict:
                assigned[required_role] = now
                writes[f"assign/{user_pubkey}"] = {"roles": {r: _ts(t) for r, t in sorted(assigned.items())}}
                result, reason = Result.ALLOWED, None
            else:
                result, reason = Result.DENIED, Reason.SSOD_VIOLATION
            event = RoleRequestEvent(user_pubkey, _ts(now), required_role, result, reason)
            tx = self._commit(caller, "AppendReqRoleHistoryEntity", "RequestRoleForUser", event.to_json(),
                              result={"violated": verdict.violated.to_json() if verdict.violated else None},
                              writes=writes)
            return Decision(result, reason, tx)

    def role_revocation(self, caller: Caller, user_pubkey: str, role_id: str, *, why: str = "manual") -> int:
        self._require(caller, CallerKind.ADMIN, CallerKind.CSP)
        with self._lock:
            assigned = self.assignment(user_pubkey)
            if role_id not in assigned:
                raise NotAssignedError(f"{role_id!r} is not assigned to {user_pubkey}")
            del assigned[role_id]
            writes: dict[str, Any] = {
                f"assign/{user_pubkey}":
                    {"roles": {r: _ts(t) for r, t in sorted(assigned.items())}} if assigned else None,
            }
            now = self.now()
            self._deactivate(user_pubkey, role_id, writes)
            invalidated = []
            for i, d in enumerate(self.delegations()):
                if d.delegator_pubkey == user_pubkey and d.role_id == role_id and not d.revoked:
                    rec = DelegationRecord(d.delegator_pubkey, d.delegate_pubkey, d.role_id, d.expires_at, True)
                    writes[f"deleg/{i}"] = rec.to_json()
                    invalidated.append(i)
                    if role_id not in self._held_except(d.delegate_pubkey, role_id, i, now):
                        self._deactivate(d.delegate_pubkey, role_id, writes)
            args = {"user_pubkey": user_pubkey, "role_id": role_id, "why": why, "request_time": _ts(now)}
            return self._commit(caller, "RoleRevocation", "RoleRevocation", args,
                                result={"invalidated_delegations": invalidated}, writes=writes)

    def _held_except(self, user_pubkey: str, role_id: str, skip_deleg: int, now: datetime) -> set[str]:
        held = set(self.assignment(user_pubkey))
        held.update(d.role_id for i, d in enumerate(self.delegations())
                    if i != skip_deleg and d.delegate_pubkey == user_pubkey and d.active_at(now))
        return held

    def _deactivate(self, user_pubkey: str, role_id: str, writes: dict) -> None:
        key = f"session/{user_pubkey}"
        current = writes.get(key) or self.ledger.get_json(key)
        if current and role_id in current["active_roles"]:
            active = {r: t for r, t in current["active_roles"].items() if r != role_id}
            writes[key] = {"user_pubkey": user_pubkey, "active_roles": active}

    def set_delegation(self, caller: Caller, delegator_pubkey: str, delegate_pubkey: str, role_id: str,
                       expires_at: datetime) -> int:
        self._require(caller, CallerKind.ADMIN)
        with self._lock:
            role = self.role(role_id)
            if role is None:
                raise UnknownRoleError(role_id)
            if delegator_pubkey == delegate_pubkey:
                raise SelfDelegationError("delegator and delegate must differ")
            now = self.now()
            granted = self.assignment(delegator_pubkey).get(role_id)
            if granted is None or now >= granted + timedelta(seconds=role.valid_period):
                raise DelegatorLacksRoleError(f"{delegator_pubkey} does not hold {role_id!r} with remaining validity")
            if expires_at <= now:
                raise ValidationError("delegation expires_at must be in the future")
            held = self.held_roles(delegate_pubkey, now) - {role_id}
            verdict = check_ssod(held, role_id, self.mer_sets())
            if not verdict:
                raise SsodViolationError(f"delegating {role_id!r} to {delegate_pubkey} violates "
                                         f"{verdict.violated.to_json()}", verdict.violated)
            rec = DelegationRecord(delegator_pubkey, delegate_pubkey, role_id, expires_at.replace(microsecond=0))
            index = len(self.ledger.keys("deleg/"))
            return self._commit(caller, "SetDelegation", "SetDelegation", rec.to_json(),
                                writes={f"deleg/{index}": rec.to_json()})

    def normalize_role_hierarchy(self, caller: Caller) -> dict[str, list[str]]:
        """Regenerate every role's child_roles from permission-set inclusion."""
        self._require(caller, CallerKind.ADMIN)
        with self._lock:
            roles = self.roles()
            children = hierarchy.normalize_role_hierarchy({rid: r.permissions for rid, r in roles.items()})
            writes = {}
            for rid, role in roles.items():
                new = Role(rid, role.valid_period, role.permissions, children[rid])
                writes[f"role/{rid}"] = new.to_json()
            out = {rid: sorted(ch) for rid, ch in sorted(children.items())}
            self._commit(caller, "NormalizeRoleHierarchy", "NormalizeRoleHierarchy", {}, result=out, writes=writes)
            return out

    # -- request handling ---------------------------------------------------

    def _expire(self, user_pubkey: str, role_id: str, grant: _Grant) -> None:
        """Automatic revocation once the validity period has elapsed."""
        if grant.source == "assign":
            self.role_revocation(CSP, user_pubkey, role_id, why="expired")
        elif role_id in self.assignment(grant.delegator):
            # the delegator's own validity ran out, which also ends the delegation
            self.role_revocation(CSP, grant.delegator, role_id, why="expired")

    def activate_role(self, caller: Caller, user_pubkey: str, role_id: str) -> Decision:
        self._require(caller, CallerKind.CSP)
        with self._lock:
            now = self.now()
            grant = self._grant(user_pubkey, role_id, now)
            if grant is None:
                raise NotAssignedError(f"{role_id!r} is neither assigned nor delegated to {user_pubkey}")
            if now >= grant.expires_at:
                self._expire(user_pubkey, role_id, grant)
                raise RoleExpiredError(f"{role_id!r} expired for {user_pubkey} at {_ts(grant.expires_at)}")
            session = self.session(user_pubkey)
            writes = {}
            if role_id in session.active_roles:
                result, reason = Result.ALLOWED, None
            else:
                verdict = check_dsod(set(session.active_roles), role_id, self.mer_sets())
                if verdict:
                    result, reason = Result.ALLOWED, None
                    writes[f"session/{user_pubkey}"] = self._with_active(session, role_id, now)
                else:
                    result, reason = Result.DENIED, Reason.DSOD_VIOLATION
            args = {"user_pubkey": user_pubkey, "request_time": _ts(now), "required_role": role_id,
                    "result": result.value, "reason": reason.value if reason else None}
            tx = self._commit(caller, "ActivateRole", "ActivateRole", args, writes=writes)
            return Decision(result, reason, tx)

    @staticmethod
    def _with_active(session: Session, role_id: str, now: datetime) -> dict:
        active = {r: _ts(t) for r, t in session.active_roles.items()}
        active[role_id] = _ts(now)
        return {"user_pubkey": session.user_pubkey, "active_roles": dict(sorted(active.items()))}

    def request_access_to_res(self, caller: Caller, user_pubkey: str, role_id: str, object_id: str,
                              operation: str | Operation, challenge_proof: tuple[str, bytes | str]) -> Decision:
        """Decision pipeline, first failing step wins:

        assigned/delegated -> ownership proof -> validity -> DSoD ->
        permission present -> permission condition holds.
        """
        self._require(caller, CallerKind.CSP)
        op = operation if isinstance(operation, Operation) else Operation.parse(operation)
        challenge_id, signature = challenge_proof
        with self._lock:
            now = self.now()
            writes: dict[str, Any] = {}
            expired_grant = None
            reason = None
            grant = self._grant(user_pubkey, role_id, now)
            if grant is None:
                self.challenges.discard(challenge_id)
                reason = Reason.NOT_ASSIGNED
            elif not self._proof_ok(user_pubkey, challenge_id, signature):
                reason = Reason.OWNERSHIP_FAILED
            elif now >= grant.expires_at:
                reason = Reason.ROLE_EXPIRED
                expired_grant = grant
            else:
                session = self.session(user_pubkey)
                if role_id not in session.active_roles:
                    if not check_dsod(set(session.active_roles), role_id, self.mer_sets()):
                        reason = Reason.DSOD_VIOLATION
                    else:
                        writes[f"session/{user_pubkey}"] = self._with_active(session, role_id, now)
                if reason is None:
                    matching = [p for p in hierarchy.effective_permissions(role_id, self.roles())
                                if p.allows(object_id, op)]
                    if not matching:
                        reason = Reason.PERMISSION_MISSING
                    elif not any(p.condition.evaluate(now) for p in matching):
                        reason = Reason.CONDITION_UNSATISFIED
            result = Result.ALLOWED if reason is None else Result.DENIED
            if reason is not None:
                writes = {}
            event = AccessRequestEvent(user_pubkey, _ts(now), object_id, role_id, op.full_name, result, reason)
            tx = self._commit(caller, "AppendReqHistoryEntity", "RequestAccessToRes", event.to_json(),
                              writes=writes)
            if expired_grant is not None:
                self._expire(user_pubkey, role_id, expired_grant)
            return Decision(result, reason, tx)

    def _proof_ok(self, user_pubkey: str, challenge_id: str, signature: bytes | str) -> bool:
        try:
            sig = bytes.fromhex(signature) if isinstance(signature, str) else bytes(signature)
        except ValueError:
            self.challenges.discard(challenge_id)
            return False
        try:
            outcome = self.challenges.consume(challenge_id, sig)
        except ChallengeError:
            return False
        return outcome.valid and outcome.challenge.user_pubkey == user_pubkey


def reconstruct_assignments(txs: Iterable[LedgerTransaction]) -> dict[str, dict[str, str]]:
    """Rebuild the assignment map from role-request and revocation events alone."""
    out: dict[str, dict[str, str]] = {}
    for tx in txs:
        p = tx.payload_json()
        op, args = p.get("op"), p.get("args") or {}
        if op == "RequestRoleForUser" and args.get("result") == Result.ALLOWED.value:
            out.setdefault(args["user_pubkey"], {})[args["required_role"]] = args["request_time"]
        elif op == "RoleRevocation":
            roles = out.get(args["user_pubkey"], {})
            roles.pop(args["role_id"], None)
            if not roles:
                out.pop(args["user_pubkey"], None)
    return out
