"""Exception hierarchy shared by every layer of the package."""

from __future__ import annotations


class RbacError(Exception):
    """Base class for all errors raised by chainrbac."""


# ledger

class LedgerError(RbacError):
    pass


class EncodingError(LedgerError):
    """Payload or record is not a valid canonical encoding."""


class ClosedLedgerError(LedgerError):
    pass


class ChainCorruptError(LedgerError):
    def __init__(self, first_bad_seq: int, detail: str = ""):
        self.first_bad_seq = first_bad_seq
        self.detail = detail
        msg = f"ledger chain corrupt at seq {first_bad_seq}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


# policy / validation (HTTP 400)

class ValidationError(RbacError):
    pass


class ConditionParseError(ValidationError):
    pass


class InvalidPermissionError(ValidationError):
    pass


class SchemaViolationError(ValidationError):
    """A SoD principle document violates the MERSet element structure."""

    def __init__(self, message: str, element: str | None = None, line: int | None = None):
        self.element = element
        self.line = line
        where = []
        if element:
            where.append(f"element <{element}>")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class XmlMalformedError(SchemaViolationError):
    pass


class DuplicateRoleError(ValidationError):
    pass


class UnknownRoleError(ValidationError):
    def __init__(self, role_id: str):
        self.role_id = role_id
        super().__init__(f"unknown role {role_id!r}")


class CycleDetectedError(ValidationError):
    pass


# caller authorization (HTTP 401)

class UnauthorizedCallerError(RbacError):
    pass


# policy conflicts (HTTP 409)

class ConflictError(RbacError):
    pass


class AlreadyAssignedError(ConflictError):
    pass


class NotAssignedError(ConflictError):
    pass


class RoleExpiredError(ConflictError):
    pass


class SelfDelegationError(ConflictError):
    pass


class DelegatorLacksRoleError(ConflictError):
    pass


class SsodViolationError(ConflictError):
    def __init__(self, message: str, mer_set=None):
        self.mer_set = mer_set
        super().__init__(message)


# challenge-response

class ChallengeError(RbacError):
    pass


class UnknownChallengeError(ChallengeError):
    """Challenge id was never issued or has already been consumed."""


class ExpiredChallengeError(ChallengeError):
    pass
