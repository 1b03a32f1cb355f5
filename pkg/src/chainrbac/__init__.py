"""Tamper-evident role-based access control.

Core library: :class:`Ledger` (hash-chained log and world state),
:class:`Engine` (policy decisions), SoD checks, hierarchy normalization and
the XML policy language.  The HTTP service lives in :mod:`chainrbac.service`,
the load harness in :mod:`chainrbac.bench`.
"""

from .auth import ChallengeStore, KeyPair, generate_keypair, sign_challenge, verify_signature
from .clock import SimulatedClock, SystemClock, format_ts, parse_ts, utc
from .engine import ADMIN, CSP, Caller, Decision, Engine, reconstruct_assignments
from .errors import RbacError
from .fixtures import load_scenario, load_fixture
from .hierarchy import effective_permissions, normalize_role_hierarchy, transitive_reduction
from .ledger import Ledger, LedgerTransaction, VerificationReport, verify_file
from .model import (Condition, MerKind, MerSet, Operation, Permission, Reason, Result, Role,
                    decode_condition, encode_condition)
from .policy_lang import parse_sod_xml, serialize_sod_xml
from .sod import assert_policy_consistency, check_dsod, check_ssod

__version__ = "0.1.0"

__all__ = [
    "ADMIN", "CSP", "Caller", "ChallengeStore", "Condition", "Decision", "Engine", "KeyPair", "Ledger",
    "LedgerTransaction", "MerKind", "MerSet", "Operation", "Permission", "RbacError", "Reason", "Result", "Role",
    "SimulatedClock", "SystemClock", "VerificationReport", "assert_policy_consistency", "check_dsod",
    "check_ssod", "decode_condition", "effective_permissions", "encode_condition", "format_ts",
    "generate_keypair", "load_scenario", "load_fixture", "normalize_role_hierarchy", "parse_sod_xml", "parse_ts",
    "reconstruct_assignments", "serialize_sod_xml", "sign_challenge", "transitive_reduction", "utc",
    "verify_file", "verify_signature",
]
