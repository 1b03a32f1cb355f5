"""Ed25519 key pairs and single-use nonce challenges proving role ownership.

The user's hex-encoded public key is also their identifier.  A challenge is
consumed by the first verification attempt, whatever its outcome.
"""

from __future__ import annotations

import hashlib
import secrets
import threading
from dataclasses import dataclass
from datetime import datetime, timedelta

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey

from .clock import SystemClock
from .errors import ExpiredChallengeError, UnknownChallengeError

SIGNATURE_SCHEME = "ed25519"
DEFAULT_TTL = 60.0
NONCE_BYTES = 32

_RAW = dict(encoding=serialization.Encoding.Raw, format=serialization.PublicFormat.Raw)


@dataclass(frozen=True)
class KeyPair:
    private_key: bytes  # 32-byte Ed25519 seed; never leaves the client
    public_key: str  # 64 hex chars

    def __repr__(self) -> str:
        return f"KeyPair(public_key={self.public_key!r})"

    def sign(self, message: bytes) -> bytes:
        return sign_challenge(self.private_key, message)


def public_key_of(private_key: bytes) -> str:
    return Ed25519PrivateKey.from_private_bytes(private_key).public_key().public_bytes(**_RAW).hex()


def generate_keypair(seed: bytes | str | None = None) -> KeyPair:
    """Fresh random pair, or a deterministic one derived from ``seed``."""
    if seed is None:
        raw = secrets.token_bytes(32)
    else:
        if isinstance(seed, str):
            seed = seed.encode("utf-8")
        raw = seed if len(seed) == 32 else hashlib.sha256(seed).digest()
    return KeyPair(raw, public_key_of(raw))


def sign_challenge(private_key: bytes, nonce: bytes) -> bytes:
    return Ed25519PrivateKey.from_private_bytes(private_key).sign(nonce)


def verify_signature(public_key_hex: str, message: bytes, signature: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(bytes.fromhex(public_key_hex)).verify(signature, message)
        return True
    except (InvalidSignature, ValueError, TypeError):
        return False


@dataclass(frozen=True)
class Challenge:
    challenge_id: str
    user_pubkey: str
    nonce: bytes
    issued_at: datetime
    ttl: float

    @property
    def expires_at(self) -> datetime:
        return self.issued_at + timedelta(seconds=self.ttl)

    def to_json(self) -> dict:
        return {"challenge_id": self.challenge_id, "nonce": self.nonce.hex()}


@dataclass(frozen=True)
class ChallengeOutcome:
    valid: bool
    challenge: Challenge


class ChallengeStore:
    """Pending challenges.  ``pop`` under a lock makes consumption atomic."""

    def __init__(self, clock=None, ttl: float = DEFAULT_TTL):
        self.clock = clock or SystemClock()
        self.ttl = ttl
        self._pending: dict[str, Challenge] = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._pending)

    def issue_challenge(self, user_pubkey: str) -> Challenge:
        now = self.clock.now()
        ch = Challenge(secrets.token_hex(16), user_pubkey, secrets.token_bytes(NONCE_BYTES), now, self.ttl)
        with self._lock:
            self._purge(now)
            self._pending[ch.challenge_id] = ch
        return ch

    def get(self, challenge_id: str) -> Challenge | None:
        with self._lock:
            ch = self._pending.get(challenge_id)
        if ch is not None and self.clock.now() >= ch.expires_at:
            return None
        return ch

    def discard(self, challenge_id: str) -> None:
        with self._lock:
            self._pending.pop(challenge_id, None)

    def consume(self, challenge_id: str, signature: bytes) -> ChallengeOutcome:
        """Consume the challenge and check the signature over its nonce."""
        with self._lock:
            ch = self._pending.pop(challenge_id, None)
        if ch is None:
            raise UnknownChallengeError(f"challenge {challenge_id!r} unknown or already used")
        if self.clock.now() >= ch.expires_at:
            raise ExpiredChallengeError(f"challenge {challenge_id!r} expired")
        return ChallengeOutcome(verify_signature(ch.user_pubkey, ch.nonce, signature), ch)

    def verify_response(self, challenge_id: str, signature: bytes) -> bool:
        return self.consume(challenge_id, signature).valid

    def _purge(self, now: datetime) -> None:
        # expired entries linger one extra ttl so late replies get ExpiredChallengeError
        grace = timedelta(seconds=self.ttl)
        for cid in [c for c, ch in self._pending.items() if now >= ch.expires_at + grace]:
            del self._pending[cid]
