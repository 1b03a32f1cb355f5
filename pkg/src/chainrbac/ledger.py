"""Append-only, hash-chained transaction log with a derived world state.

Every transaction carries a canonical JSON payload of the form::

    {"op": ..., "args": {...}, "result": {...}, "writes": {key: value | null}}

``writes`` is the transaction's write set; the world state is the fold of
all write sets in sequence order, so replaying the log reproduces it.

File layout: ``RBSL1`` magic, then one frame per transaction
(4-byte big-endian length + canonical record encoding).
"""

from __future__ import annotations

import collections
import hashlib
import json
import logging
import os
import struct
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator

from .clock import SystemClock
from .errors import ChainCorruptError, ClosedLedgerError, EncodingError

log = logging.getLogger(__name__)

MAGIC = b"RBSL1"
HASH_NAME = "sha256"
ZERO_HASH = bytes(32)
_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
_U32 = struct.Struct(">I")
_HEAD = struct.Struct(">Qq")  # seq, timestamp in microseconds


def canonical_json(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False,
                      allow_nan=False).encode("utf-8")


def _to_micros(ts: datetime) -> int:
    delta = ts - _EPOCH
    return (delta.days * 86400 + delta.seconds) * 1_000_000 + delta.microseconds


def _from_micros(us: int) -> datetime:
    return _EPOCH + timedelta(microseconds=us)


def _lp(data: bytes) -> bytes:
    return _U32.pack(len(data)) + data


def encode_body(seq: int, timestamp: datetime, invoker: str, method: str, payload: bytes) -> bytes:
    return (_HEAD.pack(seq, _to_micros(timestamp)) + _lp(invoker.encode("utf-8"))
            + _lp(method.encode("utf-8")) + _lp(payload))


def chain_hash(prev_hash: bytes, body: bytes) -> bytes:
    return hashlib.sha256(prev_hash + body).digest()


@dataclass(frozen=True)
class LedgerTransaction:
    seq: int
    timestamp: datetime
    invoker: str
    method: str
    payload: bytes
    prev_hash: bytes
    tx_hash: bytes

    def body(self) -> bytes:
        return encode_body(self.seq, self.timestamp, self.invoker, self.method, self.payload)

    def encode(self) -> bytes:
        return self.body() + self.prev_hash + self.tx_hash

    @classmethod
    def decode(cls, data: bytes) -> "LedgerTransaction":
        try:
            seq, us = _HEAD.unpack_from(data, 0)
            off = _HEAD.size
            fields = []
            for _ in range(3):
                (n,) = _U32.unpack_from(data, off)
                off += 4
                if off + n > len(data):
                    raise EncodingError("field overruns record")
                fields.append(data[off:off + n])
                off += n
            if len(data) - off != 64:
                raise EncodingError(f"record has {len(data) - off} trailing bytes, expected 64")
            prev_hash, tx_hash = data[off:off + 32], data[off + 32:off + 64]
            return cls(seq, _from_micros(us), fields[0].decode("utf-8"), fields[1].decode("utf-8"),
                       fields[2], prev_hash, tx_hash)
        except (struct.error, UnicodeDecodeError, OverflowError, ValueError) as exc:
            raise EncodingError(f"undecodable record: {exc}") from None

    def payload_json(self) -> dict:
        return json.loads(self.payload)

    def to_json(self) -> dict:
        return {
            "seq": self.seq,
            "timestamp": self.timestamp.isoformat(),
            "invoker": self.invoker,
            "method": self.method,
            "payload": self.payload_json(),
            "prev_hash": self.prev_hash.hex(),
            "tx_hash": self.tx_hash.hex(),
        }


@dataclass(frozen=True)
class VerificationReport:
    ok: bool
    length: int
    first_bad_seq: int | None = None
    head_hash: str = ZERO_HASH.hex()
    detail: str = ""

    def to_json(self) -> dict:
        return {"ok": self.ok, "length": self.length, "first_bad_seq": self.first_bad_seq,
                "head_hash": self.head_hash, "detail": self.detail}


def verify_transactions(txs: Iterable[LedgerTransaction]) -> VerificationReport:
    prev = ZERO_HASH
    n = 0
    for i, tx in enumerate(txs):
        if tx.seq != i:
            return VerificationReport(False, i, i, prev.hex(), f"seq {tx.seq} at position {i}")
        if tx.prev_hash != prev:
            return VerificationReport(False, i, i, prev.hex(), "prev_hash does not link")
        if chain_hash(prev, tx.body()) != tx.tx_hash:
            return VerificationReport(False, i, i, prev.hex(), "tx_hash mismatch")
        prev = tx.tx_hash
        n = i + 1
    return VerificationReport(True, n, None, prev.hex())


def parse_payload(payload: bytes) -> dict:
    """Decode and validate a payload; it must be canonical JSON of an object."""
    try:
        obj = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as exc:
        raise EncodingError(f"payload is not JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise EncodingError("payload must be a JSON object")
    if canonical_json(obj) != payload:
        raise EncodingError("payload is not in canonical form")
    writes = obj.get("writes", {})
    if not isinstance(writes, dict):
        raise EncodingError("payload writes must be an object")
    return obj


def apply_writes(state: dict[str, bytes], payload: dict) -> None:
    for key, value in payload.get("writes", {}).items():
        if value is None:
            state.pop(key, None)
        else:
            state[key] = canonical_json(value)


def fold_state(txs: Iterable[LedgerTransaction]) -> dict[str, bytes]:
    state: dict[str, bytes] = {}
    for tx in txs:
        apply_writes(state, parse_payload(tx.payload))
    return state


# -- file framing ---------------------------------------------------------

@dataclass
class _Scan:
    txs: list[LedgerTransaction]
    bad_seq: int | None = None
    detail: str = ""
    torn_offset: int | None = None  # start of a torn trailing frame


def _implied_record_length(buf: bytes) -> int | None:
    """Record length implied by the inner field prefixes, or None if buf is too short to tell."""
    off = _HEAD.size
    for _ in range(3):
        if off + 4 > len(buf):
            return None
        (n,) = _U32.unpack_from(buf, off)
        off += 4 + n
    return off + 64


def _scan(data: bytes) -> _Scan:
    if data[:len(MAGIC)] != MAGIC:
        return _Scan([], 0, "bad magic header")
    txs: list[LedgerTransaction] = []
    off = len(MAGIC)
    while off < len(data):
        seq = len(txs)
        rest = len(data) - off
        if rest < 4:
            return _Scan(txs, seq, "truncated frame header", off)
        (n,) = _U32.unpack_from(data, off)
        if n > rest - 4:
            # torn append only if the inner structure also runs past EOF
            implied = _implied_record_length(data[off + 4:])
            if implied is not None and implied <= rest - 4:
                return _Scan(txs, seq, "frame length does not match record")
            return _Scan(txs, seq, "truncated trailing record", off)
        try:
            txs.append(LedgerTransaction.decode(data[off + 4:off + 4 + n]))
        except EncodingError as exc:
            return _Scan(txs, seq, str(exc))
        off += 4 + n
    return _Scan(txs)


def verify_file(path: str | os.PathLike) -> VerificationReport:
    """Verify a ledger file without opening it for writing."""
    scan = _scan(Path(path).read_bytes())
    report = verify_transactions(scan.txs)
    if not report.ok:
        return report
    if scan.bad_seq is not None:
        return VerificationReport(False, len(scan.txs), scan.bad_seq, report.head_hash, scan.detail)
    return report


def read_transactions(path: str | os.PathLike) -> list[LedgerTransaction]:
    scan = _scan(Path(path).read_bytes())
    if scan.bad_seq is not None:
        raise ChainCorruptError(scan.bad_seq, scan.detail)
    return scan.txs


# -- the ledger -----------------------------------------------------------

class Ledger:
    """Hash-chained log plus world state, with a single serialization point.

    With ``commit_latency == 0`` every append is written through before it
    returns.  With ``commit_latency > 0`` each transaction becomes durable
    ``commit_latency`` seconds after its append (a pipelined ordering
    service: rounds overlap, order is preserved); a committer thread writes
    whatever is due as one block.  Callers needing durability use
    :meth:`wait_committed`.  Readers only ever see the committed prefix.
    """

    def __init__(self, path: str | os.PathLike | None = None, clock=None, *,
                 commit_latency: float = 0.0, fsync: bool = False):
        self.path = Path(path) if path is not None else None
        self.clock = clock or SystemClock()
        self.commit_latency = commit_latency
        self.fsync = fsync
        self._lock = threading.RLock()
        self._committed_cv = threading.Condition(self._lock)
        self._txs: list[LedgerTransaction] = []
        self._state: dict[str, bytes] = {}
        self._committed = 0
        self._written = 0
        self._closed = False
        self._listeners: list[Callable[[int], None]] = []
        self._file = None
        if self.path is not None:
            self._open_file()
        self._committer = None
        self._due: collections.deque[float] = collections.deque()
        if commit_latency > 0:
            self._pending_cv = threading.Condition(self._lock)
            self._committer = threading.Thread(target=self._commit_loop, name="ledger-committer", daemon=True)
            self._committer.start()

    def _open_file(self) -> None:
        if self.path.exists() and self.path.stat().st_size > 0:
            data = self.path.read_bytes()
            scan = _scan(data)
            if scan.bad_seq is not None and scan.torn_offset is None:
                raise ChainCorruptError(scan.bad_seq, scan.detail)
            report = verify_transactions(scan.txs)
            if not report.ok:
                raise ChainCorruptError(report.first_bad_seq, report.detail)
            if scan.torn_offset is not None:
                log.warning("ledger %s: truncating torn trailing record at seq %d (offset %d)",
                            self.path, scan.bad_seq, scan.torn_offset)
                with open(self.path, "r+b") as fh:
                    fh.truncate(scan.torn_offset)
            self._txs = scan.txs
            self._state = fold_state(scan.txs)
            self._committed = self._written = len(scan.txs)
            self._file = open(self.path, "ab")
        else:
            self._file = open(self.path, "wb")
            self._file.write(MAGIC)
            self._sync()

    def _sync(self) -> None:
        self._file.flush()
        if self.fsync:
            os.fsync(self._file.fileno())

    # -- writing ----------------------------------------------------------

    def append_tx(self, invoker: str, method: str, payload: bytes | dict) -> int:
        """Append one transaction, apply its write set, return its seq."""
        if isinstance(payload, dict):
            payload = canonical_json(payload)
        obj = parse_payload(payload)
        with self._lock:
            if self._closed:
                raise ClosedLedgerError("ledger is closed")
            seq = len(self._txs)
            prev = self._txs[-1].tx_hash if self._txs else ZERO_HASH
            ts = self.clock.now()
            body = encode_body(seq, ts, invoker, method, payload)
            tx = LedgerTransaction(seq, ts, invoker, method, payload, prev, chain_hash(prev, body))
            self._txs.append(tx)
            apply_writes(self._state, obj)
            if self._committer is None:
                self._write_through(len(self._txs))
            else:
                self._due.append(time.monotonic() + self.commit_latency)
                self._pending_cv.notify()
            return seq

    def _write_through(self, upto: int) -> None:
        if self._file is not None:
            self._file.write(b"".join(_lp(tx.encode()) for tx in self._txs[self._written:upto]))
            self._sync()
        self._written = upto
        self._mark_committed(upto)

    def _mark_committed(self, upto: int) -> None:
        self._committed = upto
        self._committed_cv.notify_all()
        for fn in list(self._listeners):
            fn(upto)

    def _commit_loop(self) -> None:
        while True:
            with self._lock:
                while not self._due and not self._closed:
                    self._pending_cv.wait()
                if not self._due and self._closed:
                    return
                first_due = self._due[0]
            delay = first_due - time.monotonic()
            if delay > 0:
                time.sleep(delay)
            with self._lock:
                now = time.monotonic()
                n = 0
                while self._due and (self._due[0] <= now or self._closed):
                    self._due.popleft()
                    n += 1
                upto = self._written + n
                block = self._txs[self._written:upto]
            # only this thread touches the file, so appends proceed during the sync
            if self._file is not None:
                self._file.write(b"".join(_lp(tx.encode()) for tx in block))
                self._sync()
            with self._lock:
                self._written = upto
                self._mark_committed(upto)

    def wait_committed(self, seq: int, timeout: float | None = None) -> bool:
        with self._lock:
            return self._committed_cv.wait_for(lambda: self._committed > seq, timeout)

    def flush(self, timeout: float | None = None) -> None:
        with self._lock:
            target = len(self._txs)
        if target:
            self.wait_committed(target - 1, timeout)

    def add_commit_listener(self, fn: Callable[[int], None]) -> None:
        """``fn(committed_count)`` is called (under the ledger lock) after every block."""
        with self._lock:
            self._listeners.append(fn)

    def remove_commit_listener(self, fn: Callable[[int], None]) -> None:
        with self._lock:
            if fn in self._listeners:
                self._listeners.remove(fn)

    def close(self) -> None:
        if self._closed:
            return
        self.flush()
        with self._lock:
            self._closed = True
            if self._committer is not None:
                self._pending_cv.notify_all()
        if self._committer is not None:
            self._committer.join()
        if self._file is not None:
            self._file.close()
            self._file = None

    @property
    def closed(self) -> bool:
        return self._closed

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- reading ----------------------------------------------------------

    def __len__(self) -> int:
        with self._lock:
            return self._committed

    @property
    def committed_count(self) -> int:
        return len(self)

    def transactions(self) -> list[LedgerTransaction]:
        with self._lock:
            return self._txs[:self._committed]

    def __iter__(self) -> Iterator[LedgerTransaction]:
        return iter(self.transactions())

    def get(self, key: str) -> bytes | None:
        """Live world-state value (includes executed but not yet committed writes)."""
        with self._lock:
            return self._state.get(key)

    def get_json(self, key: str) -> Any:
        raw = self.get(key)
        return None if raw is None else json.loads(raw)

    def keys(self, prefix: str = "") -> list[str]:
        with self._lock:
            return sorted(k for k in self._state if k.startswith(prefix))

    def state(self) -> dict[str, bytes]:
        with self._lock:
            return dict(self._state)

    def verify_chain(self) -> VerificationReport:
        return verify_transactions(self.transactions())

    def replay(self) -> dict[str, bytes]:
        txs = self.transactions()
        report = verify_transactions(txs)
        if not report.ok:
            raise ChainCorruptError(report.first_bad_seq, report.detail)
        return fold_state(txs)

    def query_history(self, *, invoker: str | None = None, method: str | None = None,
                      start: datetime | None = None, end: datetime | None = None,
                      subject: str | None = None) -> list[LedgerTransaction]:
        """Committed transactions matching every supplied filter, seq-ascending.

        ``start`` is inclusive and ``end`` exclusive.  ``subject`` matches the
        invoker ``user:<key>`` or any ``*pubkey`` field of the payload args.
        """
        out = []
        for tx in self.transactions():
            if invoker is not None and tx.invoker != invoker:
                continue
            if method is not None and tx.method != method:
                continue
            if start is not None and tx.timestamp < start:
                continue
            if end is not None and tx.timestamp >= end:
                continue
            if subject is not None and not _mentions(tx, subject):
                continue
            out.append(tx)
        return out


def _pubkey_values(obj: Any) -> Iterator[str]:
    if isinstance(obj, dict):
        for k, v in obj.items():
            if isinstance(v, str) and k.endswith("pubkey"):
                yield v
            else:
                yield from _pubkey_values(v)
    elif isinstance(obj, list):
        for v in obj:
            yield from _pubkey_values(v)


def _mentions(tx: LedgerTransaction, subject: str) -> bool:
    if tx.invoker == f"user:{subject}":
        return True
    return subject in _pubkey_values(json.loads(tx.payload).get("args", {}))
