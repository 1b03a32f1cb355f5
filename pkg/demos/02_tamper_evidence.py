"""Tamper evidence: write a ledger file, flip one byte, and let the
verifier point at the damaged transaction.  Then rebuild state by replay.

    python demos/02_tamper_evidence.py
"""

import tempfile
from pathlib import Path

from chainrbac import ADMIN, Engine, Ledger, SimulatedClock, generate_keypair, load_fixture, utc, verify_file
from chainrbac.errors import ChainCorruptError

workdir = Path(tempfile.mkdtemp(prefix="chainrbac-demo-"))
path = workdir / "ledger.rbsl"
clock = SimulatedClock(utc(2021, 12, 22, 15, 0, 0))

with Ledger(path, clock) as ledger:
    engine = Engine(ledger, clock)
    load_fixture(engine)
    for i in range(20):
        engine.request_role_for_user(ADMIN, generate_keypair(f"user-{i}").public_key, "Student")
        clock.advance(5)
    state = ledger.state()
    print(f"wrote {len(ledger)} transactions to {path}")

print("clean file:", verify_file(path).to_json())

# Reopening replays every write set; the result matches the live state.
with Ledger(path, clock) as again:
    print("replayed state equals live state:", again.state() == state)

data = bytearray(path.read_bytes())
offset = len(data) * 2 // 3
data[offset] ^= 0x20
path.write_bytes(bytes(data))
report = verify_file(path)
print(f"\nflipped byte {offset}:", report.to_json())

try:
    Ledger(path, clock)
except ChainCorruptError as exc:
    print("opening for writing is refused:", exc)
