"""The service end to end: an administrator configures policy over HTTP, a
student proves key ownership with a signed nonce, and time (simulated)
moves past the test window and the role's validity.

    python demos/03_http_access_flow.py
"""

import tempfile
from pathlib import Path

from chainrbac import generate_keypair
from chainrbac.client import RbacClient
from chainrbac.service import ServiceConfig, ServiceThread

tmp = Path(tempfile.mkdtemp(prefix="chainrbac-demo-"))
config = ServiceConfig(port=0, ledger_path=str(tmp / "ledger.rbsl"), clock_mode="simulated",
                       admin_token="admin-demo", csp_token="csp-demo")

with ServiceThread(config) as svc, RbacClient(svc.base_url, "admin-demo", "csp-demo") as api:
    print("service at", svc.base_url)
    api.load_fixture()

    student = generate_keypair()  # generated locally; only the public key is shared
    reviewer, stand_in = generate_keypair(), generate_keypair()
    print("grant Student   :", api.grant(student.public_key, "Student"))
    print("grant Reviewer1 :", api.grant(reviewer.public_key, "Reviewer1"))

    api.advance_clock(10 * 60)
    print("\n15:10 student writes Answer1  :", api.access(student, "Student", "Answer1-DB", "Write"))

    # A captured (challenge, signature) pair is worthless a second time.
    ch = api.challenge(student.public_key)
    proof = dict(pubkey=student.public_key, role="Student", object="Problem1-DB", op="Read",
                 challenge_id=ch["challenge_id"], signature=student.sign(bytes.fromhex(ch["nonce"])).hex())
    print("first use of a proof          :", api.decide(**proof))
    print("replay of the same proof      :", api.decide(**proof))

    impostor = generate_keypair()
    ch = api.challenge(student.public_key)
    print("impostor signs the challenge  :", api.decide(
        pubkey=student.public_key, role="Student", object="Problem1-DB", op="Read",
        challenge_id=ch["challenge_id"], signature=impostor.sign(bytes.fromhex(ch["nonce"])).hex()))

    print("\nthe reviewer falls ill and delegates until 15:40")
    api.delegate(reviewer.public_key, stand_in.public_key, "Reviewer1", "2021-12-22 15:40:00")
    print("stand-in writes scores        :", api.access(stand_in, "Reviewer1", "Score-DB", "Write"))

    api.advance_clock(30 * 60)
    print("\n15:40 student writes Answer1  :", api.access(student, "Student", "Answer1-DB", "Write"))
    print("15:40 stand-in writes scores  :", api.access(stand_in, "Reviewer1", "Score-DB", "Write"))
    api.advance_clock(25 * 60)
    print("16:05 reviewer writes scores  :", api.access(reviewer, "Reviewer1", "Score-DB", "Write"))

    print("\naudit trail for the student:")
    for tx in api.history(pubkey=student.public_key):
        args = tx["payload"]["args"]
        print(f"  #{tx['seq']:<3} {tx['timestamp']}  {tx['method']:<28} "
              f"{args.get('result', '')} {args.get('reason') or ''}")
    print("ledger check:", api.verify_ledger())
