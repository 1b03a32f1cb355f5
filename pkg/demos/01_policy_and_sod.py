"""Policy walkthrough: load the online-test scenario, derive the role
hierarchy, compile an XML SoD document, then watch the engine refuse
conflicting grants and activations.

    python demos/01_policy_and_sod.py
"""

from chainrbac import (ADMIN, CSP, Engine, Ledger, SimulatedClock, generate_keypair, load_fixture, parse_sod_xml,
                       serialize_sod_xml, utc)

clock = SimulatedClock(utc(2021, 12, 22, 15, 0, 0))
engine = Engine(Ledger(clock=clock), clock)

children = load_fixture(engine)
print("derived hierarchy (role -> direct juniors):")
for role, juniors in children.items():
    print(f"  {role:12} -> {juniors or '-'}")

# The same MER semantics, written as an XML policy document.  <Role> may be
# left unclosed; it never has content.
xml = """<SoDPrinciple org="OnlineTest">
  <MERSet type="Static" cardinality="2">
    <Role value="Reviewer1">
    <Role value="Student">
  </MERSet>
</SoDPrinciple>"""
doc = parse_sod_xml(xml)
print("\nparsed policy:", [m.to_json() for m in doc.mer_sets])
print("canonical form:\n" + serialize_sod_xml(doc))

alice, bob = generate_keypair("alice"), generate_keypair("bob")

print("static separation: a Reviewer1 may not also be a Student")
print("  grant Reviewer1 ->", engine.request_role_for_user(ADMIN, alice.public_key, "Reviewer1").to_json())
print("  grant Student   ->", engine.request_role_for_user(ADMIN, alice.public_key, "Student").to_json())

print("\ndynamic separation: Reviewer1 and Editor may be held, not active together")
engine.request_role_for_user(ADMIN, bob.public_key, "Reviewer1")
engine.request_role_for_user(ADMIN, bob.public_key, "Editor")
print("  activate Reviewer1 ->", engine.activate_role(CSP, bob.public_key, "Reviewer1").to_json())
print("  activate Editor    ->", engine.activate_role(CSP, bob.public_key, "Editor").to_json())

print("\nconsistency report:", [v.to_json() for v in engine.policy_violations()] or "no violations")
print(f"ledger holds {len(engine.ledger)} transactions")
