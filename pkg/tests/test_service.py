import json

import httpx
import pytest

from chainrbac.auth import generate_keypair, sign_challenge
from chainrbac.client import RbacClient, TransportError
from chainrbac.errors import ChainCorruptError
from chainrbac.ledger import verify_file
from chainrbac.service import ServiceConfig, ServiceThread, create_app


def make_config(tmp_path, **kw):
    kw.setdefault("clock_mode", "simulated")
    return ServiceConfig(host="127.0.0.1", port=0, ledger_path=str(tmp_path / "ledger.rbsl"),
                         admin_token="admin-secret", csp_token="csp-secret", **kw)


@pytest.fixture
def service(tmp_path):
    with ServiceThread(make_config(tmp_path)) as svc:
        yield svc


@pytest.fixture
def client(service):
    with RbacClient(service.base_url, "admin-secret", "csp-secret") as c:
        yield c


@pytest.fixture
def loaded(client):
    client.load_fixture()
    return client


def test_healthz(client):
    assert client.healthz()["result"] == "ok"


def test_fixture_over_http(loaded):
    hist = loaded.history(method="NormalizeRoleHierarchy")
    assert hist[-1]["payload"]["result"]["TopReviewer"] == ["Reviewer1", "Reviewer2"]


def test_access_flow_and_replay(loaded, service):
    k = generate_keypair("student")
    assert loaded.grant(k.public_key, "Student")["result"] == "Allowed"
    loaded.advance_clock(600)
    ch = loaded.challenge(k.public_key)
    assert set(ch) >= {"challenge_id", "nonce"}
    sig = sign_challenge(k.private_key, bytes.fromhex(ch["nonce"])).hex()
    body = dict(pubkey=k.public_key, role="Student", object="Answer1-DB", op="Write",
                challenge_id=ch["challenge_id"], signature=sig)
    assert loaded.decide(**body)["result"] == "Allowed"
    again = loaded.decide(**body)
    assert (again["result"], again["reason"]) == ("Denied", "OwnershipFailed")


def test_wrong_key_is_200_denied(loaded):
    k, other = generate_keypair("a"), generate_keypair("b")
    loaded.grant(k.public_key, "Reviewer1")
    ch = loaded.challenge(k.public_key)
    sig = sign_challenge(other.private_key, bytes.fromhex(ch["nonce"])).hex()
    d = loaded.decide(pubkey=k.public_key, role="Reviewer1", object="Problem1-DB", op="Read",
                      challenge_id=ch["challenge_id"], signature=sig)
    assert (d["result"], d["reason"]) == ("Denied", "OwnershipFailed")


def test_status_mapping(loaded, service):
    url = service.base_url
    r = httpx.post(f"{url}/admin/roles", json={"role_id": "X", "permissions": [], "valid_period": 5})
    assert r.status_code == 401
    r = httpx.post(f"{url}/admin/roles", headers={"Authorization": "Bearer csp-secret"},
                   json={"role_id": "X", "permissions": [], "valid_period": 5})
    assert r.status_code == 401
    r = httpx.post(f"{url}/admin/roles", headers={"Authorization": "Bearer admin-secret"},
                   json={"role_id": "X", "permissions": [], "valid_period": 0})
    assert r.status_code == 400
    k = generate_keypair("c")
    loaded.grant(k.public_key, "Editor")
    with pytest.raises(TransportError) as exc:
        loaded.grant(k.public_key, "Editor")
    assert exc.value.status == 409 and exc.value.body["error"] == "AlreadyAssignedError"
    assert "/admin/users/" in exc.value.endpoint
    with pytest.raises(TransportError) as exc:
        loaded.activate(k.public_key, "Student")
    assert exc.value.status == 409


def test_malformed_decide_is_recorded(service, loaded):
    before = loaded.healthz()["length"]
    r = httpx.post(f"{service.base_url}/access/decide", content=b"{not json")
    assert r.status_code == 400 and r.json()["reason"] == "MalformedRequest"
    assert loaded.healthz()["length"] == before + 1


def test_each_decide_one_event_and_gets_do_not_append(loaded):
    k = generate_keypair("d")
    loaded.grant(k.public_key, "Reviewer1")
    n0 = loaded.healthz()["length"]
    for _ in range(3):
        loaded.access(k, "Reviewer1", "Problem1-DB", "Read")
    assert loaded.healthz()["length"] == n0 + 3
    loaded.history()
    loaded.verify_ledger()
    assert loaded.healthz()["length"] == n0 + 3
    hist = loaded.history(method="AppendReqHistoryEntity", pubkey=k.public_key)
    assert len(hist) == 3


def test_sod_xml_endpoint(client):
    for r in ("Reviewer", "Student", "Editor"):
        client.set_role({"role_id": r, "permissions": [{"object_id": r, "operations": ["R"]}], "valid_period": 60})
    xml = ('<SoDPrinciple org="OnlineTest"><MERSet type="Static" cardinality="2"><Role value="Reviewer"/>'
           '<Role value="Student"/></MERSet></SoDPrinciple>')
    assert client.set_sod(xml=xml)["indices"] == [0]
    with pytest.raises(TransportError) as exc:
        client.set_sod(xml=xml.replace('cardinality="2"', 'cardinality="1"'))
    assert exc.value.status == 400


def test_testclock_only_when_simulated(tmp_path):
    with ServiceThread(make_config(tmp_path, clock_mode="real")) as svc:
        r = httpx.post(f"{svc.base_url}/testclock/advance", json={"seconds": 5},
                       headers={"Authorization": "Bearer admin-secret"})
        assert r.status_code == 404


def test_restart_replays_identical_state(tmp_path):
    cfg = make_config(tmp_path)
    with ServiceThread(cfg) as svc:
        with RbacClient(svc.base_url, "admin-secret", "csp-secret") as c:
            c.load_fixture()
            c.grant(generate_keypair("e").public_key, "Student")
        state = dict(svc.state.ledger.state())
    with ServiceThread(cfg) as svc:
        assert svc.state.ledger.state() == state
        assert svc.state.ledger.verify_chain().ok


def test_corrupt_ledger_refuses_to_start(tmp_path):
    cfg = make_config(tmp_path)
    with ServiceThread(cfg) as svc:
        with RbacClient(svc.base_url, "admin-secret", "csp-secret") as c:
            c.load_fixture()
    path = tmp_path / "ledger.rbsl"
    data = bytearray(path.read_bytes())
    data[len(data) // 2] ^= 0x01
    path.write_bytes(bytes(data))
    bad = verify_file(path).first_bad_seq
    with pytest.raises(ChainCorruptError) as exc:
        create_app(cfg)
    assert exc.value.first_bad_seq == bad and str(bad) in str(exc.value)


def test_group_commit_service(tmp_path):
    with ServiceThread(make_config(tmp_path, commit_latency=0.02)) as svc:
        with RbacClient(svc.base_url, "admin-secret", "csp-secret") as c:
            c.load_fixture()
            k = generate_keypair("f")
            assert c.grant(k.public_key, "Reviewer1")["result"] == "Allowed"
            assert c.access(k, "Reviewer1", "Problem1-DB", "R")["result"] == "Allowed"
            # the reply only arrives after the event is durable
            assert c.history(method="AppendReqHistoryEntity")[-1]["payload"]["args"]["result"] == "Allowed"


def test_config_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"port": 9999, "clock_mode": "simulated", "admin_token": "x", "csp_token": "y",
                             "ledger_path": str(tmp_path / "l")}))
    cfg = ServiceConfig.from_file(p)
    assert cfg.port == 9999 and cfg.clock_mode == "simulated"
