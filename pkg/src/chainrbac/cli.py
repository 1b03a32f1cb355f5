"""Command-line client, administrator tool and benchmark runner.

Connection settings come from ``--url``/``--admin-token``/``--csp-token`` or
the ``CHAINRBAC_URL``/``CHAINRBAC_ADMIN_TOKEN``/``CHAINRBAC_CSP_TOKEN``
environment variables.  Results are printed as JSON on stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import httpx

from .auth import KeyPair, generate_keypair, public_key_of
from .bench import BENCH_COMMIT_LATENCY, bench_sod, bench_users
from .client import RbacClient, TransportError
from .errors import RbacError
from .fixtures import read_fixture
from .ledger import verify_file
from .service import ServiceConfig, ServiceProcess, serve

DEFAULT_URL = "http://127.0.0.1:8080"


def _print(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _client(args) -> RbacClient:
    return RbacClient(args.url, args.admin_token, args.csp_token)


def _read_key(path: str) -> tuple[bytes, str]:
    data = json.loads(Path(path).read_text())
    priv = bytes.fromhex(data["private_key"])
    pub = public_key_of(priv)
    if data.get("public_key", pub) != pub:
        raise RbacError(f"{path}: public_key does not match private_key")
    return priv, pub


# -- commands -------------------------------------------------------------

def cmd_keygen(args) -> int:
    kp = generate_keypair(args.seed)
    record = {"public_key": kp.public_key, "private_key": kp.private_key.hex()}
    if args.out:
        fd = os.open(args.out, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
        with os.fdopen(fd, "w") as fh:
            json.dump(record, fh)
        _print({"public_key": kp.public_key, "written": args.out})
    else:
        _print(record)
    return 0


def cmd_serve(args) -> int:
    config = ServiceConfig.from_file(args.config) if args.config else ServiceConfig()
    for name in ("host", "port", "ledger_path", "clock_mode", "commit_latency"):
        value = getattr(args, name)
        if value is not None:
            setattr(config, name, value)
    if args.admin_token:
        config.admin_token = args.admin_token
    if args.csp_token:
        config.csp_token = args.csp_token
    config.__post_init__()
    serve(config)
    return 0


def cmd_role_set(args) -> int:
    data = json.loads(Path(args.file).read_text())
    # a single role, a list of roles, or a fixture-style {"roles": [...]}
    if isinstance(data, dict):
        data = data.get("roles", [data])
    with _client(args) as c:
        _print([c.set_role(r) for r in data])
    return 0


def cmd_sod_set(args) -> int:
    text = Path(args.file).read_text()
    with _client(args) as c:
        if args.file.endswith(".xml") or text.lstrip().startswith("<"):
            _print(c.set_sod(xml=text))
        else:
            _print(c.set_sod(json.loads(text)))
    return 0


def cmd_normalize(args) -> int:
    with _client(args) as c:
        _print(c.normalize())
    return 0


def cmd_revoke(args) -> int:
    with _client(args) as c:
        _print(c.revoke(args.pubkey, args.role, as_csp=args.as_csp))
    return 0


def cmd_delegate(args) -> int:
    with _client(args) as c:
        _print(c.delegate(args.delegator, args.delegate, args.role, args.expires_at))
    return 0


def cmd_grant(args) -> int:
    with _client(args) as c:
        _print(c.grant(args.pubkey, args.role))
    return 0


def cmd_activate(args) -> int:
    with _client(args) as c:
        _print(c.activate(args.pubkey, args.role))
    return 0


def cmd_access(args) -> int:
    priv, pub = _read_key(args.key)
    with _client(args) as c:
        decision = c.access(KeyPair(priv, pub), args.role, args.object, args.op)
    _print(decision)
    return 0 if decision.get("result") == "Allowed" else 3


def cmd_history(args) -> int:
    with _client(args) as c:
        _print(c.history(invoker=args.invoker, method=args.method, start=args.start, end=args.end,
                         pubkey=args.pubkey))
    return 0


def cmd_verify(args) -> int:
    if args.file:
        report = verify_file(args.file).to_json()
    else:
        with _client(args) as c:
            report = c.verify_ledger()
    _print(report)
    if not report["ok"]:
        print(f"ledger corrupt: first bad seq {report['first_bad_seq']}", file=sys.stderr)
        return 1
    return 0


def cmd_load_fixture(args) -> int:
    fixture = read_fixture(args.file)
    with _client(args) as c:
        _print({"children": c.load_fixture(fixture)})
    return 0


def cmd_clock_advance(args) -> int:
    with _client(args) as c:
        _print(c.advance_clock(args.seconds))
    return 0


def _run_bench(args, url: str, admin: str, csp: str):
    if args.which == "users":
        return bench_users(url, admin, class_counts=range(1, args.classes + 1), repetitions=args.repetitions)
    return bench_sod(url, admin, csp, total_users=args.total_users, repetitions=args.repetitions)


def cmd_bench(args) -> int:
    if args.url_given:
        report = _run_bench(args, args.url, args.admin_token, args.csp_token)
    else:
        with tempfile.TemporaryDirectory(prefix="chainrbac-bench-") as tmp:
            config = ServiceConfig(port=0, ledger_path=str(Path(tmp) / "bench.rbsl"),
                                   commit_latency=args.commit_latency)
            with ServiceProcess(config) as svc:
                with RbacClient(svc.base_url, config.admin_token, config.csp_token) as c:
                    c.load_fixture()
                report = _run_bench(args, svc.base_url, config.admin_token, config.csp_token)
            report.metadata["commit_latency_s"] = args.commit_latency
    print(report.table())
    if args.json:
        Path(args.json).write_text(report.dumps())
    return 0


# -- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chainrbac", description=__doc__.split("\n")[0])
    p.add_argument("--url", default=None, help=f"service URL (default $CHAINRBAC_URL or {DEFAULT_URL})")
    p.add_argument("--admin-token", default=os.environ.get("CHAINRBAC_ADMIN_TOKEN"))
    p.add_argument("--csp-token", default=os.environ.get("CHAINRBAC_CSP_TOKEN"))
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("keygen", help="generate an Ed25519 key pair locally (no network)")
    s.add_argument("--seed", help="derive the key deterministically from this string")
    s.add_argument("--out", help="write the pair to this file (mode 0600)")
    s.set_defaults(fn=cmd_keygen)

    s = sub.add_parser("serve", help="run the service in the foreground")
    s.add_argument("--config", help="JSON config file")
    s.add_argument("--host")
    s.add_argument("--port", type=int)
    s.add_argument("--ledger", dest="ledger_path")
    s.add_argument("--clock", dest="clock_mode", choices=["real", "simulated"])
    s.add_argument("--commit-latency", type=float, help="seconds from append to durable commit")
    s.set_defaults(fn=cmd_serve)

    admin = sub.add_parser("admin", help="data administrator operations").add_subparsers(dest="admin_cmd",
                                                                                      required=True)
    s = admin.add_parser("role-set", help="store role configurations from a JSON file")
    s.add_argument("file")
    s.set_defaults(fn=cmd_role_set)
    s = admin.add_parser("sod-set", help="store MER sets from an XML document or JSON array")
    s.add_argument("file")
    s.set_defaults(fn=cmd_sod_set)
    s = admin.add_parser("normalize", help="regenerate the role hierarchy")
    s.set_defaults(fn=cmd_normalize)
    s = admin.add_parser("revoke")
    s.add_argument("pubkey")
    s.add_argument("role")
    s.add_argument("--as-csp", action="store_true", help="authenticate with the CSP token")
    s.set_defaults(fn=cmd_revoke)
    s = admin.add_parser("delegate")
    s.add_argument("delegator")
    s.add_argument("delegate")
    s.add_argument("role")
    s.add_argument("expires_at", help='"YYYY-MM-DD HH:MM:SS" UTC')
    s.set_defaults(fn=cmd_delegate)
    s = admin.add_parser("grant", help="request a role for a user")
    s.add_argument("pubkey")
    s.add_argument("role")
    s.set_defaults(fn=cmd_grant)

    s = sub.add_parser("activate", help="activate a role in a user's session (CSP)")
    s.add_argument("pubkey")
    s.add_argument("role")
    s.set_defaults(fn=cmd_activate)

    s = sub.add_parser("access", help="challenge, sign locally, and request access; exit 3 when denied")
    s.add_argument("--key", required=True, help="key file written by keygen --out")
    s.add_argument("role")
    s.add_argument("object")
    s.add_argument("op", help="Read/Write or R/W")
    s.set_defaults(fn=cmd_access)

    s = sub.add_parser("history")
    s.add_argument("--invoker")
    s.add_argument("--method")
    s.add_argument("--start")
    s.add_argument("--end")
    s.add_argument("--pubkey")
    s.set_defaults(fn=cmd_history)

    s = sub.add_parser("verify-ledger", help="check the hash chain; exit 1 if corrupt")
    s.add_argument("--file", help="verify a ledger file offline instead of asking the service")
    s.set_defaults(fn=cmd_verify)

    s = sub.add_parser("load-fixture", help="store the scenario roles and MER sets, then normalize")
    s.add_argument("file", nargs="?", help="fixture JSON (default: bundled online-test scenario)")
    s.set_defaults(fn=cmd_load_fixture)

    s = sub.add_parser("clock-advance", help="advance a simulated service clock")
    s.add_argument("seconds", type=float)
    s.set_defaults(fn=cmd_clock_advance)

    s = sub.add_parser("bench", help="run a latency benchmark (spawns a private service unless --url is set)")
    s.add_argument("which", choices=["users", "sod"])
    s.add_argument("--repetitions", type=int, default=10)
    s.add_argument("--classes", type=int, default=7, help="users: number of 30-user classes")
    s.add_argument("--total-users", type=int, default=100, help="sod: user population")
    s.add_argument("--commit-latency", type=float, default=BENCH_COMMIT_LATENCY,
                   help="commit latency of the spawned service (seconds)")
    s.add_argument("--json", help="also write the JSON report here")
    s.set_defaults(fn=cmd_bench)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.url_given = args.url is not None or "CHAINRBAC_URL" in os.environ
    args.url = args.url or os.environ.get("CHAINRBAC_URL", DEFAULT_URL)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.fn(args)
    except TransportError as exc:
        body = exc.body if isinstance(exc.body, str) else json.dumps(exc.body)
        print(f"error: {exc.endpoint} returned HTTP {exc.status}: {body}", file=sys.stderr)
        return 1
    except httpx.HTTPError as exc:
        print(f"error: cannot reach {args.url}: {exc}", file=sys.stderr)
        return 1
    except (RbacError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
