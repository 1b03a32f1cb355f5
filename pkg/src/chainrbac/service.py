"""JSON/HTTP service: the cloud storage provider's enforcement point plus the
data administrator's endpoints.

Admin and CSP callers present static bearer tokens.  End users authenticate
only through the challenge/decide exchange.  Policy denials are ``200`` with
``result: Denied``; a caller that may not invoke an endpoint gets ``401``.

No TLS; intended for test deployments.
"""

from __future__ import annotations

import asyncio
import heapq
import json
import logging
import secrets
import socket
import subprocess
import sys
import tempfile
import threading
import time
from contextlib import asynccontextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import httpx
import uvicorn
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .auth import ChallengeStore
from .clock import SimulatedClock, SystemClock, format_ts, parse_ts
from .engine import ADMIN, CSP, Caller, Engine
from .errors import ChainCorruptError, ChallengeError, ConflictError, UnauthorizedCallerError, ValidationError
from .ledger import Ledger
from .model import AccessRequestEvent, MerSet, Operation, Reason, Result
from .policy_lang import loads_array_form, parse_sod_xml, to_array_form

log = logging.getLogger(__name__)


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    ledger_path: str | None = None
    admin_token: str = field(default_factory=lambda: secrets.token_hex(16))
    csp_token: str = field(default_factory=lambda: secrets.token_hex(16))
    clock_mode: str = "real"  # or "simulated"
    simulated_start: str = "2021-12-22 15:00:00"
    commit_latency: float = 0.0
    fsync: bool = True
    challenge_ttl: float = 60.0

    def __post_init__(self):
        if self.clock_mode not in ("real", "simulated"):
            raise ValidationError(f"clock_mode must be 'real' or 'simulated', got {self.clock_mode!r}")

    @classmethod
    def from_file(cls, path: str | Path) -> "ServiceConfig":
        data = json.loads(Path(path).read_text())
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_json(self) -> dict:
        return asdict(self)


class _CommitWaiter:
    """Lets handlers await durability without tying up a worker thread."""

    def __init__(self, ledger: Ledger):
        self.ledger = ledger
        self._heap: list[tuple[int, int, asyncio.Future]] = []
        self._n = 0
        self._loop: asyncio.AbstractEventLoop | None = None

    def attach(self, loop: asyncio.AbstractEventLoop) -> None:
        self._loop = loop
        self.ledger.add_commit_listener(self._on_commit)

    def detach(self) -> None:
        self.ledger.remove_commit_listener(self._on_commit)

    def _on_commit(self, upto: int) -> None:
        if self._loop is not None and not self._loop.is_closed():
            self._loop.call_soon_threadsafe(self._release, upto)

    def _release(self, upto: int) -> None:
        while self._heap and self._heap[0][0] < upto:
            _, _, fut = heapq.heappop(self._heap)
            if not fut.done():
                fut.set_result(None)

    async def wait(self, seq: int | None) -> None:
        if seq is None or self.ledger.committed_count > seq or self._loop is None:
            return
        fut = asyncio.get_running_loop().create_future()
        self._n += 1
        heapq.heappush(self._heap, (seq, self._n, fut))
        await fut


class AppState:
    def __init__(self, config: ServiceConfig):
        self.config = config
        if config.clock_mode == "simulated":
            self.clock = SimulatedClock(parse_ts(config.simulated_start))
        else:
            self.clock = SystemClock()
        # raises ChainCorruptError on a tampered file: the service refuses to start
        self.ledger = Ledger(config.ledger_path, self.clock, commit_latency=config.commit_latency,
                             fsync=config.fsync)
        self.engine = Engine(self.ledger, self.clock, ChallengeStore(self.clock, config.challenge_ttl))
        self.waiter = _CommitWaiter(self.ledger)

    def caller(self, request: Request) -> Caller | None:
        header = request.headers.get("authorization", "")
        if not header.lower().startswith("bearer "):
            return None
        token = header[7:].strip()
        if secrets.compare_digest(token, self.config.admin_token):
            return ADMIN
        if secrets.compare_digest(token, self.config.csp_token):
            return CSP
        return None

    def require(self, request: Request, *allowed: Caller) -> Caller:
        caller = self.caller(request)
        if caller is None or caller not in allowed:
            raise UnauthorizedCallerError("missing or invalid bearer token for this endpoint")
        return caller


# -- request bodies -------------------------------------------------------

class RoleBody(BaseModel):
    role_id: str
    permissions: list[dict[str, Any]]
    valid_period: int


class RevokeBody(BaseModel):
    user_pubkey: str
    role_id: str


class DelegateBody(BaseModel):
    delegator_pubkey: str
    delegate_pubkey: str
    role_id: str
    expires_at: str


class GrantBody(BaseModel):
    role_id: str


class ActivateBody(BaseModel):
    user_pubkey: str
    role_id: str


class ChallengeBody(BaseModel):
    pubkey: str


class AdvanceBody(BaseModel):
    seconds: float


_DECIDE_FIELDS = ("pubkey", "role", "object", "op", "challenge_id", "signature")


def _error(status: int, exc: Exception) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"result": "error", "error": type(exc).__name__, "detail": str(exc)})


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig()
    state = AppState(config)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        state.waiter.attach(asyncio.get_running_loop())
        try:
            yield
        finally:
            state.waiter.detach()
            state.ledger.close()

    app = FastAPI(title="chainrbac", lifespan=lifespan)
    app.state.rbac = state

    @app.exception_handler(UnauthorizedCallerError)
    async def _unauthorized(request, exc):
        return _error(401, exc)

    @app.exception_handler(ValidationError)
    async def _invalid(request, exc):
        return _error(400, exc)

    @app.exception_handler(RequestValidationError)
    async def _invalid_body(request, exc):
        return JSONResponse(status_code=400, content={"result": "error", "error": "ValidationError",
                                                      "detail": json.loads(json.dumps(exc.errors(), default=str))})

    @app.exception_handler(ConflictError)
    async def _conflict(request, exc):
        return _error(409, exc)

    @app.exception_handler(ChallengeError)
    async def _challenge(request, exc):
        return _error(400, exc)

    async def done(tx_id: int | None, body: dict) -> dict:
        await state.waiter.wait(tx_id)
        return body

    @app.get("/healthz")
    async def healthz():
        return {"result": "ok", "length": state.ledger.committed_count}

    @app.post("/admin/roles")
    async def set_role(body: RoleBody, request: Request):
        caller = state.require(request, ADMIN)
        tx = state.engine.set_role_configuration(caller, body.role_id, body.permissions, body.valid_period)
        return await done(tx, {"result": "ok", "tx_id": tx})

    @app.post("/admin/sod")
    async def set_sod(request: Request):
        caller = state.require(request, ADMIN)
        raw = await request.body()
        ctype = request.headers.get("content-type", "")
        if "xml" in ctype:
            mer_sets = to_array_form(parse_sod_xml(raw))
        else:
            try:
                mer_sets = loads_array_form(raw)
            except (ValueError, TypeError) as exc:
                raise ValidationError(f"bad array-form body: {exc}") from None
        txs, indices, violations = [], [], []
        for m in mer_sets:
            res = state.engine.set_sod_constraint(caller, m)
            txs.append(res.tx_id)
            indices.append(res.index)
            violations = [v.to_json() for v in res.violations]
        return await done(txs[-1] if txs else None,
                          {"result": "ok", "tx_ids": txs, "indices": indices, "violations": violations})

    @app.post("/admin/normalize")
    async def normalize(request: Request):
        caller = state.require(request, ADMIN)
        children = state.engine.normalize_role_hierarchy(caller)
        tx = state.engine.last_tx_id
        return await done(tx, {"result": "ok", "tx_id": tx, "children": children})

    @app.post("/admin/revoke")
    async def revoke(body: RevokeBody, request: Request):
        caller = state.require(request, ADMIN, CSP)
        tx = state.engine.role_revocation(caller, body.user_pubkey, body.role_id)
        return await done(tx, {"result": "ok", "tx_id": tx})

    @app.post("/admin/delegate")
    async def delegate(body: DelegateBody, request: Request):
        caller = state.require(request, ADMIN)
        try:
            expires = parse_ts(body.expires_at)
        except ValueError as exc:
            raise ValidationError(f"expires_at: {exc}") from None
        tx = state.engine.set_delegation(caller, body.delegator_pubkey, body.delegate_pubkey, body.role_id, expires)
        return await done(tx, {"result": "ok", "tx_id": tx})

    @app.post("/admin/users/{pubkey}/roles")
    async def grant(pubkey: str, body: GrantBody, request: Request):
        caller = state.require(request, ADMIN)
        decision = state.engine.request_role_for_user(caller, pubkey, body.role_id)
        return await done(decision.tx_id, decision.to_json())

    @app.post("/sessions/activate")
    async def activate(body: ActivateBody, request: Request):
        caller = state.require(request, CSP)
        decision = state.engine.activate_role(caller, body.user_pubkey, body.role_id)
        return await done(decision.tx_id, decision.to_json())

    @app.post("/access/challenge")
    async def challenge(body: ChallengeBody):
        ch = state.engine.challenges.issue_challenge(body.pubkey)
        return {"result": "ok", **ch.to_json()}

    @app.post("/access/decide")
    async def decide(request: Request):
        # parsed by hand: every call, malformed or not, leaves one history event
        try:
            body = json.loads(await request.body())
            if not isinstance(body, dict):
                raise ValueError("body must be a JSON object")
        except ValueError:
            body = {}
        missing = [f for f in _DECIDE_FIELDS if not isinstance(body.get(f), str)]
        op = None
        if not missing:
            try:
                op = Operation.parse(body["op"])
            except ValidationError:
                missing = ["op"]
        if missing:
            event = AccessRequestEvent(str(body.get("pubkey", "")), format_ts(state.engine.now()),
                                       str(body.get("object", "")), str(body.get("role", "")),
                                       str(body.get("op", "")), Result.DENIED, Reason.MALFORMED_REQUEST)
            tx = state.engine.append_req_history_entity(CSP, event)
            await state.waiter.wait(tx)
            return JSONResponse(status_code=400, content={
                "result": "error", "error": "ValidationError", "reason": Reason.MALFORMED_REQUEST.value,
                "detail": f"missing or invalid fields: {missing}", "tx_id": tx})
        decision = state.engine.request_access_to_res(CSP, body["pubkey"], body["role"], body["object"], op,
                                                      (body["challenge_id"], body["signature"]))
        return await done(decision.tx_id, decision.to_json())

    @app.get("/ledger/verify")
    async def verify():
        return {"result": "ok", **state.ledger.verify_chain().to_json()}

    @app.get("/history")
    async def history(invoker: str | None = None, method: str | None = None, start: str | None = None,
                      end: str | None = None, pubkey: str | None = None):
        try:
            t0 = parse_ts(start) if start else None
            t1 = parse_ts(end) if end else None
        except ValueError as exc:
            raise ValidationError(f"bad time filter: {exc}") from None
        txs = state.ledger.query_history(invoker=invoker, method=method, start=t0, end=t1, subject=pubkey)
        return {"result": "ok", "transactions": [tx.to_json() for tx in txs]}

    @app.post("/testclock/advance")
    async def advance(body: AdvanceBody, request: Request):
        if not isinstance(state.clock, SimulatedClock):
            return JSONResponse(status_code=404, content={"result": "error", "detail": "clock is not simulated"})
        state.require(request, ADMIN)
        now = state.clock.advance(body.seconds)
        return {"result": "ok", "now": format_ts(now)}

    return app


def _uvicorn_config(app: FastAPI, config: ServiceConfig, log_level: str) -> uvicorn.Config:
    # long keep-alive: benchmark clients hold pooled connections between batches
    return uvicorn.Config(app, host=config.host, port=config.port, log_level=log_level, access_log=False,
                          lifespan="on", timeout_keep_alive=120, backlog=4096)


def serve(config: ServiceConfig) -> None:
    """Run the service in the foreground until interrupted."""
    uvicorn.Server(_uvicorn_config(create_app(config), config, "info")).run()


class ServiceThread:
    """Run the service on a background thread (tests, benchmarks, demos).

    ``port=0`` in the config binds an ephemeral port; see :attr:`base_url`.
    """

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.app = create_app(config)
        self._server = uvicorn.Server(_uvicorn_config(self.app, config, "warning"))
        self._thread = threading.Thread(target=self._server.run, name="chainrbac-service", daemon=True)
        self.port: int | None = None

    @property
    def state(self) -> AppState:
        return self.app.state.rbac

    @property
    def base_url(self) -> str:
        return f"http://{self.config.host}:{self.port}"

    def start(self, timeout: float = 10.0) -> "ServiceThread":
        self._thread.start()
        deadline = time.monotonic() + timeout
        while not self._server.started:
            if not self._thread.is_alive() or time.monotonic() > deadline:
                raise RuntimeError("service failed to start")
            time.sleep(0.01)
        self.port = self._server.servers[0].sockets[0].getsockname()[1]
        return self

    def stop(self) -> None:
        self._server.should_exit = True
        self._thread.join(timeout=10)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


class ServiceProcess:
    """Run the service in a child interpreter.

    Benchmarks use this so the load generator and the server do not share
    a GIL.  ``port=0`` picks a free port before launch.
    """

    def __init__(self, config: ServiceConfig, *, startup_timeout: float = 30.0):
        if config.port == 0:
            with socket.socket() as s:
                s.bind((config.host, 0))
                config.port = s.getsockname()[1]
        self.config = config
        self.startup_timeout = startup_timeout
        self._dir = tempfile.TemporaryDirectory(prefix="chainrbac-")
        self._proc: subprocess.Popen | None = None

    @property
    def base_url(self) -> str:
        return f"http://{self.config.host}:{self.config.port}"

    def start(self) -> "ServiceProcess":
        cfg_path = Path(self._dir.name) / "service.json"
        cfg_path.write_text(json.dumps(self.config.to_json()))
        self._proc = subprocess.Popen([sys.executable, "-m", "chainrbac", "serve", "--config", str(cfg_path)],
                                      stdout=subprocess.DEVNULL, stderr=subprocess.PIPE)
        deadline = time.monotonic() + self.startup_timeout
        while time.monotonic() < deadline:
            if self._proc.poll() is not None:
                err = self._proc.stderr.read().decode(errors="replace")
                raise RuntimeError(f"service exited with code {self._proc.returncode}: {err.strip()[-2000:]}")
            try:
                if httpx.get(f"{self.base_url}/healthz", timeout=1.0).status_code == 200:
                    return self
            except httpx.HTTPError:
                pass
            time.sleep(0.1)
        self.stop()
        raise RuntimeError("service did not become healthy in time")

    def stop(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.terminate()
            try:
                self._proc.wait(timeout=15)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
        if self._proc is not None and self._proc.stderr:
            self._proc.stderr.close()
        self._dir.cleanup()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
