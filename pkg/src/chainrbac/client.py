"""Thin synchronous client for the service endpoints."""

from __future__ import annotations

from typing import Any

import httpx

from .auth import KeyPair, sign_challenge
from .policy_lang import dumps_array_form
from .fixtures import fixture_mer_sets, load_scenario
from .errors import RbacError


class TransportError(RbacError):
    def __init__(self, endpoint: str, status: int, body: Any):
        self.endpoint = endpoint
        self.status = status
        self.body = body
        super().__init__(f"{endpoint} -> HTTP {status}: {body}")


class RbacClient:
    def __init__(self, base_url: str, admin_token: str | None = None, csp_token: str | None = None,
                 timeout: float = 30.0):
        self.admin_token = admin_token
        self.csp_token = csp_token
        self._http = httpx.Client(base_url=base_url, timeout=timeout)

    def close(self) -> None:
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _call(self, method: str, path: str, *, token: str | None = None, **kwargs) -> dict:
        headers = kwargs.pop("headers", {})
        if token:
            headers["Authorization"] = f"Bearer {token}"
        resp = self._http.request(method, path, headers=headers, **kwargs)
        try:
            body = resp.json()
        except ValueError:
            body = resp.text
        if resp.status_code >= 300:
            raise TransportError(f"{method} {path}", resp.status_code, body)
        return body

    def healthz(self) -> dict:
        return self._call("GET", "/healthz")

    # admin
    def set_role(self, role: dict) -> dict:
        return self._call("POST", "/admin/roles", token=self.admin_token, json=role)

    def set_sod(self, mer_sets: list[dict] | None = None, *, xml: str | None = None) -> dict:
        if xml is not None:
            return self._call("POST", "/admin/sod", token=self.admin_token, content=xml.encode("utf-8"),
                              headers={"Content-Type": "application/xml"})
        return self._call("POST", "/admin/sod", token=self.admin_token, json=mer_sets)

    def normalize(self) -> dict:
        return self._call("POST", "/admin/normalize", token=self.admin_token)

    def revoke(self, user_pubkey: str, role_id: str, *, as_csp: bool = False) -> dict:
        return self._call("POST", "/admin/revoke", token=self.csp_token if as_csp else self.admin_token,
                          json={"user_pubkey": user_pubkey, "role_id": role_id})

    def delegate(self, delegator: str, delegate: str, role_id: str, expires_at: str) -> dict:
        return self._call("POST", "/admin/delegate", token=self.admin_token,
                          json={"delegator_pubkey": delegator, "delegate_pubkey": delegate,
                                "role_id": role_id, "expires_at": expires_at})

    def grant(self, user_pubkey: str, role_id: str) -> dict:
        return self._call("POST", f"/admin/users/{user_pubkey}/roles", token=self.admin_token,
                          json={"role_id": role_id})

    def activate(self, user_pubkey: str, role_id: str) -> dict:
        return self._call("POST", "/sessions/activate", token=self.csp_token,
                          json={"user_pubkey": user_pubkey, "role_id": role_id})

    # user flow
    def challenge(self, pubkey: str) -> dict:
        return self._call("POST", "/access/challenge", json={"pubkey": pubkey})

    def decide(self, **body) -> dict:
        return self._call("POST", "/access/decide", json=body)

    def access(self, keypair: KeyPair, role: str, object_id: str, op: str) -> dict:
        """Challenge, sign the nonce locally, submit the decision request."""
        ch = self.challenge(keypair.public_key)
        sig = sign_challenge(keypair.private_key, bytes.fromhex(ch["nonce"]))
        return self.decide(pubkey=keypair.public_key, role=role, object=object_id, op=op,
                           challenge_id=ch["challenge_id"], signature=sig.hex())

    # reads
    def history(self, **filters) -> list[dict]:
        params = {k: v for k, v in filters.items() if v is not None}
        return self._call("GET", "/history", params=params)["transactions"]

    def verify_ledger(self) -> dict:
        return self._call("GET", "/ledger/verify")

    def advance_clock(self, seconds: float) -> dict:
        return self._call("POST", "/testclock/advance", token=self.admin_token, json={"seconds": seconds})

    def load_fixture(self, fixture: dict | None = None, *, normalize: bool = True) -> dict:
        fixture = fixture or load_scenario()
        for role in fixture["roles"]:
            self.set_role(role)
        mers = fixture_mer_sets(fixture)
        if mers:
            self._call("POST", "/admin/sod", token=self.admin_token, content=dumps_array_form(mers),
                       headers={"Content-Type": "application/json"})
        return self.normalize()["children"] if normalize else {}
