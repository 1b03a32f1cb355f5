"""Latency harness for the two throughput experiments.

``bench_users``: N users each run one full access exchange (challenge,
local signature, decide) concurrently; N grows in classes of 30.
``bench_sod``: N of 100 users with an active Reviewer1 session concurrently
ask to activate the conflicting Editor role.

Both are checked functionally before they are timed: a wrong decision
aborts the run.  Total time is measured from the first submission to the
last completion, averaged over repetitions.
"""

from __future__ import annotations

import asyncio
import json
import statistics
import time
from dataclasses import asdict, dataclass, field
from typing import Awaitable, Callable, Iterable

import aiohttp

from .auth import KeyPair, generate_keypair, sign_challenge
from .errors import RbacError

REFERENCE_MEAN_MS = 55.0

# Commit latency for the service under benchmark.  Stands in for a
# permissioned chain's endorse/order/validate round trip: every transaction
# becomes durable this long after it is appended, rounds overlap.
BENCH_COMMIT_LATENCY = 0.5


class BenchmarkError(RbacError):
    """A decision during the benchmark did not match the expected outcome."""


@dataclass
class Row:
    n: int
    total_ms: float
    mean_ms: float
    min_ms: float
    max_ms: float


@dataclass
class Fit:
    slope: float
    intercept: float
    r2: float


@dataclass
class BenchReport:
    name: str
    rows: list[Row]
    fit: Fit | None
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"name": self.name, "rows": [asdict(r) for r in self.rows],
                "fit": asdict(self.fit) if self.fit else None, "metadata": self.metadata}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)

    @property
    def flatness(self) -> float:
        totals = [r.total_ms for r in self.rows if r.n > 0]
        return max(totals) / min(totals) if totals else 1.0

    def table(self) -> str:
        lines = [f"{self.name}", f"{'n':>5} {'total_ms':>10} {'per_req_ms':>10} {'min_ms':>9} {'max_ms':>9}"]
        for r in self.rows:
            lines.append(f"{r.n:>5} {r.total_ms:>10.1f} {r.mean_ms:>10.2f} {r.min_ms:>9.1f} {r.max_ms:>9.1f}")
        if self.fit:
            lines.append(f"fit: total_ms = {self.fit.slope:.3f} * n + {self.fit.intercept:.1f}   R^2 = {self.fit.r2:.4f}")
        for k, v in self.metadata.items():
            lines.append(f"{k}: {v}")
        return "\n".join(lines)


def linear_fit(xs: Iterable[float], ys: Iterable[float]) -> Fit:
    xs, ys = list(xs), list(ys)
    slope, intercept = statistics.linear_regression(xs, ys)
    r = statistics.correlation(xs, ys)
    return Fit(slope, intercept, r * r)


def bench_keys(prefix: str, n: int) -> list[KeyPair]:
    return [generate_keypair(f"{prefix}-{i}") for i in range(n)]


async def _timed_batch(jobs: list[Callable[[], Awaitable[None]]]) -> float:
    """Launch every job at once; seconds from first start to last completion."""
    if not jobs:
        return 0.0
    start = time.perf_counter()
    ends: list[float] = []

    async def run(job):
        await job()
        ends.append(time.perf_counter())

    await asyncio.gather(*(run(j) for j in jobs))
    return max(ends) - start


def _client(base_url: str) -> aiohttp.ClientSession:
    # no connection cap: a batch must really be in flight all at once
    return aiohttp.ClientSession(base_url, connector=aiohttp.TCPConnector(limit=0),
                                 timeout=aiohttp.ClientTimeout(total=120))


async def _request(http: aiohttp.ClientSession, path: str, body: dict, token: str | None) -> tuple[int, dict]:
    headers = {"Authorization": f"Bearer {token}"} if token else {}
    async with http.post(path, json=body, headers=headers) as resp:
        return resp.status, await resp.json()


async def _post(http: aiohttp.ClientSession, path: str, body: dict, token: str | None = None) -> dict:
    status, data = await _request(http, path, body, token)
    if status != 200:
        raise BenchmarkError(f"POST {path} -> {status}: {data}")
    return data


async def _grant(http, admin_token: str, user: str, role: str) -> None:
    status, data = await _request(http, f"/admin/users/{user}/roles", {"role_id": role}, admin_token)
    if status == 409 and data.get("error") == "AlreadyAssignedError":
        return
    if status != 200 or data["result"] != "Allowed":
        raise BenchmarkError(f"setup grant of {role} to {user[:12]} failed: {status} {data}")


def _rows(samples: dict[int, list[float]]) -> list[Row]:
    rows = []
    for n, secs in samples.items():
        ms = [s * 1000 for s in secs]
        total = statistics.fmean(ms) if ms else 0.0
        rows.append(Row(n, total, total / n if n else 0.0, min(ms, default=0.0), max(ms, default=0.0)))
    return rows


async def _bench_users(base_url, admin_token, class_counts, users_per_class, repetitions, role, object_id,
                       operation) -> BenchReport:
    sizes = [c * users_per_class for c in class_counts]
    keys = bench_keys("bench-user", max(sizes, default=0))
    async with _client(base_url) as http:
        await asyncio.gather(*(_grant(http, admin_token, k.public_key, role) for k in keys))

        def access_job(k: KeyPair):
            async def job():
                ch = await _post(http, "/access/challenge", {"pubkey": k.public_key})
                sig = sign_challenge(k.private_key, bytes.fromhex(ch["nonce"]))
                d = await _post(http, "/access/decide", {
                    "pubkey": k.public_key, "role": role, "object": object_id, "op": operation,
                    "challenge_id": ch["challenge_id"], "signature": sig.hex()})
                if d["result"] != "Allowed":
                    raise BenchmarkError(f"access by {k.public_key[:12]} was {d}")
            return job

        # warm-up: activates the role in every session, exercises connections
        await _timed_batch([access_job(k) for k in keys])
        samples: dict[int, list[float]] = {n: [] for n in sizes}
        for _ in range(repetitions):
            for n in sizes:
                samples[n].append(await _timed_batch([access_job(k) for k in keys[:n]]))
    rows = _rows(samples)
    fit = linear_fit([r.n for r in rows], [r.total_ms for r in rows]) if len(rows) >= 2 else None
    overall = statistics.fmean(r.mean_ms for r in rows) if rows else 0.0
    return BenchReport("bench_users", rows, fit, {
        "role": role, "object": object_id, "operation": operation, "repetitions": repetitions,
        "per_request_mean_ms": round(overall, 3), "reference_per_request_ms": REFERENCE_MEAN_MS,
    })


def bench_users(base_url: str, admin_token: str, *, class_counts: Iterable[int] = range(1, 8),
                users_per_class: int = 30, repetitions: int = 10, role: str = "Student",
                object_id: str = "Problem1-DB", operation: str = "Read") -> BenchReport:
    """Total response time against the number of concurrent access requestors.

    Expects the online-test fixture to be loaded; users are granted ``role``.
    """
    return asyncio.run(_bench_users(base_url, admin_token, list(class_counts), users_per_class, repetitions,
                                    role, object_id, operation))


async def _bench_sod(base_url, admin_token, csp_token, total_users, conflicting, repetitions, held_role,
                     conflict_role) -> BenchReport:
    keys = bench_keys("bench-sod", total_users)
    if max(conflicting, default=0) > total_users:
        raise ValueError("conflicting batch larger than the user population")
    async with _client(base_url) as http:
        await asyncio.gather(*(_grant(http, admin_token, k.public_key, r) for k in keys
                               for r in (held_role, conflict_role)))
        act = await asyncio.gather(*(_post(http, "/sessions/activate",
                                           {"user_pubkey": k.public_key, "role_id": held_role}, csp_token)
                                     for k in keys))
        if any(a["result"] != "Allowed" for a in act):
            raise BenchmarkError(f"setup activation of {held_role} was denied")

        denials = 0

        def conflict_job(k: KeyPair):
            async def job():
                nonlocal denials
                d = await _post(http, "/sessions/activate",
                                {"user_pubkey": k.public_key, "role_id": conflict_role}, csp_token)
                if d["result"] != "Denied" or d["reason"] != "DsodViolation":
                    raise BenchmarkError(f"conflicting activation by {k.public_key[:12]} was {d}")
                denials += 1
            return job

        await _timed_batch([conflict_job(k) for k in keys[:max(conflicting, default=0)]])
        denials = 0
        samples: dict[int, list[float]] = {n: [] for n in conflicting}
        for _ in range(repetitions):
            for n in conflicting:
                samples[n].append(await _timed_batch([conflict_job(k) for k in keys[:n]]))
    expected = sum(conflicting) * repetitions
    if denials != expected:
        raise BenchmarkError(f"expected {expected} denials, saw {denials}")
    rows = _rows(samples)
    timed = [r for r in rows if r.n > 0]
    fit = linear_fit([r.n for r in timed], [r.total_ms for r in timed]) if len(timed) >= 2 else None
    report = BenchReport("bench_sod", rows, fit, {
        "total_users": total_users, "held_role": held_role, "conflict_role": conflict_role,
        "repetitions": repetitions, "denials": denials, "expected_denials": expected,
    })
    report.metadata["max_min_ratio"] = round(report.flatness, 3)
    return report


def bench_sod(base_url: str, admin_token: str, csp_token: str, *, total_users: int = 100,
              conflicting: Iterable[int] = range(10, 101, 10), repetitions: int = 10,
              held_role: str = "Reviewer1", conflict_role: str = "Editor") -> BenchReport:
    """Total response time for batches of conflicting (DSoD-violating) activations."""
    return asyncio.run(_bench_sod(base_url, admin_token, csp_token, total_users, list(conflicting), repetitions,
                                  held_role, conflict_role))
