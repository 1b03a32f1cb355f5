"""Role hierarchy normalization.

A role is senior to another when its permission set strictly contains the
other's.  The inclusion graph is reduced to its transitive reduction and the
direct successors of each role become its ``child_roles``.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import CycleDetectedError, DuplicateRoleError, UnknownRoleError
from .model import Permission, Role, permission_triples

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RoleGraph:
    vertices: frozenset[str]
    edges: frozenset[tuple[str, str]] = field(default_factory=frozenset)  # (senior, junior)

    def successors(self) -> dict[str, set[str]]:
        adj: dict[str, set[str]] = {v: set() for v in self.vertices}
        for a, b in self.edges:
            adj[a].add(b)
        return adj


def _as_items(role_permissions) -> list[tuple[str, frozenset]]:
    items = list(role_permissions.items()) if isinstance(role_permissions, Mapping) else list(role_permissions)
    seen: set[str] = set()
    for rid, _ in items:
        if rid in seen:
            raise DuplicateRoleError(f"duplicate role id {rid!r}")
        seen.add(rid)
    return [(rid, permission_triples(perms)) for rid, perms in items]


def inclusion_edges(role_permissions: Mapping[str, Iterable[Permission]] | Iterable[tuple[str, Iterable[Permission]]]) -> RoleGraph:
    """Edge (a, b) for every pair where perms(b) is a strict subset of perms(a).

    Accepts a mapping or a sequence of ``(role_id, permissions)`` pairs; the
    latter lets duplicate ids be reported instead of silently merged.
    """
    items = _as_items(role_permissions)
    edges = set()
    for a, pa in items:
        for b, pb in items:
            if a != b and pb < pa:
                edges.add((a, b))
    for i, (a, pa) in enumerate(items):
        for b, pb in items[i + 1:]:
            if pa == pb:
                log.warning("roles %r and %r have equal permission sets; left as siblings", a, b)
    return RoleGraph(frozenset(rid for rid, _ in items), frozenset(edges))


def topological_order(graph: RoleGraph) -> list[str]:
    adj = graph.successors()
    indeg = {v: 0 for v in graph.vertices}
    for _, b in graph.edges:
        indeg[b] += 1
    queue = deque(sorted(v for v, d in indeg.items() if d == 0))
    order = []
    while queue:
        v = queue.popleft()
        order.append(v)
        for w in sorted(adj[v]):
            indeg[w] -= 1
            if indeg[w] == 0:
                queue.append(w)
    if len(order) != len(graph.vertices):
        stuck = sorted(v for v, d in indeg.items() if d > 0)
        raise CycleDetectedError(f"role graph has a cycle through {stuck}")
    return order


def transitive_reduction(graph: RoleGraph) -> RoleGraph:
    """Minimum edge set with the same reachability (unique for a DAG)."""
    order = topological_order(graph)
    adj = graph.successors()
    # descendants, computed juniors-first
    reach: dict[str, set[str]] = {}
    for v in reversed(order):
        r: set[str] = set()
        for w in adj[v]:
            r.add(w)
            r |= reach[w]
        reach[v] = r
    kept = set()
    for u in graph.vertices:
        implied = set()
        for w in adj[u]:
            implied |= reach[w]
        kept.update((u, v) for v in adj[u] if v not in implied)
    return RoleGraph(graph.vertices, frozenset(kept))


def normalize_role_hierarchy(role_permissions) -> dict[str, frozenset[str]]:
    """Map every role to its direct juniors in the reduced inclusion graph."""
    reduced = transitive_reduction(inclusion_edges(role_permissions))
    return {v: frozenset(ws) for v, ws in reduced.successors().items()}


def effective_permissions(role_id: str, roles: Mapping[str, Role]) -> frozenset[Permission]:
    if role_id not in roles:
        raise UnknownRoleError(role_id)
    out: set[Permission] = set()
    seen: set[str] = set()
    stack = [role_id]
    while stack:
        rid = stack.pop()
        if rid in seen:
            continue
        seen.add(rid)
        role = roles.get(rid)
        if role is None:
            raise UnknownRoleError(rid)
        out |= role.permissions
        stack.extend(role.child_roles)
    return frozenset(out)
