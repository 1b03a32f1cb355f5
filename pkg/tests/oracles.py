"""Independent brute-force reference implementations used by the tests."""

from itertools import combinations


def reachable(edges, a, b):
    """Is there a path a -> b of length >= 1?"""
    frontier, seen = [a], set()
    while frontier:
        x = frontier.pop()
        for (u, v) in edges:
            if u == x and v not in seen:
                if v == b:
                    return True
                seen.add(v)
                frontier.append(v)
    return False


def brute_reduction(edges):
    """Drop every edge whose endpoints stay connected without it."""
    edges = set(edges)
    return {e for e in edges if not reachable(edges - {e}, *e)}


def brute_threshold_violated(held, candidate, mer_sets, kind):
    """A candidate is refused iff some k-subset of one same-kind MER set lies in held+candidate."""
    roles = set(held) | {candidate}
    for m in mer_sets:
        if m.kind != kind:
            continue
        for combo in combinations(sorted(m.roles), m.k):
            if set(combo) <= roles:
                return True
    return False
