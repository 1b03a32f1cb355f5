import random

import pytest
from hypothesis import given, settings, strategies as st

from chainrbac.errors import CycleDetectedError, DuplicateRoleError, UnknownRoleError
from chainrbac.fixtures import fixture_roles, load_scenario
from chainrbac.hierarchy import (RoleGraph, effective_permissions, inclusion_edges, normalize_role_hierarchy,
                                 topological_order, transitive_reduction)
from chainrbac.model import Permission, Role

from oracles import brute_reduction


def perms(*objs):
    return {Permission.of(o, "R") for o in objs}


def scenario_perms():
    return {rid: r.permissions for rid, r in fixture_roles(load_scenario()).items()}


def test_scenario_inclusion_includes_top_reviewer_edges():
    edges = inclusion_edges(scenario_perms()).edges
    assert ("TopReviewer", "Reviewer1") in edges and ("TopReviewer", "Reviewer2") in edges


def test_scenario_inclusion_is_exactly_those_edges():
    # computed by hand over the five permission sets: Editor and Student hold
    # RW vs R/W over differing objects, so neither contains the other
    assert inclusion_edges(scenario_perms()).edges == {("TopReviewer", "Reviewer1"), ("TopReviewer", "Reviewer2")}


def test_disjoint_roles_no_edges():
    assert inclusion_edges({"A": perms("x"), "B": perms("y")}).edges == frozenset()


def test_chain_inclusion_before_reduction():
    g = inclusion_edges({"A": perms("x", "y", "z"), "B": perms("x", "y"), "C": perms("x")})
    assert g.edges == {("A", "B"), ("B", "C"), ("A", "C")}
    assert transitive_reduction(g).edges == {("A", "B"), ("B", "C")}


def test_condition_string_distinguishes_permissions():
    w = "st:2021-12-22 15:00:00,ed:2021-12-22 15:40:00"
    g = inclusion_edges({"A": {Permission.of("x", "R", w), Permission.of("y", "R")}, "B": {Permission.of("x", "R")}})
    assert g.edges == frozenset()


def test_equal_sets_stay_siblings(caplog):
    with caplog.at_level("WARNING"):
        g = inclusion_edges({"A": perms("x"), "B": perms("x")})
    assert g.edges == frozenset() and "equal permission sets" in caplog.text


def test_duplicate_ids_rejected():
    with pytest.raises(DuplicateRoleError):
        inclusion_edges([("A", perms("x")), ("A", perms("y"))])


def test_reduction_idempotent_and_cycles():
    g = RoleGraph(frozenset("ABC"), frozenset({("A", "B"), ("B", "C")}))
    assert transitive_reduction(g) == g
    with pytest.raises(CycleDetectedError):
        topological_order(RoleGraph(frozenset("AB"), frozenset({("A", "B"), ("B", "A")})))


def test_normalize_scenario_and_trivial_cases():
    out = normalize_role_hierarchy(scenario_perms())
    assert out == {"TopReviewer": {"Reviewer1", "Reviewer2"}, "Reviewer1": set(), "Reviewer2": set(),
                   "Editor": set(), "Student": set()}
    assert normalize_role_hierarchy({"A": perms("x")}) == {"A": frozenset()}
    assert normalize_role_hierarchy({}) == {}


def random_dag(rnd, n, p):
    names = [f"R{i}" for i in range(n)]
    return names, {(names[i], names[j]) for i in range(n) for j in range(i + 1, n) if rnd.random() < p}


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 8), st.floats(0, 1), st.randoms(use_true_random=False))
def test_reduction_matches_brute_force(n, p, rnd):
    names, edges = random_dag(rnd, n, p)
    assert transitive_reduction(RoleGraph(frozenset(names), frozenset(edges))).edges == brute_reduction(edges)


def dag_permissions(names, edges):
    """Each role gets a private object plus everything its descendants hold: strict inclusion mirrors reachability."""
    own = {n: {Permission.of(f"obj-{n}", "R")} for n in names}
    out = {}
    for n in names:
        acc, stack = set(own[n]), [n]
        while stack:
            x = stack.pop()
            for a, b in edges:
                if a == x:
                    acc |= own[b]
                    stack.append(b)
        out[n] = acc
    return out


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 8), st.floats(0, 1), st.randoms(use_true_random=False))
def test_normalize_matches_brute_force_on_dag_structures(n, p, rnd):
    names, edges = random_dag(rnd, n, p)
    out = normalize_role_hierarchy(dag_permissions(names, edges))
    got = {(a, b) for a, cs in out.items() for b in cs}
    assert got == brute_reduction(edges)


def test_effective_permissions():
    roles = fixture_roles(load_scenario())
    children = normalize_role_hierarchy({r: x.permissions for r, x in roles.items()})
    roles = {r: Role(x.role_id, x.valid_period, x.permissions, children[r]) for r, x in roles.items()}
    assert effective_permissions("Reviewer1", roles) == roles["Reviewer1"].permissions
    assert effective_permissions("TopReviewer", roles) == roles["Reviewer1"].permissions | roles["Reviewer2"].permissions
    with pytest.raises(UnknownRoleError):
        effective_permissions("Ghost", roles)


def test_diamond_counts_shared_grandchild_once():
    d = perms("d")
    roles = {
        "A": Role("A", 1, frozenset(perms("a")), frozenset({"B", "C"})),
        "B": Role("B", 1, frozenset(perms("b")), frozenset({"D"})),
        "C": Role("C", 1, frozenset(perms("c")), frozenset({"D"})),
        "D": Role("D", 1, frozenset(d)),
    }
    eff = effective_permissions("A", roles)
    assert eff == frozenset(perms("a", "b", "c", "d")) and len(eff) == 4
