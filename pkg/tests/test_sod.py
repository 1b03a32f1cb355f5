import random

from hypothesis import given, settings, strategies as st

from chainrbac.model import MerKind, MerSet
from chainrbac.sod import assert_policy_consistency, check_dsod, check_ssod

from oracles import brute_threshold_violated

S, D = MerKind.STATIC, MerKind.DYNAMIC


def mer(roles, k, kind):
    return MerSet(frozenset(roles), k, kind)


def test_ssod_examples():
    assert not check_ssod({"Reviewer1"}, "Student", [mer({"Reviewer1", "Student"}, 2, S)])
    assert check_ssod({"Reviewer1"}, "Student", [])
    assert check_ssod({"A"}, "B", [mer("ABC", 3, S)])


def test_dsod_examples():
    assert not check_dsod({"Reviewer"}, "Editor", [mer({"Reviewer", "Editor"}, 2, D)])
    assert check_dsod(set(), "Reviewer", [mer({"Reviewer", "Editor"}, 2, D)])
    m3 = mer({"Reviewer", "Editor", "Student-proctor"}, 3, D)
    assert not check_dsod({"Reviewer", "Student-proctor"}, "Editor", [m3])


def test_kind_separation():
    assert check_ssod({"A"}, "B", [mer("AB", 2, D)])
    assert check_dsod({"A"}, "B", [mer("AB", 2, S)])


def test_decision_names_violated_set():
    m = mer("AB", 2, S)
    assert check_ssod({"A"}, "B", [mer("XY", 2, S), m]).violated == m


def test_policy_consistency():
    assert assert_policy_consistency({}, {}, []) == []
    m = mer("AB", 2, S)
    v = assert_policy_consistency({"u": {"A", "B"}}, {}, [m])
    assert [(x.subject, x.scope, x.mer_set) for x in v] == [("u", "assignment", m)]


ROLES = [f"r{i}" for i in range(6)]
mer_st = st.builds(
    lambda roles, k, kind: mer(roles, min(k, len(roles)), kind),
    st.sets(st.sampled_from(ROLES), min_size=2, max_size=6), st.sampled_from([2, 3]), st.sampled_from([S, D]))


@settings(max_examples=400, deadline=None)
@given(st.sets(st.sampled_from(ROLES)), st.sampled_from(ROLES), st.lists(mer_st, max_size=4))
def test_oracle_equivalence(held, cand, mers):
    assert (not check_ssod(held, cand, mers).allowed) == brute_threshold_violated(held, cand, mers, S)
    assert (not check_dsod(held, cand, mers).allowed) == brute_threshold_violated(held, cand, mers, D)


@settings(max_examples=200, deadline=None)
@given(st.sets(st.sampled_from(ROLES)), st.sets(st.sampled_from(ROLES)), st.sampled_from(ROLES),
       st.lists(mer_st, max_size=4))
def test_monotone(held, extra, cand, mers):
    # more held roles never turns a Denied into Allowed
    if not check_ssod(held, cand, mers):
        assert not check_ssod(held | extra, cand, mers)
