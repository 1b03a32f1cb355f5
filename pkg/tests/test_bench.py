import json
import math

import pytest
from hypothesis import given, strategies as st

from chainrbac.bench import BenchReport, Row, bench_sod, bench_users, linear_fit
from chainrbac.client import RbacClient
from chainrbac.service import ServiceConfig, ServiceThread


def test_linear_fit_exact_line():
    f = linear_fit([30, 60, 90], [100, 160, 220])
    assert math.isclose(f.slope, 2.0) and math.isclose(f.intercept, 40.0) and math.isclose(f.r2, 1.0)


@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=10))
def test_r2_matches_residual_definition(ys):
    xs = list(range(len(ys)))
    if max(ys) - min(ys) < 1e-6:
        return
    f = linear_fit(xs, ys)
    mean = sum(ys) / len(ys)
    ss_res = sum((y - (f.slope * x + f.intercept)) ** 2 for x, y in zip(xs, ys))
    ss_tot = sum((y - mean) ** 2 for y in ys)
    assert math.isclose(f.r2, 1 - ss_res / ss_tot, rel_tol=1e-6, abs_tol=1e-6)


def test_flatness_and_schema():
    rep = BenchReport("x", [Row(10, 100.0, 10.0, 90.0, 110.0), Row(20, 150.0, 7.5, 140.0, 160.0)], None)
    assert rep.flatness == 1.5
    data = json.loads(rep.dumps())
    assert {"n", "total_ms", "mean_ms"} <= set(data["rows"][0]) and "fit" in data
    assert "total_ms" in rep.table()


@pytest.fixture(scope="module")
def service(tmp_path_factory):
    cfg = ServiceConfig(port=0, ledger_path=str(tmp_path_factory.mktemp("b") / "l.rbsl"), admin_token="a",
                        csp_token="c", fsync=False)
    with ServiceThread(cfg) as svc:
        with RbacClient(svc.base_url, "a", "c") as c:
            c.load_fixture()
        yield svc


def test_users_single_class(service):
    rep = bench_users(service.base_url, "a", class_counts=[1], repetitions=1)
    assert [r.n for r in rep.rows] == [30] and rep.fit is None
    assert rep.metadata["role"] == "Student" and rep.metadata["reference_per_request_ms"] == 55.0


def test_sod_counts_denials(service):
    rep = bench_sod(service.base_url, "a", "c", total_users=20, conflicting=[10, 20], repetitions=1)
    assert rep.metadata["denials"] == rep.metadata["expected_denials"] == 30
    assert [r.n for r in rep.rows] == [10, 20] and rep.fit is not None


def test_sod_empty_batch(service):
    rep = bench_sod(service.base_url, "a", "c", total_users=5, conflicting=[0], repetitions=1)
    assert rep.metadata["denials"] == 0 and rep.rows[0].total_ms == 0.0


def test_sod_batch_larger_than_population(service):
    with pytest.raises(ValueError):
        bench_sod(service.base_url, "a", "c", total_users=5, conflicting=[10], repetitions=1)
