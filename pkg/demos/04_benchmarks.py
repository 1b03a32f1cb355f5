"""Latency shape of the two load experiments against a service process.

Total time grows linearly with concurrent access requestors, while a batch
of conflicting activations costs roughly one commit round whatever its size.

    python demos/04_benchmarks.py            # quick: 2 repetitions
    python demos/04_benchmarks.py --full     # 10 repetitions, a few minutes
"""

import argparse
import tempfile
from pathlib import Path

from chainrbac.bench import BENCH_COMMIT_LATENCY, bench_sod, bench_users
from chainrbac.client import RbacClient
from chainrbac.service import ServiceConfig, ServiceProcess

parser = argparse.ArgumentParser()
parser.add_argument("--full", action="store_true")
parser.add_argument("--commit-latency", type=float, default=BENCH_COMMIT_LATENCY)
args = parser.parse_args()
reps = 10 if args.full else 2

with tempfile.TemporaryDirectory() as tmp:
    config = ServiceConfig(port=0, ledger_path=str(Path(tmp) / "bench.rbsl"), commit_latency=args.commit_latency)
    with ServiceProcess(config) as svc:
        with RbacClient(svc.base_url, config.admin_token, config.csp_token) as api:
            api.load_fixture()
        users = bench_users(svc.base_url, config.admin_token, repetitions=reps)
        print(users.table(), "\n")
        sod = bench_sod(svc.base_url, config.admin_token, config.csp_token, repetitions=reps)
        print(sod.table())
