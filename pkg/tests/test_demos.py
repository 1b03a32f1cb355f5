import subprocess
import sys
from pathlib import Path

import pytest

DEMOS = Path(__file__).resolve().parents[1] / "demos"


@pytest.mark.parametrize("script", ["01_policy_and_sod.py", "02_tamper_evidence.py", "03_http_access_flow.py"])
def test_demo_runs(script):
    out = subprocess.run([sys.executable, str(DEMOS / script)], capture_output=True, text=True, timeout=120)
    assert out.returncode == 0, out.stderr
    assert "Traceback" not in out.stderr


def test_policy_demo_reports_both_separations():
    out = subprocess.run([sys.executable, str(DEMOS / "01_policy_and_sod.py")], capture_output=True, text=True,
                         timeout=60).stdout
    assert "SsodViolation" in out and "DsodViolation" in out


def test_tamper_demo_locates_damage():
    out = subprocess.run([sys.executable, str(DEMOS / "02_tamper_evidence.py")], capture_output=True, text=True,
                         timeout=60).stdout
    assert "replayed state equals live state: True" in out
    assert "'ok': False" in out and "opening for writing is refused" in out
