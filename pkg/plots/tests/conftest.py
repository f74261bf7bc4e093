import subprocess
import sys
from pathlib import Path

import pytest

SCENARIO = Path(__file__).resolve().parents[2] / "scenarios" / "paper.toml"


@pytest.fixture(scope="session")
def fig4_outputs(tmp_path_factory):
    """Reduced benchmark-comparison outputs produced by the simulator CLI.

    The plotting package consumes only the CLI's file formats, so the
    fixture shells out to the installed simulator instead of importing it.
    """
    if not SCENARIO.exists():
        pytest.skip(f"scenario file {SCENARIO} not found")
    out = tmp_path_factory.mktemp("fig4")
    cmd = [
        sys.executable, "-m", "relform.cli", "compare",
        "--scenario", str(SCENARIO),
        "--out", str(out),
        "--estimators", "mle,rkf,jrkf,crkf",
        "--set", "sim.horizon=120",
        "--runs", "3",
    ]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        pytest.skip(f"simulator CLI unavailable or failed: {proc.stderr.strip()[:200]}")
    return out
