import subprocess
import sys
from pathlib import Path

import pytest

SCRIPTS = Path(__file__).resolve().parents[1] / "scripts"


def run(script, *args):
    return subprocess.run([sys.executable, str(SCRIPTS / script), *args],
                          capture_output=True, text=True, check=True).stdout


@pytest.mark.parametrize("script", ["biometric_direction.py", "sync_probe_direction.py"])
def test_comparison_scripts_smoke(tmp_path, script):
    out = run(script, "--out", str(tmp_path), "--seeds", "1", "--steps", "2")
    assert "mean" in out
    assert (tmp_path / "comparison.json").exists() and (tmp_path / "comparison.md").exists()


def test_calibration_script_smoke():
    out = run("calibrate_world.py", "--gains", "0.1", "--steps", "2")
    assert out.splitlines()[1].startswith("0.1")
