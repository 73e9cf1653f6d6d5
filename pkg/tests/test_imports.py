import subprocess
import sys
from pathlib import Path

import pytest

MODULES = [
    "tracewarden",
    "tracewarden.cli",
    "tracewarden.config",
    "tracewarden.capture",
    "tracewarden.eval",
    "tracewarden.loaders",
    "tracewarden.loaders.pcap",
    "tracewarden.loaders.config_file",
    "tracewarden.models",
    "tracewarden.registry",
    "tracewarden.synth",
    "tracewarden.utils",
    "tracewarden.utils.render",
    "tracewarden.utils.logging",
]
ROOT = Path(__file__).resolve().parents[1]


# each module must import in a fresh interpreter, whatever was loaded before it
@pytest.mark.parametrize("module", MODULES)
def test_cold_import(module):
    result = subprocess.run([sys.executable, "-c", f"import {module}"], capture_output=True, text=True, timeout=60, cwd=ROOT)
    assert result.returncode == 0, result.stderr
