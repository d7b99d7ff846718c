import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from golden import REFERENCE_MASK, build_clip_dir, golden_histograms  # noqa: E402


@pytest.fixture()
def compare_fixture(tmp_path):
    data = golden_histograms()
    compare = tmp_path / "compare"
    compare.mkdir()
    (compare / "histograms.json").write_text(json.dumps(data, indent=2))
    return {"dir": compare, "data": data}


@pytest.fixture()
def single_model_compare_fixture(tmp_path):
    data = golden_histograms(models=("conv3d",))
    compare = tmp_path / "compare_single"
    compare.mkdir()
    (compare / "histograms.json").write_text(json.dumps(data, indent=2))
    return {"dir": compare, "data": data}


@pytest.fixture()
def explain_fixture(tmp_path):
    explain = tmp_path / "explain_conv3d"
    explain.mkdir()
    build_clip_dir(explain, "collide-0001", REFERENCE_MASK)
    manifest = {
        "command": "explain",
        "explain": {
            "model_name": "conv3d",
            "architecture": "conv3d",
            "classes": ["collide"],
            "mask_threshold": 0.1,
            "clips": ["collide-0001"],
        },
    }
    (explain / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return explain
