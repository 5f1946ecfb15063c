import json
import os
import shutil
import subprocess

import pytest


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory):
    cli = os.environ.get("REFSTEER_CLI") or shutil.which("refsteer")
    if not cli:
        pytest.skip("refsteer CLI not available")
    root = tmp_path_factory.mktemp("ckpt")
    demos = root / "demos.jsonl"
    config = root / "config.json"
    config.write_text(json.dumps({"n1": 6, "n2": 6, "diffusion_steps": 10, "epochs": 5, "batch": 8, "warmup": 2}))
    subprocess.run([cli, "gen-demos", "--task", "reach-via", "--n", "8", "--out", str(demos)], check=True)
    subprocess.run([cli, "train", "--demos", str(demos), "--config", str(config), "--out", str(root / "ck"), "--quiet"],
                   check=True)
    return root / "ck"
