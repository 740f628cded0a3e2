from __future__ import annotations

import json
import shlex
import sys
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"
PEER = Path(__file__).parent / "doubles" / "peer.py"


def peer_address(mode: str) -> str:
    return "cmd:" + " ".join(shlex.quote(p) for p in (sys.executable, str(PEER), mode))


def load_fixture(name: str):
    return json.loads((FIXTURES / name).read_text(encoding="utf-8"))


@pytest.fixture
def two_prim_task(tmp_path):
    manifest = {
        "task_id": "toy",
        "pool": ["mlp", "mh-attention"],
        "direction": "maximize",
        "evaluator": {"type": "synthetic", "seed": 0},
        "limits": {"max_steps": 60},
    }
    (tmp_path / "task.json").write_text(json.dumps(manifest))
    return tmp_path


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("tests.test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
