import json
from pathlib import Path

import pytest

from trollmap.cli import main
from trollmap.corpus import dump_jsonl
from trollmap.synthetic import troll_thread


@pytest.fixture(scope="session")
def planted_run(tmp_path_factory):
    """Full default pipeline on the planted-troll thread, seed 0."""
    root = tmp_path_factory.mktemp("planted")
    fx = troll_thread(seed=0)
    src = root / "thread.jsonl"
    src.write_bytes(dump_jsonl(fx.comments))
    out = root / "out"
    assert main(["run", str(src), "-o", str(out), "--seed", "0"]) == 0
    report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    return {"fixture": fx, "input": src, "out": out, "report": report}


def tree_bytes(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}
