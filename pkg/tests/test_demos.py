import runpy
import sys
from pathlib import Path

import pytest

DEMOS = sorted((Path(__file__).resolve().parents[1] / "demos").glob("*.py"))


@pytest.mark.parametrize("path", DEMOS, ids=lambda p: p.stem)
def test_demo_runs(path, monkeypatch, capsys):
    # the training demo takes scene and epoch counts; keep it short here
    monkeypatch.setattr(sys, "argv", [str(path), "6", "2"])
    runpy.run_path(str(path), run_name="__main__")
    assert capsys.readouterr().out
