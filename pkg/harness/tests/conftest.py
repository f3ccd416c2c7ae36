import json

import pytest

from netdoc import tiny_net_doc


@pytest.fixture
def workdir(tmp_path):
    """Networks dir + a 6-entry plan + output path."""
    nets = tmp_path / "nets"
    nets.mkdir()
    (nets / "tiny.json").write_text(json.dumps(tiny_net_doc()))
    (nets / "tiny__L50__uniform__s0.json").write_text(
        json.dumps(tiny_net_doc(name="tiny", width=2)))
    plan = tmp_path / "plan.csv"
    rows = ["network,pruning_level,strategy,seed,bs"]
    for level in (0, 50):
        for bs in (1, 2, 4):
            rows.append(f"tiny,{level},uniform,0,{bs}")
    plan.write_text("\n".join(rows) + "\n")
    return {"nets": str(nets), "plan": str(plan), "out": str(tmp_path / "out.csv"),
            "tmp": tmp_path}
