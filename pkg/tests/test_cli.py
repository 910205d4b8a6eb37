import json

import numpy as np
import pytest

from polymer_lab.cli import _s_grid, main


def test_s_grid():
    assert np.allclose(_s_grid("-1:1:0.5"), [-1, -0.5, 0, 0.5, 1])
    with pytest.raises(Exception):
        _s_grid("1:0:0.1")


def test_oracle(capsys):
    assert main(["oracle", "enumerate", "--n", "2", "--width", "2"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["environments"] == 32


def test_simulate(tmp_path, capsys):
    rc = main(["simulate", "--env", "rademacher", "--n", "16", "--beta", "1.0", "--alpha", "0.25", "--replicas", "20", "--seed", "42", "--out", str(tmp_path)])
    assert rc == 0
    assert (tmp_path / "manifest.json").exists()


def test_run_and_errors(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"experiment": "E6_duhamel", "n_list": [16], "replicas": 2, "out_dir": str(tmp_path / "out")}))
    assert main(["run", "--config", str(cfg)]) == 0
    cfg.write_text(json.dumps({"experiment": "E1_p2l_convergence", "n_list": [100000], "replicas": 2}))
    assert main(["run", "--config", str(cfg)]) == 2
    assert "max_n" in capsys.readouterr().err


def test_crossover(tmp_path):
    out = tmp_path / "g.csv"
    assert main(["crossover", "--beta", "1.0", "--s-grid", "-1:0:1", "--quad-order", "8", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "s,G_beta,self_convergence" and len(lines) == 3
    g = [float(l.split(",")[1]) for l in lines[1:]]
    assert 0 < g[0] < g[1] < 1
    man = json.loads(out.with_suffix(".json").read_text())
    assert man["params"]["beta"] == 1.0 and man["flagged"] is False
