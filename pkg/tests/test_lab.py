import json

import pytest

from polymer_lab.env import EnvSpec
from polymer_lab.lab import BudgetError, ExperimentConfig, dump_json, run, simulate, to_csv


def test_config_roundtrip():
    cfg = ExperimentConfig("E6_duhamel", EnvSpec("uniform"), n_list=[16, 32], replicas=3, seed=5)
    again = ExperimentConfig.from_json(cfg.to_json())
    assert again == cfg


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig("E99")
    with pytest.raises(ValueError):
        ExperimentConfig("E6_duhamel", replicas=-1)


def test_budget():
    with pytest.raises(BudgetError):
        run(ExperimentConfig("E1_p2l_convergence", n_list=[16384], replicas=1), write=False)
    with pytest.raises(BudgetError):
        run(ExperimentConfig("E1_p2l_convergence", n_list=[4096], replicas=100_000), write=False)


def test_csv_format():
    text = to_csv([{"a": 1, "b": "x,y"}, {"a": 2.5, "b": 'q"'}], ["a", "b"])
    assert text == 'a,b\n1,"x,y"\n2.5,"q"""\n'


def test_json_sorted():
    assert dump_json({"b": 1, "a": 2}).index('"a"') < dump_json({"b": 1, "a": 2}).index('"b"')


def test_run_writes_outputs(tmp_path):
    cfg = ExperimentConfig("E6_duhamel", EnvSpec("rademacher"), n_list=[16, 32], replicas=4, seed=1, out_dir=str(tmp_path))
    rs = run(cfg)
    assert rs.passed
    for name in ("records.csv", "summary.json", "manifest.json"):
        assert (tmp_path / name).exists()
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["seed"] == 1 and man["passed"] is True and "tolerances" in man and "version" in man
    raw = (tmp_path / "records.csv").read_bytes()
    assert b"\r\n" not in raw and raw.count(b"\n") == 1 + 2 * 4


def test_run_is_reproducible(tmp_path):
    cfg = ExperimentConfig("E2_random_llt", n_list=[16, 32], replicas=10, seed=3, out_dir=str(tmp_path / "a"))
    run(cfg)
    cfg.out_dir = str(tmp_path / "b")
    run(cfg)
    assert (tmp_path / "a" / "records.csv").read_bytes() == (tmp_path / "b" / "records.csv").read_bytes()


def test_zero_replicas(tmp_path):
    rs = run(ExperimentConfig("E9_universality", n_list=[16], replicas=0, out_dir=str(tmp_path)))
    assert rs.records == []
    assert (tmp_path / "manifest.json").exists()


def test_exact_experiments(tmp_path):
    assert run(ExperimentConfig("E5_four_param", n_list=[16], replicas=2, out_dir=str(tmp_path / "e5"))).passed
    assert run(ExperimentConfig("E3_supercritical", n_list=[64, 256, 1024, 4096], replicas=0, out_dir=str(tmp_path / "e3"))).passed


def test_simulate(tmp_path):
    summary = simulate(EnvSpec("gaussian"), 32, 1.0, 0.25, 50, 7, tmp_path)
    assert summary["moments"]["count"] == 50
    lines = (tmp_path / "replicas.csv").read_text().splitlines()
    assert lines[0] == "seed,n,beta,value" and len(lines) == 51
