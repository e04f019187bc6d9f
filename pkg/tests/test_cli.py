import json
import os

import pytest

from segreopt.cli import main


def test_decompose_smoke(tmp_path, capsys):
    out = tmp_path / "run"
    rc = main(["decompose", "--preset", "smoke-decompose", "--out", str(out)])
    assert rc == 0
    assert (out / "aggregate.csv").exists()
    assert (out / "manifest.json").exists()
    captured = capsys.readouterr()
    assert "final rms rel err" in captured.out


def test_regress_smoke_with_overrides(tmp_path):
    out = tmp_path / "run"
    rc = main(["regress", "--preset", "smoke-regress", "--out", str(out),
               "--replicates", "1", "--max-iters", "2", "--method", "rgn"])
    assert rc == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["replicates"] == 1
    assert manifest["config"]["methods"] == ["rgn"]
    assert (out / "trace_rgn_0.csv").exists()
    assert not (out / "trace_rgd_0.csv").exists()


def test_config_file_and_env_override(tmp_path, monkeypatch):
    cfg = {
        "task": "decompose", "dims": [5, 5, 5], "rank": 2, "rho": 0.0,
        "noise_sd": 0.1, "methods": ["rgn"], "replicates": 2, "seed": 3,
        "max_iters": 2,
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "o"
    monkeypatch.setenv("SEGREOPT_REPLICATES", "1")
    rc = main(["decompose", "--config", str(path), "--out", str(out)])
    assert rc == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["replicates"] == 1


def test_bench_expands_grid(tmp_path):
    cfg = {
        "task": "decompose", "dims": [5, 5, 5], "rank": 2, "rho": 0.0,
        "noise_sd": 0.0, "methods": ["rgn"], "replicates": 1, "seed": 3,
        "max_iters": 2, "init_refine_sweeps": 1,
        "grid": {"noise_sd": [0.0, 0.5]},
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "bench"
    rc = main(["bench", "--config", str(path), "--out", str(out)])
    assert rc == 0
    cells = sorted(os.listdir(out))
    assert len(cells) == 2
    for cell in cells:
        assert (out / cell / "aggregate.csv").exists()


def test_missing_preset_and_config_errors(tmp_path):
    with pytest.raises(SystemExit):
        main(["decompose", "--out", str(tmp_path / "x")])
