import json

import pytest

from simcal.cli import main
from simcal.runner import apply_overrides, default_config_doc


@pytest.fixture
def config_path(tmp_path):
    doc = apply_overrides(default_config_doc("quasi_static"),
                          {"system": {"num_subcarriers": 32, "num_symbols": 8}})
    p = tmp_path / "scenario.json"
    p.write_text(json.dumps(doc))
    return str(p)


def test_validate_ok(config_path, capsys):
    assert main(["validate", "--config", config_path]) == 0
    out = capsys.readouterr().out
    assert out.startswith("ok:")
    assert "K=32" in out


def test_validate_rejects_bad_config(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"system": {"num_subcarriers": -1}}')
    assert main(["validate", "--config", str(p)]) == 1
    assert "invalid" in capsys.readouterr().err


def test_validate_missing_file(capsys):
    assert main(["validate", "--config", "/nonexistent.json"]) == 1


def test_run_writes_manifest(config_path, tmp_path, capsys):
    out = tmp_path / "artifacts"
    status = main(["run", "--config", config_path, "--plan", "quasi_static_cdf",
                   "--drops", "2", "--seed", "3", "--out", str(out),
                   "--algo", "uncal,tls"])
    assert status == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["plan"]["kind"] == "quasi_static_cdf"
    assert man["plan"]["seed"] == 3
    assert man["plan"]["algorithms"] == ["uncal", "tls"]
    assert (out / "se_cdf_tls.csv").exists()
    assert "manifest.json" in capsys.readouterr().out


def test_run_seed_flag_changes_artifacts(config_path, tmp_path):
    hashes = []
    for seed in ("3", "3", "4"):
        out = tmp_path / f"run{len(hashes)}"
        main(["run", "--config", config_path, "--plan", "quasi_static_cdf",
              "--drops", "1", "--seed", seed, "--out", str(out),
              "--algo", "tls"])
        man = json.loads((out / "manifest.json").read_text())
        hashes.append({f["path"]: f["sha256"] for f in man["files"]})
    assert hashes[0] == hashes[1]
    assert hashes[0] != hashes[2]


def test_run_noiseless_flag(config_path, tmp_path):
    out = tmp_path / "nl"
    status = main(["run", "--config", config_path, "--plan", "quasi_static_cdf",
                   "--drops", "1", "--out", str(out), "--algo", "tls",
                   "--noiseless"])
    assert status == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["plan"]["overrides"]["run"]["noiseless"] is True


def test_run_rejects_unknown_algorithm(config_path, tmp_path, capsys):
    status = main(["run", "--config", config_path, "--plan", "quasi_static_cdf",
                   "--drops", "1", "--out", str(tmp_path / "x"),
                   "--algo", "magic"])
    assert status == 1
    assert "error" in capsys.readouterr().err


def test_run_rejects_unknown_plan(config_path, tmp_path):
    with pytest.raises(SystemExit):
        main(["run", "--config", config_path, "--plan", "nope",
              "--out", str(tmp_path / "x")])


def test_crlb_table(capsys):
    assert main(["crlb", "--rho-db", "0,10,20"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].split() == ["rho_db", "range_rmse_m", "vel_rmse_mps",
                                "phase_var_rad2"]
    assert len(lines) == 4
    # bounds shrink with SNR
    r = [float(l.split()[1]) for l in lines[1:]]
    assert r[0] > r[1] > r[2]


def test_crlb_with_config(config_path, capsys):
    assert main(["crlb", "--rho-db", "10", "--config", config_path]) == 0
    assert len(capsys.readouterr().out.strip().splitlines()) == 2


def test_crlb_bad_list(capsys):
    assert main(["crlb", "--rho-db", "ten"]) == 1
    assert "invalid" in capsys.readouterr().err
