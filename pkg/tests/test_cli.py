import csv
import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from qgdm.cli import config, main, runs, stats
from qgdm.train import ConfigError

OURS = [0.995, 0.999, 0.999, 0.996, 0.993, 0.990, 0.992, 0.993]
BASELINE = [0.972, 0.867, 0.741, 0.676, 0.602, 0.555, 0.463, 0.324]
QUICK = ["--epochs", "4"]


def run_cli(*argv):
    return main.main([str(a) for a in argv])


@pytest.mark.parametrize(
    "variant,n,target,layers",
    [("qgdm", 1, "pure", 1), ("qgdm", 2, "mixed", 1), ("qgdm", 3, "pure", 1), ("qgdm", 3, "mixed", 2),
     ("qgdm", 4, "pure", 2), ("qgdm", 4, "mixed", 3), ("rqgdm", 2, "mixed", 1), ("rqgdm", 4, "mixed", 2),
     ("rqgdm", 5, "pure", 1), ("rqgdm", 6, "mixed", 3), ("rqgdm", 8, "mixed", 4)],
)
def test_preset_layer_depths(variant, n, target, layers):
    assert config.default_layers(variant, n, target) == layers


def test_preset_hyperparameters():
    base = config.reference_train_config("qgdm", 1, "pure")
    assert (base.T, base.s, base.batch_size, base.lam, base.epochs) == (30, 0.008, 16, 0.02, 200)
    assert (base.lr_initial, base.lr_final, base.lr_decay_steps, base.embed_layers) == (0.3, 0.01, 200, 5)
    big = config.reference_train_config("rqgdm", 7, "mixed")
    assert (big.epochs, big.lr_initial, big.lr_final, big.lr_decay_steps, big.T) == (500, 0.5, 0.07, 500, 30)
    assert config.reference_train_config("rqgdm", 8, "mixed").T == 90
    assert config.reference_train_config("rqgdm", 8, "pure").epochs == 200


@pytest.mark.parametrize(
    "values,message",
    [({"variant": "rqgdm", "n": 1}, "n >= 2"), ({"n": 5}, "budget"), ({"batch_size": 30}, "batch_size"),
     ({"target": "thermal"}, "target"), ({"variant": "rqgdm", "n": 3, "n_tau": 2}, "n_tau"),
     ({"colour": "red"}, "unknown"), ({"seeds": []}, "seed")],
)
def test_config_violations_name_the_invariant(values, message):
    with pytest.raises(ConfigError, match=message):
        config.build_config(values)


def test_large_qgdm_needs_explicit_flag():
    assert config.build_config({"n": 5, "allow_large": True}).n == 5


def test_toml_loading_and_overrides(tmp_path):
    path = tmp_path / "exp.toml"
    path.write_text('variant = "rqgdm"\nn = 3\ntarget = "mixed"\nseeds = [1, 2]\nepochs = 7\n')
    cfg = config.load_config(path, {"n": 4, "out": None})
    assert (cfg.variant, cfg.n, cfg.seeds, cfg.train.epochs, cfg.train.layers) == ("rqgdm", 4, (1, 2), 7, 2)
    (tmp_path / "nested.toml").write_text("[train]\nepochs = 3\n")
    with pytest.raises(ConfigError, match="flat"):
        config.load_config(tmp_path / "nested.toml")
    (tmp_path / "broken.toml").write_text("n = \n")
    with pytest.raises(ConfigError):
        config.load_config(tmp_path / "broken.toml")


def test_config_hash_ignores_output_location():
    a = config.build_config({"out": "a"})
    assert a.config_hash() == config.build_config({"out": "b"}).config_hash()
    assert a.config_hash() != config.build_config({"epochs": 3}).config_hash()


@pytest.mark.parametrize("text,expected", [("0-3", [0, 1, 2, 3]), ("4,1", [4, 1]), ("0-1,7", [0, 1, 7])])
def test_seed_lists(text, expected):
    assert main.parse_int_list(text) == expected


def test_summary_stats():
    s = stats.summarize_values([0.9])
    assert s.median == s.mean == 0.9 and s.std == 0.0
    s = stats.summarize_values([1.0, 2.0, 4.0])
    assert (s.median, s.mean) == (2.0, pytest.approx(7 / 3))
    assert s.std == pytest.approx(np.std([1.0, 2.0, 4.0]))
    with pytest.raises(ValueError):
        stats.summarize_values([])


def test_relative_change():
    assert stats.relative_change([0.5, 0.7], [0.5, 0.7]) == 0.0
    assert 100 * stats.relative_change(OURS, BASELINE) == pytest.approx(53.0192, abs=5e-5)


def test_summarize_command_reproduces_relative_change(tmp_path, capsys):
    out = tmp_path / "rel.json"
    code = run_cli("summarize", "--values", ",".join(map(str, OURS)),
                   "--baseline-values", ",".join(map(str, BASELINE)), "--out", out)
    assert code == 0
    report = json.loads(out.read_text())
    assert round(report["relative_change_percent"], 2) == 53.02
    assert json.loads(capsys.readouterr().out) == report


def test_summarize_without_input_fails(tmp_path):
    assert run_cli("summarize", tmp_path) == main.EXIT_CONFIG


def test_invalid_batch_size_rejected_before_compute(tmp_path, capsys):
    out = tmp_path / "never"
    path = tmp_path / "bad.toml"
    path.write_text("batch_size = 30\n")
    assert run_cli("train", "--config", path, "--out", out) == main.EXIT_CONFIG
    assert "batch_size" in capsys.readouterr().err
    assert not out.exists()


def test_train_artifacts_are_reproducible(tmp_path):
    for name in ("a", "b"):
        assert run_cli("train", "--n", 1, "--seeds", "0-1", "--out", tmp_path / name, *QUICK) == 0
    run_a = tmp_path / "a" / "seed_0001"
    names = sorted(p.name for p in run_a.iterdir())
    assert names == ["MANIFEST.json", "checkpoint.json", "final_state.json", "generation.csv", "result.json",
                     "schedule.csv", "target_state.json", "timing.csv", "train.csv"]
    for name in names:
        if name != "timing.csv":
            assert (run_a / name).read_bytes() == (tmp_path / "b" / "seed_0001" / name).read_bytes(), name
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert [r["seed"] for r in summary["runs"]] == [0, 1]
    assert summary["summary"]["count"] == 2
    rows = list(csv.DictReader((run_a / "train.csv").open()))
    assert len(rows) == 4 and list(rows[0]) == ["epoch", "loss", "loss_L0", "loss_batch_mean", "lr"]


def test_manifest_records_hashes(tmp_path):
    assert run_cli("train", "--variant", "rqgdm", "--n", 2, "--target", "mixed", "--seed", 3,
                   "--out", tmp_path, *QUICK) == 0
    run_dir = tmp_path / "seed_0003"
    manifest = json.loads((run_dir / "MANIFEST.json").read_text())
    assert manifest["seed"] == 3
    assert manifest["config"]["variant"] == "rqgdm"
    assert manifest["config_sha256"] == config.build_config(
        {"variant": "rqgdm", "n": 2, "target": "mixed", "seeds": [3], "epochs": 4}).config_hash()
    for name, digest in manifest["files"].items():
        assert hashlib.sha256((run_dir / name).read_bytes()).hexdigest() == digest
    assert "timing.csv" not in manifest["files"]


def test_seeds_differ(tmp_path):
    run_cli("train", "--seeds", "0,1", "--out", tmp_path, *QUICK)
    a = (tmp_path / "seed_0000" / "target_state.json").read_text()
    assert a != (tmp_path / "seed_0001" / "target_state.json").read_text()


def test_failed_run_gives_nonzero_exit(tmp_path, monkeypatch):
    real = runs.run_seed

    def flaky(cfg, seed, run_dir, command="train"):
        if seed == 1:
            raise RuntimeError("boom")
        return real(cfg, seed, run_dir, command)

    monkeypatch.setattr(runs, "run_seed", flaky)
    assert run_cli("train", "--seeds", "0-1", "--out", tmp_path, *QUICK) == main.EXIT_RUN_FAILED
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["failed"] == [{"seed": 1, "error": "RuntimeError: boom"}]
    assert summary["summary"]["count"] == 1


def test_failure_study_outputs(tmp_path):
    assert run_cli("failure-study", "--variant", "qgdm", "--seed", 0, "--out", tmp_path, *QUICK) == 0
    run_dir = tmp_path / "seed_0000"
    assert json.loads((run_dir / "MANIFEST.json").read_text())["config"]["variant"] == "naive"
    rows = list(csv.DictReader((run_dir / "hs_distance.csv").open()))
    assert [int(r["epoch"]) for r in rows] == [0, 1, 2, 3]
    assert all(float(r["composite_hs"]) >= 0 for r in rows)
    dump = json.loads((run_dir / "density_comparison.json").read_text())
    assert np.array(dump["target"]["real"]).shape == (2, 2)


def test_sweep_ntau(tmp_path):
    assert run_cli("sweep-ntau", "--n", 1, "--ntaus", "1,2", "--seed", 0, "--out", tmp_path, *QUICK) == 0
    rows = list(csv.DictReader((tmp_path / "sweep.csv").open()))
    assert [int(r["n_tau"]) for r in rows] == [1, 2]
    assert (tmp_path / "ntau_2" / "seed_0000" / "checkpoint.json").exists()


def test_sweep_ntau_requires_qgdm(tmp_path):
    assert run_cli("sweep-ntau", "--variant", "naive", "--ntaus", "1", "--out", tmp_path) == main.EXIT_CONFIG


def test_export_bloch(tmp_path):
    run_cli("train", "--seed", 0, "--out", tmp_path, *QUICK)
    out = tmp_path / "bloch.csv"
    assert run_cli("export-bloch", tmp_path / "seed_0000" / "checkpoint.json", "--out", out) == 0
    rows = list(csv.DictReader(out.open()))
    assert [int(r["t"]) for r in rows] == list(range(1, 31))
    for r in rows:
        assert abs(np.linalg.norm([float(r["x"]), float(r["y"]), float(r["z"])]) - 1) < 1e-8


def test_export_bloch_needs_single_qubit_register(tmp_path):
    run_cli("train", "--n", 2, "--seed", 0, "--out", tmp_path, "--epochs", 1)
    assert run_cli("export-bloch", tmp_path / "seed_0000" / "checkpoint.json") == main.EXIT_CONFIG


def test_summarize_run_directories(tmp_path, capsys):
    run_cli("train", "--seeds", "0-1", "--out", tmp_path / "exp", *QUICK)
    capsys.readouterr()
    assert run_cli("summarize", tmp_path / "exp") == 0
    report = json.loads(capsys.readouterr().out)
    summary = json.loads((tmp_path / "exp" / "summary.json").read_text())["summary"]
    assert report["summary"]["median"] == summary["median"]


def test_parallel_seeds_match_serial(tmp_path):
    run_cli("train", "--seeds", "0-1", "--out", tmp_path / "serial", *QUICK)
    run_cli("train", "--seeds", "0-1", "--out", tmp_path / "parallel", "--jobs", 2, *QUICK)
    for seed in ("seed_0000", "seed_0001"):
        a = (tmp_path / "serial" / seed / "train.csv").read_bytes()
        assert a == (tmp_path / "parallel" / seed / "train.csv").read_bytes()


def test_shipped_experiment_configs_load():
    paths = sorted((Path(__file__).parents[1] / "experiments").glob("*.toml"))
    assert paths
    for path in paths:
        cfg = config.load_config(path)
        assert cfg.train == config.reference_train_config(cfg.variant, cfg.n, cfg.target), path.name
