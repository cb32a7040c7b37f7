import csv
import json

import numpy as np
import pytest

from weightflow import checkpoint
from weightflow.cli import RunDir, build_config, main
from weightflow.errors import ConfigError, MissingArtifactError

TINY_INI = """\
[run]
n_trajectories = 60
samples_per_time = 40
n_times = 3
grid_points = 12
eval_samples = 200
mmd_cap = 50

[train]
anchor_epochs = 20
anchor_lr = 0.02
hypernet_epochs = 3
ae_epochs = 10
d_model = 8
heads = 2
d_time = 2
d_ff = 8

[solver]
steps_per_unit = 3
"""


@pytest.fixture
def ini(tmp_path):
    p = tmp_path / "tiny.ini"
    p.write_text(TINY_INI)
    return str(p)


def run(*argv):
    return main([str(a) for a in argv])


def rows(path):
    with open(path) as fh:
        lines = [l for l in fh if not l.startswith("#")]
    return list(csv.DictReader(lines))


def full_pipeline(out, ini):
    assert run("simulate", "-o", out, "-c", ini) == 0
    assert run("pretrain", "-o", out) == 0
    assert run("train", "-o", out, "--mode", "both") == 0
    assert run("eval", "-o", out) == 0
    assert run("export", "-o", out) == 0


def test_simulate_is_reproducible(tmp_path, ini):
    for name in ("a", "b"):
        assert run("simulate", "-o", tmp_path / name, "-c", ini, "--seed", 7) == 0
    for f in ("train.csv", "eval.csv"):
        assert (tmp_path / "a" / "data" / f).read_bytes() == (tmp_path / "b" / "data" / f).read_bytes()
    assert run("simulate", "-o", tmp_path / "c", "-c", ini, "--seed", 8) == 0
    assert (tmp_path / "a" / "data" / "eval.csv").read_bytes() != (tmp_path / "c" / "data" / "eval.csv").read_bytes()


def test_zero_trajectories_is_a_config_error(tmp_path):
    out = tmp_path / "run"
    assert run("simulate", "-o", out, "--set", "run.n_trajectories=0") == 2
    assert not out.exists()


def test_default_simulation_grid(tmp_path):
    out = tmp_path / "run"
    assert run("simulate", "-o", out) == 0
    header = lambda f: json.loads((out / "data" / f).read_text().partition("\n")[0])
    assert len(header("train.csv")["times"]) == 10 and len(header("eval.csv")["times"]) == 100


@pytest.mark.parametrize("argv", [["--set", "run.bogus=1"], ["--set", "nonsense"],
                                  ["--set", "train.lam=-1"], ["--system", "lorenz"],
                                  ["--set", "train.anchor_epochs=many"]])
def test_bad_settings_exit_2(tmp_path, argv):
    assert run("simulate", "-o", tmp_path / "r", *argv) == 2


def test_missing_config_file_exits_2(tmp_path):
    assert run("simulate", "-o", tmp_path / "r", "-c", tmp_path / "nope.ini") == 2


def test_missing_artifacts_exit_3(tmp_path, ini):
    out = tmp_path / "run"
    assert run("pretrain", "-o", out, "-c", ini) == 3
    assert run("simulate", "-o", out, "-c", ini) == 0
    assert run("train", "-o", out) == 3
    assert run("eval", "-o", out) == 3
    assert run("export", "-o", out) == 3
    assert run("pretrain", "-o", out) == 0
    assert run("eval", "-o", out, "--mode", "weightflow_cde") == 3


def test_divergence_exits_4_and_keeps_last_finite_checkpoint(tmp_path, ini):
    out = tmp_path / "run"
    assert run("simulate", "-o", out, "-c", ini) == 0
    assert run("pretrain", "-o", out) == 0
    code = run("train", "-o", out, "-c", ini, "--allow-hash-mismatch", "--mode", "ode",
               "--set", "train.hypernet_lr=10000", "--set", "train.hypernet_epochs=20",
               "--set", "train.d_model=32", "--set", "train.heads=4", "--set", "train.d_time=8",
               "--set", "train.d_ff=64")
    assert code == 4
    flat, meta = checkpoint.load(out / "model" / "ode" / "hypernet.wflw", "hypernet")
    assert np.isfinite(flat).all()


def test_hash_mismatch_is_refused_unless_allowed(tmp_path, ini):
    out = tmp_path / "run"
    assert run("simulate", "-o", out, "-c", ini) == 0
    assert run("pretrain", "-o", out, "-c", ini, "--seed", 5) == 2
    assert not (out / "anchors").exists()
    assert run("pretrain", "-o", out, "-c", ini, "--seed", 5, "--allow-hash-mismatch") == 0


def test_output_dir_does_not_change_hash(ini):
    assert build_config(ini, [], "x").config_hash == build_config(ini, [], "y").config_hash
    assert build_config(ini, [], "x").config_hash != build_config(ini, ["run.seed=1"], "x").config_hash


def test_echoed_config_reproduces_hash(tmp_path, ini):
    out = tmp_path / "run"
    assert run("simulate", "-o", out, "-c", ini, "--set", "train.lam=0.5") == 0
    rc = build_config(str(out / "config.ini"), [], str(out))
    assert rc.config_hash == json.loads((out / "config.json").read_text())["config_hash"]
    assert rc.train.lam == 0.5 and rc.n_times == 3


def test_checkpoint_round_trip_and_corruption(tmp_path):
    x = np.random.default_rng(0).normal(size=257) * 1e-300
    p = tmp_path / "a.wflw"
    checkpoint.save(p, x, {"stage": "anchor", "note": "π"})
    y, meta = checkpoint.load(p, "anchor")
    assert y.tobytes() == x.tobytes() and meta["note"] == "π"
    with pytest.raises(ConfigError):
        checkpoint.load(p, "hypernet")
    blob = p.read_bytes()
    with pytest.raises(ConfigError):
        checkpoint.decode(b"XXXX" + blob[4:])
    with pytest.raises(ConfigError):
        checkpoint.decode(blob[:-8])
    with pytest.raises(MissingArtifactError):
        checkpoint.load(tmp_path / "gone.wflw")


def test_nearest_anchor_eval_needs_no_hypernet(tmp_path, ini):
    out = tmp_path / "run"
    assert run("simulate", "-o", out, "-c", ini) == 0
    assert run("pretrain", "-o", out) == 0
    assert run("eval", "-o", out, "--mode", "nearest_anchor") == 0
    got = rows(out / "eval" / "eval.csv")
    assert len(got) == 12 * 3 and {r["mode"] for r in got} == {"nearest_anchor"}


def test_full_pipeline_export_and_rerun_identity(tmp_path, ini):
    a, b = tmp_path / "a", tmp_path / "b"
    full_pipeline(a, ini)
    full_pipeline(b, ini)
    metrics = rows(a / "export" / "metrics.csv")
    assert len(metrics) == 12 * 3 * 3
    assert {r["mode"] for r in metrics} == {"nearest_anchor", "weightflow_cde", "weightflow_ode"}
    assert len(rows(a / "export" / "anchors.csv")) == 3
    assert len(rows(a / "export" / "loss_curves.csv")) == 2 * 3
    for f in ("metrics.csv", "anchors.csv", "loss_curves.csv", "summary.json"):
        assert (a / "export" / f).read_bytes() == (b / "export" / f).read_bytes()
    summary = json.loads((a / "export" / "summary.json").read_text())
    assert "ratio_to_nearest_anchor" in summary["eval"]["weightflow_cde"]


def test_saved_flow_reloads_exactly(tmp_path, ini):
    out = tmp_path / "run"
    assert run("simulate", "-o", out, "-c", ini) == 0
    assert run("pretrain", "-o", out) == 0
    assert run("train", "-o", out) == 0
    rd = RunDir(build_config(str(out / "config.ini"), [], str(out)))
    flow, anchors = rd.load_flow("cde"), rd.load_anchors()
    w1 = flow.roll(anchors.thetas[0], anchors.times, rd.rc.train.solver)
    w2 = rd.load_flow("cde").roll(anchors.thetas[0], anchors.times, rd.rc.train.solver)
    assert np.array_equal(w1, w2) and np.array_equal(w1[0], anchors.thetas[0])
    ae = rd.load_autoencoder()
    assert ae.encode(anchors.thetas).shape == (3, 1)
