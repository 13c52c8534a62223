import json

import pytest

from psot.cli import main
from psot.data import read_dataset


def write_json(path, payload):
    path.write_text(json.dumps(payload))
    return str(path)


@pytest.fixture()
def dataset_dir(tmp_path):
    spec = write_json(
        tmp_path / "spec.json",
        dict(seed=2, T=2, N=2, d=8, K=3, C=4, task="which_sounds", noise_sigma=0.1),
    )
    out = tmp_path / "data"
    assert main(["gen", "--spec", spec, "--out", str(out), "--count", "12"]) == 0
    return out


def test_gen_writes_manifest_and_bundles(dataset_dir):
    bundles = read_dataset(dataset_dir)
    assert len(bundles) == 12
    assert (dataset_dir / "manifest.txt").read_text().count("\n") == 12


def test_train_eval_viz_cycle(tmp_path, dataset_dir, capsys):
    train_cfg = write_json(
        tmp_path / "train.json",
        dict(epochs=2, batch_size=4, seed=1, learning_rate=1e-3),
    )
    ckpt = tmp_path / "model.ckpt"
    code = main([
        "train", "--data", str(dataset_dir), "--train-config", train_cfg,
        "--out", str(ckpt),
    ])
    assert code == 0
    assert ckpt.exists()
    report = json.loads(ckpt.with_suffix(".ckpt.report.json").read_text())
    assert len(report["epoch_losses"]) == 2

    assert main(["eval", "--data", str(dataset_dir), "--ckpt", str(ckpt)]) == 0
    out = capsys.readouterr().out
    assert "accuracy:" in out

    bundle_path = dataset_dir / read_dataset(dataset_dir)[0].sample_id
    bundle_file = str(bundle_path) + ".psot"
    prefix = tmp_path / "map"
    code = main([
        "viz", "--bundle", bundle_file, "--ckpt", str(ckpt),
        "--segment", "0", "--map", "sound", "--out", str(prefix),
    ])
    assert code == 0
    assert (tmp_path / "map.csv").exists()
    assert (tmp_path / "map.pgm").read_bytes().startswith(b"P5\n")


def test_ablate_writes_csv(tmp_path, dataset_dir):
    train_cfg = write_json(tmp_path / "train.json", dict(epochs=1, batch_size=4, seed=1))
    out = tmp_path / "table.csv"
    code = main([
        "ablate", "--data", str(dataset_dir), "--grid", "adjacency",
        "--train-config", train_cfg, "--out", str(out),
    ])
    assert code == 0
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 1 + 4


def test_model_config_shape_autofill_and_mismatch(tmp_path, dataset_dir):
    cfg_path = write_json(tmp_path / "model.json", {"lambda": 0.4, "layers_q": 1})
    ckpt = tmp_path / "m.ckpt"
    train_cfg = write_json(tmp_path / "t.json", dict(epochs=1, batch_size=4, seed=1))
    assert main([
        "train", "--data", str(dataset_dir), "--model-config", cfg_path,
        "--train-config", train_cfg, "--out", str(ckpt),
    ]) == 0

    wrong = write_json(tmp_path / "wrong.json", dict(T=5, N=2, d=8, K=3, C=4))
    code = main([
        "train", "--data", str(dataset_dir), "--model-config", wrong,
        "--train-config", train_cfg, "--out", str(tmp_path / "x.ckpt"),
    ])
    assert code == 2


def test_gradcheck_tiny_passes(capsys):
    assert main(["gradcheck", "--tiny"]) == 0
    assert "PASS" in capsys.readouterr().out
