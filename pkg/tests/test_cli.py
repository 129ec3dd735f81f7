import json

import pytest
from PIL import Image

from leafcnn import cli
from leafcnn.cli import main
from leafcnn.errors import DivergenceError
from leafcnn.explain import read_pfm
from leafcnn.synthetic import make_quadrant_blobs, write_image_folder
from leafcnn.training import TrainingHistory

from fixtures import conv_checkpoint, counts_fixture, perfect_fixture, random_images, stub_checkpoint


def folder_fixture(root, n_healthy, n_diseased):
    for label, n in (("Healthy", n_healthy), ("Diseased", n_diseased)):
        (root / label).mkdir(parents=True)
        for i in range(n):
            Image.new("RGB", (4, 4)).save(root / label / f"{i:03d}.png")
    return root


# -- split ------------------------------------------------------------------


def test_split_100_images(tmp_path, capsys):
    data = folder_fixture(tmp_path / "data", 60, 40)
    out = tmp_path / "m.tsv"
    assert main(["split", "--data", str(data), "--seed", "42", "--out", str(out)]) == 0
    splits = [line.split("\t")[2] for line in out.read_text().splitlines()]
    assert (splits.count("train"), splits.count("val"), splits.count("test")) == (80, 15, 5)
    assert "Healthy: train=48 val=9 test=3" in capsys.readouterr().out


def test_split_rerun_is_byte_identical(tmp_path):
    data = folder_fixture(tmp_path / "data", 60, 40)
    a, b = tmp_path / "a.tsv", tmp_path / "b.tsv"
    main(["split", "--data", str(data), "--seed", "42", "--out", str(a)])
    main(["split", "--data", str(data), "--seed", "42", "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_split_empty_class(tmp_path, capsys):
    data = folder_fixture(tmp_path / "data", 5, 0)
    assert main(["split", "--data", str(data), "--out", str(tmp_path / "m.tsv")]) == 2
    assert "empty class" in capsys.readouterr().err


def test_split_missing_directory(tmp_path):
    assert main(["split", "--data", str(tmp_path / "nope"), "--out", str(tmp_path / "m.tsv")]) == 2


# -- train ------------------------------------------------------------------


@pytest.fixture
def train_setup(tmp_path):
    x, y = make_quadrant_blobs(28, seed=1)  # 14 per class -> 11/2/1
    write_image_folder(tmp_path / "data", x, y)
    manifest = tmp_path / "m.tsv"
    assert main(["split", "--data", str(tmp_path / "data"), "--out", str(manifest)]) == 0
    config = tmp_path / "c.json"
    config.write_text(json.dumps({"arch": {"filters": [4, 4], "hidden": 8}, "train": {"batch_size": 4}}))
    return tmp_path, manifest, config


def run_train(root, manifest, config, name, *extra):
    out = root / f"{name}.tldc"
    code = main(["train", "--manifest", str(manifest), "--config", str(config), "--out", str(out), *extra])
    return code, out


def test_train_writes_artifacts(train_setup, capsys):
    root, manifest, config = train_setup
    code, out = run_train(root, manifest, config, "a", "--epochs", "3")
    assert code == 0 and out.exists()
    hist = TrainingHistory.from_csv(out.with_suffix(".history.csv"))
    assert [r.epoch for r in hist] == [1, 2, 3]
    assert out.with_suffix(".history.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    printed = capsys.readouterr().out
    assert "best epoch" in printed and "accuracy" in printed


def test_train_single_epoch_and_no_figures(train_setup):
    root, manifest, config = train_setup
    code, out = run_train(root, manifest, config, "b", "--epochs", "1", "--no-figures")
    assert code == 0
    assert len(out.with_suffix(".history.csv").read_text().splitlines()) == 2
    assert not out.with_suffix(".history.png").exists()


def test_train_same_seed_identical_history(train_setup):
    root, manifest, config = train_setup
    _, a = run_train(root, manifest, config, "c", "--epochs", "2", "--seed", "5", "--no-figures")
    _, b = run_train(root, manifest, config, "d", "--epochs", "2", "--seed", "5", "--no-figures")
    assert a.with_suffix(".history.csv").read_bytes() == b.with_suffix(".history.csv").read_bytes()


def test_train_divergence_exit_code(train_setup, monkeypatch, capsys):
    root, manifest, config = train_setup

    def diverge(*args, **kwargs):
        raise DivergenceError(3, 1, float("nan"))

    monkeypatch.setattr(cli, "fit", diverge)
    code, _ = run_train(root, manifest, config, "e")
    assert code == 1
    assert "epoch 3" in capsys.readouterr().err


def test_train_missing_manifest(tmp_path):
    assert main(["train", "--out", str(tmp_path / "x.tldc")]) == 2


# -- eval -------------------------------------------------------------------


def test_eval_stub_perfect(tmp_path, capsys):
    model = stub_checkpoint(tmp_path / "stub.tldc")
    manifest = perfect_fixture(tmp_path)
    assert main(["eval", "--model", str(model), "--manifest", str(manifest)]) == 0
    assert "accuracy   1.0000" in capsys.readouterr().out


def test_eval_mixed_counts(tmp_path, capsys):
    model = stub_checkpoint(tmp_path / "stub.tldc")
    manifest = counts_fixture(tmp_path)
    assert main(["eval", "--model", str(model), "--manifest", str(manifest)]) == 0
    out = capsys.readouterr().out
    for token in ("accuracy   0.9167", "precision  0.9310", "recall     0.9000", "f1         0.9153"):
        assert token in out


def test_eval_csv_and_report_dir(tmp_path, capsys):
    model = stub_checkpoint(tmp_path / "stub.tldc")
    manifest = counts_fixture(tmp_path)
    report = tmp_path / "report"
    code = main(["eval", "--model", str(model), "--manifest", str(manifest), "--format", "csv",
                 "--report-dir", str(report)])
    assert code == 0
    assert capsys.readouterr().out.splitlines()[1].endswith(",27,2,28,3")
    assert (report / "metrics.txt").exists() and (report / "metrics.csv").exists()
    assert (report / "confusion_matrix.png").read_bytes()[:4] == b"\x89PNG"


def test_eval_empty_split(tmp_path):
    model = stub_checkpoint(tmp_path / "stub.tldc")
    manifest = perfect_fixture(tmp_path)
    assert main(["eval", "--model", str(model), "--manifest", str(manifest), "--split", "val"]) == 2


def test_eval_missing_checkpoint(tmp_path):
    manifest = perfect_fixture(tmp_path)
    assert main(["eval", "--model", str(tmp_path / "none.tldc"), "--manifest", str(manifest)]) == 2


# -- predict ----------------------------------------------------------------


def test_predict_contract_and_determinism(tmp_path, capsys):
    model = conv_checkpoint(tmp_path / "m.tldc")
    image = random_images(tmp_path / "img", 1)[0]
    assert main(["predict", "--model", str(model), "--image", str(image)]) == 0
    first = capsys.readouterr().out
    assert main(["predict", "--model", str(model), "--image", str(image)]) == 0
    assert capsys.readouterr().out == first
    response = json.loads(first)
    assert response["label"] in ("Healthy", "Diseased")
    assert abs(sum(response["probabilities"].values()) - 1) < 1e-6


def test_predict_gradcam_outputs(tmp_path):
    model = conv_checkpoint(tmp_path / "m.tldc")
    image = random_images(tmp_path / "img", 1)[0]
    ppm, pfm, png = tmp_path / "o.ppm", tmp_path / "h.pfm", tmp_path / "f.png"
    code = main(["predict", "--model", str(model), "--image", str(image), "--gradcam", str(ppm),
                 "--heatmap", str(pfm), "--figure", str(png)])
    assert code == 0
    assert Image.open(ppm).size == (224, 224)
    h = read_pfm(pfm)
    assert h.shape == (224, 224) and 0 <= h.min() and h.max() <= 1
    assert png.read_bytes()[:4] == b"\x89PNG"


def test_predict_undecodable_image(tmp_path, capsys):
    model = conv_checkpoint(tmp_path / "m.tldc")
    bad = tmp_path / "broken.jpg"
    bad.write_bytes(b"\xff\xd8garbage")
    assert main(["predict", "--model", str(model), "--image", str(bad)]) == 2
    assert "broken.jpg" in capsys.readouterr().err


def test_synth_command(tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path / "s"), "--n", "4"]) == 0
    assert len(list((tmp_path / "s" / "Healthy").glob("*.png"))) == 2


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
