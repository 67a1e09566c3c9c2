import json

import pytest

from naturex.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main
from naturex.data import manifest_hash


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    """One tiny pipeline run shared by the tests below."""
    import yaml
    from conftest import TINY_RUN

    root = tmp_path_factory.mktemp("cli")
    cfg = root / "tiny.yaml"
    cfg.write_text(yaml.safe_dump(TINY_RUN))
    out = root / "run"
    assert main(["pipeline", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    return cfg, out


def test_pipeline_writes_all_artifacts(tiny_run):
    _, out = tiny_run
    for rel in ("config.yaml", "data/manifest.json", "classifier/manifest.json", "gan/manifest.json",
                "report.csv", "report.txt", "run_manifest.json"):
        assert (out / rel).exists(), rel
    for method in ("ours-pair-diff", "ours-input-diff", "gradcam", "occlusion"):
        assert len(list((out / "maps" / method).glob("*.tif"))) == 3
    assert len(list((out / "overlays").glob("*.png"))) == 2
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert "report.csv" in manifest["artifacts"] and manifest["seeds"]["gan"] > 0
    gan = json.loads((out / "gan" / "manifest.json").read_text())
    assert gan["classifier_checkpoint_hash"]


def test_report_subcommand(tiny_run, capsys):
    _, out = tiny_run
    assert main(["report", "--in", str(out / "report.csv")]) == EXIT_OK
    text = capsys.readouterr().out
    assert "paper-reported, not recomputed" in text and "93.2" in text


def test_evaluate_matches_pipeline(tiny_run, tmp_path):
    cfg, out = tiny_run
    csv_path = tmp_path / "eval.csv"
    assert main(["evaluate", "--config", str(cfg), "--maps", str(out), "--data", str(out / "data"),
                 "--out", str(csv_path)]) == EXIT_OK
    from naturex.evalio import parse_csv
    fresh = {r.method: r.mean_iou for r in parse_csv(csv_path.read_text())}
    saved = {r.method: r.mean_iou for r in parse_csv((out / "report.csv").read_text())}
    assert fresh.keys() == saved.keys()
    for k in fresh:
        assert fresh[k] == pytest.approx(saved[k], abs=0.05)


def test_resume_skips_classifier(tiny_run, tmp_path):
    cfg, out = tiny_run
    out2 = tmp_path / "resumed"
    assert main(["pipeline", "--config", str(cfg), "--out", str(out2), "--resume", str(out / "classifier")]) == 0
    manifest = json.loads((out2 / "run_manifest.json").read_text())
    original = json.loads((out / "run_manifest.json").read_text())
    assert manifest["artifacts"]["classifier/classifier.pt"] == original["artifacts"]["classifier/classifier.pt"]
    assert (out2 / "report.csv").read_bytes() == (out / "report.csv").read_bytes()


def test_corrupted_checkpoint_names_file(tiny_run, tmp_path, capsys):
    import shutil
    cfg, out = tiny_run
    ckpt = tmp_path / "ckpt"
    shutil.copytree(out / "classifier", ckpt)
    blob = ckpt / "classifier.pt"
    blob.write_bytes(blob.read_bytes()[:-3] + b"xyz")
    code = main(["pipeline", "--config", str(cfg), "--out", str(tmp_path / "r"), "--resume", str(ckpt)])
    assert code == EXIT_RUNTIME
    err = capsys.readouterr().err
    assert "checksum" in err and "classifier.pt" in err


def test_single_phase_commands(tiny_run, tmp_path):
    cfg, out = tiny_run
    data = tmp_path / "d"
    assert main(["synth-data", "--config", str(cfg), "--out", str(data)]) == EXIT_OK
    assert manifest_hash(data / "data") == manifest_hash(out / "data")
    clf = tmp_path / "clf"
    assert main(["train-classifier", "--config", str(cfg), "--data", str(data / "data"), "--out", str(clf)]) == 0
    gan = tmp_path / "gan"
    assert main(["train-gan", "--config", str(cfg), "--classifier", str(clf), "--data", str(data / "data"),
                 "--out", str(gan), "--skip-pretrain"]) == EXIT_OK
    assert "pretrain" not in json.loads((gan / "manifest.json").read_text())["traces"]
    attr = tmp_path / "attr"
    assert main(["attribute", "--config", str(cfg), "--classifier", str(clf), "--gan", str(gan),
                 "--data", str(data / "data"), "--out", str(attr)]) == EXIT_OK
    assert len(list((attr / "maps" / "ours-pair-diff").glob("*.tif"))) == 3
    sample = next((data / "data" / "test").glob("nat_*.npz"))
    for method in ("occlusion", "gradcam"):
        assert main(["baseline", "--config", str(cfg), "--method", method, "--classifier", str(clf),
                     "--image", str(sample), "--out", str(tmp_path / "b")]) == EXIT_OK
    assert len(list((tmp_path / "b").glob("*.png"))) == 2


def test_same_seed_same_manifest(tiny_config_file, tmp_path):
    for name in ("a", "b"):
        assert main(["synth-data", "--config", str(tiny_config_file), "--out", str(tmp_path / name)]) == 0
    assert manifest_hash(tmp_path / "a" / "data") == manifest_hash(tmp_path / "b" / "data")


def test_invalid_ratio_config(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("split:\n  ratios: [0.9, 0.9, 0.1]\n")
    assert main(["synth-data", "--config", str(bad), "--out", str(tmp_path / "x")]) == EXIT_CONFIG
    assert "ratios" in capsys.readouterr().err


def test_unknown_config_key(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("gan:\n  lamda_am: 0.3\n")
    assert main(["pipeline", "--config", str(bad), "--out", str(tmp_path / "x")]) == EXIT_CONFIG


def test_missing_config_file(tmp_path):
    assert main(["synth-data", "--config", str(tmp_path / "none.yaml")]) == EXIT_CONFIG


def test_resume_without_checkpoint(tiny_config_file, tmp_path):
    assert main(["pipeline", "--config", str(tiny_config_file), "--out", str(tmp_path / "e"), "--resume"]) == 2


def test_bad_arguments_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["baseline", "--method", "deeplift"])
    assert exc.value.code == 2
