import json
import subprocess
import sys

import numpy as np
import pytest

from xmodal.cli import main
from xmodal.store import read_store

SYNTH_ARGS = [
    "synth",
    "--classes", "6",
    "--latent-dim", "8",
    "--audio-dim", "32",
    "--image-dim", "48",
    "--baseline-dim", "16",
    "--translation-per-class", "30",
    "--crossmodal-per-class", "8",
    "--class-train-per-class", "24",
    "--class-test-per-class", "6",
    "--seed", "7",
]

FAST_TRAIN = ["--batch-size", "64", "--max-epochs", "8"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    assert main(SYNTH_ARGS + ["--out-dir", str(data)]) == 0
    assert main(
        ["train-translation", "--pairs", str(data / "translation"),
         "--out-dir", str(root / "tmodel"), *FAST_TRAIN]
    ) == 0
    for modality in ("audio", "image"):
        assert main(
            ["fit-pca", "--store", str(data / "classification" / modality),
             "--k", "16", "--out-dir", str(root / f"pca-{modality}")]
        ) == 0
    return root


def test_synth_writes_layout(workspace):
    data = workspace / "data"
    for rel in (
        "translation/audio", "translation/image",
        "crossmodal/audio", "crossmodal/image",
        "crossmodal-baseline/audio", "crossmodal-baseline/image",
        "classification/audio", "classification/image",
        "combined/audio", "combined/image",
    ):
        assert (data / rel / "manifest.jsonl").exists()
        assert (data / rel / "embeddings.xmeb").exists()
    assert (data / "ontology.json").exists()
    assert (data / "run.json").exists()
    manifest = json.loads((data / "run.json").read_text())
    assert manifest["command"] == "synth"
    assert manifest["params"]["seed"] == 7


def test_validate_store_ok_and_failure(workspace, tmp_path, capsys):
    data = workspace / "data"
    assert main(["validate-store", "--store", str(data / "translation/audio")]) == 0
    assert "OK" in capsys.readouterr().out

    bad = tmp_path / "bad"
    bad.mkdir()
    (bad / "manifest.jsonl").write_text("")
    (bad / "embeddings.xmeb").write_bytes(b"XXXX" + b"\x00" * 14)
    assert main(["validate-store", "--store", str(bad)]) == 1

    missing = tmp_path / "never"
    assert main(["validate-store", "--store", str(missing)]) == 2


def test_train_translation_outputs(workspace):
    out = workspace / "tmodel"
    assert (out / "model.xmtm").exists()
    assert (out / "history.csv").exists()
    assert (out / "run.json").exists()
    header = (out / "history.csv").read_text().splitlines()[0]
    assert header == "epoch,train_loss,val_loss"


def test_project_and_retrieve_eval(workspace, capsys):
    data = workspace / "data"
    for modality in ("audio", "image"):
        assert main(
            ["project", "--store", str(data / "crossmodal" / modality),
             "--model", str(workspace / "tmodel" / "model.xmtm"),
             "--out-dir", str(workspace / "proj" / modality)]
        ) == 0
        store = read_store(workspace / "proj" / modality)
        assert store.dim == 128
    assert main(
        ["retrieve-eval",
         "--audio", str(workspace / "proj" / "audio"),
         "--image", str(workspace / "proj" / "image"),
         "--ontology", str(data / "ontology.json"),
         "--out-dir", str(workspace / "reval")]
    ) == 0
    lines = (workspace / "reval" / "retrieval.csv").read_text().splitlines()
    assert lines[0] == "direction,query_id,ndcg,skipped"


def test_classifier_round_trip(workspace):
    data = workspace / "data"
    for modality in ("audio", "image"):
        assert main(
            ["project", "--store", str(data / "classification" / modality),
             "--model", str(workspace / "tmodel" / "model.xmtm"),
             "--out-dir", str(workspace / "projc" / modality)]
        ) == 0
    assert main(
        ["train-classifier", "--train", str(workspace / "projc" / "audio"),
         "--trees", "10", "--out-dir", str(workspace / "fmodel")]
    ) == 0
    assert main(
        ["eval-classifier", "--model", str(workspace / "fmodel" / "forest.npz"),
         "--test", str(workspace / "projc" / "image"),
         "--out-dir", str(workspace / "feval")]
    ) == 0
    report = (workspace / "feval" / "report.csv").read_text().splitlines()
    assert report[0] == "class,precision,recall,f1,support"
    assert len(report) == 1 + 6 + 1
    assert (workspace / "feval" / "confusion.csv").exists()


def test_retrieve_eval_on_untrained_projections_matches_random(workspace, tmp_path):
    """Random joint spaces rank like a shuffled pool."""
    from xmodal.ontology import RelevanceConfig, load_ontology
    from xmodal.retrieval import random_ranking_eval

    data = workspace / "data"
    rng = np.random.default_rng(3)
    for modality in ("audio", "image"):
        src = read_store(data / "crossmodal" / modality)
        noise = rng.normal(size=(src.count, 32)).astype(np.float32)
        from xmodal.store import write_store

        write_store(list(src.metas), noise, tmp_path / "rand" / modality)
    assert main(
        ["retrieve-eval",
         "--audio", str(tmp_path / "rand" / "audio"),
         "--image", str(tmp_path / "rand" / "image"),
         "--ontology", str(data / "ontology.json"),
         "--out-dir", str(tmp_path / "randeval")]
    ) == 0
    lines = (tmp_path / "randeval" / "retrieval.csv").read_text().splitlines()
    means = [float(l.split(",")[2]) for l in lines if ",MEAN," in l]

    ontology = load_ontology(data / "ontology.json")
    cfg = RelevanceConfig.default_for(ontology)
    audio = read_store(tmp_path / "rand" / "audio")
    image = read_store(tmp_path / "rand" / "image")
    shuffled = random_ranking_eval(audio, image, "a", ontology, cfg, seed=11)
    for mean in means:
        assert mean == pytest.approx(shuffled.mean_ndcg, abs=0.05)


def test_rerun_is_byte_identical(workspace, tmp_path):
    data = workspace / "data"
    args = [
        "retrieve-eval",
        "--audio", str(workspace / "proj" / "audio"),
        "--image", str(workspace / "proj" / "image"),
        "--ontology", str(data / "ontology.json"),
    ]
    assert main(args + ["--out-dir", str(tmp_path / "r1")]) == 0
    assert main(args + ["--out-dir", str(tmp_path / "r2")]) == 0
    a = (tmp_path / "r1" / "retrieval.csv").read_bytes()
    b = (tmp_path / "r2" / "retrieval.csv").read_bytes()
    assert a == b


def test_mix_curve_cli(workspace):
    data = workspace / "data"
    assert main(
        ["mix-curve",
         "--class-audio", str(data / "classification" / "audio"),
         "--class-image", str(data / "classification" / "image"),
         "--translation", str(workspace / "tmodel" / "model.xmtm"),
         "--pca-audio", str(workspace / "pca-audio" / "pca.xmpc"),
         "--pca-image", str(workspace / "pca-image" / "pca.xmpc"),
         "--target", "image", "--grid", "0,36", "--seeds", "0",
         "--trees", "10", "--out-dir", str(workspace / "mix")]
    ) == 0
    lines = (workspace / "mix" / "mix_curve.csv").read_text().splitlines()
    assert lines[0] == "n_mixed,mmt_f1,mmp_f1,sm_source_f1,sm_target_f1"
    assert len(lines) == 3


def test_cluster_dist_and_class_hist(workspace):
    assert main(
        ["cluster-dist",
         "--audio", str(workspace / "projc" / "audio"),
         "--image", str(workspace / "projc" / "image"),
         "--sort", "class", "--out-dir", str(workspace / "cd")]
    ) == 0
    lines = (workspace / "cd" / "cluster_distances.csv").read_text().splitlines()
    assert len(lines) == 13  # header + 12 cells

    data = workspace / "data"
    assert main(
        ["class-hist", "--store", str(data / "classification" / "audio"),
         "--ontology", str(data / "ontology.json"),
         "--out-dir", str(workspace / "hist")]
    ) == 0
    hist = (workspace / "hist" / "class_histogram.csv").read_text().splitlines()
    assert hist[0] == "class,count"
    assert len(hist) == 7


def test_combo_study_cli(workspace):
    data = workspace / "data"
    assert main(
        ["combo-study",
         "--audio", str(data / "combined" / "audio"),
         "--image", str(data / "combined" / "image"),
         "--ontology", str(data / "ontology.json"),
         "--baseline-audio", str(data / "crossmodal-baseline" / "audio"),
         "--baseline-image", str(data / "crossmodal-baseline" / "image"),
         *FAST_TRAIN,
         "--out-dir", str(workspace / "combo")]
    ) == 0
    lines = (workspace / "combo" / "combo_study.csv").read_text().splitlines()
    assert len(lines) == 4  # header + translated + no_translation + random
    assert lines[1].split(",")[2] == "translated"


def test_unknown_subcommand_and_flag_exit_one(capsys):
    assert main(["frobnicate"]) == 1
    assert main(["synth", "--no-such-flag", "--out-dir", "x"]) == 1
    assert main([]) == 1


def test_config_file_defaults_and_flag_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"classes": 4, "latent_dim": 8, "audio_dim": 16,
                               "image_dim": 16, "baseline_dim": 16,
                               "translation_per_class": 4, "crossmodal_per_class": 2,
                               "class_train_per_class": 3, "class_test_per_class": 2}))
    out = tmp_path / "out"
    assert main(["synth", "--config", str(cfg), "--out-dir", str(out)]) == 0
    store = read_store(out / "translation" / "audio")
    assert store.dim == 16
    assert len({m.labels[0] for m in store.metas}) == 4

    out2 = tmp_path / "out2"
    assert main(["synth", "--config", str(cfg), "--classes", "3",
                 "--out-dir", str(out2)]) == 0
    store2 = read_store(out2 / "translation" / "audio")
    assert len({m.labels[0] for m in store2.metas}) == 3


def test_threads_env_fallback(workspace, monkeypatch, tmp_path):
    monkeypatch.setenv("XMODAL_THREADS", "2")
    assert main(
        ["train-classifier", "--train", str(workspace / "projc" / "audio"),
         "--trees", "4", "--out-dir", str(tmp_path / "f2")]
    ) == 0


def test_help_lists_defaults():
    with pytest.raises(SystemExit) as exc:
        main(["train-translation", "--help"])
    assert exc.value.code == 0


def test_console_entrypoint_subprocess(tmp_path):
    result = subprocess.run(
        [sys.executable, "-m", "xmodal.cli", "--help"],
        capture_output=True, text=True,
    )
    assert result.returncode == 0
    for sub in ("synth", "train-translation", "mix-curve", "class-hist"):
        assert sub in result.stdout


def test_help_shows_training_defaults(capsys):
    with pytest.raises(SystemExit):
        main(["train-translation", "--help"])
    out = capsys.readouterr().out
    assert "4096" in out  # batch size
    assert "0.001" in out  # learning rate
    assert "1.0" in out  # margin
    assert "default: 5" in out  # patience
