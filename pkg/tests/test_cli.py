"""CLI verb and exit-code tests (driven in-process through cli.main)."""

import numpy as np
import pytest

from covfer import formats
from covfer.cli import main
from covfer.errors import exit_code, BadMagic, EmptyMesh, MissingStream, NoConvergence


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    rc = main(
        [
            "synth",
            "--out",
            str(root),
            "--seed",
            "3",
            "--subjects",
            "4",
            "--classes",
            "2",
        ]
    )
    assert rc == 0
    return root


def test_exit_code_families():
    assert exit_code(BadMagic("x")) == 2
    assert exit_code(EmptyMesh("x")) == 4
    assert exit_code(NoConvergence("x")) == 5
    assert exit_code(MissingStream("x")) == 6
    assert exit_code(RuntimeError("x")) == 1


def test_synth_writes_manifest(dataset):
    entries = formats.read_manifest(dataset / "manifest.tsv")
    assert len(entries) == 8


def test_eval_writes_summary(dataset, tmp_path, capsys):
    summary = tmp_path / "summary.tsv"
    rc = main(
        [
            "eval",
            "--manifest",
            str(dataset / "manifest.tsv"),
            "--streams",
            "synthetic-deep,shallow",
            "--codebook-size",
            "16",
            "--folds",
            "2",
            "--summary",
            str(summary),
        ]
    )
    assert rc == 0
    assert "overall accuracy" in capsys.readouterr().out
    assert summary.exists()


def test_eval_bad_manifest_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.tsv"
    bad.write_text("one\ttwo\n")
    rc = main(["eval", "--manifest", str(bad)])
    assert rc == 2  # format-error family
    assert "error:" in capsys.readouterr().err


def test_extract_shallow_writes_descriptors(dataset, tmp_path):
    out = tmp_path / "shallow"
    rc = main(
        ["extract-shallow", "--manifest", str(dataset / "manifest.tsv"), "--out", str(out)]
    )
    assert rc == 0
    files = sorted(out.glob("*.shallow.fmap"))
    assert len(files) == 8
    descs = formats.read_fmap(files[0])
    assert descs.shape == (40, 6, 6)


def test_pool_and_reduce_roundtrip(dataset, tmp_path):
    pooled_dir = tmp_path / "pooled"
    rc = main(
        [
            "pool",
            "--manifest",
            str(dataset / "manifest.tsv"),
            "--stream",
            "synthetic-deep",
            "--regions",
            "1,2",
            "--out",
            str(pooled_dir),
        ]
    )
    assert rc == 0
    pooled_files = sorted(pooled_dir.glob("*.cov.fmap"))
    assert len(pooled_files) == 8
    stack = formats.read_fmap(pooled_files[0])
    assert stack.shape == (5, 32, 32)

    reduced = tmp_path / "reduced.fmap"
    weights_dir = tmp_path / "weights"
    rc = main(
        [
            "reduce",
            "--in",
            str(pooled_files[0]),
            "--out",
            str(reduced),
            "--spd-dims",
            "32,16",
            "--seed",
            "0",
            "--save-weights",
            str(weights_dir),
        ]
    )
    assert rc == 0
    flat = formats.read_fmap(reduced)
    assert flat.shape == (5, 16 * 17 // 2)
    assert (weights_dir / "spd_layer0.fmap").exists()
    assert (weights_dir / "spd.txt").exists()


def test_render_maps(dataset, tmp_path):
    out = tmp_path / "maps"
    rc = main(
        [
            "render-maps",
            "--manifest",
            str(dataset / "manifest.tsv"),
            "--out",
            str(out),
            "--kind",
            "depth",
            "--pgm",
        ]
    )
    assert rc == 0
    fmaps = sorted(out.glob("*.depth.fmap"))
    assert len(fmaps) == 8
    img = formats.read_fmap(fmaps[0])
    assert img.shape == (1, 224, 224)
    assert float(img.min()) >= 0.0 and float(img.max()) <= 1.0
    assert len(sorted(out.glob("*.depth.pgm"))) == 8


def test_train_then_artifacts(dataset, tmp_path):
    out = tmp_path / "model"
    rc = main(
        [
            "train",
            "--manifest",
            str(dataset / "manifest.tsv"),
            "--streams",
            "synthetic-deep,shallow",
            "--codebook-size",
            "16",
            "--out",
            str(out),
        ]
    )
    assert rc == 0
    assert (out / "svm.fmap").exists()
    assert (out / "codebook_shallow.fmap").exists()
    assert (out / "codebook_synthetic-deep.fmap").exists()
    assert (out / "run.txt").exists()


def test_sweep_table(dataset, tmp_path, capsys):
    table = tmp_path / "table.tsv"
    rc = main(
        [
            "sweep",
            "--manifest",
            str(dataset / "manifest.tsv"),
            "--streams",
            "synthetic-deep,shallow",
            "--sizes",
            "16",
            "--folds",
            "2",
            "--out",
            str(table),
        ]
    )
    assert rc == 0
    lines = table.read_text().strip().splitlines()
    assert lines[0] == "size\taccuracy"
    assert len(lines) == 2


def test_config_file_defaults(dataset, tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("codebook-size=16\nfolds=2\nstreams=synthetic-deep,shallow\n")
    rc = main(
        ["eval", "--manifest", str(dataset / "manifest.tsv"), "--config", str(cfg)]
    )
    assert rc == 0
    assert "folds: 2" in capsys.readouterr().out
