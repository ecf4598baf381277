"""End-to-end CLI flows: ingest, features, cluster, synth, eval, config."""

import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from choreokit.cli import main

from corpus_fixture import write_corpus

CONFIG_TEXT = """\
[motif]
clusters = 4
embedding_dim = 12
word_frames = 13

[seeds]
default = 7
"""


def dir_digest(path: Path) -> str:
    digest = hashlib.sha256()
    for p in sorted(path.rglob("*")):
        if p.is_file():
            digest.update(p.relative_to(path).as_posix().encode())
            digest.update(p.read_bytes())
    return digest.hexdigest()


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    write_corpus(root / "corpus", n_clips_per_genre=3, words_per_clip=12,
                 genres=("alpha",), seed=2)
    (root / "choreokit.ini").write_text(CONFIG_TEXT)
    args = ["--config", str(root / "choreokit.ini")]
    assert main(args + ["ingest", "--manifest", str(root / "corpus/manifest.json"),
                        "--out", str(root / "store")]) == 0
    assert main(args + ["cluster", "--store", str(root / "store"),
                        "--out", str(root / "bundle")]) == 0
    return root


def cli(workspace, *extra):
    return main(["--config", str(workspace / "choreokit.ini"), *extra])


class TestPipeline:
    def test_store_and_bundle_exist(self, workspace):
        assert (workspace / "store" / "store.json").exists()
        assert (workspace / "bundle" / "manifest.json").exists()
        manifest = json.loads((workspace / "bundle" / "manifest.json").read_text())
        assert manifest["K"] == 4

    def test_synth_and_eval(self, workspace, capsys):
        rc = cli(workspace, "features", "synth", "--bpm", "120", "--frames", "361",
                 "--out", str(workspace / "grid.json"))
        assert rc == 0
        rc = cli(workspace, "synth", "--bundle", str(workspace / "bundle"),
                 "--store", str(workspace / "store"),
                 "--beats", str(workspace / "grid.json"),
                 "--genre", "alpha", "--out", str(workspace / "clips"))
        assert rc == 0
        clip_dirs = list((workspace / "clips").iterdir())
        assert len(clip_dirs) == 1
        clip_dir = clip_dirs[0]
        assert (clip_dir / "clip.bvh").exists()
        sidecar = json.loads((clip_dir / "sidecar.json").read_text())
        assert sidecar["frames"] == 360
        capsys.readouterr()

        rc = cli(workspace, "eval", "beats", "--bvh", str(clip_dir / "clip.bvh"),
                 "--beats", str(workspace / "grid.json"),
                 "--out", str(workspace / "report"))
        assert rc == 0
        summary = json.loads(capsys.readouterr().out)
        assert 0.0 <= summary["ratio_aligned"] <= 1.0
        assert (workspace / "report" / "beats.png").exists()
        assert (workspace / "report" / "beats.csv").exists()

        rc = cli(workspace, "eval", "signature", "--sidecar", str(clip_dir / "sidecar.json"),
                 "--bundle", str(workspace / "bundle"), "--genre", "alpha",
                 "--out", str(workspace / "sigreport"))
        assert rc == 0
        assert (workspace / "sigreport" / "signature.csv").exists()
        assert (workspace / "sigreport" / "signature.png").exists()

    def test_constrained_synth_echoes_pins(self, workspace, tmp_path):
        pins = [{"beat": i, "motif": (i * 3) % 4} for i in range(10)]
        constraints = tmp_path / "pins.json"
        constraints.write_text(json.dumps(pins))
        rc = cli(workspace, "synth", "--bundle", str(workspace / "bundle"),
                 "--store", str(workspace / "store"), "--bpm", "120",
                 "--duration-beats", "10", "--constraints", str(constraints),
                 "--out", str(tmp_path / "out"))
        assert rc == 0
        sidecar_path = next((tmp_path / "out").rglob("sidecar.json"))
        sidecar = json.loads(sidecar_path.read_text())
        timeline = [seg["motif"] for seg in sidecar["motif_timeline"]]
        assert timeline == [(i * 3) % 4 for i in range(10)]

    def test_synth_deterministic_bytes(self, workspace, tmp_path):
        for run in ("a", "b"):
            rc = cli(workspace, "--seed", "3", "synth",
                     "--bundle", str(workspace / "bundle"),
                     "--store", str(workspace / "store"), "--bpm", "120",
                     "--duration-beats", "8", "--out", str(tmp_path / run))
            assert rc == 0
        assert dir_digest(tmp_path / "a") == dir_digest(tmp_path / "b")

    def test_lstm_missing_checkpoint_errors(self, workspace, tmp_path, capsys):
        rc = cli(workspace, "synth", "--bundle", str(workspace / "bundle"),
                 "--store", str(workspace / "store"), "--bpm", "120",
                 "--backend", "lstm", "--out", str(tmp_path / "x"))
        assert rc == 1
        assert "checkpoint" in capsys.readouterr().err


class TestIngestEdgeCases:
    def test_empty_manifest_exit_zero(self, tmp_path):
        manifest = tmp_path / "manifest.json"
        manifest.write_text("[]")
        rc = main(["ingest", "--manifest", str(manifest),
                   "--out", str(tmp_path / "store")])
        assert rc == 0
        index = json.loads((tmp_path / "store" / "store.json").read_text())
        assert index["entries"] == []

    def test_reingest_bit_identical(self, tmp_path):
        write_corpus(tmp_path / "c", n_clips_per_genre=2, words_per_clip=8, seed=9)
        for run in ("a", "b"):
            rc = main(["ingest", "--manifest", str(tmp_path / "c/manifest.json"),
                       "--out", str(tmp_path / run)])
            assert rc == 0
        assert dir_digest(tmp_path / "a") == dir_digest(tmp_path / "b")

    def test_parse_error_reports_file(self, tmp_path, capsys):
        (tmp_path / "bad.bvh").write_text("HIERARCHY\nnot a bvh\n")
        grid = tmp_path / "g.json"
        grid.write_text(json.dumps({"fps": 30, "beat_frames": [], "rhythmic": [],
                                    "spectral": []}))
        manifest = tmp_path / "m.json"
        manifest.write_text(json.dumps(
            [{"bvh": "bad.bvh", "beats": "g.json", "genre": "x"}]))
        rc = main(["ingest", "--manifest", str(manifest), "--out", str(tmp_path / "s")])
        assert rc == 1
        assert "line" in capsys.readouterr().err


class TestConfig:
    def test_unknown_key_rejected(self, tmp_path, capsys):
        bad = tmp_path / "bad.ini"
        bad.write_text("[motif]\nwhatever = 3\n")
        rc = main(["--config", str(bad), "ingest", "--manifest", "x",
                   "--out", str(tmp_path / "s")])
        assert rc == 1
        assert "unknown key" in capsys.readouterr().err

    def test_env_var_default(self, tmp_path, monkeypatch):
        from choreokit.config import load_config
        path = tmp_path / "c.ini"
        path.write_text("[seeds]\ndefault = 99\n")
        monkeypatch.setenv("CHOREOKIT_CONFIG", str(path))
        assert load_config().seed == 99

    def test_values_applied(self, tmp_path):
        from choreokit.config import load_config
        path = tmp_path / "c.ini"
        path.write_text("[motif]\nclusters = 16\n[style]\nbeta = 12.5\n")
        config = load_config(path)
        assert config.clusters == 16
        assert config.beta == 12.5
        assert config.embedding_dim == 184  # untouched defaults

    def test_paper_scale_defaults(self):
        from choreokit.config import ProjectConfig
        config = ProjectConfig()
        assert config.joints == 31
        assert config.clusters == 500
        assert config.embedding_dim == 184
        assert config.word_frames == 13
        assert config.beta == 40.0
        assert config.lambda_perceptual == 0.5
        assert config.learning_rate == 1e-4
        assert config.batch_size == 32
        assert config.window == 100
