"""End-to-end tests of the command-line interface and its config parser."""

import json

import numpy as np
import pytest
from scipy.io import wavfile

from emodim.cli import ConfigError, main, parse_config
from emodim.features import read_feature_file
from emodim.synth import default_spec, synth_corpus


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_corpus")
    synth_corpus(default_spec(n_samples=120, tie_rate=0.1), seed=5, out_dir=out)
    return out


def write_config(tmp_path, text):
    path = tmp_path / "run.conf"
    path.write_text(text)
    return str(path)


class TestParseConfig:
    def test_typed_values(self, tmp_path):
        conf = parse_config(write_config(tmp_path, """
            # a comment
            n_samples = 500
            tie_rate = 0.25
            shuffle = true
            architectures = mlp, cnn
            name = demo
        """))
        assert conf == {
            "n_samples": 500,
            "tie_rate": 0.25,
            "shuffle": True,
            "architectures": ("mlp", "cnn"),
            "name": "demo",
        }

    def test_malformed_line_rejected(self, tmp_path):
        path = write_config(tmp_path, "just a line without equals")
        with pytest.raises(ConfigError, match="key=value"):
            parse_config(path)


class TestSynthCommand:
    def test_writes_corpus(self, tmp_path):
        cfg = write_config(tmp_path, "n_samples = 30\ntie_rate = 0.1")
        out = tmp_path / "corpus"
        assert main(["synth", "--config", cfg, "--seed", "2",
                     "--out-dir", str(out)]) == 0
        assert (out / "manifest.jsonl").exists()
        header = json.loads((out / "manifest.jsonl").read_text().splitlines()[0])
        assert header["vocabulary"] == ["neutral", "happy", "angry", "sad"]

    def test_deterministic(self, tmp_path):
        cfg = write_config(tmp_path, "n_samples = 20")
        a, b = tmp_path / "a", tmp_path / "b"
        main(["synth", "--config", cfg, "--seed", "9", "--out-dir", str(a)])
        main(["synth", "--config", cfg, "--seed", "9", "--out-dir", str(b)])
        assert (a / "manifest.jsonl").read_bytes() == (b / "manifest.jsonl").read_bytes()

    def test_unknown_key_exits_1(self, tmp_path):
        cfg = write_config(tmp_path, "n_sampels = 30")
        assert main(["synth", "--config", cfg, "--out-dir", str(tmp_path)]) == 1


class TestExtractCommand:
    def test_wav_to_features(self, tmp_path):
        rate = 16000
        t = np.arange(int(0.2 * rate)) / rate
        for i in range(2):
            tone = (0.4 * np.sin(2 * np.pi * (300 + 200 * i) * t) * 32767)
            wavfile.write(tmp_path / f"u{i}.wav", rate, tone.astype(np.int16))
        lines = [json.dumps({"corpus": "mini", "vocabulary": ["a", "b"],
                             "avd_scale": {"min": 1, "max": 5}})]
        for i in range(2):
            lines.append(json.dumps({
                "id": f"u{i}", "audio_path": f"u{i}.wav",
                "annotations": [{"annotator": "x", "label": "a",
                                 "avd": [3, 3, 3]}],
            }))
        manifest = tmp_path / "manifest.jsonl"
        manifest.write_text("\n".join(lines) + "\n")

        cfg = write_config(tmp_path, f"manifest = {manifest}")
        out = tmp_path / "extracted"
        assert main(["extract", "--config", cfg, "--out-dir", str(out)]) == 0
        frames = read_feature_file(out / "features" / "u0.fea")
        assert frames.shape == (9, 128)  # 0.2 s at 25 ms window / 20 ms stride
        # the emitted manifest fragment points at the new features
        from emodim.corpus import load_manifest
        corpus = load_manifest(out / "manifest.jsonl")
        assert all(s.feature_path for s in corpus.samples)


class TestExperimentCommands:
    def test_agreement(self, corpus_dir, tmp_path, capsys):
        cfg = write_config(tmp_path, f"manifest = {corpus_dir}/manifest.jsonl")
        out = tmp_path / "agr"
        assert main(["agreement", "--config", cfg, "--out-dir", str(out)]) == 0
        assert (out / "agreement.csv").exists()
        assert "alpha" in capsys.readouterr().out

    def test_density(self, corpus_dir, tmp_path):
        cfg = write_config(tmp_path, f"manifest = {corpus_dir}/manifest.jsonl")
        out = tmp_path / "dens"
        assert main(["density", "--config", cfg, "--out-dir", str(out),
                     "--grid-size", "10"]) == 0
        assert (out / "density_happy.svg").exists()

    def test_upper_bound(self, corpus_dir, tmp_path):
        cfg = write_config(tmp_path, f"""
            manifest = {corpus_dir}/manifest.jsonl
            mappers = gaussian
            n_folds = 2
        """)
        out = tmp_path / "ub"
        assert main(["upper-bound", "--config", cfg, "--out-dir", str(out)]) == 0
        assert (out / "upper_bound.csv").exists()

    def test_train(self, corpus_dir, tmp_path):
        cfg = write_config(tmp_path, f"""
            manifest = {corpus_dir}/manifest.jsonl
            architectures = mlp
            mappers = gaussian
            n_folds = 2
            max_epochs = 3
        """)
        out = tmp_path / "tr"
        assert main(["train", "--config", cfg, "--seed", "1",
                     "--out-dir", str(out)]) == 0
        assert (out / "train.csv").exists()

    def test_grid_partial_failure_exits_2(self, corpus_dir, tmp_path):
        cfg = write_config(tmp_path, f"""
            manifest = {corpus_dir}/manifest.jsonl
            architectures = mlp
            mappers = knn
            knn_k = 1000000
            n_folds = 2
            max_epochs = 2
        """)
        out = tmp_path / "gr"
        assert main(["grid", "--config", cfg, "--out-dir", str(out)]) == 2
        assert "FAILED" in (out / "grid.csv").read_text()

    def test_novel_class_missing_key_exits_1(self, corpus_dir, tmp_path):
        cfg = write_config(tmp_path, f"manifest = {corpus_dir}/manifest.jsonl")
        assert main(["novel-class", "--config", cfg,
                     "--out-dir", str(tmp_path)]) == 1

    def test_missing_manifest_exits_1(self, tmp_path):
        cfg = write_config(tmp_path, "manifest = /nonexistent/manifest.jsonl")
        assert main(["agreement", "--config", cfg,
                     "--out-dir", str(tmp_path)]) == 1

    def test_usage_error_exits_1(self):
        assert main(["agreement"]) == 1  # --config is required
