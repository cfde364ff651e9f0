import json
from pathlib import Path

import pytest

from promptrec.cli import main

MICRO_CONFIG = {
    "corpus": {
        "n_genres": 3,
        "artists_per_genre": 4,
        "tracks_per_artist": 4.0,
        "n_playlists": 120,
        "playlist_len_min": 4,
        "playlist_len_max": 7,
        "test_fraction": 0.15,
    },
    "embeddings": {"dim": 16, "epochs": 2},
    "semantic": {"s": 16, "c": 3, "iters": 5},
    "model": {"layers": 1, "heads": 2, "width": 32, "ff_width": 64, "max_input_len": 32},
    "train": {"epochs": 2, "batch_size": 32, "base_vocab_size": 400},
    "decode": {"groups": 4, "beams_per_group": 3},
    "eval": {"k": 5, "baselines": False},
}


@pytest.fixture(scope="module")
def config_path(tmp_path_factory) -> Path:
    path = tmp_path_factory.mktemp("cfg") / "config.json"
    path.write_text(json.dumps(MICRO_CONFIG))
    return path


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory, config_path) -> Path:
    out = tmp_path_factory.mktemp("corpus")
    code = main(["corpus", "synth", "--config", str(config_path), "--seed", "3", "--out", str(out)])
    assert code == 0
    return out


class TestCorpusCommands:
    def test_validate(self, corpus_dir):
        assert main(["corpus", "validate", str(corpus_dir)]) == 0

    def test_synth_writes_expected_files(self, corpus_dir):
        for name in ("tracks.jsonl", "playlists.jsonl", "queries_train.jsonl", "queries_test.jsonl", "config.json"):
            assert (corpus_dir / name).exists()

    def test_unknown_config_key_exit_1(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"corpus": {"n_genres": 3, "bogus_key": 1}}))
        code = main(["corpus", "synth", "--config", str(bad), "--seed", "1", "--out", str(tmp_path / "o")])
        assert code == 1
        assert "bogus_key" in capsys.readouterr().err

    def test_unknown_subcommand_exit_1(self, capsys):
        assert main(["frobnicate"]) == 1

    def test_missing_file_exit_2(self, tmp_path):
        assert main(["corpus", "validate", str(tmp_path / "nope")]) == 2


class TestStageCommands:
    def test_embed_semid_registry_chain(self, tmp_path, corpus_dir, config_path):
        emb = tmp_path / "emb.tsv"
        assert main([
            "embed", "train", "--corpus", str(corpus_dir), "--provenance", "cf",
            "--config", str(config_path), "--seed", "3", "--out", str(emb),
        ]) == 0
        dic = tmp_path / "dict.txt"
        assert main([
            "semid", "learn", "--embeddings", str(emb), "--s", "16", "--c", "3",
            "--iters", "4", "--seed", "3", "--out", str(dic),
        ]) == 0
        reg = tmp_path / "registry.tsv"
        assert main([
            "registry", "build", "--strategy", "semantic", "--corpus", str(corpus_dir),
            "--embeddings", str(emb), "--dict", str(dic), "--out", str(reg),
        ]) == 0
        header = reg.read_text().splitlines()[0]
        assert header.startswith("semantic ")

    def test_registry_top_k_extra_vocab(self, tmp_path, corpus_dir, capsys):
        reg = tmp_path / "registry.tsv"
        assert main([
            "registry", "build", "--strategy", "artist-iid-track-seq", "--corpus", str(corpus_dir),
            "--top-k", "5", "--out", str(reg),
        ]) == 0
        text = reg.read_text()
        vocab_lines = text.split("#VOCAB\n", 1)[1].strip().splitlines()
        assert len(vocab_lines) == 5


class TestPipeline:
    def test_end_to_end_and_determinism(self, tmp_path, config_path):
        out1, out2 = tmp_path / "run1", tmp_path / "run2"
        for out in (out1, out2):
            code = main([
                "pipeline", "--strategy", "track-int", "--seed", "7",
                "--config", str(config_path), "--out", str(out),
            ])
            assert code == 0
            for name in ("config.json", "fingerprints.json", "registry.tsv", "checkpoint.bin", "report.json"):
                assert (out / name).exists()
        assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()

    def test_query_from_file(self, tmp_path, config_path, capsys):
        out = tmp_path / "run"
        assert main([
            "pipeline", "--strategy", "track-int", "--seed", "7",
            "--config", str(config_path), "--out", str(out),
        ]) == 0
        prompts = tmp_path / "prompts.txt"
        prompts.write_text("rock anthems\n")
        capsys.readouterr()
        code = main([
            "query", "--checkpoint", str(out / "checkpoint.bin"),
            "--registry", str(out / "registry.tsv"), "--corpus", str(out / "corpus"),
            "--file", str(prompts), "--k", "3", "--config", str(config_path),
        ])
        assert code == 0
        lines = [l for l in capsys.readouterr().out.splitlines() if l and not l.startswith("#")]
        assert lines
        for line in lines:
            rank, track_key, artist, title, score = line.split("\t")
            assert int(rank) >= 1

    def test_eval_and_sweep_commands(self, tmp_path, config_path):
        out = tmp_path / "run"
        assert main([
            "pipeline", "--strategy", "track-int", "--seed", "7",
            "--config", str(config_path), "--out", str(out),
        ]) == 0
        report = tmp_path / "eval.json"
        assert main([
            "eval", "--corpus", str(out / "corpus"), "--checkpoint", str(out / "checkpoint.bin"),
            "--registry", str(out / "registry.tsv"), "--k", "5",
            "--config", str(config_path), "--out", str(report),
        ]) == 0
        assert report.exists()
        sweep = tmp_path / "sweep.tsv"
        assert main([
            "sweep", "--corpus", str(out / "corpus"), "--checkpoint", str(out / "checkpoint.bin"),
            "--registry", str(out / "registry.tsv"), "--lambdas", "0,0.5",
            "--k", "5", "--config", str(config_path), "--out", str(sweep),
        ]) == 0
        rows = sweep.read_text().strip().splitlines()
        assert rows[0] == "lambda\thits\tentropy"
        assert len(rows) == 3

    def test_baseline_command(self, tmp_path, corpus_dir):
        report = tmp_path / "baseline.json"
        assert main([
            "baseline", "--corpus", str(corpus_dir), "--method", "popularity",
            "--k", "5", "--out", str(report),
        ]) == 0
        data = json.loads(report.read_text())
        assert "popularity" in data["methods"]
