import json

import numpy as np
import pytest

from audioretrieval.cli import main
from audioretrieval.config import ConfigError, load_config, parse_config


def write_config(tmp_path, **overrides):
    doc = {
        "seed": 0,
        "paths": {"out_dir": str(tmp_path / "out")},
        "data": {"synthetic": {
            "n_classes": 3, "n_train": 18, "n_val": 9, "n_test": 9, "duration": 0.2,
        }},
        "optim": {"epochs": 2, "batch_size": 6},
    }
    doc.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return path


class TestConfigParsing:
    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match="bogus"):
            parse_config({"bogus": 1})

    def test_unknown_nested_key_path(self):
        with pytest.raises(ConfigError, match="optim.warmup"):
            parse_config({"optim": {"warmup": 5}})

    def test_section_value_validation(self):
        with pytest.raises(ConfigError, match="optim"):
            parse_config({"optim": {"batch_size": 1}})

    def test_vocab_size_not_configurable(self):
        with pytest.raises(ConfigError, match="vocab_size"):
            parse_config({"model": {"vocab_size": 50}})

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "none.json")

    def test_augmentation_sections_optional(self):
        cfg = parse_config({})
        assert cfg.audio_aug is None and cfg.text_aug is None

    def test_defaults_fill_in(self):
        cfg = parse_config({})
        assert cfg.optim.batch_size == 30
        assert cfg.features.n_mels == 64


class TestTrain:
    def test_invalid_config_exit_2(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"nonsense": True}))
        assert main(["train", "--config", str(path)]) == 2

    def test_missing_dataset_exit_2(self, tmp_path, capsys):
        path = write_config(tmp_path, data=None)
        assert main(["train", "--config", str(path)]) == 2
        assert "paths.dataset" in capsys.readouterr().err

    def test_artifacts_written(self, tmp_path):
        path = write_config(tmp_path)
        assert main(["train", "--config", str(path)]) == 0
        out = tmp_path / "out"
        assert (out / "run_result.json").exists()
        assert (out / "metrics.csv").exists()
        assert (out / "checkpoint.json").exists()
        doc = json.loads((out / "run_result.json").read_text())
        assert "config_hash" in doc and len(doc["train_losses"]) == 2

    def test_rerun_byte_identical_csv(self, tmp_path):
        path = write_config(tmp_path)
        main(["train", "--config", str(path)])
        first = (tmp_path / "out" / "metrics.csv").read_bytes()
        main(["train", "--config", str(path)])
        assert (tmp_path / "out" / "metrics.csv").read_bytes() == first


class TestEval:
    def test_eval_after_train(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        main(["train", "--config", str(cfg)])
        ckpt = tmp_path / "out" / "checkpoint.json"
        assert main(["eval", "--config", str(cfg), "--checkpoint", str(ckpt),
                     "--split", "test"]) == 0
        out = capsys.readouterr().out
        assert "mAP@10" in out and "test" in out
        assert (tmp_path / "out" / "eval_test.json").exists()

    def test_empty_split_exit_2(self, tmp_path):
        cfg = write_config(tmp_path)
        main(["train", "--config", str(cfg)])
        ckpt = tmp_path / "out" / "checkpoint.json"
        empty = write_config(tmp_path, data={"synthetic": {
            "n_classes": 3, "n_train": 18, "n_val": 9, "n_test": 0, "duration": 0.2,
        }})
        assert main(["eval", "--config", str(empty), "--checkpoint", str(ckpt),
                     "--split", "test"]) == 2

    def test_dim_mismatch_exit_2(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        main(["train", "--config", str(cfg)])
        ckpt = tmp_path / "out" / "checkpoint.json"
        other = write_config(tmp_path, features={"n_mels": 32})
        assert main(["eval", "--config", str(other), "--checkpoint", str(ckpt)]) == 2
        assert "n_mels" in capsys.readouterr().err

    def test_unreadable_checkpoint_exit_2(self, tmp_path):
        cfg = write_config(tmp_path)
        assert main(["eval", "--config", str(cfg), "--checkpoint",
                     str(tmp_path / "missing.json")]) == 2


class TestSmbo:
    def test_zero_trials_exit_2(self, tmp_path):
        cfg = write_config(tmp_path)
        assert main(["smbo", "--config", str(cfg), "--n-trials", "0"]) == 2

    def test_toy_objective(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        assert main(["smbo", "--config", str(cfg), "--objective", "synthetic-quadratic",
                     "--n-init", "10", "--n-trials", "40"]) == 0
        out = capsys.readouterr().out
        assert "parameter" in out and "best" in out
        trials = (tmp_path / "out" / "trials.jsonl").read_text().splitlines()
        assert len(trials) == 40

    def test_toy_objective_near_optimum(self, tmp_path):
        cfg = write_config(tmp_path)
        main(["smbo", "--config", str(cfg), "--objective", "synthetic-quadratic",
              "--n-init", "10", "--n-trials", "60"])
        best = None
        for line in (tmp_path / "out" / "trials.jsonl").read_text().splitlines():
            rec = json.loads(line)
            if best is None or rec["objective"] > best["objective"]:
                best = rec
        assert abs(best["config"]["x"] - 0.7) < 0.05
        assert abs(best["config"]["y"] - 0.7) < 0.05

    def test_resume_reaches_requested_count(self, tmp_path):
        cfg = write_config(tmp_path)
        main(["smbo", "--config", str(cfg), "--objective", "synthetic-quadratic",
              "--n-init", "5", "--n-trials", "12"])
        assert main(["smbo", "--config", str(cfg), "--objective", "synthetic-quadratic",
                     "--n-init", "5", "--n-trials", "20", "--resume"]) == 0
        trials = (tmp_path / "out" / "trials.jsonl").read_text().splitlines()
        assert len(trials) == 20

    def test_corrupt_log_on_resume_exit_3(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "out"
        out.mkdir()
        (out / "trials.jsonl").write_text('{"schema": 7, "oops": true}\n')
        assert main(["smbo", "--config", str(cfg), "--objective", "synthetic-quadratic",
                     "--n-trials", "5", "--resume"]) == 3


class TestAugmentPreview:
    def test_text_stage_listing(self, tmp_path, capsys):
        cfg = write_config(tmp_path, text_aug={
            "p_eda": 1.0, "p_syn": 0.3, "p_del": 0.3, "p_ins": 0.3, "p_swp": 0.3,
            "p_bt": 1.0,
        })
        assert main(["augment-preview", "--config", str(cfg), "--mode", "text",
                     "--input", "The rain pours down.", "--seed", "1"]) == 0
        out = capsys.readouterr().out
        for stage in ("Original", "Back Translation", "Insert", "Delete", "Swap", "Synonym"):
            assert stage in out

    def test_zero_probabilities_identical_lines(self, tmp_path, capsys):
        cfg = write_config(tmp_path, text_aug={})
        main(["augment-preview", "--config", str(cfg), "--mode", "text",
              "--input", "a dog barks", "--seed", "0"])
        # stage labels are padded to 16 columns; the text starts at column 17
        lines = [l[17:] for l in capsys.readouterr().out.splitlines()]
        assert len(set(lines)) == 1

    def test_same_seed_same_preview(self, tmp_path, capsys):
        cfg = write_config(tmp_path, text_aug={"p_eda": 1.0, "p_del": 0.3})
        main(["augment-preview", "--config", str(cfg), "--mode", "text",
              "--input", "one two three four five", "--seed", "9"])
        first = capsys.readouterr().out
        main(["augment-preview", "--config", str(cfg), "--mode", "text",
              "--input", "one two three four five", "--seed", "9"])
        assert capsys.readouterr().out == first

    def test_audio_mode_writes_csvs(self, tmp_path):
        from audioretrieval.data import save_wav, synth_dataset

        ds = synth_dataset(2, 1, 0, duration=0.2)
        wav = tmp_path / "clip.wav"
        save_wav(wav, ds.items[0][1])
        cfg = write_config(tmp_path, audio_aug={"g_max": 3, "n_f": 1, "w_f": 4})
        assert main(["augment-preview", "--config", str(cfg), "--mode", "audio",
                     "--input", str(wav), "--seed", "0"]) == 0
        assert (tmp_path / "out" / "preview_before.csv").exists()
        assert (tmp_path / "out" / "preview_after.csv").exists()

    def test_missing_audio_input_exit_2(self, tmp_path):
        cfg = write_config(tmp_path)
        assert main(["augment-preview", "--config", str(cfg), "--mode", "audio",
                     "--input", str(tmp_path / "none.wav")]) == 2


class TestBtCache:
    def test_mock_cardinality(self, tmp_path, capsys):
        caps = tmp_path / "caps.txt"
        caps.write_text("one\ntwo\nthree\n")
        out = tmp_path / "cache.jsonl"
        assert main(["bt-cache", "--captions", str(caps), "--out", str(out), "--mock"]) == 0
        assert "9 new entries" in capsys.readouterr().out

    def test_rerun_zero_new(self, tmp_path, capsys):
        caps = tmp_path / "caps.txt"
        caps.write_text("one\n")
        out = tmp_path / "cache.jsonl"
        main(["bt-cache", "--captions", str(caps), "--out", str(out), "--mock"])
        capsys.readouterr()
        main(["bt-cache", "--captions", str(caps), "--out", str(out), "--mock"])
        assert "0 new entries" in capsys.readouterr().out

    def test_empty_captions_ok(self, tmp_path):
        caps = tmp_path / "caps.txt"
        caps.write_text("")
        out = tmp_path / "cache.jsonl"
        assert main(["bt-cache", "--captions", str(caps), "--out", str(out), "--mock"]) == 0
        assert out.exists()

    def test_no_provider_exit_2(self, tmp_path, monkeypatch):
        monkeypatch.delenv("AUDIORETRIEVAL_BT_URL", raising=False)
        caps = tmp_path / "caps.txt"
        caps.write_text("one\n")
        assert main(["bt-cache", "--captions", str(caps),
                     "--out", str(tmp_path / "c.jsonl")]) == 2


class TestSynthData:
    def test_writes_manifests_and_wavs(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "dataset"
        assert main(["synth-data", "--config", str(cfg), "--out", str(out)]) == 0
        for split, n in (("train", 18), ("val", 9), ("test", 9)):
            manifest = out / f"{split}.jsonl"
            assert manifest.exists()
            assert len(manifest.read_text().splitlines()) == n

    def test_manifest_loads_back(self, tmp_path):
        from audioretrieval.data import load_manifest

        cfg = write_config(tmp_path)
        out = tmp_path / "dataset"
        main(["synth-data", "--config", str(cfg), "--out", str(out)])
        ds = load_manifest(out / "val.jsonl", audio_root=out)
        assert len(ds) == 9
        assert all(caps for _, _, caps in ds.items)
