import json

import pytest
import yaml

from stocksent.cli import main
from stocksent.config import ConfigError, load_config, validate

BASE_CONFIG = {
    "tickers": ["SYNA"],
    "start": "2022-03-10",
    "out_dir": None,  # filled per test
    "seed": 7,
    "data": {"source": "synthetic", "n_days": 400},
    "sentiment": {"backends": [
        {"id": "finbert", "kind": "noisy", "flip_rate": 0.25},
        {"id": "roberta", "kind": "noisy", "flip_rate": 0.35},
        {"id": "deberta", "kind": "noisy", "flip_rate": 0.15},
    ]},
    "experiment": {
        "sources": ["NS", "deberta", "svm"],
        "archs": ["lstm"],
        "tasks": ["classification"],
        "variant": "full",
        "seeds": [0, 1],
        "ablation_source": "deberta",
    },
    "models": {"lstm": {"epochs": 2, "hidden_dim": 8}},
}


def write_config(tmp_path, **overrides):
    raw = json.loads(json.dumps(BASE_CONFIG))
    raw["out_dir"] = str(tmp_path / "out")
    raw.update(overrides)
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(raw))
    return path


class TestConfigValidation:
    def test_valid_config_loads(self, tmp_path):
        cfg = load_config(write_config(tmp_path))
        assert cfg.tickers == ["SYNA"]
        assert len(cfg.config_hash()) == 16

    def test_all_offending_keys_reported_at_once(self, tmp_path):
        raw = {"tickers": [], "typo_key": 1,
               "experiment": {"sources": ["bloomberg"], "archs": ["gpt"]}}
        errors = validate(raw)
        text = "\n".join(errors)
        for needle in ("typo_key", "bloomberg", "gpt", "tickers", "out_dir"):
            assert needle in text
        path = tmp_path / "bad.yaml"
        path.write_text(yaml.safe_dump(raw))
        with pytest.raises(ConfigError):
            load_config(path)
        assert main(["ingest", "--config", str(path)]) == 2

    def test_unknown_section_key_rejected(self):
        assert any("unknown key in data" in e
                   for e in validate({"tickers": ["A"], "out_dir": "o",
                                      "data": {"sauce": "synthetic"}}))

    def test_hash_changes_with_seed(self, tmp_path):
        cfg = load_config(write_config(tmp_path))
        h1 = cfg.config_hash()
        cfg.raw["seed"] = 8
        assert cfg.config_hash() != h1


class TestStageContracts:
    def test_report_before_run_names_missing_records(self, tmp_path, capsys):
        path = write_config(tmp_path)
        assert main(["report", "--config", str(path)]) == 1
        err = capsys.readouterr().err
        assert "records.jsonl" in err and "run" in err

    def test_sentiment_before_ingest_fails(self, tmp_path, capsys):
        path = write_config(tmp_path)
        assert main(["sentiment", "--config", str(path)]) == 1
        assert "ingest" in capsys.readouterr().err


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("pipeline")
    path = write_config(tmp)
    for stage in ("ingest", "sentiment", "stack", "build", "run", "ablate", "report"):
        assert main([stage, "--config", str(path)]) == 0, stage
    return tmp / "out", path


class TestEndToEnd:
    def test_all_report_artifacts_exist(self, pipeline):
        out, _ = pipeline
        for name in ("classification_table.csv", "classification_table.txt",
                     "ablation_classification_table.csv", "venn_positive.png",
                     "bars_classification_auc.png", "meta.json"):
            assert (out / "reports" / name).exists(), name

    def test_ns_dataset_has_market_features_only(self, pipeline):
        import numpy as np

        out, _ = pipeline
        inputs = np.load(out / "datasets" / "SYNA__NS__full" / "train_inputs.npy")
        assert inputs.shape[1:] == (30, 2)

    def test_artifacts_embed_config_hash(self, pipeline):
        out, path = pipeline
        cfg = load_config(path)
        schema = json.loads((out / "datasets" / "SYNA__deberta__full" / "schema.json")
                            .read_text())
        assert schema["config_hash"] == cfg.config_hash()
        meta = json.loads((out / "reports" / "meta.json").read_text())
        assert meta["config_hash"] == cfg.config_hash()

    def test_rerun_is_noop(self, pipeline):
        out, path = pipeline
        records = out / "records.jsonl"
        before = records.read_text()
        mtime = (out / "datasets" / "SYNA__NS__full" / "schema.json").stat().st_mtime_ns
        for stage in ("ingest", "sentiment", "stack", "build", "run", "ablate"):
            assert main([stage, "--config", str(path)]) == 0
        assert records.read_text() == before
        assert (out / "datasets" / "SYNA__NS__full" / "schema.json").stat().st_mtime_ns == mtime

    def test_report_refuses_foreign_hash_without_force(self, pipeline, capsys):
        out, path = pipeline
        records = out / "records.jsonl"
        original = records.read_text()
        tampered = original.replace('"config_hash": "', '"config_hash": "dead', 1)
        records.write_text(tampered)
        try:
            assert main(["report", "--config", str(path), "--force"]) == 0
            assert main(["report", "--config", str(path)]) == 1
            assert "config hash" in capsys.readouterr().err
        finally:
            records.write_text(original)

    def test_run_record_count(self, pipeline):
        from stocksent.experiments import load_records

        out, _ = pipeline
        records = load_records(out / "records.jsonl")
        # main run: 1 ticker x 3 sources x 1 arch x 2 seeds; the ablation's
        # 'full' variant on deberta reuses those keys instead of retraining
        full = [r for r in records if r.variant == "full"]
        assert len(full) == 6
        # ablation adds the four non-full variants on deberta
        assert len([r for r in records if r.variant != "full"]) == 4 * 2
