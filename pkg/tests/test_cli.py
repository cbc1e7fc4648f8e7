import json

import numpy as np
import pytest

import tokmem.gradcheck as gradcheck_mod
from tokmem.cli import main
from tokmem.encoder import init_params, load_checkpoint


def write_config(tmp_path, **overrides):
    doc = {
        "format_version": 1,
        "data": {
            "num_identities": 4,
            "samples_per_identity": 6,
            "patches_per_image": 6,
            "patch_input_dim": 5,
            "identity_spread": 0.1,
            "noise_patch_prob": 0.1,
            "seed": 3,
        },
        "train": {"epochs": 3, "batch_size": 4, "feature_dim": 8, "part_tokens": 2,
                  "dbscan_eps": 0.3, "dbscan_min_pts": 2, "seed": 11},
        "eval": {"query_per_identity": 2, "k_max": 5, "seed": 7},
        "paths": {
            "dataset": str(tmp_path / "run" / "data"),
            "checkpoint": str(tmp_path / "run" / "ckpt"),
            "log": str(tmp_path / "run" / "log.jsonl"),
            "metrics": str(tmp_path / "run" / "metrics.json"),
        },
    }
    for section, values in overrides.items():
        doc[section].update(values)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return path


def test_gen_data_writes_files_and_prints_counts(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["gen-data", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert "24 samples" in out and "4 identities" in out
    assert (tmp_path / "run" / "data.json").exists()
    assert (tmp_path / "run" / "data.f32").exists()


def test_gen_data_deterministic_bytes(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["gen-data", "--config", str(cfg)]) == 0
    a_json = (tmp_path / "run" / "data.json").read_bytes()
    a_blob = (tmp_path / "run" / "data.f32").read_bytes()
    assert main(["gen-data", "--config", str(cfg)]) == 0
    assert (tmp_path / "run" / "data.json").read_bytes() == a_json
    assert (tmp_path / "run" / "data.f32").read_bytes() == a_blob


def test_gen_data_out_override(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["gen-data", "--config", str(cfg), "--out", str(tmp_path / "alt")]) == 0
    assert (tmp_path / "alt.json").exists()
    assert (tmp_path / "alt.f32").exists()


def test_missing_config_field_exits_2(tmp_path, capsys):
    cfg = write_config(tmp_path)
    doc = json.loads(cfg.read_text())
    del doc["data"]["seed"]
    cfg.write_text(json.dumps(doc))
    assert main(["gen-data", "--config", str(cfg)]) == 2
    assert "data.seed" in capsys.readouterr().err


def test_train_writes_checkpoint_and_log(tmp_path, capsys):
    cfg = write_config(tmp_path)
    main(["gen-data", "--config", str(cfg)])
    assert main(["train", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert "checkpoint written" in out
    lines = (tmp_path / "run" / "log.jsonl").read_text().strip().splitlines()
    assert len(lines) == 3
    records = [json.loads(line) for line in lines]
    assert [r["epoch"] for r in records] == [0, 1, 2]
    load_checkpoint(tmp_path / "run" / "ckpt")


def test_train_zero_epochs_checkpoint_is_initial(tmp_path):
    cfg = write_config(tmp_path, train={"epochs": 0})
    main(["gen-data", "--config", str(cfg)])
    assert main(["train", "--config", str(cfg)]) == 0
    params = load_checkpoint(tmp_path / "run" / "ckpt")
    fresh = init_params(8, 5, 2, seed=11)
    np.testing.assert_array_equal(
        params.w_patch, fresh.w_patch.astype(np.float32).astype(np.float64))
    assert (tmp_path / "run" / "log.jsonl").read_text() == ""


def test_train_missing_dataset_exits_2(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["train", "--config", str(cfg)]) == 2
    assert "missing" in capsys.readouterr().err


def test_train_runs_are_byte_identical(tmp_path):
    cfg = write_config(tmp_path)
    main(["gen-data", "--config", str(cfg)])
    assert main(["train", "--config", str(cfg)]) == 0
    first_ckpt = (tmp_path / "run" / "ckpt.f32").read_bytes()
    first_manifest = (tmp_path / "run" / "ckpt.json").read_bytes()
    first_log = (tmp_path / "run" / "log.jsonl").read_bytes()
    assert main(["train", "--config", str(cfg)]) == 0
    assert (tmp_path / "run" / "ckpt.f32").read_bytes() == first_ckpt
    assert (tmp_path / "run" / "ckpt.json").read_bytes() == first_manifest
    assert (tmp_path / "run" / "log.jsonl").read_bytes() == first_log


def test_eval_writes_metrics(tmp_path, capsys):
    cfg = write_config(tmp_path)
    main(["gen-data", "--config", str(cfg)])
    main(["train", "--config", str(cfg)])
    capsys.readouterr()
    assert main(["eval", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert "mAP=" in out and "rank1=" in out
    doc = json.loads((tmp_path / "run" / "metrics.json").read_text())
    assert 0.0 <= doc["mAP"] <= 1.0
    assert len(doc["cmc"]) == 5
    assert doc["num_queries"] == 8


def test_eval_per_query_csv(tmp_path):
    cfg = write_config(tmp_path)
    main(["gen-data", "--config", str(cfg)])
    main(["train", "--config", str(cfg)])
    csv_path = tmp_path / "run" / "per_query.csv"
    assert main(["eval", "--config", str(cfg), "--per-query-csv", str(csv_path)]) == 0
    lines = csv_path.read_text().strip().splitlines()
    assert len(lines) == 9


def test_eval_corrupted_blob_exits_2(tmp_path, capsys):
    cfg = write_config(tmp_path)
    main(["gen-data", "--config", str(cfg)])
    main(["train", "--config", str(cfg)])
    blob_path = tmp_path / "run" / "ckpt.f32"
    blob_path.write_bytes(blob_path.read_bytes()[:-4])
    assert main(["eval", "--config", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert "blob" in err and "manifest" in err


def test_eval_dimension_mismatch_exits_2(tmp_path, capsys):
    cfg = write_config(tmp_path)
    main(["gen-data", "--config", str(cfg)])
    main(["train", "--config", str(cfg)])
    mismatched = write_config(tmp_path, train={"feature_dim": 16})
    assert main(["eval", "--config", str(mismatched)]) == 2
    assert "feature_dim" in capsys.readouterr().err


def test_train_numeric_failure_exits_3_with_diagnostics(tmp_path, capsys, monkeypatch):
    import numpy as np

    import tokmem.training as training_mod
    from tokmem.losses import LossOutput

    def broken(*args, **kwargs):
        return LossOutput(value=float("nan"), grad_image_feature=np.zeros(8),
                          grad_tokens=np.zeros((2, 8)))

    cfg = write_config(tmp_path)
    main(["gen-data", "--config", str(cfg)])
    monkeypatch.setattr(training_mod.losses_mod, "constraint_loss", broken)
    assert main(["train", "--config", str(cfg)]) == 3
    assert "non-finite" in capsys.readouterr().err
    diag = json.loads((tmp_path / "run" / "log.jsonl.diag.json").read_text())
    assert diag["epoch"] == 0


def test_gradcheck_passes_and_reports(tmp_path, capsys):
    assert main(["gradcheck", "--seed", "1", "--trials", "3"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 4
    assert "FAIL" not in out


def test_gradcheck_deterministic_report(capsys):
    assert main(["gradcheck", "--seed", "5", "--trials", "2"]) == 0
    first = capsys.readouterr().out
    assert main(["gradcheck", "--seed", "5", "--trials", "2"]) == 0
    assert capsys.readouterr().out == first


def test_gradcheck_broken_gradient_exits_1(monkeypatch, capsys):
    def broken(rng):
        return 1.0  # huge relative error

    monkeypatch.setitem(gradcheck_mod.COMPONENTS, "anchor_loss", broken)
    assert main(["gradcheck", "--seed", "1", "--trials", "2"]) == 1
    captured = capsys.readouterr()
    assert "FAIL anchor_loss" in captured.out
    assert "anchor_loss" in captured.err
