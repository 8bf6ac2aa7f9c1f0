import csv
import json
import os

import numpy as np
import pytest

from spectrapix.cli import main
from spectrapix.errors import ConfigError
from spectrapix.harness import (DEFAULT_CONFIG, ExperimentConfig, run,
                                write_confusion_csv, write_spectra_csv)


def tiny_config(tmp_path, **overrides):
    cfg = {
        "seed": 11,
        "out_dir": str(tmp_path / "run"),
        "dataset": {"train_size": 24, "test_size": 12},
        "geometry": {"features": 24},
        "training": {"epochs": 1, "lr": 0.05},
        "decoder": {"epochs": 2, "hidden": [16, 16]},
        "joint": {"epochs": 1},
        "sweep": {"deltas": [0.0, 1.0], "trials": 2},
    }
    for key, value in overrides.items():
        if isinstance(value, dict):
            cfg.setdefault(key, {}).update(value)
        else:
            cfg[key] = value
    return cfg


def write_config(tmp_path, name="config.json", **overrides):
    cfg = tiny_config(tmp_path, **overrides)
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path, cfg


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig({"seed": 1, "banana": True})
    with pytest.raises(ConfigError):
        ExperimentConfig({"seed": 1, "geometry": {"depth": 3}})


def test_seed_mandatory():
    with pytest.raises(ConfigError):
        ExperimentConfig({"out_dir": "x"})


def test_config_save_is_fully_expanded(tmp_path):
    cfg = ExperimentConfig({"seed": 1, "out_dir": str(tmp_path)})
    path = tmp_path / "resolved.json"
    cfg.save(path)
    saved = json.loads(path.read_text())
    assert set(saved) == set(DEFAULT_CONFIG)
    assert saved["training"]["epochs"] == 20
    # a saved config reloads to the identical resolved state
    again = ExperimentConfig.from_file(path)
    assert again.data == cfg.data


def test_train_subcommand_artifacts(tmp_path):
    path, cfg = write_config(tmp_path)
    assert main(["train", "--config", str(path)]) == 0
    out = cfg["out_dir"]
    for artifact in ("config.json", "report.json", "history.jsonl",
                     "model.npz", "confusion_optical.csv", "per_sample.csv"):
        assert os.path.exists(os.path.join(out, artifact)), artifact
    report = json.loads(open(os.path.join(out, "report.json")).read())
    assert 0.0 <= report["test_accuracy"] <= 1.0
    with open(os.path.join(out, "confusion_optical.csv")) as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 11  # header + 10 classes
    total = sum(int(v) for row in rows[1:] for v in row[1:])
    assert total == 12


def test_train_reproducibility(tmp_path):
    p1, c1 = write_config(tmp_path, name="a.json",
                          out_dir=str(tmp_path / "runA"))
    p2, c2 = write_config(tmp_path, name="b.json",
                          out_dir=str(tmp_path / "runB"))
    assert main(["train", "--config", str(p1)]) == 0
    assert main(["train", "--config", str(p2)]) == 0
    ra = json.loads(open(os.path.join(c1["out_dir"], "report.json")).read())
    rb = json.loads(open(os.path.join(c2["out_dir"], "report.json")).read())
    ra.pop("model_checkpoint"), rb.pop("model_checkpoint")
    assert ra == rb


def test_eval_export_sweep_pipelines(tmp_path, capsys):
    path, cfg = write_config(tmp_path)
    assert main(["train", "--config", str(path)]) == 0
    model_path = os.path.join(cfg["out_dir"], "model.npz")

    epath, ecfg = write_config(tmp_path, name="eval.json",
                               out_dir=str(tmp_path / "eval"),
                               model_checkpoint=model_path)
    assert main(["eval", "--config", str(epath)]) == 0
    out = capsys.readouterr().out
    assert "test_accuracy:" in out

    spath, scfg = write_config(tmp_path, name="sweep.json",
                               out_dir=str(tmp_path / "sweep"),
                               model_checkpoint=model_path)
    assert main(["sweep", "--config", str(spath)]) == 0
    with open(os.path.join(scfg["out_dir"], "accuracy_vs_delta.csv")) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["delta_mm", "accuracy_mean", "accuracy_std"]
    assert len(rows) == 3

    xpath, xcfg = write_config(tmp_path, name="export.json",
                               out_dir=str(tmp_path / "export"),
                               model_checkpoint=model_path)
    assert main(["export-spectra", "--config", str(xpath)]) == 0
    with open(os.path.join(xcfg["out_dir"], "spectra.csv")) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["sample", "label", "wavelength_mm", "power"]
    assert len(rows) == 1 + 12 * 10  # 12 samples x 10 wavelengths


def test_export_spectra_matches_forward(tmp_path):
    cfg = ExperimentConfig(tiny_config(tmp_path))
    report = run(cfg, "train")
    xcfg = ExperimentConfig(tiny_config(tmp_path, out_dir=str(tmp_path / "x"),
                                        model_checkpoint=report["model_checkpoint"]))
    report = run(xcfg, "export-spectra")
    rows = list(csv.reader(open(report["spectra_csv"])))[1:]

    from spectrapix.checkpoint import load_model
    from spectrapix.data import load_dataset
    from spectrapix.training import collect_scores

    model = load_model(cfg["model_checkpoint"] or
                       os.path.join(cfg["out_dir"], "model.npz"))
    data_dir = os.path.join(str(tmp_path / "x"), "data")
    test_set = load_dataset(os.path.join(data_dir, "test-images-idx3-ubyte"),
                            os.path.join(data_dir, "test-labels-idx1-ubyte"))
    raw = collect_scores(model, test_set)
    for idx, row in enumerate(rows):
        i, label, power = int(row[0]), int(row[1]), float(row[3])
        k = idx % model.plan.count
        assert i == idx // model.plan.count
        assert label == int(test_set.labels[i])
        assert power == float(raw[i, k])


def test_decode_feedback_joint_pipelines(tmp_path):
    path, cfg = write_config(tmp_path)
    assert main(["train", "--config", str(path)]) == 0
    model_path = os.path.join(cfg["out_dir"], "model.npz")

    dpath, dcfg = write_config(tmp_path, name="dec.json",
                               out_dir=str(tmp_path / "dec"),
                               model_checkpoint=model_path)
    assert main(["decode", "--config", str(dpath)]) == 0
    decoder_path = os.path.join(dcfg["out_dir"], "decoder.npz")
    assert os.path.exists(decoder_path)

    fpath, fcfg = write_config(tmp_path, name="fb.json",
                               out_dir=str(tmp_path / "fb"),
                               model_checkpoint=model_path,
                               decoder_checkpoint=decoder_path)
    assert main(["feedback", "--config", str(fpath)]) == 0
    report = json.loads(open(os.path.join(fcfg["out_dir"], "report.json")).read())
    assert report["gain"] == report["n_corrected"] - report["n_lost"]
    # recount the gain from the persisted per-sample log
    with open(os.path.join(fcfg["out_dir"], "per_sample.csv")) as fh:
        rows = list(csv.reader(fh))[1:]
    nc = sum(1 for r in rows if r[2] != r[1] and r[3] == r[1])
    nl = sum(1 for r in rows if r[2] == r[1] and r[3] != r[1])
    assert (nc, nl) == (report["n_corrected"], report["n_lost"])

    jpath, jcfg = write_config(tmp_path, name="joint.json",
                               out_dir=str(tmp_path / "joint"))
    assert main(["joint", "--config", str(jpath)]) == 0
    report = json.loads(open(os.path.join(jcfg["out_dir"], "report.json")).read())
    assert "electronic_accuracy" in report


def test_cli_error_paths(tmp_path, capsys):
    missing = tmp_path / "missing.json"
    assert main(["eval", "--config", str(missing)]) == 2
    assert "error: ConfigError" in capsys.readouterr().err

    path, _ = write_config(tmp_path, name="nockpt.json",
                           out_dir=str(tmp_path / "e"))
    assert main(["eval", "--config", str(path)]) == 2
    assert "error:" in capsys.readouterr().err


def test_cli_overrides(tmp_path):
    path, cfg = write_config(tmp_path)
    alt = str(tmp_path / "override")
    assert main(["train", "--config", str(path), "--seed", "12",
                 "--out", alt]) == 0
    saved = json.loads(open(os.path.join(alt, "config.json")).read())
    assert saved["seed"] == 12
    assert saved["out_dir"] == alt


def test_csv_helpers(tmp_path):
    conf = np.array([[3, 1], [0, 2]])
    cpath = tmp_path / "c.csv"
    write_confusion_csv(cpath, conf)
    rows = list(csv.reader(open(cpath)))
    assert rows[1] == ["0", "3", "1"]

    spath = tmp_path / "s.csv"
    write_spectra_csv(spath, np.array([[1.0, 2.0]]), np.array([1.0, 1.45]))
    rows = list(csv.reader(open(spath)))
    assert rows[0] == ["sample", "wavelength_mm", "power"]
    assert rows[1] == ["0", "1.0", "1.0"]
