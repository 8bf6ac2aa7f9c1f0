"""Experiment orchestration: configs, run reports and artifact export.

A run is driven by a JSON configuration. Saving a config always serializes
every effective field (defaults included), so a recorded run can be recreated
with zero unstated defaults. All tabular artifacts are CSV with headers;
training histories are line-delimited JSON; checkpoints use the versioned
container from :mod:`spectrapix.checkpoint`.
"""

from __future__ import annotations

import copy
import csv
import json
import os

import numpy as np

from . import checkpoint as ckpt
from .data import load_dataset, write_synthetic_idx
from .decoder import (ReconLossConfig, classifier_accuracy, create_mlp,
                      feedback_evaluate, train_classifier, train_reconstructor)
from .dispersion import DispersionModel, default_polymer
from .errors import ConfigError
from .joint import JointConfig, evaluate_joint, joint_train
from .losses import LossWeights, normalized_scores
from .model import DetectorGeometry, WavelengthPlan, build_model
from .training import (VaccinationPlan, collect_scores, evaluate,
                       misalignment_sweep, train)

DEFAULT_CONFIG = {
    "seed": None,
    "out_dir": "runs/latest",
    "dataset": {
        "source": "synthetic",          # "synthetic" or "idx"
        "variant": "mnist",             # "mnist" or "emnist-letters"
        "train_images": None,
        "train_labels": None,
        "test_images": None,
        "test_labels": None,
        "train_size": 10000,
        "test_size": 2000,
        "classes": 10,
    },
    "geometry": {
        "features": 64,
        "pitch": 0.5,
        "n_layers": 3,
        "aperture_width": 10.0,
        "aperture_to_object": 3.0,
        "plane_spacing": 30.0,
        "detector_width": 2.0,
        "detector_center": [0.0, 0.0],
        "guard_band": 2.0,
        "h_base": 0.2,
        "h_range": 1.0,
        "latent_init_std": 1.0,
        "output_aperture_width": None,
        "si_slab": False,
        "window": 10.0,
        "dispersion_table": None,       # path; None = bundled polymer stand-in
    },
    "plan": {
        "mode": "plain",
        "class_count": 10,
        "wavelengths_per_class": 1,
        "lambda_min": 1.0,
        "lambda_max": 1.45,
    },
    "loss": {"alpha": 0.0, "beta": 0.0, "temperature": 0.1},
    "training": {"epochs": 20, "batch_size": 32, "lr": 1e-3, "threshold": 0.5},
    "vaccination": {"delta": 0.0, "layers": None},
    "decoder": {
        "head": "reconstruction",
        "hidden": [256, 256],
        "gamma": 0.95,
        "structural": "mae",
        "epochs": 50,
        "batch_size": 64,
        "lr": 1e-3,
    },
    "joint": {
        "xi": 0.5,
        "back_end": "classifier",
        "epochs": 10,
        "batch_size": 32,
        "lr_model": 1e-3,
        "lr_net": 1e-3,
    },
    "sweep": {"deltas": [0.0, 0.5, 1.0, 1.5, 2.0], "trials": 5,
              "protocol": "middle"},
    "eval": {"noise_std": 0.0, "batch_size": 64},
    "model_checkpoint": None,
    "decoder_checkpoint": None,
}


def _merge(defaults: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(defaults)
    for key, value in override.items():
        if key not in defaults:
            raise ConfigError(f"unknown config key {path + key!r}")
        if isinstance(defaults[key], dict) and isinstance(value, dict):
            out[key] = _merge(defaults[key], value, path + key + ".")
        else:
            out[key] = value
    return out


class ExperimentConfig:
    """Fully resolved experiment configuration (defaults merged in)."""

    def __init__(self, overrides: dict):
        self.data = _merge(DEFAULT_CONFIG, overrides)
        if self.data["seed"] is None:
            raise ConfigError("config must set an explicit seed")

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                return cls(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.data, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def __getitem__(self, key):
        return self.data[key]


def _write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def write_confusion_csv(path, confusion: np.ndarray) -> None:
    c = confusion.shape[0]
    _write_csv(path, ["true\\pred"] + [str(i) for i in range(c)],
               [[str(i)] + list(map(int, confusion[i])) for i in range(c)])


def write_spectra_csv(path, raw: np.ndarray, wavelengths: np.ndarray,
                      labels: np.ndarray | None = None) -> None:
    rows = []
    for i in range(raw.shape[0]):
        for k in range(raw.shape[1]):
            row = [i, float(wavelengths[k]), float(raw[i, k])]
            if labels is not None:
                row.insert(1, int(labels[i]))
            rows.append(row)
    header = ["sample", "wavelength_mm", "power"]
    if labels is not None:
        header = ["sample", "label", "wavelength_mm", "power"]
    _write_csv(path, header, rows)


def _load_configured_datasets(cfg: ExperimentConfig, out_dir: str):
    ds = cfg["dataset"]
    seed = cfg["seed"]
    if ds["source"] == "synthetic":
        data_dir = os.path.join(out_dir, "data")
        os.makedirs(data_dir, exist_ok=True)
        classes = ds["classes"]
        alphabet = "0123456789"
        if ds["variant"] == "emnist-letters" or classes > 10:
            alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
        paths = {}
        for split, size, split_seed in (("train", ds["train_size"], seed),
                                        ("test", ds["test_size"], seed + 1)):
            ip = os.path.join(data_dir, f"{split}-images-idx3-ubyte")
            lp = os.path.join(data_dir, f"{split}-labels-idx1-ubyte")
            if not (os.path.exists(ip) and os.path.exists(lp)):
                write_synthetic_idx(ip, lp, size, seed=split_seed,
                                    classes=classes, alphabet=alphabet)
            paths[split] = (ip, lp)
        train_set = load_dataset(*paths["train"], variant="mnist")
        test_set = load_dataset(*paths["test"], variant="mnist")
    elif ds["source"] == "idx":
        for key in ("train_images", "train_labels", "test_images", "test_labels"):
            if ds[key] is None or not os.path.exists(ds[key]):
                raise ConfigError(f"dataset.{key} missing or not found: {ds[key]}")
        train_set = load_dataset(ds["train_images"], ds["train_labels"],
                                 variant=ds["variant"])
        test_set = load_dataset(ds["test_images"], ds["test_labels"],
                                variant=ds["variant"])
        train_set = train_set.take(ds["train_size"])
        test_set = test_set.take(ds["test_size"])
    else:
        raise ConfigError(f"unknown dataset source {ds['source']!r}")
    return train_set, test_set


def _build_plan(cfg: ExperimentConfig) -> WavelengthPlan:
    p = cfg["plan"]
    return WavelengthPlan.uniform(p["class_count"], p["wavelengths_per_class"],
                                  p["mode"], p["lambda_min"], p["lambda_max"])


def _build_model(cfg: ExperimentConfig):
    g = cfg["geometry"]
    dispersion = None
    if g["dispersion_table"]:
        dispersion = DispersionModel.from_file(g["dispersion_table"])
    else:
        dispersion = default_polymer(cfg["plan"]["lambda_min"])
    detector = DetectorGeometry(g["detector_width"],
                                tuple(g["detector_center"]), g["guard_band"])
    return build_model(features=g["features"], pitch=g["pitch"],
                       n_layers=g["n_layers"], plan=_build_plan(cfg),
                       dispersion=dispersion,
                       aperture_width=g["aperture_width"],
                       aperture_to_object=g["aperture_to_object"],
                       plane_spacing=g["plane_spacing"], detector=detector,
                       h_base=g["h_base"], h_range=g["h_range"],
                       latent_init_std=g["latent_init_std"], seed=cfg["seed"],
                       output_aperture_width=g["output_aperture_width"],
                       si_slab=g["si_slab"])


def _require_checkpoint(cfg: ExperimentConfig, key: str):
    path = cfg[key]
    if not path or not os.path.exists(path):
        raise ConfigError(f"{key} missing or not found: {path}")
    return path


def _report_common(report: dict, out_dir: str) -> dict:
    scalars = {k: v for k, v in report.items()
               if isinstance(v, (int, float, str, bool))}
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(scalars, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report


def run(cfg: ExperimentConfig, command: str) -> dict:
    """Execute one named pipeline end to end; returns the run report."""
    out_dir = cfg["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    cfg.save(os.path.join(out_dir, "config.json"))
    handlers = {
        "train": _run_train,
        "eval": _run_eval,
        "decode": _run_decode,
        "feedback": _run_feedback,
        "joint": _run_joint,
        "sweep": _run_sweep,
        "export-spectra": _run_export_spectra,
    }
    if command not in handlers:
        raise ConfigError(f"unknown subcommand {command!r}")
    return handlers[command](cfg, out_dir)


def _train_kwargs(cfg: ExperimentConfig) -> dict:
    t = cfg["training"]
    return {"epochs": t["epochs"], "batch_size": t["batch_size"], "lr": t["lr"],
            "threshold": t["threshold"], "window": cfg["geometry"]["window"],
            "seed": cfg["seed"]}


def _run_train(cfg, out_dir):
    train_set, test_set = _load_configured_datasets(cfg, out_dir)
    model = _build_model(cfg)
    weights = LossWeights(**cfg["loss"])
    vac = None
    if cfg["vaccination"]["delta"] > 0:
        vac = VaccinationPlan.uniform(cfg["vaccination"]["delta"],
                                      len(model.layers),
                                      cfg["vaccination"]["layers"])
    _, history = train(model, train_set, weights, vaccination=vac,
                       test_set=test_set,
                       history_path=os.path.join(out_dir, "history.jsonl"),
                       **_train_kwargs(cfg))
    ckpt.save_model(os.path.join(out_dir, "model.npz"), model)
    res = evaluate(model, test_set, window=cfg["geometry"]["window"],
                   threshold=cfg["training"]["threshold"])
    write_confusion_csv(os.path.join(out_dir, "confusion_optical.csv"),
                        res["confusion"])
    _write_csv(os.path.join(out_dir, "per_sample.csv"),
               ["sample", "label", "optical_prediction"],
               [[i, int(l), int(p)] for i, (l, p) in
                enumerate(zip(test_set.labels, res["predictions"]))])
    report = {"command": "train", "test_accuracy": res["accuracy"],
              "eta_mean": res["eta_mean"], "eta_std": res["eta_std"],
              "confusion": res["confusion"], "history": history,
              "model_checkpoint": os.path.join(out_dir, "model.npz")}
    return _report_common(report, out_dir)


def _run_eval(cfg, out_dir):
    _, test_set = _load_configured_datasets(cfg, out_dir)
    model = ckpt.load_model(_require_checkpoint(cfg, "model_checkpoint"))
    res = evaluate(model, test_set, window=cfg["geometry"]["window"],
                   threshold=cfg["training"]["threshold"],
                   noise_std=cfg["eval"]["noise_std"], noise_seed=cfg["seed"],
                   batch_size=cfg["eval"]["batch_size"])
    write_confusion_csv(os.path.join(out_dir, "confusion_optical.csv"),
                        res["confusion"])
    report = {"command": "eval", "test_accuracy": res["accuracy"],
              "eta_mean": res["eta_mean"], "eta_std": res["eta_std"],
              "noise_std": cfg["eval"]["noise_std"],
              "confusion": res["confusion"]}
    return _report_common(report, out_dir)


def _run_decode(cfg, out_dir):
    train_set, test_set = _load_configured_datasets(cfg, out_dir)
    model = ckpt.load_model(_require_checkpoint(cfg, "model_checkpoint"))
    d = cfg["decoder"]
    window = cfg["geometry"]["window"]
    thr = cfg["training"]["threshold"]
    if d["head"] == "reconstruction":
        h, w = train_set.images.shape[1:]
        net = create_mlp(model.plan.class_count, h * w, "reconstruction",
                         tuple(d["hidden"]), seed=cfg["seed"])
        recon_cfg = ReconLossConfig(d["gamma"], d["structural"])
        _, history = train_reconstructor(net, model, train_set, recon_cfg,
                                         epochs=d["epochs"],
                                         batch_size=d["batch_size"], lr=d["lr"],
                                         seed=cfg["seed"], window=window,
                                         threshold=thr if thr is not None else 0.5)
        raw = collect_scores(model, test_set, window=window, threshold=thr)
        tilde, _ = normalized_scores(raw, model.plan)
        from .decoder import mlp_forward
        recon = mlp_forward(net, tilde)
        truth = (test_set.images > (thr if thr is not None else 0.5))
        truth = truth.astype(np.float64).reshape(len(test_set), -1)
        metric = {"reconstruction_mae": float(np.abs(recon - truth).mean())}
    else:
        raw_train = collect_scores(model, train_set, window=window, threshold=thr)
        tilde_train, _ = normalized_scores(raw_train, model.plan)
        net = create_mlp(model.plan.class_count, model.plan.class_count,
                         "classification", tuple(d["hidden"]), seed=cfg["seed"])
        _, history = train_classifier(net, tilde_train, train_set.labels,
                                      epochs=d["epochs"],
                                      batch_size=d["batch_size"], lr=d["lr"],
                                      seed=cfg["seed"])
        raw = collect_scores(model, test_set, window=window, threshold=thr)
        tilde, _ = normalized_scores(raw, model.plan)
        metric = {"electronic_accuracy": classifier_accuracy(net, tilde,
                                                             test_set.labels)}
    ckpt.save_decoder(os.path.join(out_dir, "decoder.npz"), net)
    with open(os.path.join(out_dir, "history.jsonl"), "w") as fh:
        for record in history:
            fh.write(json.dumps(record) + "\n")
    report = {"command": "decode", "head": d["head"], **metric,
              "decoder_checkpoint": os.path.join(out_dir, "decoder.npz")}
    return _report_common(report, out_dir)


def _run_feedback(cfg, out_dir):
    _, test_set = _load_configured_datasets(cfg, out_dir)
    model = ckpt.load_model(_require_checkpoint(cfg, "model_checkpoint"))
    net = ckpt.load_decoder(_require_checkpoint(cfg, "decoder_checkpoint"))
    thr = cfg["training"]["threshold"]
    res = feedback_evaluate(net, model, test_set,
                            window=cfg["geometry"]["window"],
                            threshold=thr if thr is not None else 0.5)
    _write_csv(os.path.join(out_dir, "per_sample.csv"),
               ["sample", "label", "optical_prediction", "feedback_prediction"],
               [[i, int(l), int(a), int(b)] for i, (l, a, b) in
                enumerate(zip(test_set.labels, res["initial_predictions"],
                              res["feedback_predictions"]))])
    write_confusion_csv(os.path.join(out_dir, "confusion_feedback.csv"),
                        res["feedback_confusion"])
    report = {"command": "feedback",
              "optical_accuracy": res["optical_accuracy"],
              "feedback_accuracy": res["feedback_accuracy"],
              "n_corrected": res["n_corrected"], "n_lost": res["n_lost"],
              "gain": res["n_corrected"] - res["n_lost"]}
    return _report_common(report, out_dir)


def _run_joint(cfg, out_dir):
    train_set, test_set = _load_configured_datasets(cfg, out_dir)
    model = _build_model(cfg)
    j = cfg["joint"]
    d = cfg["decoder"]
    h, w = train_set.images.shape[1:]
    if j["back_end"] == "classifier":
        net = create_mlp(model.plan.class_count, model.plan.class_count,
                         "classification", tuple(d["hidden"]), seed=cfg["seed"])
    else:
        net = create_mlp(model.plan.class_count, h * w, "reconstruction",
                         tuple(d["hidden"]), seed=cfg["seed"])
    jcfg = JointConfig(j["xi"], j["back_end"],
                       ReconLossConfig(1.0, d["structural"]))
    _, _, history = joint_train(model, net, train_set, jcfg,
                                epochs=j["epochs"], batch_size=j["batch_size"],
                                seed=cfg["seed"], lr_model=j["lr_model"],
                                lr_net=j["lr_net"],
                                temperature=cfg["loss"]["temperature"],
                                window=cfg["geometry"]["window"],
                                threshold=cfg["training"]["threshold"])
    ckpt.save_model(os.path.join(out_dir, "model.npz"), model)
    ckpt.save_decoder(os.path.join(out_dir, "decoder.npz"), net)
    with open(os.path.join(out_dir, "history.jsonl"), "w") as fh:
        for record in history:
            fh.write(json.dumps(record) + "\n")
    res = evaluate_joint(model, net, test_set,
                         window=cfg["geometry"]["window"],
                         threshold=cfg["training"]["threshold"])
    report = {"command": "joint", **{k: v for k, v in res.items()
                                     if k != "confusion"},
              "confusion": res["confusion"]}
    return _report_common(report, out_dir)


def _run_sweep(cfg, out_dir):
    _, test_set = _load_configured_datasets(cfg, out_dir)
    model = ckpt.load_model(_require_checkpoint(cfg, "model_checkpoint"))
    s = cfg["sweep"]
    rows = misalignment_sweep(model, test_set, s["deltas"], trials=s["trials"],
                              seed=cfg["seed"], protocol=s["protocol"],
                              window=cfg["geometry"]["window"],
                              threshold=cfg["training"]["threshold"])
    _write_csv(os.path.join(out_dir, "accuracy_vs_delta.csv"),
               ["delta_mm", "accuracy_mean", "accuracy_std"],
               [[r["delta"], r["accuracy_mean"], r["accuracy_std"]]
                for r in rows])
    report = {"command": "sweep", "rows": rows,
              "protocol": s["protocol"], "trials": s["trials"]}
    return _report_common(report, out_dir)


def _run_export_spectra(cfg, out_dir):
    _, test_set = _load_configured_datasets(cfg, out_dir)
    model = ckpt.load_model(_require_checkpoint(cfg, "model_checkpoint"))
    raw = collect_scores(model, test_set, window=cfg["geometry"]["window"],
                         threshold=cfg["training"]["threshold"])
    path = os.path.join(out_dir, "spectra.csv")
    write_spectra_csv(path, raw, model.plan.wavelengths, test_set.labels)
    report = {"command": "export-spectra", "samples": int(raw.shape[0]),
              "wavelengths": int(raw.shape[1]), "spectra_csv": path}
    return _report_common(report, out_dir)
