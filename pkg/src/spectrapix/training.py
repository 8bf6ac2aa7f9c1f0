"""Mini-batch Adam training of the diffractive latents, with optional
misalignment vaccination, plus evaluation helpers.

Vaccination redraws per-layer lateral shifts D_x, D_y ~ U(-delta, delta) at
every iteration (snapped to whole pixels), so the learned layers tolerate
physical placement errors at test time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import Dataset, ObjectMapper
from .errors import GridError, TrainingDivergenceError
from .gradients import backward
from .losses import LossWeights, efficiency_batch, inference_loss_batch, purity_batch
from .model import DiffractiveModel, ForwardEngine, aggregate_scores
from .optim import AdamState, adam_step


@dataclass(frozen=True)
class VaccinationPlan:
    """Per-layer lateral misalignment ranges (mm) used during training."""

    deltas: tuple[float, ...]

    def __post_init__(self):
        if any(d < 0 for d in self.deltas):
            raise GridError("vaccination deltas must be >= 0")

    @classmethod
    def uniform(cls, delta: float, n_layers: int,
                layers: list[int] | None = None) -> "VaccinationPlan":
        """Same symmetric delta on the selected layers (all by default)."""
        chosen = set(range(n_layers) if layers is None else layers)
        return cls(tuple(delta if i in chosen else 0.0 for i in range(n_layers)))

    def draw(self, rng: np.random.Generator, pitch: float) -> list[tuple[int, int]]:
        shifts = []
        for d in self.deltas:
            dy = int(round(rng.uniform(-d, d) / pitch)) if d > 0 else 0
            dx = int(round(rng.uniform(-d, d) / pitch)) if d > 0 else 0
            shifts.append((dy, dx))
        return shifts

    @property
    def active(self) -> bool:
        return any(d > 0 for d in self.deltas)


def default_mapper(model: DiffractiveModel, window: float = 10.0,
                   threshold: float | None = 0.5) -> ObjectMapper:
    return ObjectMapper(model.grid_shape, model.pitch, window=window,
                        threshold=threshold)


def batch_losses_and_grads(engine: ForwardEngine, objects: np.ndarray,
                           labels: np.ndarray, weights: LossWeights,
                           shifts=None, want_object_grad: bool = False):
    """Forward + adjoint sweep for one mini-batch.

    Returns (metrics dict, GradientBundle); gradients are of the batch-mean
    total loss.
    """
    b = len(objects)
    raw, tape = engine.run(objects, shifts=shifts, with_tape=True)
    li, grad_raw = inference_loss_batch(raw, labels, engine.model.plan,
                                        weights.temperature)
    eta, le, grad_e = efficiency_batch(raw, engine.input_power)
    grad_total = grad_raw + weights.alpha * grad_e
    adj = None
    lp = np.zeros(b)
    if weights.beta > 0:
        lp, adj = purity_batch(tape.u_out, engine.det_mask, engine.guard_mask,
                               engine.model.pitch,
                               weights=np.full(b, weights.beta / b))
    else:
        lp, _ = purity_batch(tape.u_out, engine.det_mask, engine.guard_mask,
                             engine.model.pitch)
    bundle = backward(engine, tape, grad_total / b, grad_u_out=adj,
                      want_object_grad=want_object_grad)
    total = li + weights.alpha * le + weights.beta * lp
    s, delta = aggregate_scores(raw, engine.model.plan)
    decision = delta if engine.model.plan.mode == "differential" else s
    metrics = {
        "loss": float(total.mean()),
        "loss_inference": float(li.mean()),
        "loss_efficiency": float(le.mean()),
        "loss_purity": float(lp.mean()),
        "eta": eta,
        "correct": int(np.sum(np.argmax(decision, axis=-1) == labels)),
        "raw": raw,
    }
    return metrics, bundle


def train(model: DiffractiveModel, train_set: Dataset,
          weights: LossWeights | None = None,
          vaccination: VaccinationPlan | None = None,
          epochs: int = 20, batch_size: int = 32, seed: int = 0,
          lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
          adam_eps: float = 1e-8, test_set: Dataset | None = None,
          window: float = 10.0, threshold: float | None = 0.5,
          history_path=None, log=None):
    """Train the latent thickness maps in place; returns (model, history).

    History holds one record per epoch (losses, train/test accuracy, mean and
    std of the detector efficiency). Fully reproducible from the seed.
    """
    if len(train_set) == 0:
        raise GridError("training dataset is empty")
    weights = weights or LossWeights()
    engine = ForwardEngine(model)
    mapper = default_mapper(model, window=window, threshold=threshold)
    params = model.latents()
    state = AdamState.for_params(params)
    rng = np.random.default_rng(seed)
    history = []
    iteration = 0
    for epoch in range(epochs):
        order = rng.permutation(len(train_set))
        sums = {"loss": 0.0, "loss_inference": 0.0, "loss_efficiency": 0.0,
                "loss_purity": 0.0}
        correct = 0
        etas = []
        n_batches = 0
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            objects = mapper.prepare(train_set.images[idx])
            labels = train_set.labels[idx]
            shifts = None
            if vaccination is not None and vaccination.active:
                shifts = vaccination.draw(rng, model.pitch)
            metrics, bundle = batch_losses_and_grads(
                engine, objects, labels, weights, shifts=shifts)
            if not np.isfinite(metrics["loss"]):
                raise TrainingDivergenceError(iteration)
            adam_step(params, bundle.latents, state, lr=lr, beta1=beta1,
                      beta2=beta2, eps=adam_eps)
            for key in sums:
                sums[key] += metrics[key]
            correct += metrics["correct"]
            etas.append(metrics["eta"])
            n_batches += 1
            iteration += 1
        etas = np.concatenate(etas)
        record = {"epoch": epoch,
                  **{k: v / n_batches for k, v in sums.items()},
                  "train_accuracy": correct / len(order),
                  "eta_mean": float(etas.mean()),
                  "eta_std": float(etas.std())}
        if test_set is not None:
            record["test_accuracy"] = evaluate(model, test_set, window=window,
                                               threshold=threshold,
                                               engine=engine)["accuracy"]
        history.append(record)
        if log:
            log(record)
    if history_path is not None:
        with open(history_path, "w") as fh:
            for record in history:
                fh.write(json.dumps(record) + "\n")
    return model, history


def collect_scores(model: DiffractiveModel, dataset: Dataset,
                   batch_size: int = 64, window: float = 10.0,
                   threshold: float | None = 0.5, shifts=None,
                   engine: ForwardEngine | None = None) -> np.ndarray:
    """Raw (N, W) detected spectra for every sample of a dataset."""
    engine = engine or ForwardEngine(model)
    mapper = default_mapper(model, window=window, threshold=threshold)
    chunks = []
    for start in range(0, len(dataset), batch_size):
        objects = mapper.prepare(dataset.images[start:start + batch_size])
        raw, _ = engine.run(objects, shifts=shifts)
        chunks.append(raw)
    return np.concatenate(chunks)


def evaluate(model: DiffractiveModel, dataset: Dataset, batch_size: int = 64,
             window: float = 10.0, threshold: float | None = 0.5, shifts=None,
             engine: ForwardEngine | None = None,
             noise_std: float = 0.0, noise_seed: int = 0) -> dict:
    """Blind classification metrics of the optical front-end.

    noise_std > 0 applies multiplicative per-wavelength power noise
    (1 + N(0, std)) to the detected spectra before scoring: the software
    analogue of experimental spectrum mismatch.
    """
    engine = engine or ForwardEngine(model)
    raw = collect_scores(model, dataset, batch_size=batch_size, window=window,
                         threshold=threshold, shifts=shifts, engine=engine)
    if noise_std > 0:
        rng = np.random.default_rng(noise_seed)
        raw = np.clip(raw * (1.0 + rng.normal(0.0, noise_std, raw.shape)), 0.0, None)
    plan = model.plan
    s, delta = aggregate_scores(raw, plan)
    decision = delta if plan.mode == "differential" else s
    predictions = np.argmax(decision, axis=-1)
    labels = dataset.labels
    confusion = np.zeros((plan.class_count, plan.class_count), dtype=np.int64)
    np.add.at(confusion, (labels, predictions), 1)
    eta = raw.mean(axis=-1) / engine.input_power
    return {
        "accuracy": float(np.mean(predictions == labels)),
        "confusion": confusion,
        "predictions": predictions,
        "raw": raw,
        "eta_mean": float(eta.mean()),
        "eta_std": float(eta.std()),
    }


def misalignment_sweep(model: DiffractiveModel, dataset: Dataset, deltas,
                       trials: int = 5, seed: int = 0, protocol: str = "middle",
                       batch_size: int = 64, window: float = 10.0,
                       threshold: float | None = 0.5) -> list[dict]:
    """Mean test accuracy under random lateral shifts, per misalignment range.

    protocol 'middle' shifts only the middle layer; 'all' shifts every layer
    independently.
    """
    if protocol not in ("middle", "all"):
        raise GridError(f"unknown sweep protocol {protocol!r}")
    n_layers = len(model.layers)
    engine = ForwardEngine(model)
    rows = []
    for delta in deltas:
        rng = np.random.default_rng(seed)
        if protocol == "middle":
            plan = VaccinationPlan.uniform(delta, n_layers, layers=[n_layers // 2])
        else:
            plan = VaccinationPlan.uniform(delta, n_layers)
        accs = []
        for _ in range(trials):
            shifts = plan.draw(rng, model.pitch) if delta > 0 else None
            res = evaluate(model, dataset, batch_size=batch_size, window=window,
                           threshold=threshold, shifts=shifts, engine=engine)
            accs.append(res["accuracy"])
        rows.append({"delta": float(delta),
                     "accuracy_mean": float(np.mean(accs)),
                     "accuracy_std": float(np.std(accs))})
    return rows
