"""Joint optimization of the diffractive front-end and an electronic back-end.

Minimizes ``xi * L_I(s) + (1 - xi) * L_back`` each step, where L_back is the
back-end's own objective (structural reconstruction loss or electronic
cross-entropy). Gradients reach both parameter sets: the decoder through its
own backprop, the diffractive latents through the optical adjoint of both loss
paths (the back-end consumes the normalized scores, which depend on the
latents).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .decoder import (DecoderMlp, ReconLossConfig, _backward, _forward_cache,
                      classifier_accuracy, loss_structural, mlp_forward)
from .errors import GridError, TrainingDivergenceError
from .gradients import backward
from .losses import inference_loss_batch, normalized_scores
from .model import DiffractiveModel, ForwardEngine, aggregate_scores
from .optim import AdamState, adam_step
from .training import default_mapper, evaluate


@dataclass(frozen=True)
class JointConfig:
    """Relative weight xi of the optical classification loss and the choice of
    electronic back-end."""

    xi: float = 0.5
    back_end: str = "classifier"
    recon: ReconLossConfig | None = None

    def __post_init__(self):
        if not 0.0 <= self.xi <= 1.0:
            raise GridError("xi must lie in [0, 1]")
        if self.back_end not in ("classifier", "reconstructor"):
            raise GridError(f"unknown back-end {self.back_end!r}")


def joint_train(model: DiffractiveModel, net: DecoderMlp, dataset: Dataset,
                cfg: JointConfig | None = None, epochs: int = 10,
                batch_size: int = 32, seed: int = 0, lr_model: float = 1e-3,
                lr_net: float = 1e-3, temperature: float = 0.1,
                window: float = 10.0, threshold: float | None = 0.5,
                log=None):
    """Simultaneous Adam training of latents and decoder weights.

    Returns (model, net, history); both are updated in place.
    """
    cfg = cfg or JointConfig()
    if net.input_dim != model.plan.class_count:
        raise GridError("decoder input width does not match the plan")
    expect_head = "classification" if cfg.back_end == "classifier" else "reconstruction"
    if net.head != expect_head:
        raise GridError(f"back-end {cfg.back_end!r} needs a {expect_head} head")

    engine = ForwardEngine(model)
    mapper = default_mapper(model, window=window, threshold=threshold)
    h, w = dataset.images.shape[1:]
    truth = None
    if cfg.back_end == "reconstructor":
        if net.output_dim != h * w:
            raise GridError("reconstruction output does not match the image size")
        thr = threshold if threshold is not None else 0.5
        truth = (dataset.images > thr).astype(np.float64).reshape(len(dataset), -1)

    model_params = model.latents()
    model_state = AdamState.for_params(model_params)
    net_params = net.params()
    net_state = AdamState.for_params(net_params)
    rng = np.random.default_rng(seed)
    history = []
    iteration = 0
    recon_cfg = cfg.recon or ReconLossConfig(gamma=1.0)
    for epoch in range(epochs):
        order = rng.permutation(len(dataset))
        sums = {"loss": 0.0, "loss_optical": 0.0, "loss_backend": 0.0}
        correct_opt = 0
        correct_el = 0
        n_batches = 0
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            b = len(idx)
            labels = dataset.labels[idx]
            objects = mapper.prepare(dataset.images[idx])
            raw, tape = engine.run(objects, with_tape=True)

            li, grad_li_raw = inference_loss_batch(raw, labels, model.plan,
                                                   temperature)
            tilde, vjp = normalized_scores(raw, model.plan)
            out, cache = _forward_cache(net, tilde)

            if cfg.back_end == "classifier":
                z = out - out.max(axis=1, keepdims=True)
                p = np.exp(z)
                p /= p.sum(axis=1, keepdims=True)
                rows = np.arange(b)
                lb = float(-np.log(np.maximum(p[rows, labels], 1e-300)).mean())
                onehot = np.zeros_like(p)
                onehot[rows, labels] = 1.0
                grad_out = (p - onehot) / b
                correct_el += int(np.sum(np.argmax(out, axis=1) == labels))
            else:
                lb, grad_out = loss_structural(out, truth[idx], recon_cfg,
                                               with_grad=True)

            net_grads, grad_tilde = _backward(net, cache, (1.0 - cfg.xi) * grad_out)
            grad_raw = cfg.xi * grad_li_raw / b + vjp(grad_tilde)
            bundle = backward(engine, tape, grad_raw)

            loss = cfg.xi * float(li.mean()) + (1.0 - cfg.xi) * lb
            if not np.isfinite(loss):
                raise TrainingDivergenceError(iteration)
            adam_step(model_params, bundle.latents, model_state, lr=lr_model)
            if cfg.xi < 1.0:
                adam_step(net_params, net_grads, net_state, lr=lr_net)

            s, delta = aggregate_scores(raw, model.plan)
            decision = delta if model.plan.mode == "differential" else s
            correct_opt += int(np.sum(np.argmax(decision, axis=-1) == labels))
            sums["loss"] += loss
            sums["loss_optical"] += float(li.mean())
            sums["loss_backend"] += lb
            n_batches += 1
            iteration += 1
        record = {"epoch": epoch,
                  **{k: v / n_batches for k, v in sums.items()},
                  "optical_train_accuracy": correct_opt / len(order)}
        if cfg.back_end == "classifier":
            record["electronic_train_accuracy"] = correct_el / len(order)
        history.append(record)
        if log:
            log(record)
    return model, net, history


def evaluate_joint(model: DiffractiveModel, net: DecoderMlp, dataset: Dataset,
                   batch_size: int = 64, window: float = 10.0,
                   threshold: float | None = 0.5) -> dict:
    """Optical accuracy, electronic accuracy or reconstruction MAE, and eta."""
    res = evaluate(model, dataset, batch_size=batch_size, window=window,
                   threshold=threshold)
    tilde, _ = normalized_scores(res["raw"], model.plan)
    out = {"optical_accuracy": res["accuracy"],
           "eta_mean": res["eta_mean"], "eta_std": res["eta_std"],
           "confusion": res["confusion"]}
    if net.head == "classification":
        out["electronic_accuracy"] = classifier_accuracy(net, tilde, dataset.labels)
    else:
        recon = mlp_forward(net, tilde)
        thr = threshold if threshold is not None else 0.5
        truth = (dataset.images > thr).astype(np.float64).reshape(len(dataset), -1)
        out["reconstruction_mae"] = float(np.abs(recon - truth).mean())
    return out
