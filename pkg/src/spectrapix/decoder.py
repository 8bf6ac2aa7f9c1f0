"""Shallow electronic back-ends for the spectral codes.

Two heads share one 2-hidden-layer fully connected architecture:

* reconstruction: normalized class scores -> sigmoid image in [0, 1]
  (task-specific decompression, 10 numbers to hundreds of pixels),
* classification: normalized class scores -> class logits.

The reconstruction decoder can be trained with a coupled loss
``gamma * L_S + (1 - gamma) * L_I(s')`` where s' is obtained by feeding the
reconstruction back through the (frozen) diffractive network; gradients flow
through the optical chain into the decoder weights only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, ObjectMapper
from .errors import GridError, TrainingDivergenceError
from .gradients import backward
from .losses import inference_loss_batch, normalized_scores
from .model import (DiffractiveModel, ForwardEngine, SpectralScores,
                    aggregate_scores, scores_from_raw)
from .optim import AdamState, adam_step


@dataclass
class DecoderMlp:
    """Fully connected net with two hidden ReLU layers.

    head 'reconstruction' applies a sigmoid to the output, 'classification'
    emits raw logits.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    head: str = "reconstruction"

    def __post_init__(self):
        if len(self.weights) != 3 or len(self.biases) != 3:
            raise GridError("decoder uses exactly two hidden layers")
        for w, b in zip(self.weights, self.biases):
            if w.shape[1] != b.shape[0]:
                raise GridError("weight/bias shapes inconsistent")
        for a, b in zip(self.weights[:-1], self.weights[1:]):
            if a.shape[1] != b.shape[0]:
                raise GridError("layer widths inconsistent")
        if self.head not in ("reconstruction", "classification"):
            raise GridError(f"unknown decoder head {self.head!r}")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    def params(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]


def create_mlp(input_dim: int, output_dim: int, head: str,
               hidden: tuple[int, int] = (256, 256), seed: int = 0) -> DecoderMlp:
    rng = np.random.default_rng(seed)
    dims = [input_dim, *hidden, output_dim]
    weights = [rng.normal(0.0, np.sqrt(2.0 / dims[i]), size=(dims[i], dims[i + 1]))
               for i in range(3)]
    biases = [np.zeros(dims[i + 1]) for i in range(3)]
    return DecoderMlp(weights, biases, head)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(x, -500, 500)))


def mlp_forward(net: DecoderMlp, x: np.ndarray) -> np.ndarray:
    """affine -> ReLU -> affine -> ReLU -> affine (-> sigmoid for the
    reconstruction head)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None]
    if x.shape[1] != net.input_dim:
        raise GridError(f"input width {x.shape[1]} != decoder input {net.input_dim}")
    out, _ = _forward_cache(net, x)
    return out[0] if single else out


def _forward_cache(net: DecoderMlp, x: np.ndarray):
    w1, w2, w3 = net.weights
    b1, b2, b3 = net.biases
    a1 = np.maximum(x @ w1 + b1, 0.0)
    a2 = np.maximum(a1 @ w2 + b2, 0.0)
    z3 = a2 @ w3 + b3
    out = _sigmoid(z3) if net.head == "reconstruction" else z3
    return out, (x, a1, a2, out)


def _backward(net: DecoderMlp, cache, grad_out: np.ndarray):
    """Parameter gradients plus the gradient w.r.t. the network input.

    grad_out is taken w.r.t. the network output (post-sigmoid for the
    reconstruction head).
    """
    x, a1, a2, out = cache
    if net.head == "reconstruction":
        dz3 = grad_out * out * (1.0 - out)
    else:
        dz3 = grad_out
    w1, w2, w3 = net.weights
    gw3 = a2.T @ dz3
    gb3 = dz3.sum(axis=0)
    da2 = dz3 @ w3.T
    da2[a2 <= 0] = 0.0
    gw2 = a1.T @ da2
    gb2 = da2.sum(axis=0)
    da1 = da2 @ w2.T
    da1[a1 <= 0] = 0.0
    gw1 = x.T @ da1
    gb1 = da1.sum(axis=0)
    grad_in = da1 @ w1.T
    return [gw1, gw2, gw3, gb1, gb2, gb3], grad_in


@dataclass(frozen=True)
class ReconLossConfig:
    """Coupled reconstruction loss: gamma * L_S + (1 - gamma) * L_I(s').

    structural is 'mae' or 'berhu'; the BerHu threshold is
    ``berhu_fraction * max |error|`` over the batch.
    """

    gamma: float = 0.95
    structural: str = "mae"
    berhu_fraction: float = 0.2

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise GridError("gamma must lie in [0, 1]")
        if self.structural not in ("mae", "berhu"):
            raise GridError(f"unknown structural loss {self.structural!r}")


def loss_structural(recon: np.ndarray, truth: np.ndarray,
                    cfg: ReconLossConfig | None = None,
                    with_grad: bool = False):
    """Pixel-wise MAE or reversed-Huber (BerHu) loss, averaged over all pixels.

    BerHu is |e| below the threshold c and (e^2 + c^2) / (2 c) above it, with
    c adapted to the batch as ``berhu_fraction * max |e|``.
    """
    cfg = cfg or ReconLossConfig()
    recon = np.asarray(recon, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if recon.shape != truth.shape:
        raise GridError(f"shape mismatch {recon.shape} vs {truth.shape}")
    err = recon - truth
    n = err.size
    if cfg.structural == "mae":
        value = float(np.abs(err).mean())
        if not with_grad:
            return value
        return value, np.sign(err) / n
    c = cfg.berhu_fraction * float(np.abs(err).max())
    if c == 0.0:
        value = 0.0
        return (value, np.zeros_like(err)) if with_grad else value
    absb = np.abs(err)
    vals = np.where(absb <= c, absb, (err ** 2 + c ** 2) / (2.0 * c))
    value = float(vals.mean())
    if not with_grad:
        return value
    grad = np.where(absb <= c, np.sign(err), err / c) / n
    return value, grad


def train_classifier(net: DecoderMlp, scores: np.ndarray, labels: np.ndarray,
                     epochs: int = 50, batch_size: int = 64, lr: float = 1e-3,
                     seed: int = 0):
    """Softmax-cross-entropy training of the classification head on the
    normalized spectral scores of a frozen diffractive model."""
    if net.head != "classification":
        raise GridError("train_classifier needs a classification head")
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    params = net.params()
    state = AdamState.for_params(params)
    rng = np.random.default_rng(seed)
    history = []
    for epoch in range(epochs):
        order = rng.permutation(len(scores))
        total, correct = 0.0, 0
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            logits, cache = _forward_cache(net, scores[idx])
            z = logits - logits.max(axis=1, keepdims=True)
            p = np.exp(z)
            p /= p.sum(axis=1, keepdims=True)
            rows = np.arange(len(idx))
            total += float(-np.log(np.maximum(p[rows, labels[idx]], 1e-300)).sum())
            correct += int(np.sum(np.argmax(logits, axis=1) == labels[idx]))
            onehot = np.zeros_like(p)
            onehot[rows, labels[idx]] = 1.0
            grads, _ = _backward(net, cache, (p - onehot) / len(idx))
            adam_step(params, grads, state, lr=lr)
        history.append({"epoch": epoch, "loss": total / len(order),
                        "train_accuracy": correct / len(order)})
    return net, history


def classifier_accuracy(net: DecoderMlp, scores: np.ndarray,
                        labels: np.ndarray) -> float:
    logits = mlp_forward(net, scores)
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def _check_pairing(net: DecoderMlp, model: DiffractiveModel) -> None:
    if net.input_dim != model.plan.class_count:
        raise GridError(
            f"decoder input width {net.input_dim} != plan class count "
            f"{model.plan.class_count}")


def train_reconstructor(net: DecoderMlp, model: DiffractiveModel,
                        dataset: Dataset, cfg: ReconLossConfig | None = None,
                        epochs: int = 50, batch_size: int = 64, lr: float = 1e-3,
                        seed: int = 0, window: float = 10.0,
                        threshold: float = 0.5):
    """Train the reconstruction decoder against a frozen diffractive model.

    The structural term compares reconstructions with the binarized input
    images; with gamma < 1 the coupling term re-runs each reconstruction
    through the frozen optics and penalizes misclassification of the new
    scores s'. Only the decoder weights are updated.
    """
    if net.head != "reconstruction":
        raise GridError("train_reconstructor needs a reconstruction head")
    _check_pairing(net, model)
    cfg = cfg or ReconLossConfig()
    from .training import collect_scores  # local import to avoid a cycle

    raw = collect_scores(model, dataset, window=window, threshold=threshold)
    tilde, _ = normalized_scores(raw, model.plan)
    h, w = dataset.images.shape[1:]
    if net.output_dim != h * w:
        raise GridError(f"decoder output {net.output_dim} != image size {h * w}")
    truth = (dataset.images > threshold).astype(np.float64).reshape(len(dataset), -1)
    labels = dataset.labels

    engine = ForwardEngine(model) if cfg.gamma < 1.0 else None
    gray_mapper = ObjectMapper(model.grid_shape, model.pitch, window=window,
                               image_shape=(h, w), threshold=None) \
        if cfg.gamma < 1.0 else None

    params = net.params()
    state = AdamState.for_params(params)
    rng = np.random.default_rng(seed)
    history = []
    iteration = 0
    for epoch in range(epochs):
        order = rng.permutation(len(dataset))
        sums = {"loss": 0.0, "loss_structural": 0.0, "loss_coupled": 0.0}
        n_batches = 0
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            recon, cache = _forward_cache(net, tilde[idx])
            ls, grad_s = loss_structural(recon, truth[idx], cfg, with_grad=True)
            grad_recon = cfg.gamma * grad_s
            li_mean = 0.0
            if cfg.gamma < 1.0:
                b = len(idx)
                objects = gray_mapper.prepare(recon.reshape(b, h, w))
                _, tape = engine.run(objects, with_tape=True)
                li, grad_raw = inference_loss_batch(
                    tape.raw, labels[idx], model.plan)
                li_mean = float(li.mean())
                bundle = backward(engine, tape, grad_raw / b,
                                  want_object_grad=True)
                grad_recon = grad_recon + (1.0 - cfg.gamma) * \
                    gray_mapper.adjoint(bundle.objects).reshape(b, -1)
            loss = cfg.gamma * ls + (1.0 - cfg.gamma) * li_mean
            if not np.isfinite(loss):
                raise TrainingDivergenceError(iteration)
            grads, _ = _backward(net, cache, grad_recon)
            adam_step(params, grads, state, lr=lr)
            sums["loss"] += loss
            sums["loss_structural"] += ls
            sums["loss_coupled"] += li_mean
            n_batches += 1
            iteration += 1
        history.append({"epoch": epoch,
                        **{k: v / n_batches for k, v in sums.items()}})
    return net, history


def feedback_classify(net: DecoderMlp, model: DiffractiveModel,
                      scores: SpectralScores, window: float = 10.0,
                      image_shape: tuple[int, int] = (28, 28)):
    """Reconstruct, re-inject as a grayscale object and classify max(s').

    Returns (class index, reconstructed image, new scores s')."""
    _check_pairing(net, model)
    tilde, _ = normalized_scores(scores.raw[None], model.plan)
    recon = mlp_forward(net, tilde[0]).reshape(image_shape)
    mapper = ObjectMapper(model.grid_shape, model.pitch, window=window,
                          image_shape=image_shape, threshold=None)
    engine = ForwardEngine(model)
    raw2, _ = engine.run(mapper.prepare(recon)[None])
    s_prime = scores_from_raw(raw2[0], model.plan)
    return int(np.argmax(s_prime.decision())), recon, s_prime


def feedback_evaluate(net: DecoderMlp, model: DiffractiveModel, dataset: Dataset,
                      batch_size: int = 64, window: float = 10.0,
                      threshold: float = 0.5) -> dict:
    """Batched feedback loop over a dataset with gain accounting.

    N_C counts initially-wrong samples corrected by the feedback pass, N_L
    initially-right samples lost; feedback accuracy - optical accuracy equals
    (N_C - N_L) / N exactly.
    """
    _check_pairing(net, model)
    from .training import collect_scores

    raw = collect_scores(model, dataset, batch_size=batch_size, window=window,
                         threshold=threshold)
    plan = model.plan
    s, delta = aggregate_scores(raw, plan)
    initial = np.argmax(delta if plan.mode == "differential" else s, axis=-1)

    tilde, _ = normalized_scores(raw, plan)
    h, w = dataset.images.shape[1:]
    engine = ForwardEngine(model)
    mapper = ObjectMapper(model.grid_shape, model.pitch, window=window,
                          image_shape=(h, w), threshold=None)
    fb_chunks = []
    for start in range(0, len(dataset), batch_size):
        recon = mlp_forward(net, tilde[start:start + batch_size])
        objects = mapper.prepare(recon.reshape(-1, h, w))
        raw2, _ = engine.run(objects)
        fb_chunks.append(raw2)
    raw2 = np.concatenate(fb_chunks)
    s2, delta2 = aggregate_scores(raw2, plan)
    feedback = np.argmax(delta2 if plan.mode == "differential" else s2, axis=-1)

    labels = dataset.labels
    init_right = initial == labels
    fb_right = feedback == labels
    n_corrected = int(np.sum(~init_right & fb_right))
    n_lost = int(np.sum(init_right & ~fb_right))
    c = plan.class_count
    confusion = np.zeros((c, c), dtype=np.int64)
    np.add.at(confusion, (labels, feedback), 1)
    return {
        "optical_accuracy": float(init_right.mean()),
        "feedback_accuracy": float(fb_right.mean()),
        "n_corrected": n_corrected,
        "n_lost": n_lost,
        "initial_predictions": initial,
        "feedback_predictions": feedback,
        "feedback_confusion": confusion,
        "raw_feedback": raw2,
    }
