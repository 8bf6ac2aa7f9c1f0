"""Composite training loss: inference, detector efficiency and spatial purity.

The total loss is ``L = L_I + alpha * L_E + beta * L_P`` where

* L_I is softmax-cross-entropy over temperature-scaled normalized class scores
  (normalized by total detected class power, or the differential scores),
* L_E = -ln(eta + eps) with eta the diffractive power efficiency at the
  detector,
* L_P is the fraction of output-plane power falling in a guard annulus around
  the detector, averaged over the plan wavelengths.

Batched helpers return both values and gradients with respect to the raw
per-wavelength detected powers (or adjoint fields for the purity term), which
the training engine feeds into the optical adjoint sweep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateScoreError, GridError
from .fields import Wavefield
from .model import (DetectorGeometry, SpectralScores, WavelengthPlan,
                    aggregate_scores)

EFFICIENCY_EPS = 1e-12


@dataclass(frozen=True)
class LossWeights:
    """Relative weights of the efficiency and purity terms, plus the softmax
    temperature applied to the normalized scores."""

    alpha: float = 0.0
    beta: float = 0.0
    temperature: float = 0.1

    def __post_init__(self):
        if not np.isfinite(self.alpha) or self.alpha < 0:
            raise GridError("alpha must be finite and >= 0")
        if not np.isfinite(self.beta) or self.beta < 0:
            raise GridError("beta must be finite and >= 0")
        if not self.temperature > 0:
            raise GridError("temperature must be positive")


def normalized_scores(raw: np.ndarray, plan: WavelengthPlan):
    """Normalized decision statistic s~ for (..., W) raw powers.

    Plain/band modes divide the class scores by the total detected class
    power; differential mode uses the bounded differential scores directly.
    Returns (s~, vjp) where vjp maps dL/ds~ back to dL/draw.
    """
    raw = np.asarray(raw, dtype=np.float64)
    s, delta = aggregate_scores(raw, plan)
    m = plan.wavelengths_per_class

    if plan.mode == "differential":
        sp = raw[..., 0::2]
        sm = raw[..., 1::2]
        tot = sp + sm

        def vjp(g):
            graw = np.zeros_like(raw)
            with np.errstate(divide="ignore", invalid="ignore"):
                dp = np.where(tot > 0, 2.0 * sm / tot ** 2, 0.0)
                dq = np.where(tot > 0, -2.0 * sp / tot ** 2, 0.0)
            graw[..., 0::2] = g * dp
            graw[..., 1::2] = g * dq
            return graw

        return delta, vjp

    total = s.sum(axis=-1, keepdims=True)
    if np.any(total <= 0):
        raise DegenerateScoreError("zero total detected power; cannot normalize scores")
    tilde = s / total

    def vjp(g):
        gs = (g - np.sum(g * tilde, axis=-1, keepdims=True)) / total
        if plan.mode == "plain":
            return gs
        return np.repeat(gs / m, m, axis=-1)

    return tilde, vjp


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def inference_loss_batch(raw: np.ndarray, labels: np.ndarray, plan: WavelengthPlan,
                         temperature: float = 0.1):
    """Per-sample cross-entropy and dL/draw for (B, W) raw powers."""
    labels = np.asarray(labels)
    tilde, vjp = normalized_scores(raw, plan)
    p = _softmax(tilde / temperature)
    idx = np.arange(len(labels))
    losses = -np.log(np.maximum(p[idx, labels], 1e-300))
    onehot = np.zeros_like(p)
    onehot[idx, labels] = 1.0
    grad_tilde = (p - onehot) / temperature
    return losses, vjp(grad_tilde)


def efficiency_batch(raw: np.ndarray, input_power: float):
    """Per-sample efficiency eta, loss -ln(eta + eps) and dL_E/draw."""
    if input_power <= 0:
        raise GridError("zero input power")
    w = raw.shape[-1]
    eta = raw.mean(axis=-1) / input_power
    losses = -np.log(eta + EFFICIENCY_EPS)
    grad = np.broadcast_to(
        (-1.0 / (eta + EFFICIENCY_EPS) / (w * input_power))[..., None], raw.shape)
    return eta, losses, grad.copy()


def purity_batch(u_out: np.ndarray, det_mask: np.ndarray, guard_mask: np.ndarray,
                 pitch: float, weights: np.ndarray | None = None):
    """Per-sample purity loss and (optionally weighted) output-plane adjoint.

    u_out : (B, W, Ny, Nx) output fields; weights : (B,) scaling applied to the
    returned conjugate-gradient contribution (e.g. beta / batch).
    """
    intensity = np.abs(u_out) ** 2 * pitch ** 2
    guard = np.sum(intensity * guard_mask, axis=(-2, -1))
    total = intensity.sum(axis=(-2, -1))
    w = u_out.shape[-3]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(total > 0, guard / total, 0.0)
    losses = ratio.mean(axis=-1)
    if weights is None:
        return losses, None
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(total > 0, 1.0 / total, 0.0) / w
        b = np.where(total > 0, ratio / np.where(total > 0, total, 1.0), 0.0) / w
    adj = (a[..., None, None] * guard_mask - b[..., None, None]) * u_out * pitch ** 2
    adj *= np.asarray(weights)[:, None, None, None]
    return losses, adj


def loss_inference(scores: SpectralScores, label: int, plan: WavelengthPlan,
                   temperature: float = 0.1) -> float:
    """Cross-entropy of the softmax over normalized class scores."""
    losses, _ = inference_loss_batch(scores.raw[None], np.array([label]), plan,
                                     temperature)
    return float(losses[0])


def loss_efficiency(eta: float) -> float:
    """Negative-log detector efficiency, decreasing in eta."""
    return float(-np.log(eta + EFFICIENCY_EPS))


def loss_purity(output_fields: list[Wavefield], det: DetectorGeometry) -> float:
    """Guard-annulus power fraction averaged over the given output fields."""
    if not output_fields:
        raise GridError("need at least one output field")
    pitch = output_fields[0].pitch
    shape = output_fields[0].shape
    det_mask = det.pixel_mask(shape, pitch)
    guard_mask = det.guard_mask(shape, pitch)
    u = np.stack([f.values for f in output_fields])[None]
    losses, _ = purity_batch(u, det_mask, guard_mask, pitch)
    return float(losses[0])


def total_loss(l_inference: float, l_efficiency: float, l_purity: float,
               weights: LossWeights) -> float:
    """Linear combination L_I + alpha * L_E + beta * L_P."""
    return float(l_inference + weights.alpha * l_efficiency + weights.beta * l_purity)
