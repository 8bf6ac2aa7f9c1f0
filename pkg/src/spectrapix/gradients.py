"""Reverse-mode gradients through the optical chain.

The sweep carries the conjugate Wirtinger gradient g = dL/d(conj(u)) backward
through the recorded forward pass. The adjoint of band-limited angular-spectrum
propagation over d is propagation over -d (same padding and evanescent cut);
the adjoint of a pointwise multiplication by t is multiplication by conj(t).
For a real parameter theta entering through t, dL/dtheta = 2 Re(conj(g) * u_in
* dt/dtheta) accumulated pointwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PropagationError
from .layers import shift2d
from .model import ForwardEngine, ForwardTape


@dataclass
class GradientBundle:
    """Per-layer latent gradients, plus the object-amplitude gradient when
    requested (needed by the decoder's coupled loss)."""

    latents: list[np.ndarray]
    objects: np.ndarray | None = None


def detector_adjoint(tape: ForwardTape, grad_raw: np.ndarray,
                     pitch: float, det_mask: np.ndarray) -> np.ndarray:
    """Seed adjoint at the output plane from dL/d(raw powers)."""
    return grad_raw[..., None, None] * det_mask * tape.u_out * pitch ** 2


def backward(engine: ForwardEngine, tape: ForwardTape, grad_raw: np.ndarray,
             grad_u_out: np.ndarray | None = None,
             want_object_grad: bool = False) -> GradientBundle:
    """Adjoint sweep over a taped forward pass.

    grad_raw : (B, W) dL/d(raw detected powers); may be zero when the loss
        acts on the output fields directly.
    grad_u_out : optional extra conjugate-gradient contribution at the output
        plane (used by the purity loss).
    """
    model = engine.model
    pitch = model.pitch
    g = detector_adjoint(tape, np.asarray(grad_raw, dtype=np.float64),
                         pitch, engine.det_mask)
    if grad_u_out is not None:
        g = g + grad_u_out
    g = g * np.conj(tape.output_gain)

    n_layers = len(model.layers)
    latent_grads = []
    for idx in range(n_layers - 1, -1, -1):
        g = engine.propagator.apply(g, -model.spacings[2 + idx])
        u_in = tape.u_layer_in[idx]
        t = tape.t_shifted[idx]
        # dt/dh = t * c_lambda, with t and dh/dv evaluated at the unshifted pixel
        m = 2.0 * np.real(np.conj(g) * u_in * (t * tape.t_factors[:, None, None]))
        m = m.sum(axis=(0, 1))
        dy, dx = tape.shifts[idx]
        if dy or dx:
            m = shift2d(m, -dy, -dx)
        latent_grads.append(m * model.layers[idx].dthickness_dlatent())
        g = g * np.conj(t)
        if not np.all(np.isfinite(g)):
            raise PropagationError(f"non-finite adjoint after layer {idx}")
    latent_grads.reverse()

    obj_grad = None
    if want_object_grad:
        g = engine.propagator.apply(g, -model.spacings[1])
        obj_grad = 2.0 * np.real(np.conj(g) * tape.u_object_in).sum(axis=1)
    return GradientBundle(latent_grads, obj_grad)
