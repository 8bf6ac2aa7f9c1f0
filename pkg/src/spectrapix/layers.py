"""Learnable diffractive layers parameterized by per-pixel material thickness.

The physical thickness of every pixel is ``h = h_base + h_range * sigmoid(v)``
with an unconstrained latent value v, which keeps h strictly inside
``(h_base, h_base + h_range)`` without constrained optimization. Transmission
through a pixel of thickness h at wavelength lambda is

    t = exp(i 2 pi (n - 1) h / lambda) * exp(-2 pi kappa h / lambda)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .dispersion import DispersionModel
from .errors import GridError
from .fields import Wavefield


@dataclass
class ThicknessMap:
    """One diffractive layer: a latent grid plus the thickness window."""

    latent: np.ndarray
    h_base: float = 0.2
    h_range: float = 1.0
    pitch: float = 0.5

    def __post_init__(self):
        self.latent = np.asarray(self.latent, dtype=np.float64)
        if self.latent.ndim != 2:
            raise GridError(f"latent grid must be 2-D, got shape {self.latent.shape}")
        if self.h_base < 0 or self.h_range <= 0:
            raise GridError("need h_base >= 0 and h_range > 0")

    @property
    def shape(self) -> tuple[int, int]:
        return self.latent.shape

    def thickness(self) -> np.ndarray:
        return self.h_base + self.h_range * expit(self.latent)

    def dthickness_dlatent(self) -> np.ndarray:
        s = expit(self.latent)
        return self.h_range * s * (1.0 - s)


def transmission_factors(wavelength: float, n: float, kappa: float) -> complex:
    """Per-unit-thickness complex exponent c with t = exp(c * h)."""
    return (1j * 2.0 * np.pi * (n - 1.0) - 2.0 * np.pi * kappa) / wavelength


def transmission(thickness: np.ndarray, wavelength: float, n: float,
                 kappa: float) -> np.ndarray:
    if np.any(thickness < 0):
        raise GridError("negative material thickness")
    return np.exp(transmission_factors(wavelength, n, kappa) * thickness)


def layer_transmit(field: Wavefield, layer: ThicknessMap,
                   dispersion: DispersionModel) -> Wavefield:
    """Multiply a field by the layer's complex transmission at its wavelength."""
    if layer.shape != field.shape:
        raise GridError(f"layer grid {layer.shape} does not match field {field.shape}")
    n, kappa = dispersion.lookup(field.wavelength)
    t = transmission(layer.thickness(), field.wavelength, n, kappa)
    return field.replace_values(field.values * t)


def shift2d(values: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Integer-pixel translation with zero fill (no wrap-around).

    Positive dy/dx move content toward larger row/column indices. Raises if the
    shift pushes the grid entirely off its own extent.
    """
    ny, nx = values.shape[-2:]
    if abs(dy) >= ny or abs(dx) >= nx:
        raise GridError(f"shift ({dy}, {dx}) pushes a {ny}x{nx} grid fully off-grid")
    out = np.zeros_like(values)
    ys = slice(max(dy, 0), ny + min(dy, 0))
    xs = slice(max(dx, 0), nx + min(dx, 0))
    ys_src = slice(max(-dy, 0), ny + min(-dy, 0))
    xs_src = slice(max(-dx, 0), nx + min(-dx, 0))
    out[..., ys, xs] = values[..., ys_src, xs_src]
    return out
