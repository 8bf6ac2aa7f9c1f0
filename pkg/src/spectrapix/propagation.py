"""Band-limited angular-spectrum free-space propagation.

The transfer function is ``H(fx, fy) = exp(i 2 pi d sqrt(1/lambda^2 - fx^2 - fy^2))``
with evanescent components (``fx^2 + fy^2 >= 1/lambda^2``) set to zero. Fields
are zero-padded (2x per axis by default) before the transform to suppress
wrap-around, then cropped back to the original window. Negative distances give
the exact adjoint of the corresponding forward propagation.
"""

from __future__ import annotations

import numpy as np
import scipy.fft as sfft

from .errors import GridError
from .fields import Wavefield, require_finite


def transfer_function(shape: tuple[int, int], pitch: float, wavelength: float,
                      distance: float) -> np.ndarray:
    """Angular-spectrum transfer function on an FFT-ordered frequency grid."""
    ny, nx = shape
    fy = sfft.fftfreq(ny, d=pitch)
    fx = sfft.fftfreq(nx, d=pitch)
    fsq = fy[:, None] ** 2 + fx[None, :] ** 2
    arg = 1.0 / wavelength ** 2 - fsq
    h = np.zeros(shape, dtype=np.complex128)
    prop = arg > 0
    h[prop] = np.exp(1j * 2.0 * np.pi * distance * np.sqrt(arg[prop]))
    return h


def _pad_embed(values: np.ndarray, pad_shape: tuple[int, int]) -> np.ndarray:
    ny, nx = values.shape[-2:]
    py, px = pad_shape
    out = np.zeros(values.shape[:-2] + (py, px), dtype=np.complex128)
    y0, x0 = (py - ny) // 2, (px - nx) // 2
    out[..., y0:y0 + ny, x0:x0 + nx] = values
    return out


def _crop(values: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    ny, nx = shape
    py, px = values.shape[-2:]
    y0, x0 = (py - ny) // 2, (px - nx) // 2
    return values[..., y0:y0 + ny, x0:x0 + nx]


def propagate_values(values: np.ndarray, pitch: float, wavelengths, distance: float,
                     pad_factor: int = 2) -> np.ndarray:
    """Propagate an array of fields.

    values : (..., Ny, Nx) complex when ``wavelengths`` is scalar, or
             (..., W, Ny, Nx) with one wavelength per entry of the W axis.
    """
    wavelengths = np.atleast_1d(np.asarray(wavelengths, dtype=np.float64))
    shape = values.shape[-2:]
    if distance == 0:
        return np.array(values, dtype=np.complex128, copy=True)
    pad_shape = (pad_factor * shape[0], pad_factor * shape[1])
    h = np.stack([transfer_function(pad_shape, pitch, lam, distance)
                  for lam in wavelengths])
    if wavelengths.size == 1:
        h = h[0]
    padded = _pad_embed(values, pad_shape)
    spec = sfft.fft2(padded, axes=(-2, -1))
    spec *= h
    out = sfft.ifft2(spec, axes=(-2, -1))
    return _crop(out, shape)


def propagate(field: Wavefield, distance: float, pad_factor: int = 2) -> Wavefield:
    """Band-limited ASM propagation of a single field over ``distance`` mm.

    ``distance`` may be negative (adjoint/backward propagation); zero returns
    the field unchanged.
    """
    require_finite(field.values, "propagate input")
    out = propagate_values(field.values, field.pitch, field.wavelength, distance,
                           pad_factor=pad_factor)
    return field.replace_values(out)


class Propagator:
    """Caches padded transfer functions for a fixed grid and wavelength set.

    Used by the forward engine, where the same distances are applied every
    iteration over a (batch, wavelength, Ny, Nx) stack.
    """

    def __init__(self, shape: tuple[int, int], pitch: float, wavelengths,
                 pad_factor: int = 2):
        self.shape = tuple(shape)
        self.pitch = float(pitch)
        self.wavelengths = np.asarray(wavelengths, dtype=np.float64)
        if self.wavelengths.ndim != 1:
            raise GridError("wavelengths must be a 1-D sequence")
        self.pad_shape = (pad_factor * shape[0], pad_factor * shape[1])
        self._cache: dict[float, np.ndarray] = {}

    def _h(self, distance: float) -> np.ndarray:
        key = float(distance)
        if key not in self._cache:
            self._cache[key] = np.stack(
                [transfer_function(self.pad_shape, self.pitch, lam, distance)
                 for lam in self.wavelengths])
        return self._cache[key]

    def apply(self, values: np.ndarray, distance: float) -> np.ndarray:
        """Propagate (..., W, Ny, Nx) values; W must match the wavelength set."""
        if values.shape[-3] != self.wavelengths.size:
            raise GridError("wavelength axis does not match the propagator plan")
        if distance == 0:
            return np.array(values, dtype=np.complex128, copy=True)
        padded = _pad_embed(values, self.pad_shape)
        spec = sfft.fft2(padded, axes=(-2, -1))
        spec *= self._h(distance)
        out = sfft.ifft2(spec, axes=(-2, -1))
        return _crop(out, self.shape)
