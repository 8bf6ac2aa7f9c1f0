"""Complex scalar wave fields on uniform 2-D grids, apertures and power bookkeeping.

All lengths are in millimetres. A field is a complex amplitude sampled on an
(Ny, Nx) grid with a single pitch shared by both axes; its grid is centred on
the optical axis, so pixel centres sit at ``(i - (N - 1) / 2) * pitch``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridError, PropagationError


def grid_coords(n: int, pitch: float) -> np.ndarray:
    """Pixel-centre coordinates of an n-sample axis centred on zero."""
    return (np.arange(n) - (n - 1) / 2.0) * pitch


@dataclass(frozen=True)
class Wavefield:
    """Monochromatic complex field sample.

    values : complex (Ny, Nx) amplitude grid
    pitch : grid spacing in mm
    wavelength : vacuum wavelength in mm
    """

    values: np.ndarray
    pitch: float
    wavelength: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        if values.ndim != 2 or values.shape[0] < 2 or values.shape[1] < 2:
            raise GridError(f"field grid must be at least 2x2, got {values.shape}")
        if not self.pitch > 0:
            raise GridError(f"pitch must be positive, got {self.pitch}")
        if not self.wavelength > 0:
            raise GridError(f"wavelength must be positive, got {self.wavelength}")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def replace_values(self, values: np.ndarray) -> "Wavefield":
        return Wavefield(values, self.pitch, self.wavelength)


@dataclass(frozen=True)
class ApertureMask:
    """Real transmission mask in [0, 1] with an optional centre offset."""

    transmission: np.ndarray
    pitch: float
    offset: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        t = np.asarray(self.transmission, dtype=np.float64)
        if t.ndim != 2:
            raise GridError(f"aperture mask must be 2-D, got shape {t.shape}")
        if np.any(t < 0) or np.any(t > 1):
            raise GridError("aperture transmission must lie in [0, 1]")
        t = t.copy()
        t.setflags(write=False)
        object.__setattr__(self, "transmission", t)


def square_aperture(shape: tuple[int, int], pitch: float, width: float,
                    offset: tuple[float, float] = (0.0, 0.0)) -> ApertureMask:
    """Open square of the given side length (mm), opaque elsewhere.

    A pixel is open when its centre falls inside the square; the boundary is
    inclusive up to a small tolerance so metric widths that are integer
    multiples of the pitch select the expected pixel count.
    """
    ny, nx = shape
    ox, oy = offset
    x = grid_coords(nx, pitch) - ox
    y = grid_coords(ny, pitch) - oy
    tol = 1e-9 * max(pitch, 1.0)
    inside = (np.abs(y)[:, None] <= width / 2 + tol) & (np.abs(x)[None, :] <= width / 2 + tol)
    return ApertureMask(inside.astype(np.float64), pitch, offset)


def apply_aperture(field: Wavefield, mask: ApertureMask) -> Wavefield:
    """Pointwise amplitude multiplication by the mask transmission."""
    if mask.transmission.shape != field.shape:
        raise GridError(
            f"mask shape {mask.transmission.shape} does not match field {field.shape}")
    return field.replace_values(field.values * mask.transmission)


def total_power(field: Wavefield) -> float:
    """Sum of |u|^2 times the pixel area."""
    return float(np.sum(np.abs(field.values) ** 2) * field.pitch ** 2)


def inner_product(a: Wavefield, b: Wavefield) -> complex:
    """Discrete inner product sum(a * conj(b)) * pitch^2."""
    if a.shape != b.shape:
        raise GridError(f"field shapes differ: {a.shape} vs {b.shape}")
    return complex(np.sum(a.values * np.conj(b.values)) * a.pitch ** 2)


def require_finite(values: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(values)):
        raise PropagationError(f"non-finite field values in {where}")
