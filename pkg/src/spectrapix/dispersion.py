"""Tabulated material dispersion n(lambda), kappa(lambda) with linear interpolation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, DispersionRangeError


@dataclass(frozen=True)
class DispersionModel:
    """Refractive index and extinction coefficient sampled on a wavelength grid.

    Wavelengths are strictly increasing (mm); n >= 1 and kappa >= 0 everywhere.
    Lookups outside the tabulated range raise rather than extrapolate.
    """

    wavelengths: np.ndarray
    n: np.ndarray
    kappa: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.wavelengths, dtype=np.float64)
        n = np.asarray(self.n, dtype=np.float64)
        kappa = np.asarray(self.kappa, dtype=np.float64)
        if not (lam.ndim == n.ndim == kappa.ndim == 1) or not (len(lam) == len(n) == len(kappa)):
            raise DataFormatError("dispersion table columns must be 1-D and equally long")
        if len(lam) < 2:
            raise DataFormatError("dispersion table needs at least two samples")
        if np.any(np.diff(lam) <= 0):
            raise DataFormatError("dispersion wavelengths must be strictly increasing")
        if np.any(n < 1):
            raise DataFormatError("refractive index must be >= 1")
        if np.any(kappa < 0):
            raise DataFormatError("extinction coefficient must be >= 0")
        for name, arr in (("wavelengths", lam), ("n", n), ("kappa", kappa)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def lookup(self, wavelength: float) -> tuple[float, float]:
        """Linearly interpolated (n, kappa) at one in-range wavelength."""
        lam = float(wavelength)
        if lam < self.wavelengths[0] or lam > self.wavelengths[-1]:
            raise DispersionRangeError(
                f"wavelength {lam} mm outside table range "
                f"[{self.wavelengths[0]}, {self.wavelengths[-1]}] mm")
        return (float(np.interp(lam, self.wavelengths, self.n)),
                float(np.interp(lam, self.wavelengths, self.kappa)))

    @classmethod
    def from_file(cls, path) -> "DispersionModel":
        """Read a plain-text table: one 'lambda n kappa' triple per line, '#' comments."""
        rows = []
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                body = line.split("#", 1)[0].strip()
                if not body:
                    continue
                parts = body.split()
                if len(parts) != 3:
                    raise DataFormatError(f"{path}:{lineno}: expected 'lambda n kappa'")
                try:
                    rows.append([float(p) for p in parts])
                except ValueError as exc:
                    raise DataFormatError(f"{path}:{lineno}: {exc}") from exc
        if not rows:
            raise DataFormatError(f"{path}: empty dispersion table")
        arr = np.asarray(rows, dtype=np.float64)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2])

    def to_file(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("# lambda_mm n kappa\n")
            for lam, n, k in zip(self.wavelengths, self.n, self.kappa):
                fh.write(f"{float(lam)!r} {float(n)!r} {float(k)!r}\n")


def default_polymer(lambda_min: float = 1.0, lambda_lo: float = 0.9,
                    lambda_hi: float = 1.6, samples: int = 29) -> DispersionModel:
    """Bundled stand-in for the printing polymer: constant n = 1.7,
    kappa = 0.01 * (lambda / lambda_min)."""
    lam = np.linspace(lambda_lo, lambda_hi, samples)
    n = np.full_like(lam, 1.7)
    kappa = 0.01 * (lam / lambda_min)
    return DispersionModel(lam, n, kappa)


def lossless_constant(n: float = 1.7, lambda_lo: float = 0.5,
                      lambda_hi: float = 2.0) -> DispersionModel:
    """Two-knot constant table with kappa = 0, handy for tests."""
    lam = np.array([lambda_lo, lambda_hi])
    return DispersionModel(lam, np.full(2, n), np.zeros(2))
