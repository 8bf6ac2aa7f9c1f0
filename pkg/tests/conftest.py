"""Shared fixtures and independent numerical oracles for the test suite.

The oracles here are deliberately slow, loop-based implementations (direct
Rayleigh-Sommerfeld summation, naive per-wavelength forward chains, central
finite differences) used to validate the vectorized FFT/adjoint code paths.
"""

import numpy as np
import pytest

from spectrapix.dispersion import DispersionModel
from spectrapix.fields import grid_coords
from spectrapix.model import WavelengthPlan, build_model


def rs_direct(u0, pitch, lam, z):
    """Direct O(N^4) summation of the first Rayleigh-Sommerfeld integral."""
    ny, nx = u0.shape
    k = 2 * np.pi / lam
    xs = grid_coords(nx, pitch)
    ys = grid_coords(ny, pitch)
    X, Y = np.meshgrid(xs, ys)
    out = np.zeros((ny, nx), dtype=complex)
    for i, yo in enumerate(ys):
        for j, xo in enumerate(xs):
            dx = X - xo
            dy = Y - yo
            rho = np.sqrt(dx ** 2 + dy ** 2 + z ** 2)
            kern = (z / (2 * np.pi)) * np.exp(1j * k * rho) / rho ** 2 * (1 / rho - 1j * k)
            out[i, j] = np.sum(u0 * kern) * pitch ** 2
    return out


def bandlimited_field(n, pitch, lam, seed=0, cutoff_fraction=0.5, sigma=2.0):
    """Random field whose spectrum stays well inside the propagating circle,
    apodized so it is localized within the grid window."""
    rng = np.random.default_rng(seed)
    spec = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    f = np.fft.fftfreq(n, pitch)
    fx, fy = np.meshgrid(f, f)
    spec[np.sqrt(fx ** 2 + fy ** 2) > cutoff_fraction / (2 * lam)] = 0.0
    u = np.fft.ifft2(spec)
    x = grid_coords(n, pitch)
    xg, yg = np.meshgrid(x, x)
    u = u * np.exp(-(xg ** 2 + yg ** 2) / (2 * sigma ** 2))
    return u / np.max(np.abs(u))


def asm_naive(u0, pitch, lam, z, pad_factor=2):
    """Independent angular-spectrum implementation: explicit padding, numpy
    fft, scalar loop-free but structured differently from the library path."""
    ny, nx = u0.shape
    if z == 0:
        return u0.copy()
    py, px = pad_factor * ny, pad_factor * nx
    big = np.zeros((py, px), dtype=complex)
    y0, x0 = (py - ny) // 2, (px - nx) // 2
    big[y0:y0 + ny, x0:x0 + nx] = u0
    fy = np.fft.fftfreq(py, pitch)
    fx = np.fft.fftfreq(px, pitch)
    arg = 1.0 / lam ** 2 - fy[:, None] ** 2 - fx[None, :] ** 2
    h = np.where(arg > 0, np.exp(1j * 2 * np.pi * z * np.sqrt(np.maximum(arg, 0.0))), 0.0)
    out = np.fft.ifft2(np.fft.fft2(big) * h)
    return out[y0:y0 + ny, x0:x0 + nx]


def chain_naive(model, obj_amplitude, shifts=None):
    """Per-wavelength loop re-implementation of the full forward chain.

    Returns the (W,) raw detected powers for one object, computed without the
    vectorized engine (different code path, same mathematics).
    """
    plan = model.plan
    pitch = model.pitch
    shape = model.grid_shape
    raws = []
    from spectrapix.layers import transmission
    from spectrapix.model import SI_SLAB_INDEX, SI_SLAB_THICKNESS

    det_mask = model.detector.pixel_mask(shape, pitch)
    for lam in plan.wavelengths:
        n, kappa = model.dispersion.lookup(lam)
        u = model.input_aperture.transmission.astype(complex)
        u = asm_naive(u, pitch, lam, model.spacings[0])
        u = u * obj_amplitude
        u = asm_naive(u, pitch, lam, model.spacings[1])
        for idx, lay in enumerate(model.layers):
            t = transmission(lay.thickness(), lam, n, kappa)
            if shifts is not None:
                dy, dx = shifts[idx]
                rolled = np.zeros_like(t)
                ys = slice(max(dy, 0), shape[0] + min(dy, 0))
                xs = slice(max(dx, 0), shape[1] + min(dx, 0))
                ys_s = slice(max(-dy, 0), shape[0] + min(-dy, 0))
                xs_s = slice(max(-dx, 0), shape[1] + min(-dx, 0))
                rolled[ys, xs] = t[ys_s, xs_s]
                t = rolled
            u = asm_naive(u * t, pitch, lam, model.spacings[2 + idx])
        if model.output_aperture is not None:
            u = u * model.output_aperture.transmission
        if model.si_slab:
            u = u * np.exp(1j * 2 * np.pi * (SI_SLAB_INDEX - 1.0) * SI_SLAB_THICKNESS / lam)
        raws.append(np.sum(np.abs(u) ** 2 * det_mask) * pitch ** 2)
    return np.array(raws)


def central_difference(fun, arrays, step=1e-5):
    """Entry-wise central finite differences of a scalar function."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        while not it.finished:
            ix = it.multi_index
            old = arr[ix]
            arr[ix] = old + step
            up = fun()
            arr[ix] = old - step
            dn = fun()
            arr[ix] = old
            g[ix] = (up - dn) / (2 * step)
            it.iternext()
        grads.append(g)
    return grads


def toy_plan(mode="plain", class_count=3, per_class=1):
    return WavelengthPlan.uniform(class_count, per_class, mode,
                                  lambda_min=1.0, lambda_max=1.4)


def toy_model(seed=0, features=8, mode="plain", class_count=3, per_class=1,
              n_layers=3, kappa_free=False, **kwargs):
    """Small random model for gradient and oracle tests."""
    plan = toy_plan(mode, class_count, per_class)
    dispersion = None
    if kappa_free:
        lam = np.array([0.5, 2.0])
        dispersion = DispersionModel(lam, np.full(2, 1.7), np.zeros(2))
    return build_model(features=features, n_layers=n_layers, plan=plan,
                       dispersion=dispersion, aperture_to_object=2.0,
                       plane_spacing=4.0, seed=seed, **kwargs)


def toy_objects(rng, batch, shape):
    return (rng.random((batch,) + shape) > 0.6).astype(np.float64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
