"""The trainable optical network: geometry, multi-wavelength forward pass and
single-pixel spectral readout.

The end-to-end chain, run once per wavelength of the plan, is

    plane wave -> input aperture -> propagate -> object amplitude mask
    -> propagate -> [per layer: (shifted) thickness transmission -> propagate]
    -> output aperture -> power integration over the detector square

The per-wavelength detected powers form the raw spectrum; class scores are
aggregated from it according to the plan mode (plain, differential or band).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dispersion import DispersionModel, default_polymer
from .errors import GridError
from .fields import ApertureMask, Wavefield, grid_coords, square_aperture
from .layers import ThicknessMap, shift2d, transmission, transmission_factors
from .propagation import Propagator

SI_SLAB_INDEX = 3.4
SI_SLAB_THICKNESS = 5.0  # mm


@dataclass(frozen=True)
class WavelengthPlan:
    """Class-to-wavelength assignment for the single-pixel readout.

    mode 'plain' assigns one wavelength per class, 'differential' a (+,-) pair
    per class scored as (s+ - s-)/(s+ + s-), 'band' a block of consecutive
    wavelengths per class scored by their mean power.
    """

    class_count: int
    wavelengths_per_class: int
    wavelengths: np.ndarray
    mode: str = "plain"

    def __post_init__(self):
        lam = np.asarray(self.wavelengths, dtype=np.float64)
        lam = lam.copy()
        lam.setflags(write=False)
        object.__setattr__(self, "wavelengths", lam)
        if self.mode not in ("plain", "differential", "band"):
            raise GridError(f"unknown plan mode {self.mode!r}")
        if self.mode == "plain" and self.wavelengths_per_class != 1:
            raise GridError("plain mode uses exactly one wavelength per class")
        if self.mode == "differential" and self.wavelengths_per_class != 2:
            raise GridError("differential mode uses exactly two wavelengths per class")
        if self.wavelengths_per_class < 1:
            raise GridError("wavelengths_per_class must be >= 1")
        if lam.size != self.class_count * self.wavelengths_per_class:
            raise GridError(
                f"plan has {lam.size} wavelengths, expected "
                f"{self.class_count} x {self.wavelengths_per_class}")
        if np.any(np.diff(lam) <= 0):
            raise GridError("plan wavelengths must be strictly increasing")

    @property
    def count(self) -> int:
        return int(self.wavelengths.size)

    @classmethod
    def uniform(cls, class_count: int = 10, wavelengths_per_class: int = 1,
                mode: str = "plain", lambda_min: float = 1.0,
                lambda_max: float = 1.45) -> "WavelengthPlan":
        lam = np.linspace(lambda_min, lambda_max, class_count * wavelengths_per_class)
        return cls(class_count, wavelengths_per_class, lam, mode)


@dataclass(frozen=True)
class SpectralScores:
    """Raw per-wavelength detected powers plus aggregated class scores."""

    raw: np.ndarray
    s: np.ndarray
    delta: np.ndarray | None = None
    mode: str = "plain"

    def decision(self) -> np.ndarray:
        return self.delta if self.mode == "differential" else self.s


def aggregate_scores(raw: np.ndarray, plan: WavelengthPlan):
    """(s, delta) class aggregates for (..., W) raw powers; delta is None
    outside differential mode."""
    if raw.shape[-1] != plan.count:
        raise GridError(f"raw spectrum length {raw.shape[-1]} != plan size {plan.count}")
    if plan.mode == "plain":
        return raw.copy(), None
    if plan.mode == "band":
        shape = raw.shape[:-1] + (plan.class_count, plan.wavelengths_per_class)
        return raw.reshape(shape).mean(axis=-1), None
    sp = raw[..., 0::2]
    sm = raw[..., 1::2]
    tot = sp + sm
    delta = np.zeros_like(sp)
    np.divide(sp - sm, tot, out=delta, where=tot > 0)
    return sp + sm, delta


def scores_from_raw(raw: np.ndarray, plan: WavelengthPlan) -> SpectralScores:
    s, delta = aggregate_scores(np.asarray(raw, dtype=np.float64), plan)
    return SpectralScores(np.asarray(raw, dtype=np.float64), s, delta, plan.mode)


def classify(scores: SpectralScores) -> int:
    """Argmax over the decision scores; ties break toward the lowest index."""
    return int(np.argmax(scores.decision()))


@dataclass(frozen=True)
class DetectorGeometry:
    """Square single-pixel detector plus the guard annulus used by the purity
    loss (a (width + 2 * guard_band) square minus the detector square)."""

    width: float = 2.0
    center: tuple[float, float] = (0.0, 0.0)
    guard_band: float = 2.0

    def __post_init__(self):
        if not self.width > 0:
            raise GridError("detector width must be positive")
        if self.guard_band < 0:
            raise GridError("guard band must be >= 0")

    def pixel_mask(self, shape: tuple[int, int], pitch: float) -> np.ndarray:
        """Boolean mask of pixels whose centres fall inside the detector square."""
        ny, nx = shape
        cx, cy = self.center
        x = grid_coords(nx, pitch) - cx
        y = grid_coords(ny, pitch) - cy
        tol = 1e-9 * max(pitch, 1.0)
        half = self.width / 2 + tol
        mask = (np.abs(y)[:, None] <= half) & (np.abs(x)[None, :] <= half)
        half_x = nx * pitch / 2
        half_y = ny * pitch / 2
        if abs(cx) + self.width / 2 > half_x + tol or abs(cy) + self.width / 2 > half_y + tol:
            raise GridError("detector square extends beyond the output grid")
        if not mask.any():
            raise GridError("detector square lies outside the output grid")
        return mask

    def guard_mask(self, shape: tuple[int, int], pitch: float) -> np.ndarray:
        ny, nx = shape
        cx, cy = self.center
        x = grid_coords(nx, pitch) - cx
        y = grid_coords(ny, pitch) - cy
        tol = 1e-9 * max(pitch, 1.0)
        outer = self.width / 2 + self.guard_band + tol
        big = (np.abs(y)[:, None] <= outer) & (np.abs(x)[None, :] <= outer)
        return big & ~self.pixel_mask(shape, pitch)


@dataclass(frozen=True)
class ObjectImage:
    """Real amplitude object in [0, 1] on the optical grid (binary for the
    aluminium-masked digits; grayscale for reconstruction feedback)."""

    amplitude: np.ndarray
    pitch: float

    def __post_init__(self):
        amp = np.asarray(self.amplitude, dtype=np.float64)
        if amp.ndim != 2:
            raise GridError("object amplitude must be 2-D")
        if np.any(amp < 0) or np.any(amp > 1):
            raise GridError("object amplitude must lie in [0, 1]")
        amp = amp.copy()
        amp.setflags(write=False)
        object.__setattr__(self, "amplitude", amp)


@dataclass
class DiffractiveModel:
    """Ordered stack of learnable thickness maps plus fixed geometry.

    spacings has length n_layers + 2: input aperture -> object, object ->
    first layer, between consecutive layers, last layer -> output plane.
    """

    layers: list[ThicknessMap]
    spacings: list[float]
    input_aperture: ApertureMask
    detector: DetectorGeometry
    dispersion: DispersionModel
    plan: WavelengthPlan
    pitch: float = 0.5
    output_aperture: ApertureMask | None = None
    si_slab: bool = False

    def __post_init__(self):
        if not self.layers:
            raise GridError("model needs at least one diffractive layer")
        shape = self.layers[0].shape
        for lay in self.layers:
            if lay.shape != shape:
                raise GridError("layer grids must be congruent")
        if len(self.spacings) != len(self.layers) + 2:
            raise GridError(
                f"expected {len(self.layers) + 2} spacings, got {len(self.spacings)}")
        if any(d <= 0 for d in self.spacings):
            raise GridError("spacings must be positive")
        if self.input_aperture.transmission.shape != shape:
            raise GridError("input aperture grid must match the layer grid")
        if self.output_aperture is not None and \
                self.output_aperture.transmission.shape != shape:
            raise GridError("output aperture grid must match the layer grid")

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.layers[0].shape

    def latents(self) -> list[np.ndarray]:
        return [lay.latent for lay in self.layers]


def build_model(features: int = 64, pitch: float = 0.5, n_layers: int = 3,
                plan: WavelengthPlan | None = None,
                dispersion: DispersionModel | None = None,
                aperture_width: float = 10.0,
                aperture_to_object: float = 3.0, plane_spacing: float = 30.0,
                detector: DetectorGeometry | None = None,
                h_base: float = 0.2, h_range: float = 1.0,
                latent_init_std: float = 1.0, seed: int = 0,
                output_aperture_width: float | None = None,
                si_slab: bool = False) -> DiffractiveModel:
    """Construct a model with default desk-scale geometry and random latents."""
    plan = plan or WavelengthPlan.uniform()
    dispersion = dispersion or default_polymer()
    detector = detector or DetectorGeometry()
    shape = (features, features)
    rng = np.random.default_rng(seed)
    layers = [ThicknessMap(rng.normal(0.0, latent_init_std, size=shape),
                           h_base=h_base, h_range=h_range, pitch=pitch)
              for _ in range(n_layers)]
    spacings = [aperture_to_object] + [plane_spacing] * (n_layers + 1)
    out_ap = None
    if output_aperture_width is not None:
        out_ap = square_aperture(shape, pitch, output_aperture_width)
    return DiffractiveModel(
        layers=layers,
        spacings=spacings,
        input_aperture=square_aperture(shape, pitch, aperture_width),
        detector=detector,
        dispersion=dispersion,
        plan=plan,
        pitch=pitch,
        output_aperture=out_ap,
        si_slab=si_slab,
    )


class ForwardTape:
    """Intermediate fields recorded by a forward pass, consumed by the
    adjoint sweep in :mod:`spectrapix.gradients`."""

    def __init__(self):
        self.objects = None          # (B, Ny, Nx) real
        self.u_object_in = None      # (1, W, Ny, Nx) field arriving at the object
        self.u_layer_in = []         # per layer (B, W, Ny, Nx) field before multiply
        self.u_out = None            # (B, W, Ny, Nx) field at the output plane
        self.t_shifted = []          # per layer (W, Ny, Nx) shifted transmission
        self.t_factors = None        # (W,) per-unit-thickness exponents
        self.shifts = []             # per layer (dy, dx) pixels
        self.output_gain = None      # (W, Ny, Nx) output aperture x slab phase
        self.raw = None              # (B, W) detected powers


class ForwardEngine:
    """Vectorized multi-wavelength forward pass bound to one model.

    Caches transfer functions, masks and the (object-independent) illumination
    field at the object plane. Results are identical to running the chain one
    wavelength at a time in plan order.
    """

    def __init__(self, model: DiffractiveModel, pad_factor: int = 2):
        self.model = model
        shape = model.grid_shape
        lam = model.plan.wavelengths
        self.propagator = Propagator(shape, model.pitch, lam, pad_factor=pad_factor)
        self.nk = np.array([model.dispersion.lookup(l) for l in lam])
        self.t_factors = np.array([transmission_factors(l, n, k)
                                   for l, (n, k) in zip(lam, self.nk)])
        self.det_mask = model.detector.pixel_mask(shape, model.pitch)
        self.guard_mask = model.detector.guard_mask(shape, model.pitch)
        ap = model.input_aperture.transmission.astype(np.complex128)
        # plane wave of unit amplitude through the entrance pupil, then to the
        # object plane; identical for every sample and wavelength count of one
        u0 = np.broadcast_to(ap, (1, lam.size) + shape)
        self.u_object_in = self.propagator.apply(u0, model.spacings[0])
        self.input_power = float(np.sum(ap.real ** 2) * model.pitch ** 2)
        gain = np.ones((lam.size,) + shape, dtype=np.complex128)
        if model.output_aperture is not None:
            gain *= model.output_aperture.transmission
        if model.si_slab:
            phase = 2.0 * np.pi * (SI_SLAB_INDEX - 1.0) * SI_SLAB_THICKNESS / lam
            gain *= np.exp(1j * phase)[:, None, None]
        self.output_gain = gain

    def layer_transmissions(self, shifts=None) -> list[np.ndarray]:
        """Per-layer (W, Ny, Nx) complex transmissions, laterally shifted."""
        model = self.model
        out = []
        for idx, lay in enumerate(model.layers):
            t = np.exp(self.t_factors[:, None, None] * lay.thickness()[None])
            if shifts is not None:
                dy, dx = shifts[idx]
                if dy or dx:
                    t = shift2d(t, int(dy), int(dx))
            out.append(t)
        return out

    def run(self, objects: np.ndarray, shifts=None, with_tape: bool = False):
        """Detected powers for a batch of objects.

        objects : (B, Ny, Nx) real amplitudes in [0, 1]
        shifts : optional per-layer integer-pixel (dy, dx) lateral offsets
        returns (raw, tape): raw is (B, W); tape is None unless requested.
        """
        model = self.model
        objects = np.asarray(objects, dtype=np.float64)
        if objects.ndim != 3 or objects.shape[-2:] != model.grid_shape:
            raise GridError(
                f"objects must be (B, {model.grid_shape[0]}, {model.grid_shape[1]})")
        if shifts is not None and len(shifts) != len(model.layers):
            raise GridError("one (dy, dx) shift per layer is required")
        tape = ForwardTape() if with_tape else None
        t_layers = self.layer_transmissions(shifts)

        u = self.u_object_in * objects[:, None]
        u = self.propagator.apply(u, model.spacings[1])
        for idx, t in enumerate(t_layers):
            if with_tape:
                tape.u_layer_in.append(u)
            u = self.propagator.apply(u * t, model.spacings[2 + idx])
        u = u * self.output_gain
        raw = np.sum(np.abs(u) ** 2 * self.det_mask, axis=(-2, -1)) * model.pitch ** 2

        if with_tape:
            tape.objects = objects
            tape.u_object_in = self.u_object_in
            tape.u_out = u
            tape.t_shifted = t_layers
            tape.t_factors = self.t_factors
            tape.shifts = [(int(s[0]), int(s[1])) for s in shifts] if shifts is not None \
                else [(0, 0)] * len(model.layers)
            tape.output_gain = self.output_gain
            tape.raw = raw
        return raw, tape


def forward(model: DiffractiveModel, obj: ObjectImage, shifts=None) -> SpectralScores:
    """Single-object forward pass returning the spectral class scores."""
    if obj.amplitude.shape != model.grid_shape:
        raise GridError("object grid must match the model grid")
    engine = ForwardEngine(model)
    raw, _ = engine.run(obj.amplitude[None], shifts=shifts)
    return scores_from_raw(raw[0], model.plan)


def detector_integrate(field: Wavefield, det: DetectorGeometry) -> float:
    """Power inside the (offset) detector square."""
    mask = det.pixel_mask(field.shape, field.pitch)
    return float(np.sum(np.abs(field.values) ** 2 * mask) * field.pitch ** 2)


def power_efficiency(model: DiffractiveModel, obj: ObjectImage) -> float:
    """Mean over plan wavelengths of detected power / power entering the
    input aperture."""
    engine = ForwardEngine(model)
    if engine.input_power <= 0:
        raise GridError("no power enters the input aperture")
    raw, _ = engine.run(obj.amplitude[None])
    return float(np.mean(raw[0]) / engine.input_power)
