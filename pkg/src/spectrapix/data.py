"""Dataset ingestion: IDX parsing, object preparation and a synthetic fallback.

The IDX container is the big-endian binary format used by the MNIST/EMNIST
distributions (magic 0x00000803 for image tensors, 0x00000801 for label
vectors). EMNIST-letters images are stored transposed relative to MNIST and
use labels 1..26; loading with ``variant='emnist-letters'`` corrects both.

When no real dataset is available, :func:`make_synthetic_digits` renders a
deterministic handwritten-style stand-in (font glyphs under random affine
distortion) that exercises the same pipeline end to end.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, GridError

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


def read_idx(path) -> np.ndarray:
    """Parse one IDX file into a uint8 array (labels 1-D, images 3-D)."""
    with open(path, "rb") as fh:
        head = fh.read(4)
        if len(head) != 4:
            raise DataFormatError(f"{path}: truncated header")
        magic = struct.unpack(">I", head)[0]
        if magic == IMAGE_MAGIC:
            ndim = 3
        elif magic == LABEL_MAGIC:
            ndim = 1
        else:
            raise DataFormatError(f"{path}: bad IDX magic 0x{magic:08x}")
        dims = []
        for _ in range(ndim):
            raw = fh.read(4)
            if len(raw) != 4:
                raise DataFormatError(f"{path}: truncated dimension header")
            dims.append(struct.unpack(">I", raw)[0])
        count = int(np.prod(dims))
        payload = fh.read(count)
        if len(payload) != count:
            raise DataFormatError(
                f"{path}: truncated payload ({len(payload)} of {count} bytes)")
        if fh.read(1):
            raise DataFormatError(f"{path}: trailing bytes after payload")
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def write_idx(path, array: np.ndarray) -> None:
    """Write a uint8 array as an IDX file (1-D labels or 3-D images)."""
    array = np.asarray(array, dtype=np.uint8)
    if array.ndim == 1:
        magic = LABEL_MAGIC
    elif array.ndim == 3:
        magic = IMAGE_MAGIC
    else:
        raise DataFormatError("IDX writer supports 1-D labels or 3-D images")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">I", magic))
        for d in array.shape:
            fh.write(struct.pack(">I", d))
        fh.write(array.tobytes())


def load_idx(path) -> np.ndarray:
    """Spec-facing loader: images come back as float64 scaled to [0, 1],
    labels as int64."""
    arr = read_idx(path)
    if arr.ndim == 3:
        return arr.astype(np.float64) / 255.0
    return arr.astype(np.int64)


@dataclass
class Dataset:
    """Raw image/label pairs prior to optical-grid preparation."""

    images: np.ndarray   # (N, h, w) float in [0, 1]
    labels: np.ndarray   # (N,) int

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise DataFormatError(
                f"{len(self.images)} images vs {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.images)

    def subset(self, indices) -> "Dataset":
        return Dataset(self.images[indices], self.labels[indices])

    def take(self, n: int) -> "Dataset":
        return self.subset(slice(0, n))


def load_dataset(images_path, labels_path, variant: str = "mnist") -> Dataset:
    """Load an IDX image/label pair, fixing EMNIST orientation and labels."""
    images = load_idx(images_path)
    labels = load_idx(labels_path)
    if images.ndim != 3:
        raise DataFormatError(f"{images_path}: expected an image tensor")
    if labels.ndim != 1:
        raise DataFormatError(f"{labels_path}: expected a label vector")
    if len(images) != len(labels):
        raise DataFormatError(
            f"image/label count mismatch: {len(images)} vs {len(labels)}")
    if variant == "emnist-letters":
        # raw EMNIST stores transposed glyphs with labels 1..26
        images = np.transpose(images, (0, 2, 1)).copy()
        labels = labels - 1
        if np.any(labels < 0):
            raise DataFormatError("EMNIST-letters labels must start at 1")
    elif variant != "mnist":
        raise DataFormatError(f"unknown dataset variant {variant!r}")
    return Dataset(images.astype(np.float32), labels)


class ObjectMapper:
    """Nearest-neighbour resampling of source images into the centred input
    window of the optical grid, with the exact adjoint for gradient feedback.

    threshold=None keeps grayscale amplitudes (used when reconstructed images
    are cycled back into the network); a float binarizes at that level.
    """

    def __init__(self, grid_shape: tuple[int, int], pitch: float,
                 window: float = 10.0, image_shape: tuple[int, int] = (28, 28),
                 threshold: float | None = 0.5):
        self.grid_shape = tuple(grid_shape)
        self.image_shape = tuple(image_shape)
        self.threshold = threshold
        wp_y = int(round(window / pitch))
        wp_x = wp_y
        ny, nx = grid_shape
        if wp_y > ny or wp_x > nx:
            raise GridError("input window does not fit on the optical grid")
        self.window_px = (wp_y, wp_x)
        self.y0 = (ny - wp_y) // 2
        self.x0 = (nx - wp_x) // 2
        h, w = image_shape
        self.src_y = np.minimum((np.arange(wp_y) + 0.5) * h / wp_y, h - 1).astype(int)
        self.src_x = np.minimum((np.arange(wp_x) + 0.5) * w / wp_x, w - 1).astype(int)

    def prepare(self, images: np.ndarray) -> np.ndarray:
        """(B, h, w) images -> (B, Ny, Nx) object amplitudes in [0, 1]."""
        images = np.asarray(images, dtype=np.float64)
        single = images.ndim == 2
        if single:
            images = images[None]
        if images.shape[1:] != self.image_shape:
            raise GridError(f"expected {self.image_shape} images, got {images.shape[1:]}")
        if self.threshold is not None:
            images = (images > self.threshold).astype(np.float64)
        else:
            images = np.clip(images, 0.0, 1.0)
        b = images.shape[0]
        wp_y, wp_x = self.window_px
        out = np.zeros((b,) + self.grid_shape, dtype=np.float64)
        patch = images[:, self.src_y][:, :, self.src_x]
        out[:, self.y0:self.y0 + wp_y, self.x0:self.x0 + wp_x] = patch
        return out[0] if single else out

    def adjoint(self, grad_objects: np.ndarray) -> np.ndarray:
        """Pull an object-amplitude gradient back onto the source pixels.

        Only meaningful for grayscale preparation (threshold=None), where
        prepare() is linear in the image.
        """
        wp_y, wp_x = self.window_px
        h, w = self.image_shape
        sub = grad_objects[:, self.y0:self.y0 + wp_y, self.x0:self.x0 + wp_x]
        tmp = np.zeros((grad_objects.shape[0], h, wp_x))
        np.add.at(tmp, (slice(None), self.src_y), sub)
        out = np.zeros((grad_objects.shape[0], h, w))
        np.add.at(out.transpose(0, 2, 1), (slice(None), self.src_x),
                  tmp.transpose(0, 2, 1))
        return out


_GLYPH_CACHE: dict[tuple[str, int], np.ndarray] = {}


def _glyph(char: str, size: int = 24) -> np.ndarray:
    """Render one character to a float image in [0, 1] via PIL."""
    key = (char, size)
    if key not in _GLYPH_CACHE:
        from PIL import Image, ImageDraw, ImageFont

        font = None
        try:
            import matplotlib
            import os
            ttf = os.path.join(matplotlib.get_data_path(), "fonts", "ttf",
                               "DejaVuSans.ttf")
            font = ImageFont.truetype(ttf, size)
        except Exception:
            font = ImageFont.load_default()
        img = Image.new("L", (40, 40), 0)
        draw = ImageDraw.Draw(img)
        draw.text((20, 20), char, fill=255, font=font, anchor="mm")
        arr = np.asarray(img, dtype=np.float64) / 255.0
        ys, xs = np.nonzero(arr > 0.05)
        if len(ys) == 0:
            raise DataFormatError(f"could not render glyph {char!r}")
        arr = arr[ys.min():ys.max() + 1, xs.min():xs.max() + 1]
        _GLYPH_CACHE[key] = arr
    return _GLYPH_CACHE[key]


def _distorted(glyph: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Random affine distortion of a glyph onto a 28x28 canvas."""
    from scipy import ndimage

    canvas = np.zeros((28, 28))
    gh, gw = glyph.shape
    scale = 20.0 / max(gh, gw)
    y0 = (28 - int(gh * scale)) // 2
    x0 = (28 - int(gw * scale)) // 2
    resized = ndimage.zoom(glyph, scale, order=1, prefilter=False)
    rh, rw = resized.shape
    canvas[y0:y0 + rh, x0:x0 + rw] = resized

    angle = rng.uniform(-0.25, 0.25)
    shear = rng.uniform(-0.18, 0.18)
    s = rng.uniform(0.85, 1.15)
    cos, sin = np.cos(angle), np.sin(angle)
    mat = np.array([[cos, -sin], [sin, cos]]) @ np.array([[1.0, shear], [0.0, 1.0]]) / s
    centre = np.array([13.5, 13.5])
    offset = centre - mat @ centre + rng.uniform(-2.0, 2.0, size=2)
    out = ndimage.affine_transform(canvas, mat, offset=offset, order=1, cval=0.0)
    return np.clip(out, 0.0, 1.0)


def make_synthetic_digits(n: int, seed: int = 0, classes: int = 10,
                          alphabet: str = "0123456789") -> Dataset:
    """Deterministic handwritten-style dataset in MNIST geometry.

    classes beyond the alphabet length wrap letters in (used for the 26-class
    capital-letter analogue with ``alphabet=string.ascii_uppercase``).
    """
    if classes > len(alphabet):
        raise DataFormatError("alphabet shorter than the requested class count")
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, classes, size=n)
    images = np.zeros((n, 28, 28), dtype=np.float32)
    for i, lab in enumerate(labels):
        images[i] = _distorted(_glyph(alphabet[lab]), rng)
    return Dataset(images, labels.astype(np.int64))


def write_synthetic_idx(images_path, labels_path, n: int, seed: int = 0,
                        classes: int = 10, alphabet: str = "0123456789") -> None:
    """Materialize a synthetic dataset as a standard IDX image/label pair."""
    ds = make_synthetic_digits(n, seed=seed, classes=classes, alphabet=alphabet)
    write_idx(images_path, np.round(ds.images * 255.0).astype(np.uint8))
    write_idx(labels_path, ds.labels.astype(np.uint8))
