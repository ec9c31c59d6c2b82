"""Image decoding, resampling and the discrete Radon transform.

Everything here is a pure function over immutable values; callers may
fan work out across images freely.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError

SUPPORTED_SIDES = (16, 32, 64)

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


class ImageDecodeError(ValueError):
    """Raised when image bytes cannot be decoded."""


class ConfigurationError(ValueError):
    """Raised for unsupported sizes or projection counts."""


class ContractViolation(ValueError):
    """Raised when operands do not share a configuration."""


def _frozen(values: np.ndarray) -> np.ndarray:
    values = np.array(values, dtype=np.float64, copy=True)
    values.setflags(write=False)
    return values


@dataclass(frozen=True, eq=False)
class GrayImage:
    pixels: np.ndarray

    def __post_init__(self):
        pixels = _frozen(self.pixels)
        if pixels.ndim != 2 or pixels.shape[0] < 1 or pixels.shape[1] < 1:
            raise ValueError(f"expected a non-empty 2-D pixel grid, got shape {pixels.shape}")
        if not np.all((pixels >= 0.0) & (pixels <= 1.0)):
            raise ValueError("intensities must lie in [0, 1]")
        object.__setattr__(self, "pixels", pixels)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True, eq=False)
class NormalizedImage:
    """Square intensity grid; ``normalize_image`` only emits supported sides,
    but the transform itself accepts any square grid."""

    pixels: np.ndarray

    def __post_init__(self):
        pixels = _frozen(self.pixels)
        if pixels.ndim != 2 or pixels.shape[0] != pixels.shape[1] or pixels.shape[0] < 1:
            raise ValueError(f"expected a square pixel grid, got shape {pixels.shape}")
        if not np.all((pixels >= 0.0) & (pixels <= 1.0)):
            raise ValueError("intensities must lie in [0, 1]")
        object.__setattr__(self, "pixels", pixels)

    @property
    def side(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class RadonConfig:
    projections: int
    side: int
    angles: tuple[float, ...] = field(init=False, repr=False)

    def __post_init__(self):
        if self.projections < 1:
            raise ConfigurationError(f"need at least one projection angle, got {self.projections}")
        if self.side < 1:
            raise ConfigurationError(f"side must be positive, got {self.side}")
        angles = tuple(j * 180.0 / self.projections for j in range(self.projections))
        object.__setattr__(self, "angles", angles)

    @property
    def n_bits(self) -> int:
        return self.projections * self.side


@dataclass(frozen=True, eq=False)
class RadonFeatures:
    config: RadonConfig
    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        values = _frozen(self.values)
        expected = (self.config.projections, self.config.side)
        if values.shape != expected:
            raise ValueError(f"feature matrix must be {expected}, got {values.shape}")
        if np.any(values < 0):
            raise ValueError("projection values must be non-negative")
        object.__setattr__(self, "values", values)

    def flatten(self) -> np.ndarray:
        """Row-major feature vector of length n_p * N (the SVM input)."""
        return self.values.reshape(-1)

    def __eq__(self, other):
        if not isinstance(other, RadonFeatures):
            return NotImplemented
        return (self.config == other.config and self.normalized == other.normalized
                and np.array_equal(self.values, other.values))


def to_grayscale(raw: bytes) -> GrayImage:
    """Decode PNG/BMP/PGM bytes into intensities in [0, 1].

    Colour images are reduced with fixed luma weights rather than the
    decoder's own conversion, so results do not depend on the Pillow build.
    """
    try:
        with Image.open(io.BytesIO(raw)) as im:
            im.load()
            mode = im.mode
            if mode == "P":
                im = im.convert("RGBA" if "transparency" in im.info else "RGB")
                mode = im.mode
            arr = np.asarray(im)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise ImageDecodeError(f"cannot decode image: {exc}") from exc

    if mode == "1":
        return GrayImage(arr.astype(np.float64))
    if mode in ("I;16", "I;16B", "I;16L", "I"):
        scale = 65535.0 if arr.max(initial=0) > 255 or mode.startswith("I;16") else 255.0
        return GrayImage(np.clip(arr.astype(np.float64) / scale, 0.0, 1.0))
    if mode == "F":
        return GrayImage(np.clip(arr.astype(np.float64), 0.0, 1.0))

    arr = arr.astype(np.float64) / 255.0
    if arr.ndim == 2:
        return GrayImage(arr)
    if mode == "LA":
        return GrayImage(arr[..., 0])
    if arr.shape[-1] >= 3:
        r, g, b = arr[..., 0], arr[..., 1], arr[..., 2]
        gray = LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b
        return GrayImage(np.clip(gray, 0.0, 1.0))
    raise ImageDecodeError(f"unsupported image mode {mode!r}")


def load_image(path) -> GrayImage:
    with open(path, "rb") as fh:
        return to_grayscale(fh.read())


def _area_weights(n_in: int, n_out: int) -> np.ndarray:
    # Output cell i covers [i*s, (i+1)*s) in input units, s = n_in / n_out.
    scale = n_in / n_out
    weights = np.zeros((n_out, n_in))
    for i in range(n_out):
        lo, hi = i * scale, (i + 1) * scale
        for p in range(int(math.floor(lo)), min(int(math.ceil(hi)), n_in)):
            overlap = min(hi, p + 1) - max(lo, p)
            if overlap > 0:
                weights[i, p] = overlap / scale
    return weights


def _bilinear_weights(n_in: int, n_out: int) -> np.ndarray:
    # Pixel-centre aligned sampling, edges clamped.
    weights = np.zeros((n_out, n_in))
    for i in range(n_out):
        src = (i + 0.5) * n_in / n_out - 0.5
        src = min(max(src, 0.0), n_in - 1.0)
        p0 = int(math.floor(src))
        p1 = min(p0 + 1, n_in - 1)
        t = src - p0
        weights[i, p0] += 1.0 - t
        weights[i, p1] += t
    return weights


def _axis_weights(n_in: int, n_out: int) -> np.ndarray:
    if n_in == n_out:
        return np.eye(n_in)
    if n_out < n_in:
        return _area_weights(n_in, n_out)
    return _bilinear_weights(n_in, n_out)


def resample(pixels: np.ndarray, height: int, width: int) -> np.ndarray:
    """Separable resize: area averaging on shrinking axes, bilinear on growing ones."""
    pixels = np.asarray(pixels, dtype=np.float64)
    if pixels.shape == (height, width):
        return pixels.copy()
    rows = _axis_weights(pixels.shape[0], height)
    cols = _axis_weights(pixels.shape[1], width)
    return np.clip(rows @ pixels @ cols.T, 0.0, 1.0)


def normalize_image(img: GrayImage, side: int) -> NormalizedImage:
    if side not in SUPPORTED_SIDES:
        raise ConfigurationError(f"unsupported normalized size {side}; choose one of {SUPPORTED_SIDES}")
    return NormalizedImage(resample(img.pixels, side, side))


def _direction(theta_deg: float) -> tuple[float, float]:
    rad = math.radians(theta_deg)
    c, s = math.cos(rad), math.sin(rad)
    # Exact zeros at multiples of 90 degrees keep axis-aligned projections symmetric.
    if abs(c) < 1e-12:
        c = 0.0
    if abs(s) < 1e-12:
        s = 0.0
    return c, s


def pixel_coordinates(side: int) -> tuple[np.ndarray, np.ndarray]:
    """Pixel-centre coordinates relative to the image centre, x to the right
    and y upwards, flattened in row-major pixel order."""
    half = (side - 1) / 2.0
    idx = np.arange(side, dtype=np.float64)
    x = np.tile(idx - half, side)
    y = np.repeat(half - idx, side)
    return x, y


def offset_bins(rho: np.ndarray, side: int) -> np.ndarray:
    """Nearest-bin index for offsets on an N-bin axis spanning +-N*sqrt(2)/2."""
    half_span = side * math.sqrt(2.0) / 2.0
    width = 2.0 * half_span / side
    bins = np.floor((rho + half_span) / width).astype(np.int64)
    return np.clip(bins, 0, side - 1)


def radon_transform(img: NormalizedImage, cfg: RadonConfig) -> RadonFeatures:
    if img.side != cfg.side:
        raise ContractViolation(f"image side {img.side} does not match config side {cfg.side}")
    n = cfg.side
    x, y = pixel_coordinates(n)
    mass = img.pixels.reshape(-1)
    values = np.empty((cfg.projections, n))
    for j, theta in enumerate(cfg.angles):
        c, s = _direction(theta)
        bins = offset_bins(x * c + y * s, n)
        values[j] = np.bincount(bins, weights=mass, minlength=n)
    return RadonFeatures(cfg, values, normalized=False)


def normalize_features(f: RadonFeatures) -> RadonFeatures:
    """Scale by the matrix's own maximum so entries fall in [0, 1]."""
    if f.normalized:
        return f
    peak = f.values.max()
    if peak <= 0.0:
        return RadonFeatures(f.config, f.values, normalized=True)
    return RadonFeatures(f.config, f.values / peak, normalized=True)


def extract_features(img: GrayImage, cfg: RadonConfig) -> RadonFeatures:
    """Normalize, transform and rescale one decoded image."""
    return normalize_features(radon_transform(normalize_image(img, cfg.side), cfg))
