"""Decoding, color conversion, resampling, convolution, and order statistics.

Every detector consumes the primitives in this module. All functions are
pure; pixel data is 8-bit on the way in and out, but luma values stay
real-valued until something explicitly quantizes them.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from .errors import DecodeError, EmptyPlane, TooSmall

# Grayscale conversion variants. HSP is the default; the others exist so the
# light/dark pipeline can be rerun under alternative luma definitions.
HSP = "HSP"
BT709 = "BT709"
BT601 = "BT601"
BT601_RMS = "BT601_RMS"
CHANNEL_MEAN = "CHANNEL_MEAN"

LUMA_FORMULAS = (HSP, BT709, BT601, BT601_RMS, CHANNEL_MEAN)
DEFAULT_LUMA = HSP

RGB = "RGB"
LUMA = "LUMA"

NEAREST = "NEAREST"
BILINEAR = "BILINEAR"

# 4-neighbor Laplacian stencil used by the blur metric.
_LAPLACIAN_KERNEL = np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]], dtype=np.float64)


@dataclass
class ImageRecord:
    """Decoded raster: uint8 samples, shape (h, w) for Luma or (h, w, 3) for RGB."""

    id: str
    pixels: np.ndarray
    source_path: str = ""

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels)
        if self.pixels.dtype != np.uint8:
            raise ValueError(f"{self.id}: pixels must be uint8, got {self.pixels.dtype}")
        if self.pixels.ndim == 3 and self.pixels.shape[2] != 3:
            raise ValueError(f"{self.id}: RGB pixels must have 3 channels")
        if self.pixels.ndim not in (2, 3):
            raise ValueError(f"{self.id}: pixels must be 2-D (luma) or 3-D (rgb)")
        if self.pixels.shape[0] < 1 or self.pixels.shape[1] < 1:
            raise ValueError(f"{self.id}: empty image")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def mode(self) -> str:
        return RGB if self.pixels.ndim == 3 else LUMA

    @property
    def channels(self) -> int:
        return 3 if self.pixels.ndim == 3 else 1


@dataclass
class BrightnessStats:
    """Normalized-luma percentiles (rank -> value in [0,1]) plus the mean."""

    percentiles: dict[int, float] = field(default_factory=dict)
    mean: float = 0.0


def decode_image(data: bytes, image_id: str, source_path: str = "") -> ImageRecord:
    """Decode a PNG/JPEG/BMP byte stream into an ImageRecord.

    Images with >= 3 channels come back as RGB with any alpha dropped
    (not composited); single-channel images come back as Luma. 16-bit and
    float modes are rejected.
    """
    try:
        with Image.open(io.BytesIO(data)) as img:
            img.load()
            mode = img.mode
            if mode in ("1", "L"):
                arr = np.asarray(img.convert("L"), dtype=np.uint8)
            elif mode == "LA":
                arr = np.asarray(img.convert("LA"), dtype=np.uint8)[:, :, 0]
            elif mode in ("P", "RGB", "RGBA", "CMYK", "YCbCr"):
                converted = img.convert("RGBA") if mode in ("P", "RGBA") else img.convert("RGB")
                arr = np.asarray(converted, dtype=np.uint8)[:, :, :3]
            else:
                raise DecodeError(image_id, f"unsupported mode {mode!r}")
    except DecodeError:
        raise
    except (UnidentifiedImageError, OSError, ValueError, SyntaxError) as exc:
        raise DecodeError(image_id, str(exc)) from exc
    return ImageRecord(id=image_id, pixels=arr, source_path=source_path)


def to_luma(image: ImageRecord, formula: str = DEFAULT_LUMA) -> np.ndarray:
    """Convert an ImageRecord to a real-valued luma plane in [0, 255].

    Luma-mode images pass through unchanged (as float64). RGB images are
    reduced per the selected formula; values are not re-quantized.
    """
    if image.mode == LUMA:
        return image.pixels.astype(np.float64)
    rgb = image.pixels.astype(np.float64)
    r, g, b = rgb[:, :, 0], rgb[:, :, 1], rgb[:, :, 2]
    if formula == HSP:
        return np.sqrt(0.241 * r * r + 0.691 * g * g + 0.068 * b * b)
    if formula == BT709:
        return 0.2126 * r + 0.7152 * g + 0.0722 * b
    if formula == BT601:
        return 0.299 * r + 0.587 * g + 0.114 * b
    if formula == BT601_RMS:
        return np.sqrt(0.299 * r * r + 0.587 * g * g + 0.114 * b * b)
    if formula == CHANNEL_MEAN:
        return (r + g + b) / 3.0
    raise ValueError(f"unknown luma formula {formula!r}")


def brightness_stats(luma: np.ndarray, ranks) -> BrightnessStats:
    """Percentiles (linear interpolation) and mean of a luma plane, /255.

    `ranks` are integer percentile ranks in [1, 99].
    """
    luma = np.asarray(luma, dtype=np.float64)
    if luma.size == 0:
        raise EmptyPlane("brightness_stats on empty plane")
    ranks = list(ranks)
    if not ranks:
        raise ValueError("ranks must be non-empty")
    for r in ranks:
        if not 1 <= r <= 99:
            raise ValueError(f"percentile rank {r} out of [1, 99]")
    flat = luma.ravel() / 255.0
    values = np.percentile(flat, ranks)
    return BrightnessStats(
        percentiles={int(r): float(v) for r, v in zip(ranks, values)},
        mean=float(flat.mean()),
    )


def laplacian_variance(luma: np.ndarray) -> float:
    """Population variance of the 4-neighbor Laplacian response.

    Borders are handled by reflection without repeating the edge sample.
    Requires at least a 3x3 plane.
    """
    luma = np.asarray(luma, dtype=np.float64)
    if luma.ndim != 2 or luma.shape[0] < 3 or luma.shape[1] < 3:
        raise TooSmall("laplacian_variance needs at least 3x3")
    response = ndimage.convolve(luma, _LAPLACIAN_KERNEL, mode="mirror")
    return float(response.var())


def _resample_weights(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) bilinear weight matrix with pixel-center alignment.

    When shrinking, the triangle filter support grows with the scale factor
    so output samples area-average their footprint instead of point-sampling.
    At identical sizes the matrix is the identity.
    """
    scale = n_in / n_out
    support = max(1.0, scale)
    centers = (np.arange(n_out) + 0.5) * scale - 0.5
    offsets = np.arange(n_in)
    weights = 1.0 - np.abs(offsets[None, :] - centers[:, None]) / support
    weights = np.clip(weights, 0.0, None)
    weights /= weights.sum(axis=1, keepdims=True)
    return weights


def _nearest_indices(n_in: int, n_out: int) -> np.ndarray:
    idx = np.floor((np.arange(n_out) + 0.5) * (n_in / n_out)).astype(np.intp)
    return np.clip(idx, 0, n_in - 1)


def resample_plane(values: np.ndarray, new_height: int, new_width: int,
                   method: str = BILINEAR) -> np.ndarray:
    """Resample a 2-D float plane; no rounding or clamping is applied."""
    values = np.asarray(values, dtype=np.float64)
    if method == NEAREST:
        rows = _nearest_indices(values.shape[0], new_height)
        cols = _nearest_indices(values.shape[1], new_width)
        return values[np.ix_(rows, cols)]
    if method == BILINEAR:
        wr = _resample_weights(values.shape[0], new_height)
        wc = _resample_weights(values.shape[1], new_width)
        return wr @ values @ wc.T
    raise ValueError(f"unknown resize method {method!r}")


def resize(image: ImageRecord, new_width: int, new_height: int,
           method: str = BILINEAR) -> ImageRecord:
    """Separable resampling of an ImageRecord; output rounded and clamped."""
    if new_width < 1 or new_height < 1:
        raise ValueError("new dimensions must be >= 1")
    if image.mode == RGB:
        planes = [
            resample_plane(image.pixels[:, :, c].astype(np.float64),
                           new_height, new_width, method)
            for c in range(3)
        ]
        out = np.stack(planes, axis=2)
    else:
        out = resample_plane(image.pixels.astype(np.float64),
                             new_height, new_width, method)
    out = np.rint(np.clip(out, 0.0, 255.0)).astype(np.uint8)
    return ImageRecord(id=image.id, pixels=out, source_path=image.source_path)


def luma_histogram(luma: np.ndarray) -> np.ndarray:
    """256-bin count vector over [0, 255]; bin index = floor of the value.

    Values are clamped into [0, 255] first, so 255.0 lands in bin 255 and
    the counts always sum to the pixel count.
    """
    luma = np.asarray(luma, dtype=np.float64)
    if luma.size == 0:
        raise EmptyPlane("luma_histogram on empty plane")
    bins = np.floor(np.clip(luma.ravel(), 0.0, 255.0)).astype(np.intp)
    bins = np.minimum(bins, 255)
    return np.bincount(bins, minlength=256).astype(np.int64)
