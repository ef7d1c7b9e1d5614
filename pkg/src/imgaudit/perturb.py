"""Synthesize labeled degraded datasets for benchmarking the detectors.

Every operation is deterministic given (inputs, seed): rerunning a
contamination spec reproduces identical pixels and labels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import KernelTooLarge, ProportionOverflow
from .imaging import BILINEAR, LUMA, RGB, ImageRecord, resample_plane, resize

BRIGHTNESS = "BRIGHTNESS"
BLUR = "BLUR"
DOWNSCALE = "DOWNSCALE"
ODD_SIZE_ROUNDTRIP = "ODD_SIZE_ROUNDTRIP"
LOW_INFO = "LOW_INFO"
GRAYSCALE_3CH = "GRAYSCALE"
EXACT_DUPLICATE = "EXACT_DUPLICATE"
NEAR_DUPLICATE = "NEAR_DUPLICATE"

PERTURBATION_KINDS = (
    BRIGHTNESS,
    BLUR,
    DOWNSCALE,
    ODD_SIZE_ROUNDTRIP,
    LOW_INFO,
    GRAYSCALE_3CH,
    EXACT_DUPLICATE,
    NEAR_DUPLICATE,
)

AVERAGE = "AVERAGE"
GAUSSIAN = "GAUSSIAN"
MEDIAN = "MEDIAN"
BLUR_FILTERS = (AVERAGE, GAUSSIAN, MEDIAN)
BLUR_KSIZES = (3, 5, 7, 9, 11)

_BT601 = np.array([0.299, 0.587, 0.114])


@dataclass
class PerturbationSpec:
    """Declarative description of one degradation applied to a proportion of
    a dataset."""

    kind: str
    proportion: float
    seed: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in PERTURBATION_KINDS:
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if not 0.0 < self.proportion <= 1.0:
            raise ValueError("proportion must lie in (0, 1]")
        p = self.params
        if self.kind == BRIGHTNESS:
            scalar = p.get("scalar")
            if scalar is None or not 0.05 <= scalar <= 3.5:
                raise ValueError("BRIGHTNESS scalar must lie in [0.05, 3.5]")
        elif self.kind == BLUR:
            if p.get("filter") not in BLUR_FILTERS:
                raise ValueError(f"BLUR filter must be one of {BLUR_FILTERS}")
            if p.get("ksize") not in BLUR_KSIZES:
                raise ValueError(f"BLUR ksize must be one of {BLUR_KSIZES}")
        elif self.kind == DOWNSCALE:
            if p.get("side", 0) < 4:
                raise ValueError("DOWNSCALE side must be >= 4")
        elif self.kind == ODD_SIZE_ROUNDTRIP:
            if p.get("side", 0) < 1:
                raise ValueError("ODD_SIZE_ROUNDTRIP side must be >= 1")
        elif self.kind == NEAR_DUPLICATE:
            lo, hi = p.get("jitter_lo"), p.get("jitter_hi")
            if lo is None or hi is None or not 0 < lo <= hi:
                raise ValueError("NEAR_DUPLICATE needs 0 < jitter_lo <= jitter_hi")

    def label_token(self) -> str:
        """Compact token naming the perturbation in labels.csv."""
        p = self.params
        if self.kind == BRIGHTNESS:
            return f"{BRIGHTNESS}:{p['scalar']:g}"
        if self.kind == BLUR:
            return f"{BLUR}:{p['filter']}:{p['ksize']}"
        if self.kind == DOWNSCALE:
            return f"{DOWNSCALE}:{p['side']}"
        if self.kind == ODD_SIZE_ROUNDTRIP:
            return f"{ODD_SIZE_ROUNDTRIP}:{p['side']}"
        return self.kind

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": dict(self.params),
            "proportion": self.proportion,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PerturbationSpec":
        return cls(
            kind=data["kind"],
            proportion=data["proportion"],
            seed=data["seed"],
            params=dict(data.get("params", {})),
        )


@dataclass
class LabeledDataset:
    images: list
    labels: dict  # id -> set of label tokens; missing/empty = clean
    spec_manifest: dict = field(default_factory=dict)

    def positive_ids(self) -> set:
        return {i for i, kinds in self.labels.items() if kinds}


def _finish(values: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(values, 0.0, 255.0)).astype(np.uint8)


def adjust_brightness(image: ImageRecord, scalar: float) -> ImageRecord:
    """Multiply every sample by a scalar, clamp, round."""
    if scalar <= 0:
        raise ValueError("scalar must be positive")
    out = _finish(image.pixels.astype(np.float64) * scalar)
    return ImageRecord(id=image.id, pixels=out, source_path=image.source_path)


def _blur_plane(plane: np.ndarray, filter_type: str, ksize: int) -> np.ndarray:
    if filter_type == AVERAGE:
        kernel = np.full((ksize, ksize), 1.0 / (ksize * ksize))
        return ndimage.correlate(plane, kernel, mode="mirror")
    if filter_type == GAUSSIAN:
        sigma = 0.3 * ((ksize - 1) * 0.5 - 1.0) + 0.8
        offsets = np.arange(ksize) - (ksize - 1) / 2.0
        kernel = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
        kernel /= kernel.sum()
        out = ndimage.correlate1d(plane, kernel, axis=0, mode="mirror")
        return ndimage.correlate1d(out, kernel, axis=1, mode="mirror")
    if filter_type == MEDIAN:
        return ndimage.median_filter(plane, size=ksize, mode="mirror")
    raise ValueError(f"unknown blur filter {filter_type!r}")


def blur(image: ImageRecord, filter_type: str, ksize: int) -> ImageRecord:
    """Box, Gaussian (sigma derived from ksize), or windowed-median blur."""
    if ksize not in BLUR_KSIZES:
        raise ValueError(f"ksize must be one of {BLUR_KSIZES}")
    if ksize > min(image.width, image.height):
        raise KernelTooLarge(f"ksize {ksize} exceeds image extent")
    pixels = image.pixels.astype(np.float64)
    if image.mode == RGB:
        out = np.stack(
            [_blur_plane(pixels[:, :, c], filter_type, ksize) for c in range(3)], axis=2
        )
    else:
        out = _blur_plane(pixels, filter_type, ksize)
    return ImageRecord(id=image.id, pixels=_finish(out), source_path=image.source_path)


def downscale(image: ImageRecord, side: int) -> ImageRecord:
    """Bilinear shrink to side x side."""
    if not 4 <= side < min(image.width, image.height):
        raise ValueError("side must satisfy 4 <= side < min(width, height)")
    return resize(image, side, side, BILINEAR)


def odd_size_roundtrip(image: ImageRecord, side: int) -> ImageRecord:
    """Bilinear shrink to side x side and back, keeping dimensions but losing
    detail."""
    if not 1 <= side < min(image.width, image.height):
        raise ValueError("side must satisfy 1 <= side < min(width, height)")
    small = resize(image, side, side, BILINEAR)
    return resize(small, image.width, image.height, BILINEAR)


def make_low_info(image: ImageRecord) -> ImageRecord:
    """Shrink to a small thumbnail and drop it onto a black canvas.

    The thumbnail side is 12/32 of the smaller dimension; its top-left corner
    sits at the canvas center (clipped to stay inside).
    """
    min_dim = min(image.width, image.height)
    side = max(1, round(12.0 / 32.0 * min_dim))
    thumb = resize(image, side, side, BILINEAR)
    canvas = np.zeros_like(image.pixels)
    r0 = min(image.height // 2, image.height - side)
    c0 = min(image.width // 2, image.width - side)
    canvas[r0 : r0 + side, c0 : c0 + side] = thumb.pixels
    return ImageRecord(id=image.id, pixels=canvas, source_path=image.source_path)


def to_grayscale_3ch(image: ImageRecord) -> ImageRecord:
    """Replicate rounded BT601 luma into all three channels."""
    if image.mode != RGB:
        raise ValueError("to_grayscale_3ch expects an RGB image")
    luma = image.pixels.astype(np.float64) @ _BT601
    out = np.repeat(_finish(luma)[:, :, None], 3, axis=2)
    return ImageRecord(id=image.id, pixels=out, source_path=image.source_path)


def color_jitter(image: ImageRecord, lo: float, hi: float, seed,
                 jitter_hue: bool = False) -> ImageRecord:
    """Photometric jitter: brightness, then mean-anchored contrast, then
    luma-anchored saturation, each by an independent factor drawn uniformly
    from [lo, hi]. Clamp and round happen once at the end.

    An optional fourth hue factor (off by default) rotates chroma around the
    luma axis.
    """
    if not 0 < lo <= hi:
        raise ValueError("need 0 < lo <= hi")
    rng = np.random.default_rng(seed)
    f_brightness, f_contrast, f_saturation = rng.uniform(lo, hi, size=3)
    values = image.pixels.astype(np.float64)
    values = values * f_brightness
    mean = values.mean(axis=(0, 1), keepdims=True)
    values = mean + (values - mean) * f_contrast
    if image.mode == RGB:
        luma = values @ _BT601
        values = luma[:, :, None] + (values - luma[:, :, None]) * f_saturation
        if jitter_hue:
            f_hue = rng.uniform(lo, hi)
            angle = (f_hue - 1.0) * math.pi
            # Rotate the two chroma axes of a YIQ-style decomposition.
            i_axis = values @ np.array([0.596, -0.274, -0.322])
            q_axis = values @ np.array([0.211, -0.523, 0.312])
            luma = values @ _BT601
            cos_a, sin_a = math.cos(angle), math.sin(angle)
            i_rot = cos_a * i_axis - sin_a * q_axis
            q_rot = sin_a * i_axis + cos_a * q_axis
            back = np.array(
                [[1.0, 0.956, 0.621], [1.0, -0.272, -0.647], [1.0, -1.106, 1.703]]
            )
            values = np.stack([luma, i_rot, q_rot], axis=2) @ back.T
    return ImageRecord(id=image.id, pixels=_finish(values), source_path=image.source_path)


def apply_one(image: ImageRecord, spec: PerturbationSpec, seed=None) -> ImageRecord:
    """Apply a non-duplicate perturbation spec to a single image."""
    p = spec.params
    if spec.kind == BRIGHTNESS:
        return adjust_brightness(image, p["scalar"])
    if spec.kind == BLUR:
        return blur(image, p["filter"], p["ksize"])
    if spec.kind == DOWNSCALE:
        return downscale(image, p["side"])
    if spec.kind == ODD_SIZE_ROUNDTRIP:
        return odd_size_roundtrip(image, p["side"])
    if spec.kind == LOW_INFO:
        return make_low_info(image)
    if spec.kind == GRAYSCALE_3CH:
        return to_grayscale_3ch(image)
    raise ValueError(f"{spec.kind} is not a per-image perturbation")


def apply_contamination(dataset, specs) -> LabeledDataset:
    """Degrade disjoint seeded samples of a dataset per the given specs.

    Each spec touches floor(proportion * n) distinct images; no image
    receives more than one spec. Duplicate kinds replace their victims with
    (jittered) copies of untouched survivors under fresh ids derived from the
    source id, so every planted duplicate has its source still present.
    """
    records = sorted(dataset, key=lambda r: r.id)
    n = len(records)
    if n == 0:
        raise ProportionOverflow("empty dataset")
    counts = [math.floor(s.proportion * n) for s in specs]
    if sum(counts) > n:
        raise ProportionOverflow(
            f"specs select {sum(counts)} images but the dataset has {n}"
        )

    remaining = [r.id for r in records]
    selections = []
    for spec, count in zip(specs, counts):
        rng = np.random.default_rng(spec.seed)
        picked = rng.choice(len(remaining), size=count, replace=False)
        picked_set = set(int(i) for i in picked)
        chosen = sorted(remaining[i] for i in picked_set)
        remaining = [r for i, r in enumerate(remaining) if i not in picked_set]
        selections.append((spec, chosen))
    survivors = sorted(remaining)

    out = {r.id: r for r in records}
    labels = {}
    for spec, chosen in selections:
        token = spec.label_token()
        if spec.kind in (EXACT_DUPLICATE, NEAR_DUPLICATE):
            if not survivors:
                raise ProportionOverflow("no untouched survivors left to replicate")
            rng = np.random.default_rng([spec.seed, 1])
            source_idx = rng.integers(0, len(survivors), size=len(chosen))
            dup_counter = {}
            for j, (victim, si) in enumerate(zip(chosen, source_idx)):
                source = out[survivors[int(si)]]
                serial = dup_counter.get(source.id, 0)
                dup_counter[source.id] = serial + 1
                new_id = f"{source.id}-dup-{serial}"
                if spec.kind == NEAR_DUPLICATE:
                    replica = color_jitter(
                        ImageRecord(id=new_id, pixels=source.pixels.copy()),
                        spec.params["jitter_lo"],
                        spec.params["jitter_hi"],
                        seed=[spec.seed, 2, j],
                    )
                else:
                    replica = ImageRecord(id=new_id, pixels=source.pixels.copy())
                del out[victim]
                out[new_id] = replica
                labels[new_id] = {token}
        else:
            for victim in chosen:
                out[victim] = apply_one(out[victim], spec)
                labels[victim] = {token}

    images = [out[i] for i in sorted(out)]
    manifest = {
        "dataset_size": n,
        "specs": [s.to_dict() for s in specs],
        "label_counts": {s.label_token(): c for s, c in zip(specs, counts)},
    }
    full_labels = {r.id: labels.get(r.id, set()) for r in images}
    return LabeledDataset(images=images, labels=full_labels, spec_manifest=manifest)
