"""Procedural generation of small natural-statistics test images.

Each image layers a smooth low-frequency color field, per-channel 1/f
texture (dense spectra make perceptual hashes respond to photometric edits
the way they do on photographs), a few alpha-blended shapes, and mild sensor
noise. Fully deterministic per (seed, index).
"""

from __future__ import annotations

import numpy as np

from .imaging import BILINEAR, ImageRecord, resample_plane


def _pink_field(rng: np.random.Generator, size: int, alpha: float = 1.0) -> np.ndarray:
    """Zero-mean random field with a 1/f^alpha amplitude spectrum, unit std."""
    fy = np.fft.fftfreq(size)[:, None]
    fx = np.fft.rfftfreq(size)[None, :]
    freq = np.hypot(fy, fx)
    freq[0, 0] = 1.0
    spectrum = (
        rng.normal(size=(size, size // 2 + 1))
        + 1j * rng.normal(size=(size, size // 2 + 1))
    ) / freq**alpha
    spectrum[0, 0] = 0.0
    field = np.fft.irfft2(spectrum, s=(size, size))
    return field / (field.std() + 1e-12)


def _paint_shapes(rng: np.random.Generator, canvas: np.ndarray) -> None:
    size = canvas.shape[0]
    for _ in range(int(rng.integers(2, 5))):
        color = rng.uniform(25.0, 230.0, size=3)
        blend = rng.uniform(0.6, 1.0)
        if rng.random() < 0.5:
            h = int(rng.integers(size // 6, size // 2))
            w = int(rng.integers(size // 6, size // 2))
            r0 = int(rng.integers(0, size - h))
            c0 = int(rng.integers(0, size - w))
            region = canvas[r0 : r0 + h, c0 : c0 + w]
            canvas[r0 : r0 + h, c0 : c0 + w] = (1 - blend) * region + blend * color
        else:
            cy, cx = rng.uniform(size * 0.2, size * 0.8, size=2)
            ry = rng.uniform(size * 0.08, size * 0.3)
            rx = rng.uniform(size * 0.08, size * 0.3)
            yy, xx = np.mgrid[0:size, 0:size]
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
            canvas[mask] = (1 - blend) * canvas[mask] + blend * color


def _render(rng: np.random.Generator, size: int) -> np.ndarray:
    grid = rng.uniform(45.0, 210.0, size=(4, 4, 3))
    base = np.stack(
        [resample_plane(grid[:, :, c], size, size, BILINEAR) for c in range(3)], axis=2
    )
    texture = np.stack([_pink_field(rng, size) for _ in range(3)], axis=2)
    base += texture * rng.uniform(48.0, 80.0)
    _paint_shapes(rng, base)
    base += rng.normal(0.0, rng.uniform(2.0, 6.0), size=base.shape)
    return np.rint(np.clip(base, 0.0, 255.0)).astype(np.uint8)


def generate_images(count: int, size: int = 32, seed: int = 0,
                    prefix: str = "img") -> list:
    """Generate `count` RGB ImageRecords of side `size`, reproducibly."""
    if count < 1:
        raise ValueError("count must be >= 1")
    children = np.random.SeedSequence(seed).spawn(count)
    records = []
    for index, child in enumerate(children):
        rng = np.random.default_rng(child)
        records.append(
            ImageRecord(id=f"{prefix}_{index:05d}", pixels=_render(rng, size))
        )
    return records
