"""Per-image issue scores in [0, 1]; lower means more likely problematic."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import dedup, imaging
from .errors import EmptyDataset, MissingPercentile, TooSmall

LIGHT = "LIGHT"
DARK = "DARK"
BLURRY = "BLURRY"
LOW_INFORMATION = "LOW_INFORMATION"
ODD_SIZE = "ODD_SIZE"
ODD_ASPECT_RATIO = "ODD_ASPECT_RATIO"
GRAYSCALE = "GRAYSCALE"
EXACT_DUPLICATE = "EXACT_DUPLICATE"
NEAR_DUPLICATE = "NEAR_DUPLICATE"

ISSUE_KINDS = (
    LIGHT,
    DARK,
    BLURRY,
    LOW_INFORMATION,
    ODD_SIZE,
    ODD_ASPECT_RATIO,
    GRAYSCALE,
    EXACT_DUPLICATE,
    NEAR_DUPLICATE,
)

# Kinds flagged by score-vs-threshold comparison; the rest flag on score != 1.
THRESHOLDED_KINDS = (LIGHT, DARK, BLURRY, LOW_INFORMATION, ODD_SIZE, ODD_ASPECT_RATIO)
UNTHRESHOLDED_KINDS = (GRAYSCALE, EXACT_DUPLICATE, NEAR_DUPLICATE)

# Percentile ranks the light score may use; 5 is the legacy choice, 75 the
# default after the rework of overexposure detection.
LIGHT_PERCENTILE_CHOICES = (5, 25, 30, 40, 50, 60, 75)
DEFAULT_LIGHT_PERCENTILE = 75

# Ranks computed during an audit so that dark plus every light mode is
# available from a single pass.
AUDIT_RANKS = (1, 5, 10, 15, 25, 30, 40, 50, 60, 75, 90, 95, 99)

DEFAULT_IQR_FACTOR = 3.0


@dataclass
class SizeStats:
    """IQR fence statistics over sqrt(w*h) image sizes."""

    q1: float
    q3: float
    iqr_factor: float
    min_threshold: float
    max_threshold: float
    midpoint: float

    @classmethod
    def from_sizes(cls, sizes, iqr_factor: float = DEFAULT_IQR_FACTOR) -> "SizeStats":
        sizes = np.asarray(sizes, dtype=np.float64)
        q1, q3 = np.percentile(sizes, [25, 75])
        iqr = q3 - q1
        min_thr = q1 - iqr_factor * iqr
        max_thr = q3 + iqr_factor * iqr
        return cls(
            q1=float(q1),
            q3=float(q3),
            iqr_factor=float(iqr_factor),
            min_threshold=float(min_thr),
            max_threshold=float(max_thr),
            midpoint=float((min_thr + max_thr) / 2.0),
        )


@dataclass
class ScoreTable:
    """Per-image, per-issue scores plus the flag sets derived from them."""

    rows: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)
    invalid: list = field(default_factory=list)
    size_stats: SizeStats | None = None
    clusters: dict = field(default_factory=dict)

    def ids(self):
        return sorted(self.rows)


def score_dark(stats: imaging.BrightnessStats) -> float:
    """Dark score: the 99th-percentile normalized luma."""
    if 99 not in stats.percentiles:
        raise MissingPercentile(99)
    return stats.percentiles[99]


def score_light(stats: imaging.BrightnessStats,
                rank: int = DEFAULT_LIGHT_PERCENTILE) -> float:
    """Light score: 1 minus the normalized luma at the configured rank."""
    if rank not in LIGHT_PERCENTILE_CHOICES:
        raise ValueError(f"light percentile rank must be one of {LIGHT_PERCENTILE_CHOICES}")
    if rank not in stats.percentiles:
        raise MissingPercentile(rank)
    return 1.0 - stats.percentiles[rank]


def histogram_std(luma: np.ndarray) -> float:
    """Population std of the luma distribution summarized by its histogram."""
    counts = imaging.luma_histogram(luma).astype(np.float64)
    total = counts.sum()
    levels = np.arange(256, dtype=np.float64)
    mean = (counts * levels).sum() / total
    var = (counts * (levels - mean) ** 2).sum() / total
    return float(math.sqrt(var))


def score_blurry(luma: np.ndarray) -> float:
    """Blur score from the stronger of two sharpness signals.

    raw = max(sqrt(laplacian variance), histogram std); the Laplacian term is
    dropped for images smaller than 3x3. Squashed to 1 - exp(-raw/100) so low
    values mean blurry, matching the score orientation of every other kind.
    """
    metrics = [histogram_std(luma)]
    try:
        metrics.append(math.sqrt(imaging.laplacian_variance(luma)))
    except TooSmall:
        pass
    raw = max(metrics)
    return 1.0 - math.exp(-raw / 100.0)


def score_low_information(luma: np.ndarray) -> float:
    """Shannon entropy of the luma histogram, normalized by 8 bits."""
    counts = imaging.luma_histogram(luma).astype(np.float64)
    p = counts / counts.sum()
    nonzero = p[p > 0]
    entropy = float(-(nonzero * np.log2(nonzero)).sum())
    return min(entropy / 8.0, 1.0)


def score_odd_size(dataset, iqr_factor: float = DEFAULT_IQR_FACTOR):
    """Size-outlier scores for (id, width, height) triples.

    Sizes are sqrt(w*h). Each image scores 1 - |size - midpoint| / half_range
    clamped to [0, 1], where the range comes from the IQR fences over the
    whole dataset. With a degenerate fence (IQR 0), images exactly at the
    midpoint score 1 and everything else scores 0.
    """
    dataset = list(dataset)
    if not dataset:
        raise EmptyDataset("score_odd_size on empty dataset")
    sizes = {i: math.sqrt(w * h) for i, w, h in dataset}
    stats = SizeStats.from_sizes(list(sizes.values()), iqr_factor)
    half_range = (stats.max_threshold - stats.min_threshold) / 2.0
    scores = {}
    for image_id, size in sizes.items():
        if half_range > 0:
            scores[image_id] = float(
                np.clip(1.0 - abs(size - stats.midpoint) / half_range, 0.0, 1.0)
            )
        else:
            scores[image_id] = 1.0 if size == stats.midpoint else 0.0
    return scores, stats


def score_odd_aspect_ratio(width: int, height: int) -> float:
    """min(w/h, h/w): 1 for squares, toward 0 for extreme shapes."""
    if width < 1 or height < 1:
        raise ValueError("dimensions must be >= 1")
    return min(width / height, height / width)


def score_grayscale(image: imaging.ImageRecord) -> float:
    """0 for grayscale content, 1 otherwise (binary score).

    Luma-mode images always score 0. RGB images score 0 when every pixel has
    identical channel values; this re-check catches grayscale content saved
    in RGB files.
    """
    if image.mode == imaging.LUMA:
        return 0.0
    px = image.pixels
    if np.array_equal(px[:, :, 0], px[:, :, 1]) and np.array_equal(px[:, :, 1], px[:, :, 2]):
        return 0.0
    return 1.0


def brightness_mean(image: imaging.ImageRecord) -> float:
    """Average of the per-channel means, normalized to [0, 1].

    Used for ranking-style dark/bright inspection (ascending = darkest
    first) rather than for flagging.
    """
    px = image.pixels.astype(np.float64)
    if image.mode == imaging.RGB:
        return float((px[:, :, 0].mean() + px[:, :, 1].mean() + px[:, :, 2].mean()) / 3.0 / 255.0)
    return float(px.mean() / 255.0)


def _score_one(record, kinds, light_rank, luma_formula):
    """Single-image portion of the audit; pure, so safe across workers."""
    row = {}
    luma = None
    stats = None
    needs_luma = {LIGHT, DARK, BLURRY, LOW_INFORMATION} & kinds
    if needs_luma:
        luma = imaging.to_luma(record, luma_formula)
    if {LIGHT, DARK} & kinds:
        stats = imaging.brightness_stats(luma, AUDIT_RANKS)
    if DARK in kinds:
        row[DARK] = score_dark(stats)
    if LIGHT in kinds:
        row[LIGHT] = score_light(stats, light_rank)
    if BLURRY in kinds:
        row[BLURRY] = score_blurry(luma)
    if LOW_INFORMATION in kinds:
        row[LOW_INFORMATION] = score_low_information(luma)
    if ODD_ASPECT_RATIO in kinds:
        row[ODD_ASPECT_RATIO] = score_odd_aspect_ratio(record.width, record.height)
    if GRAYSCALE in kinds:
        row[GRAYSCALE] = score_grayscale(record)
    return record.id, row


def audit_dataset(images, config=None) -> ScoreTable:
    """Score a dataset for the selected issue kinds.

    Per-image kinds are computed first (optionally across a thread pool),
    then the dataset-wide passes: size outliers and duplicate clustering.
    Output is independent of input order and worker count. Flags are filled
    here only for the kinds that need no threshold (grayscale, duplicates);
    thresholded kinds are flagged later by the pipeline.
    """
    from .config import AuditConfig

    config = config or AuditConfig()
    records = sorted(images, key=lambda r: r.id)
    kinds = set(config.issues)
    unknown = kinds - set(ISSUE_KINDS)
    if unknown:
        raise ValueError(f"unknown issue kinds: {sorted(unknown)}")

    table = ScoreTable()
    args = [(r, kinds, config.light_percentile, config.luma_formula) for r in records]
    if config.workers > 1 and records:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(lambda a: _score_one(*a), args))
    else:
        results = [_score_one(*a) for a in args]
    for image_id, row in results:
        table.rows[image_id] = row
        table.flags[image_id] = set()

    if ODD_SIZE in kinds and records:
        scores, stats = score_odd_size(
            [(r.id, r.width, r.height) for r in records], config.iqr_factor
        )
        table.size_stats = stats
        for image_id, value in scores.items():
            table.rows[image_id][ODD_SIZE] = value

    if EXACT_DUPLICATE in kinds and records:
        digests = [dedup.content_digest(r) for r in records]
        clusters = dedup.cluster_exact(digests)
        table.clusters[EXACT_DUPLICATE] = clusters
        scores = dedup.duplicate_scores(clusters, [r.id for r in records])
        for image_id, value in scores.items():
            table.rows[image_id][EXACT_DUPLICATE] = value

    if NEAR_DUPLICATE in kinds and records:
        hashes = [dedup.phash64(r, config.luma_formula) for r in records]
        digest_map = None
        if EXACT_DUPLICATE in kinds:
            digest_map = {d.image_id: d.digest for d in digests}
        clusters = dedup.cluster_single_linkage(
            hashes, cutoff=config.hamming_cutoff, digests=digest_map
        )
        if config.semantic_dedup:
            provider = dedup.provider_from_config(config)
            semantic = dedup.cluster_semantic(
                records, provider, config.similarity_cutoff
            )
            clusters = dedup.merge_duplicates(clusters, semantic)
        table.clusters[NEAR_DUPLICATE] = clusters
        scores = dedup.duplicate_scores(clusters, [r.id for r in records])
        for image_id, value in scores.items():
            table.rows[image_id][NEAR_DUPLICATE] = value

    for image_id, row in table.rows.items():
        for kind in UNTHRESHOLDED_KINDS:
            if kind in row and row[kind] != 1.0:
                table.flags[image_id].add(kind)
    return table
