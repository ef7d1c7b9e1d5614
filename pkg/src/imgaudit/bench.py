"""Benchmark suites: detection F1 under single perturbations, dual
perturbations, and planted near-duplicates.

Each suite contaminates a base dataset with seeded degradations, runs the
matching detectors, thresholds their scores with every method, and scores
the flags against the planted ground truth. Cells where a method cannot run
(minimum-error thresholding on a zero-variance class) render as "---" and
are excluded from row averages.
"""

from __future__ import annotations

import csv
import zlib
from pathlib import Path

import numpy as np

from . import dedup, detectors, evaluation, imaging, perturb, pipeline, thresholding
from .config import AuditConfig

SINGLE = "single"
DUAL = "dual"
NEARDUP = "neardup"
SUITES = (SINGLE, DUAL, NEARDUP)

# (column name, issue kind that should catch it, perturbation kind, params).
# Parameter choices are the most damaging settings of each degradation
# family; size outliers shrink to one common resolution so the size score
# collapses to exactly two values.
SINGLE_SETUPS = (
    ("Light", detectors.LIGHT, perturb.BRIGHTNESS, {"scalar": 3.5}),
    ("Dark", detectors.DARK, perturb.BRIGHTNESS, {"scalar": 0.05}),
    ("Blurry", detectors.BLURRY, perturb.BLUR, {"filter": perturb.AVERAGE, "ksize": 11}),
    ("Low Info", detectors.LOW_INFORMATION, perturb.LOW_INFO, {}),
    ("Odd Size", detectors.ODD_SIZE, perturb.DOWNSCALE, {"side": 4}),
)

DUAL_PAIRS = (
    ("Light", "Blurry"),
    ("Light", "Dark"),
    ("Light", "Low Info"),
    ("Dark", "Blurry"),
    ("Dark", "Low Info"),
    ("Blurry", "Low Info"),
    ("Odd Size", "Light"),
    ("Odd Size", "Dark"),
    ("Odd Size", "Blurry"),
    ("Odd Size", "Low Info"),
)

METHOD_ROWS = (
    ("Original", thresholding.FIXED),
    ("Otsu", thresholding.OTSU),
    ("MET", thresholding.MET),
    ("Li", thresholding.LI),
    ("Max Entropy", thresholding.MAX_ENTROPY),
    ("GHT", thresholding.GHT),
    ("MVE", thresholding.MVE),
    ("GMM", thresholding.GMM),
)

NEARDUP_COLUMNS = ("exact-phash-match", "semantic-cosine", "single-linkage")

SINGLE_PROPORTION = 0.12
DUAL_PROPORTION = 0.06
NEARDUP_PROPORTION = 0.12
NEARDUP_JITTER = (0.8, 1.2)


def _child_seed(seed: int, *parts) -> int:
    entropy = [seed] + [zlib.crc32(str(p).encode()) for p in parts]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])


def _kind_scores(records, kind: str, light_rank: int, config: AuditConfig) -> dict:
    """Score every record for one issue kind."""
    if kind == detectors.ODD_SIZE:
        scores, _ = detectors.score_odd_size(
            [(r.id, r.width, r.height) for r in records], config.iqr_factor
        )
        return scores
    out = {}
    for record in records:
        luma = imaging.to_luma(record, config.luma_formula)
        if kind == detectors.LIGHT:
            stats = imaging.brightness_stats(luma, [light_rank])
            out[record.id] = detectors.score_light(stats, light_rank)
        elif kind == detectors.DARK:
            stats = imaging.brightness_stats(luma, [99])
            out[record.id] = detectors.score_dark(stats)
        elif kind == detectors.BLURRY:
            out[record.id] = detectors.score_blurry(luma)
        elif kind == detectors.LOW_INFORMATION:
            out[record.id] = detectors.score_low_information(luma)
        else:
            raise ValueError(f"no single-image scorer for {kind}")
    return out


class _ScoreCache:
    """Per-dataset score cache; only the light score depends on the rank."""

    def __init__(self, records, config: AuditConfig):
        self.records = records
        self.config = config
        self._cache = {}

    def get(self, kind: str, light_rank: int) -> dict:
        key = (kind, light_rank if kind == detectors.LIGHT else None)
        if key not in self._cache:
            self._cache[key] = _kind_scores(self.records, kind, light_rank, self.config)
        return self._cache[key]


def _method_flags(method: str, cache: _ScoreCache, kind: str, config: AuditConfig):
    """Flag set for one (method, kind) cell, or None when the method fails.

    The fixed baseline reproduces the legacy tool: rank-5 light scoring with
    hard-coded thresholds. Adaptive rows use the configured light rank.
    """
    rank = 5 if method == thresholding.FIXED else config.light_percentile
    scores = cache.get(kind, rank)
    decision, error = pipeline.decide_threshold(method, scores, kind, config)
    if error is not None:
        return None
    return thresholding.flag_by_threshold(scores, decision, kind)


def run_single(records, seed: int = 0, config: AuditConfig | None = None) -> list:
    """Single-perturbation F1 matrix: 8 method rows x 5 perturbation columns."""
    config = config or AuditConfig()
    datasets = []
    for name, kind, pkind, params in SINGLE_SETUPS:
        spec = perturb.PerturbationSpec(
            kind=pkind,
            proportion=SINGLE_PROPORTION,
            seed=_child_seed(seed, "single", name),
            params=params,
        )
        labeled = perturb.apply_contamination(records, [spec])
        datasets.append((name, kind, _ScoreCache(labeled.images, config),
                         labeled.positive_ids()))
    rows = []
    for row_name, method in METHOD_ROWS:
        cells = {}
        for name, kind, cache, positives in datasets:
            flags = _method_flags(method, cache, kind, config)
            if flags is None:
                cells[name] = None
            else:
                ids = set(cache.get(kind, config.light_percentile))
                cells[name] = evaluation.binary_f1(flags, positives, ids).f1
        rows.append({"algorithm": row_name, "cells": cells, "average": _row_average(cells)})
    return rows


def run_dual(records, seed: int = 0, config: AuditConfig | None = None) -> list:
    """Dual-perturbation F1 matrix over the ten pairs at 6% + 6%.

    A pair's flags are the union of the two matching detectors' flags; truth
    is any image carrying either perturbation. A cell is "---" when either
    detector's threshold method fails.
    """
    config = config or AuditConfig()
    setups = {name: (kind, pkind, params) for name, kind, pkind, params in SINGLE_SETUPS}
    datasets = []
    for first, second in DUAL_PAIRS:
        specs = []
        for position, name in enumerate((first, second)):
            kind, pkind, params = setups[name]
            specs.append(
                perturb.PerturbationSpec(
                    kind=pkind,
                    proportion=DUAL_PROPORTION,
                    seed=_child_seed(seed, "dual", first, second, position),
                    params=params,
                )
            )
        labeled = perturb.apply_contamination(records, specs)
        datasets.append(
            (f"{first}+{second}", (setups[first][0], setups[second][0]),
             _ScoreCache(labeled.images, config), labeled.positive_ids())
        )
    rows = []
    for row_name, method in METHOD_ROWS:
        cells = {}
        for pair_name, kinds, cache, positives in datasets:
            flag_sets = [_method_flags(method, cache, kind, config) for kind in kinds]
            if any(f is None for f in flag_sets):
                cells[pair_name] = None
                continue
            flags = set().union(*flag_sets)
            ids = set(cache.get(kinds[0], config.light_percentile))
            cells[pair_name] = evaluation.binary_f1(flags, positives, ids).f1
        rows.append({"algorithm": row_name, "cells": cells, "average": _row_average(cells)})
    return rows


def run_neardup(records, seed: int = 0, config: AuditConfig | None = None) -> dict:
    """Near-duplicate detection F1 for three grouping strategies.

    12% of images are replaced by photometrically jittered replicas of
    surviving images. Every strategy groups candidates, keeps one
    representative per group, and predicts the rest as removable duplicates.
    """
    config = config or AuditConfig()
    spec = perturb.PerturbationSpec(
        kind=perturb.NEAR_DUPLICATE,
        proportion=NEARDUP_PROPORTION,
        seed=_child_seed(seed, "neardup"),
        params={"jitter_lo": NEARDUP_JITTER[0], "jitter_hi": NEARDUP_JITTER[1]},
    )
    labeled = perturb.apply_contamination(records, [spec])
    positives = labeled.positive_ids()
    ids = {r.id for r in labeled.images}
    hashes = [dedup.phash64(r, config.luma_formula) for r in labeled.images]
    provider = dedup.get_provider(config.provider, formula=config.luma_formula)
    routes = {
        "exact-phash-match": dedup.cluster_single_linkage(hashes, cutoff=0),
        "semantic-cosine": dedup.cluster_semantic(
            labeled.images, provider, config.similarity_cutoff
        ),
        "single-linkage": dedup.cluster_single_linkage(hashes, config.hamming_cutoff),
    }
    result = {}
    for name, clusters in routes.items():
        predicted = dedup.removable_ids(clusters, dedup.FIRST_BY_ID)
        result[name] = evaluation.binary_f1(predicted, positives, ids).f1
    return result


def _row_average(cells: dict):
    values = [v for v in cells.values() if v is not None]
    return sum(values) / len(values) if values else None


def _format_cell(value) -> str:
    return "---" if value is None else f"{value:.4f}"


def write_matrix_csv(rows, columns, path):
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["Algorithm", *columns, "Average"])
        for row in rows:
            writer.writerow(
                [row["algorithm"]]
                + [_format_cell(row["cells"][c]) for c in columns]
                + [_format_cell(row["average"])]
            )


def write_neardup_csv(result: dict, path):
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(list(NEARDUP_COLUMNS))
        writer.writerow([_format_cell(result[c]) for c in NEARDUP_COLUMNS])


def preclean(records, config: AuditConfig | None = None) -> list:
    """Drop images the fixed-threshold audit flags, mirroring an initial
    hygiene pass over the base dataset before planting degradations."""
    config = config or AuditConfig()
    base = AuditConfig.from_dict(
        {**config.to_dict(), "default_method": thresholding.FIXED, "methods": {}}
    )
    table, _ = pipeline.run_audit(records, base)
    return [r for r in records if not table.flags[r.id]]


def run_suite(suite: str, records, out_dir, seed: int = 0,
              config: AuditConfig | None = None, do_preclean: bool = False):
    """Run one suite and write its table under out_dir; returns the rows."""
    config = config or AuditConfig()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if do_preclean:
        records = preclean(records, config)
    if suite == SINGLE:
        rows = run_single(records, seed, config)
        write_matrix_csv(rows, [s[0] for s in SINGLE_SETUPS], out / "bench_single.csv")
        return rows
    if suite == DUAL:
        rows = run_dual(records, seed, config)
        columns = [f"{a}+{b}" for a, b in DUAL_PAIRS]
        write_matrix_csv(rows, columns, out / "bench_dual.csv")
        return rows
    if suite == NEARDUP:
        result = run_neardup(records, seed, config)
        write_neardup_csv(result, out / "bench_neardup.csv")
        return result
    raise ValueError(f"unknown suite {suite!r}")
