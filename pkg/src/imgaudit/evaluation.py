"""F1 evaluation of detector flags against perturbation ground truth.

Low-quality images are the positive class throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import detectors
from .errors import IdMismatch


@dataclass
class KindMetrics:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float


@dataclass
class EvaluationReport:
    per_kind: dict  # issue kind -> KindMetrics
    macro_f1: float


def f1_from_counts(tp: int, fp: int, fn: int) -> KindMetrics:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return KindMetrics(tp=tp, fp=fp, fn=fn, precision=precision, recall=recall, f1=f1)


def binary_f1(predicted: set, positives: set, universe) -> KindMetrics:
    universe = set(universe)
    tp = len(predicted & positives)
    fp = len(predicted - positives)
    fn = len(positives - predicted)
    return f1_from_counts(tp, fp, fn)


def label_kind(token: str):
    """Map one labels.csv token to the issue kind that should catch it."""
    head, _, rest = token.partition(":")
    if head == "BRIGHTNESS":
        scalar = float(rest.split(":")[0])
        if scalar > 1.0:
            return detectors.LIGHT
        if scalar < 1.0:
            return detectors.DARK
        return None
    return {
        "BLUR": detectors.BLURRY,
        "LOW_INFO": detectors.LOW_INFORMATION,
        "DOWNSCALE": detectors.ODD_SIZE,
        "ODD_SIZE_ROUNDTRIP": detectors.ODD_SIZE,
        "GRAYSCALE": detectors.GRAYSCALE,
        "NEAR_DUPLICATE": detectors.NEAR_DUPLICATE,
        "EXACT_DUPLICATE": detectors.NEAR_DUPLICATE,
    }.get(head)


def positives_by_kind(labels: dict) -> dict:
    """labels: id -> set of tokens. Returns issue kind -> set of positive ids."""
    out = {}
    for image_id, tokens in labels.items():
        for token in tokens:
            kind = label_kind(token)
            if kind is not None:
                out.setdefault(kind, set()).add(image_id)
    return out


def evaluate_flags(flags: dict, labels: dict) -> EvaluationReport:
    """Score flag sets against labels.

    `flags` maps id -> set of flagged issue kinds, `labels` maps id -> set of
    perturbation tokens. Both must cover the same ids. A kind enters the
    report when it has at least one label positive or one flagged image; the
    macro average runs over the kinds present.
    """
    flag_ids, label_ids = set(flags), set(labels)
    if flag_ids != label_ids:
        raise IdMismatch(flag_ids - label_ids, label_ids - flag_ids)
    positives = positives_by_kind(labels)
    flagged = {}
    for image_id, kinds in flags.items():
        for kind in kinds:
            flagged.setdefault(kind, set()).add(image_id)
    kinds = sorted(set(positives) | set(flagged))
    per_kind = {
        kind: binary_f1(flagged.get(kind, set()), positives.get(kind, set()), flag_ids)
        for kind in kinds
    }
    macro = sum(m.f1 for m in per_kind.values()) / len(per_kind) if per_kind else 0.0
    return EvaluationReport(per_kind=per_kind, macro_f1=macro)
