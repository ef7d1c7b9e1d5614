"""imgaudit: image dataset quality auditing.

Scores images for nine quality-issue types, selects flagging thresholds
automatically from score histograms, clusters exact and near duplicates,
and ships a perturbation lab plus F1 harness for benchmarking detection
quality on labeled synthetic degradations.
"""

from . import bench, dedup, detectors, evaluation, files, imaging, perturb, pipeline, synth, thresholding
from .config import AuditConfig
from .detectors import ISSUE_KINDS, ScoreTable, audit_dataset
from .imaging import ImageRecord, decode_image, to_luma
from .perturb import PerturbationSpec, apply_contamination
from .thresholding import Histogram256, ThresholdDecision, build_score_histogram

__version__ = "0.1.0"

__all__ = [
    "AuditConfig",
    "Histogram256",
    "ISSUE_KINDS",
    "ImageRecord",
    "PerturbationSpec",
    "ScoreTable",
    "ThresholdDecision",
    "apply_contamination",
    "audit_dataset",
    "bench",
    "build_score_histogram",
    "decode_image",
    "dedup",
    "detectors",
    "evaluation",
    "files",
    "imaging",
    "perturb",
    "pipeline",
    "synth",
    "thresholding",
    "to_luma",
    "__version__",
]
