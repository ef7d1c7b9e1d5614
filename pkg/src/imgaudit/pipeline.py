"""Orchestration: score a dataset, pick thresholds, fill flags."""

from __future__ import annotations

from . import detectors, thresholding
from .config import AuditConfig
from .errors import ZeroVarianceClass


def decide_threshold(method: str, scores: dict, kind: str, config: AuditConfig):
    """Run one threshold method over a kind's score map.

    Returns (decision, error_message); exactly one is None. The minimum-error
    method's zero-variance failure is reported, not raised, so an audit can
    finish the remaining kinds.
    """
    values = [scores[i] for i in sorted(scores)]
    try:
        if method == thresholding.FIXED:
            decision = thresholding.fixed_threshold_baseline(
                kind, config.fixed_thresholds.get(kind)
            )
        elif method == thresholding.GMM:
            decision, _ = thresholding.threshold_gmm(values)
        else:
            hist = thresholding.build_score_histogram(values)
            if method == thresholding.OTSU:
                decision = thresholding.threshold_otsu(hist)
            elif method == thresholding.MET:
                decision = thresholding.threshold_met(hist)
            elif method == thresholding.LI:
                decision = thresholding.threshold_li(hist)
            elif method == thresholding.MAX_ENTROPY:
                decision = thresholding.threshold_max_entropy(hist)
            elif method == thresholding.GHT:
                decision = thresholding.threshold_ght(hist, config.ght)
            elif method == thresholding.MVE:
                decision = thresholding.threshold_mve(hist, config.mve_window)
            else:
                raise ValueError(f"unknown threshold method {method!r}")
    except ZeroVarianceClass as exc:
        return None, str(exc)
    return decision, None


def apply_thresholds(table: detectors.ScoreTable, config: AuditConfig) -> dict:
    """Choose a threshold per selected thresholded kind and fill the flags.

    Returns kind -> ThresholdDecision (or {"error": ...} when a method could
    not run).
    """
    decisions = {}
    for kind in detectors.THRESHOLDED_KINDS:
        if kind not in set(config.issues):
            continue
        scores = {
            image_id: row[kind]
            for image_id, row in table.rows.items()
            if kind in row
        }
        if not scores:
            continue
        method = config.method_for(kind)
        decision, error = decide_threshold(method, scores, kind, config)
        if error is not None:
            decisions[kind] = {"method": method, "error": error}
            continue
        decisions[kind] = decision
        for image_id in thresholding.flag_by_threshold(scores, decision, kind):
            table.flags[image_id].add(kind)
    return decisions


def run_audit(records, config: AuditConfig, invalid=None):
    """Full audit: scores, thresholds, flags, duplicate clusters.

    Returns (table, decisions). `invalid` carries (id, reason) pairs from the
    decode stage straight into the table.
    """
    table = detectors.audit_dataset(records, config)
    if invalid:
        table.invalid.extend(invalid)
    decisions = apply_thresholds(table, config)
    return table, decisions
