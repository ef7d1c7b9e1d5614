"""Dataset and report file handling.

All writers are deterministic: rows sort by image id, floats serialize via
repr, and JSON uses sorted keys, so identical inputs give identical bytes.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
from PIL import Image

from . import detectors
from .errors import DecodeError
from .imaging import LUMA, ImageRecord, decode_image

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp"}


def load_directory(path):
    """Decode every supported image under a directory (sorted, recursive).

    Returns (records, invalid) where invalid is a list of (id, reason) pairs
    for files that failed to decode.
    """
    root = Path(path)
    files = sorted(p for p in root.rglob("*") if p.suffix.lower() in IMAGE_EXTENSIONS)
    records, invalid = [], []
    seen = set()
    for file_path in files:
        rel = file_path.relative_to(root)
        image_id = str(rel.with_suffix("")).replace("\\", "/")
        if image_id in seen:
            image_id = str(rel).replace("\\", "/")
        seen.add(image_id)
        try:
            data = file_path.read_bytes()
            records.append(decode_image(data, image_id, source_path=str(file_path)))
        except (DecodeError, OSError) as exc:
            reason = exc.reason if isinstance(exc, DecodeError) else str(exc)
            invalid.append((image_id, reason))
    return records, invalid


def write_images(records, out_dir):
    """Write records as PNG files named <id>.png."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for record in records:
        mode = "L" if record.mode == LUMA else "RGB"
        path = out / f"{record.id}.png"
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(record.pixels, mode=mode).save(path, format="PNG")


def write_labels_csv(labels: dict, path):
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["id", "kinds"])
        for image_id in sorted(labels):
            writer.writerow([image_id, ";".join(sorted(labels[image_id]))])


def read_labels_csv(path) -> dict:
    labels = {}
    with open(path, "r", encoding="utf-8", newline="") as handle:
        for row in csv.DictReader(handle):
            tokens = {t for t in row["kinds"].split(";") if t}
            labels[row["id"]] = tokens
    return labels


def write_manifest(manifest: dict, path):
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")


def report_columns(kinds) -> list:
    ordered = [k for k in detectors.ISSUE_KINDS if k in set(kinds)]
    columns = ["id"]
    for kind in ordered:
        columns.append(f"score:{kind}")
    for kind in ordered:
        columns.append(f"flag:{kind}")
    return columns


def write_report_csv(table, kinds, path):
    """One row per image: id, score:<kind>..., flag:<kind>... columns."""
    ordered = [k for k in detectors.ISSUE_KINDS if k in set(kinds)]
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(report_columns(ordered))
        for image_id in table.ids():
            row = [image_id]
            scores = table.rows[image_id]
            for kind in ordered:
                value = scores.get(kind)
                row.append("" if value is None else repr(float(value)))
            for kind in ordered:
                row.append("1" if kind in table.flags[image_id] else "0")
            writer.writerow(row)


def read_report_csv(path):
    """Returns (scores, flags): id -> {kind: float} and id -> set of kinds."""
    scores, flags = {}, {}
    with open(path, "r", encoding="utf-8", newline="") as handle:
        for row in csv.DictReader(handle):
            image_id = row["id"]
            scores[image_id] = {}
            flags[image_id] = set()
            for column, value in row.items():
                if column.startswith("score:") and value != "":
                    scores[image_id][column[len("score:"):]] = float(value)
                elif column.startswith("flag:") and value == "1":
                    flags[image_id].add(column[len("flag:"):])
    return scores, flags


def write_summary_json(table, decisions: dict, kinds, path, extra=None):
    """Aggregate counts, chosen thresholds, and invalid files."""
    ordered = [k for k in detectors.ISSUE_KINDS if k in set(kinds)]
    flag_counts = {
        kind: sum(1 for image_id in table.rows if kind in table.flags[image_id])
        for kind in ordered
    }
    thresholds = {}
    for kind, decision in decisions.items():
        if decision is None:
            thresholds[kind] = None
        elif isinstance(decision, dict):
            thresholds[kind] = decision
        else:
            thresholds[kind] = {
                "method": decision.method,
                "threshold": decision.threshold,
                "diagnostics": _json_safe(decision.diagnostics),
            }
    summary = {
        "images": len(table.rows),
        "invalid": [{"id": i, "reason": r} for i, r in table.invalid],
        "flag_counts": flag_counts,
        "thresholds": thresholds,
    }
    if table.size_stats is not None:
        summary["size_stats"] = {
            "q1": table.size_stats.q1,
            "q3": table.size_stats.q3,
            "iqr_factor": table.size_stats.iqr_factor,
            "min_threshold": table.size_stats.min_threshold,
            "max_threshold": table.size_stats.max_threshold,
            "midpoint": table.size_stats.midpoint,
        }
    if extra:
        summary.update(extra)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(summary, handle, indent=2, sort_keys=True)
        handle.write("\n")


def write_clusters_json(cluster_sets: dict, path):
    """Duplicate groups with provenance, keyed by issue kind."""
    payload = {}
    for kind, cluster_set in sorted(cluster_sets.items()):
        payload[kind] = [
            {"members": list(c.members), "provenance": c.provenance}
            for c in cluster_set.clusters
        ]
        if cluster_set.failed_ids:
            payload[f"{kind}:failed"] = list(cluster_set.failed_ids)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _json_safe(value):
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    return value
