"""Command-line front end.

Subcommands: audit, perturb, evaluate, bench. A JSON config file mirrors
every flag; flags override file values. Exit codes: 0 success, 1
usage/config error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bench, detectors, evaluation, files, perturb, pipeline, thresholding
from .config import AuditConfig
from .errors import ConfigError, ImgAuditError


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_method_map(text: str):
    """Either one method for all kinds ("LI") or per-kind pairs
    ("DARK=LI,BLURRY=OTSU")."""
    text = text.strip()
    if "=" not in text:
        method = text.upper()
        if method not in thresholding.METHODS:
            raise ConfigError(f"unknown threshold method {text!r}")
        return method, {}
    methods = {}
    for item in text.split(","):
        kind, _, method = item.partition("=")
        kind, method = kind.strip().upper(), method.strip().upper()
        if kind not in detectors.THRESHOLDED_KINDS:
            raise ConfigError(f"cannot assign a threshold method to {kind!r}")
        if method not in thresholding.METHODS:
            raise ConfigError(f"unknown threshold method {method!r}")
        methods[kind] = method
    return None, methods


def _build_config(args) -> AuditConfig:
    data = {}
    if getattr(args, "config", None):
        data = AuditConfig.from_file(args.config).to_dict()
    if getattr(args, "issues", None):
        kinds = [k.strip().upper() for k in args.issues.split(",") if k.strip()]
        data["issues"] = kinds
    if getattr(args, "method", None):
        default, methods = _parse_method_map(args.method)
        if default:
            data["default_method"] = default
        if methods:
            data["methods"] = {**data.get("methods", {}), **methods}
    if getattr(args, "light_percentile", None) is not None:
        data["light_percentile"] = args.light_percentile
    if getattr(args, "dedup_cutoff", None) is not None:
        data["hamming_cutoff"] = args.dedup_cutoff
    if getattr(args, "semantic_cutoff", None) is not None:
        data["similarity_cutoff"] = args.semantic_cutoff
    if getattr(args, "luma", None):
        data["luma_formula"] = args.luma.upper()
    if getattr(args, "provider", None):
        data["provider"] = args.provider
    if getattr(args, "workers", None) is not None:
        data["workers"] = args.workers
    if getattr(args, "seed", None) is not None:
        data["seed"] = args.seed
    return AuditConfig.from_dict(data)


def cmd_audit(dataset_dir, config: AuditConfig, out_dir) -> int:
    records, invalid = files.load_directory(dataset_dir)
    if not records:
        print(f"error: no decodable images under {dataset_dir}", file=sys.stderr)
        return 2
    table, decisions = pipeline.run_audit(records, config, invalid)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files.write_report_csv(table, config.issues, out / "report.csv")
    files.write_summary_json(table, decisions, config.issues, out / "summary.json")
    files.write_clusters_json(table.clusters, out / "clusters.json")
    flagged = sum(1 for image_id in table.rows if table.flags[image_id])
    print(f"audited {len(table.rows)} images ({len(invalid)} invalid); "
          f"{flagged} flagged; reports in {out}")
    return 0


def _read_spec_file(path):
    try:
        with open(path, "r", encoding="utf-8") as handle:
            raw = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read spec file {path}: {exc}") from exc
    if not isinstance(raw, list):
        raise ConfigError("spec file must hold a JSON list of perturbation specs")
    specs = []
    for index, item in enumerate(raw):
        try:
            specs.append(perturb.PerturbationSpec.from_dict(item))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"spec entry {index}: {exc}") from exc
    return specs


def cmd_perturb(dataset_dir, spec_file, out_dir) -> int:
    specs = _read_spec_file(spec_file)
    records, invalid = files.load_directory(dataset_dir)
    if not records:
        print(f"error: no decodable images under {dataset_dir}", file=sys.stderr)
        return 2
    labeled = perturb.apply_contamination(records, specs)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files.write_images(labeled.images, out)
    files.write_labels_csv(labeled.labels, out / "labels.csv")
    files.write_manifest(labeled.spec_manifest, out / "manifest.json")
    labeled_count = len(labeled.positive_ids())
    print(f"wrote {len(labeled.images)} images ({labeled_count} labeled) to {out}")
    return 0


def cmd_evaluate(report_path, labels_path) -> int:
    _, flags = files.read_report_csv(report_path)
    labels = files.read_labels_csv(labels_path)
    report = evaluation.evaluate_flags(flags, labels)
    payload = {
        "per_kind": {
            kind: {
                "tp": m.tp,
                "fp": m.fp,
                "fn": m.fn,
                "precision": m.precision,
                "recall": m.recall,
                "f1": m.f1,
            }
            for kind, m in report.per_kind.items()
        },
        "macro_f1": report.macro_f1,
    }
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def cmd_bench(suite, base_dir, out_dir, seed, config: AuditConfig,
              do_preclean: bool = False) -> int:
    records, _ = files.load_directory(base_dir)
    if not records:
        print(f"error: no decodable images under {base_dir}", file=sys.stderr)
        return 2
    bench.run_suite(suite, records, out_dir, seed=seed, config=config,
                    do_preclean=do_preclean)
    print(f"bench suite {suite!r} written to {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="imgaudit",
                     description="Image dataset quality auditing toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_audit = sub.add_parser("audit", help="score a directory and write reports")
    p_audit.add_argument("directory")
    p_audit.add_argument("--issues", help="comma-separated issue kinds (default: all)")
    p_audit.add_argument("--method",
                         help="threshold method, or per-kind map like DARK=LI,BLURRY=OTSU")
    p_audit.add_argument("--light-percentile", type=int, dest="light_percentile")
    p_audit.add_argument("--dedup-cutoff", type=int, dest="dedup_cutoff")
    p_audit.add_argument("--semantic-cutoff", type=float, dest="semantic_cutoff")
    p_audit.add_argument("--luma", help="luma formula (HSP, BT709, BT601, ...)")
    p_audit.add_argument("--provider", help="embedding provider name")
    p_audit.add_argument("--workers", type=int)
    p_audit.add_argument("--config", help="JSON config file; flags override it")
    p_audit.add_argument("--out", default="audit-out")

    p_perturb = sub.add_parser("perturb", help="write a labeled degraded dataset")
    p_perturb.add_argument("directory")
    p_perturb.add_argument("--spec", required=True)
    p_perturb.add_argument("--out", required=True)

    p_eval = sub.add_parser("evaluate", help="F1 of report flags vs labels")
    p_eval.add_argument("--report", required=True)
    p_eval.add_argument("--labels", required=True)

    p_bench = sub.add_parser("bench", help="run a benchmark suite")
    p_bench.add_argument("--suite", required=True, choices=bench.SUITES)
    p_bench.add_argument("--base", required=True)
    p_bench.add_argument("--out", required=True)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--preclean", action="store_true",
                         help="drop fixed-threshold flags from the base set first")
    p_bench.add_argument("--config", help="JSON config file; flags override it")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "audit":
            return cmd_audit(args.directory, _build_config(args), args.out)
        if args.command == "perturb":
            return cmd_perturb(args.directory, args.spec, args.out)
        if args.command == "evaluate":
            return cmd_evaluate(args.report, args.labels)
        if args.command == "bench":
            return cmd_bench(args.suite, args.base, args.out, args.seed,
                             _build_config(args), args.preclean)
        parser.error(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except ImgAuditError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
