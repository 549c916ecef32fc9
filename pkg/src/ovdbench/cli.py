"""``ovdbench`` command line.

Subcommands: evaluate, postprocess, split, stats, synth, validate. Every output
file embeds a run manifest (command, flags, input digests, version, seed).
Exit codes: 0 success, 2 invalid input or configuration, 1 internal error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .datamodel import (
    load_dataset,
    load_predictions,
    save_dataset,
    save_predictions,
    read_json,
    write_canonical,
)
from .datasettools import DEFAULT_GAP, NEU_C_COUNTS, class_distribution, leakage_violations, split, temporal_clusters
from .errors import ValidationError
from .postprocess import PRESETS, SuppressionConfig, aggregate_predictions, suppress_all
from .protocols import (
    ProtocolConfig,
    eval_3fovd,
    eval_fgovd,
    eval_ovvg,
    eval_supervised,
    fgovd_from_dict,
    fgovd_to_dict,
    ovvg_from_dict,
    ovvg_to_dict,
)
from .synth import (
    MockDetectorConfig,
    SceneSpec,
    generate_dataset,
    make_fgovd_groups,
    make_grounding_queries,
    mock_detect_all,
    perfect_fgovd_scores,
)

log = logging.getLogger("ovdbench")

PROTOCOLS = {"supervised": "supervised", "3fovd": "threef_ovd", "fgovd": "fg_ovd", "ovvg": "ov_vg"}
# flags that must not change output bytes
_NON_SEMANTIC = {"jobs", "out", "func"}


# -- argument helpers ----------------------------------------------------------


def parse_size(text: str) -> tuple[float, float]:
    try:
        w, h = text.lower().split("x")
        return float(w), float(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None


def parse_ratios(text: str) -> tuple[float, float, float]:
    try:
        parts = [float(p) for p in text.split(":")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a:b:c, got {text!r}") from None
    if len(parts) != 3 or any(p < 0 for p in parts) or sum(parts) <= 0:
        raise argparse.ArgumentTypeError(f"expected three non-negative numbers a:b:c, got {text!r}")
    total = sum(parts)
    return tuple(p / total for p in parts)


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def run_manifest(args: argparse.Namespace, inputs: list) -> dict:
    flags = {k: v for k, v in sorted(vars(args).items()) if k not in _NON_SEMANTIC and k != "command"}
    flags = json.loads(json.dumps(flags, default=str))
    return {
        "command": args.command,
        "flags": flags,
        "inputs": {str(p): file_digest(p) for p in inputs if p is not None},
        "tool_version": __version__,
        "seed": getattr(args, "seed", None),
    }


def suppression_from_args(args) -> SuppressionConfig | None:
    explicit = any(getattr(args, k, None) is not None for k in ("overlap_threshold", "min_size", "max_size"))
    if args.preset is None and not explicit:
        return None
    base = PRESETS[args.preset] if args.preset else SuppressionConfig()
    min_w, min_h = args.min_size if args.min_size else (base.min_width, base.min_height)
    max_w, max_h = args.max_size if args.max_size else (base.max_width, base.max_height)
    thr = args.overlap_threshold if args.overlap_threshold is not None else base.overlap_threshold
    try:
        return SuppressionConfig(thr, min_w, min_h, max_w, max_h)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require_file(path, flag):
    if path is None:
        raise ValidationError(f"{flag} is required")
    if not Path(path).is_file():
        raise ValidationError(f"{flag}: file not found: {path}")


# -- commands ------------------------------------------------------------------


def cmd_evaluate(args) -> int:
    _require_file(args.dataset, "--dataset")
    _require_file(args.predictions, "--predictions")
    ds = load_dataset(args.dataset)
    variant = PROTOCOLS[args.protocol]
    cfg = ProtocolConfig(
        variant=variant,
        suppression=suppression_from_args(args),
        strict_tokens=args.strict_tokens,
        grounding_iou_threshold=args.iou_threshold,
        vocabularies=args.vocabularies,
        jobs=args.jobs,
    )
    if variant == "supervised":
        report = eval_supervised(ds, load_predictions(args.predictions, ds), cfg)
    elif variant == "threef_ovd":
        report = eval_3fovd(ds, load_predictions(args.predictions, ds), cfg)
    elif variant == "fg_ovd":
        groups, scores = fgovd_from_dict(read_json(args.predictions), ds, source=args.predictions)
        report = eval_fgovd(ds, groups, scores, cfg)
    else:
        queries, answers = ovvg_from_dict(read_json(args.predictions), ds, source=args.predictions)
        report = eval_ovvg(queries, answers, cfg.grounding_iou_threshold)

    manifest = run_manifest(args, [args.dataset, args.predictions])
    out = _out_dir(args)
    data = report.to_dict()
    data["manifest"] = manifest
    write_canonical(out / "report.json", data)
    if hasattr(report, "per_class_ap"):
        table = report.to_table({c.class_id: c.name for c in ds.classes})
    else:
        table = report.to_table()
    header = "# manifest: " + json.dumps(manifest, sort_keys=True) + "\n"
    (out / "report.txt").write_text(header + table, encoding="utf-8")
    sys.stdout.write(table)
    return 0


def cmd_postprocess(args) -> int:
    _require_file(args.dataset, "--dataset")
    _require_file(args.predictions, "--predictions")
    cfg = suppression_from_args(args)
    if cfg is None:
        raise ValidationError("postprocess needs --preset or explicit --overlap-threshold/--min-size/--max-size")
    ds = load_dataset(args.dataset)
    preds = load_predictions(args.predictions, ds)
    kept = suppress_all(preds, cfg)
    removed = len(preds) - len(kept)
    manifest = run_manifest(args, [args.dataset, args.predictions])
    out = _out_dir(args)
    save_predictions(kept, out / "predictions.filtered.json", manifest=manifest)
    aggregated = aggregate_predictions(kept)
    write_canonical(
        out / "aggregated.json",
        {
            "images": [
                {"image_id": im, "boxes": [a.to_dict() for a in boxes]} for im, boxes in aggregated.items()
            ],
            "manifest": manifest,
        },
    )
    print(f"removed {removed} of {len(preds)} boxes")
    return 0


def cmd_split(args) -> int:
    _require_file(args.dataset, "--dataset")
    ds = load_dataset(args.dataset)
    clusters = temporal_clusters(ds.images, args.gap)
    assignment = split(clusters, args.ratios, args.seed)
    violations = leakage_violations(ds.images, assignment, args.gap)
    data = assignment.to_dict(args.gap, args.seed)
    data["manifest"] = run_manifest(args, [args.dataset])
    write_canonical(_out_dir(args) / "splits.json", data)
    for name, got, want in zip(("train", "val", "test"), assignment.achieved_ratios, args.ratios):
        print(f"{name:>5}: achieved {got:.4f}  target {want:.4f}")
    print(f"clusters: {assignment.cluster_count}")
    print(f"leakage check: {'pass' if not violations else f'FAIL ({len(violations)} pairs)'}")
    return 0 if not violations else 1


def cmd_stats(args) -> int:
    _require_file(args.dataset, "--dataset")
    ds = load_dataset(args.dataset)
    buf = io.StringIO()
    buf.write("# manifest: " + json.dumps(run_manifest(args, [args.dataset]), sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["class_id", "name", "image_count"])
    for class_id, n in class_distribution(ds):
        writer.writerow([class_id, ds.class_by_id[class_id].name, n])
    (_out_dir(args) / "class_distribution.csv").write_text(buf.getvalue(), encoding="utf-8")
    sys.stdout.write(buf.getvalue())
    return 0


SYNTH_PROFILES = {
    # vehicle-like: 1080p frames, small to medium objects
    "c": dict(image_size=(1920, 1080), object_size=(40, 400)),
    # retail-like: 4032x3024 photos, large objects
    "rp": dict(image_size=(4032, 3024), object_size=(250, 1500)),
}


def cmd_synth(args) -> int:
    try:
        spec = SceneSpec(
            n_images=args.images,
            n_classes=args.classes,
            n_sequences=args.sequences,
            objects_per_image=(args.min_objects, args.max_objects),
            **SYNTH_PROFILES[args.profile],
        )
        cfg = MockDetectorConfig(
            localization_jitter=args.jitter,
            miss_rate=args.miss_rate,
            component_fp_rate=args.component_rate,
            unk_rate=args.unk_rate,
            distractor_rate=args.distractor_rate,
            fp_score_mode=args.fp_score_mode,
            fp_score_range=(0.5, 0.95) if args.fp_score_mode == "relative" else (0.1, 0.4),
            seed=args.seed,
        )
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    ds = generate_dataset(spec, seed=args.seed)
    preds, traces = mock_detect_all(ds, cfg)
    manifest = run_manifest(args, [])
    out = _out_dir(args)
    save_dataset(ds, out / "dataset.json", manifest=manifest)
    save_predictions(preds, out / "predictions.json", manifest=manifest)
    # reference inputs for the caption-group and grounding protocols
    groups = make_fgovd_groups(ds, seed=args.seed)
    fg = fgovd_to_dict(groups, perfect_fgovd_scores(ds, groups))
    fg["manifest"] = manifest
    write_canonical(out / "fgovd.json", fg)
    queries = make_grounding_queries(ds)
    vg = ovvg_to_dict(queries, {i: q.gt_box for i, q in enumerate(queries)})
    vg["manifest"] = manifest
    write_canonical(out / "ovvg.json", vg)
    n_comp = sum(len(t.components) for t in traces.values())
    write_canonical(
        out / "synth_trace.json",
        {
            "injected_components": n_comp,
            "components_with_parent": sum(1 for t in traces.values() for _, p in t.components if p is not None),
            "distractors": sum(len(t.distractors) for t in traces.values()),
            "predictions": len(preds),
            "manifest": manifest,
        },
    )
    print(f"{len(ds.images)} images, {len(ds.classes)} classes, {len(ds.ground_truth)} boxes, "
          f"{len(preds)} predictions ({n_comp} injected components)")
    return 0


def cmd_validate(args) -> int:
    _require_file(args.dataset, "--dataset")
    ds = load_dataset(args.dataset)
    print(f"dataset ok: {len(ds.images)} images, {len(ds.classes)} classes, {len(ds.ground_truth)} boxes")
    if args.predictions:
        _require_file(args.predictions, "--predictions")
        preds = load_predictions(args.predictions, ds)
        print(f"predictions ok: {len(preds)}")
    return 0


# -- parser --------------------------------------------------------------------


def _add_suppression_flags(p):
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--overlap-threshold", type=float)
    p.add_argument("--min-size", type=parse_size, metavar="WxH")
    p.add_argument("--max-size", type=parse_size, metavar="WxH")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ovdbench", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, dataset=True):
        if dataset:
            p.add_argument("--dataset", required=True)
        p.add_argument("--out", default=".")
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("evaluate", help="score predictions under a protocol")
    common(p)
    p.add_argument("--predictions", required=True)
    p.add_argument("--protocol", required=True, choices=sorted(PROTOCOLS))
    p.add_argument("--strict-tokens", action="store_true")
    p.add_argument("--iou-threshold", type=float, default=0.5, help="OV-VG hit threshold")
    p.add_argument("--vocabularies", type=int, default=1, help="FG-OVD vocabulary count")
    _add_suppression_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("postprocess", help="per-caption overlap suppression and aggregation")
    common(p)
    p.add_argument("--predictions", required=True)
    _add_suppression_flags(p)
    p.set_defaults(func=cmd_postprocess)

    p = sub.add_parser("split", help="leakage-safe train/val/test split")
    common(p)
    p.add_argument("--ratios", type=parse_ratios, default=parse_ratios(":".join(map(str, NEU_C_COUNTS))))
    p.add_argument("--gap", type=float, default=DEFAULT_GAP)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("stats", help="class distribution as CSV")
    common(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("synth", help="synthetic dataset and mock detections")
    common(p, dataset=False)
    p.add_argument("--profile", choices=sorted(SYNTH_PROFILES), default="c")
    p.add_argument("--images", type=int, default=20)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--sequences", type=int, default=0)
    p.add_argument("--min-objects", type=int, default=1)
    p.add_argument("--max-objects", type=int, default=5)
    p.add_argument("--jitter", type=float, default=0.0)
    p.add_argument("--miss-rate", type=float, default=0.0)
    p.add_argument("--component-rate", type=float, default=0.0)
    p.add_argument("--unk-rate", type=float, default=0.0)
    p.add_argument("--distractor-rate", type=float, default=0.0)
    p.add_argument("--fp-score-mode", choices=("absolute", "relative"), default="absolute")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("validate", help="check dataset (and predictions) files")
    common(p)
    p.add_argument("--predictions")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("OVDBENCH_LOG", "WARNING").upper()
    logging.basicConfig(
        level=level if isinstance(logging.getLevelName(level), int) else "WARNING",
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        log.exception("internal error")
        return 1


if __name__ == "__main__":
    sys.exit(main())
