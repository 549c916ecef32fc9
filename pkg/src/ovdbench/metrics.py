"""Precision/recall curves, 101-point interpolated AP and COCO-style mAP."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyDatasetError
from .matching import MatchResult, match_greedy

# 0.50:0.05:0.95, written out so the values are the shortest-repr doubles
COCO_IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
# recall grid i/100; plain division keeps it exactly comparable with tp/n_gt
RECALL_GRID = np.arange(101) / 100


@dataclass(frozen=True)
class PRCurve:
    recall: np.ndarray
    precision: np.ndarray
    n_gt: int
    scores: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.recall.tolist(), self.precision.tolist()))

    def __len__(self):
        return len(self.recall)


@dataclass
class EvalReport:
    """Evaluation result.

    ``per_class_ap[class_id]`` holds one AP per IoU threshold; ``counts``
    holds (TP, FP, FN) totals over all scored classes, one triple per
    threshold. ``extra`` carries protocol-specific values such as the
    base/novel split or the FG-OVD group outcomes.
    """

    per_class_ap: dict[int, list[float]]
    map: float
    counts: list[tuple[int, int, int]]
    protocol_tag: str
    iou_thresholds: tuple[float, ...] = COCO_IOU_THRESHOLDS
    extra: dict = field(default_factory=dict)
    curves: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol_tag,
            "map": float(self.map),
            "iou_thresholds": [float(t) for t in self.iou_thresholds],
            "per_class_ap": {str(c): [float(v) for v in aps] for c, aps in sorted(self.per_class_ap.items())},
            "counts": [
                {"iou_threshold": float(t), "tp": tp, "fp": fp, "fn": fn}
                for t, (tp, fp, fn) in zip(self.iou_thresholds, self.counts)
            ],
            "extra": self.extra,
        }

    def to_table(self, class_names: Optional[dict[int, str]] = None) -> str:
        """Fixed-width text table: one row per class, AP@50, AP@75 and mean AP."""
        thr = list(self.iou_thresholds)
        lines = [f"protocol: {self.protocol_tag}", f"{'class':>9} {'name':<28} {'AP50':>7} {'AP75':>7} {'AP':>7}"]
        for c, aps in sorted(self.per_class_ap.items()):
            name = (class_names or {}).get(c, "")[:28]
            ap50 = _at(thr, aps, 0.5)
            ap75 = _at(thr, aps, 0.75)
            lines.append(f"{c:>9} {name:<28} {ap50:>7} {ap75:>7} {np.mean(aps):7.4f}")
        lines.append(f"{'mAP':>9} {'':<28} {'':>7} {'':>7} {self.map:7.4f}")
        for key in ("map_base", "map_novel"):
            if self.extra.get(key) is not None:
                lines.append(f"{key:>9} {'':<28} {'':>7} {'':>7} {self.extra[key]:7.4f}")
        return "\n".join(lines) + "\n"


def _at(thresholds, aps, t):
    for th, v in zip(thresholds, aps):
        if abs(th - t) < 1e-12:
            return f"{v:7.4f}"
    return f"{'-':>7}"


def pr_curve(results: Sequence[MatchResult], n_gt: int) -> PRCurve:
    """Pool matched predictions over images into a precision/recall curve.

    Predictions are ranked by descending score, ties by ascending image id
    and then by index inside the image's prediction list.
    """
    entries = []
    for r in results:
        for pi, is_tp in r.tp_flags.items():
            entries.append((-r.scores[pi], r.image_id, pi, is_tp))
    entries.sort(key=lambda e: e[:3])
    if not entries:
        return PRCurve(np.zeros(0), np.zeros(0), n_gt)
    tp_flags = np.array([e[3] for e in entries], dtype=bool)
    tp = np.cumsum(tp_flags)
    fp = np.cumsum(~tp_flags)
    recall = tp / n_gt if n_gt > 0 else np.zeros(len(tp))
    precision = tp / (tp + fp)
    scores = np.array([-e[0] for e in entries])
    return PRCurve(recall, precision, n_gt, scores)


def average_precision(curve: PRCurve) -> float:
    """101-point interpolated AP.

    For every recall level r in {0, 0.01, ..., 1} take the best precision
    reached at recall >= r (0 if none) and average.
    """
    if len(curve) == 0:
        return 0.0
    # running max from the right gives the precision envelope
    envelope = np.maximum.accumulate(curve.precision[::-1])[::-1]
    idx = np.searchsorted(curve.recall, RECALL_GRID, side="left")
    interp = np.where(idx < len(envelope), envelope[np.minimum(idx, len(envelope) - 1)], 0.0)
    return float(interp.sum() / len(RECALL_GRID))


def _eval_class(ds, preds_by_image, class_id, thresholds):
    gts_by_image = {
        im: g for (im, c), g in ds.gt_by_image_class.items() if c == class_id
    }
    n_gt = sum(len(g) for g in gts_by_image.values())
    image_ids = sorted(set(gts_by_image) | set(preds_by_image))
    aps, counts, curves = [], [], []
    for t in thresholds:
        results = [
            match_greedy(preds_by_image.get(im, []), gts_by_image.get(im, []), t, image_id=im)
            for im in image_ids
        ]
        curve = pr_curve(results, n_gt)
        aps.append(average_precision(curve))
        tp = sum(len(r.matched_pairs) for r in results)
        fp = sum(len(r.false_positives) for r in results)
        fn = sum(len(r.false_negatives) for r in results)
        counts.append((tp, fp, fn))
        curves.append(curve)
    return aps, counts, curves


def coco_map(
    ds,
    preds,
    iou_thresholds: Sequence[float] = COCO_IOU_THRESHOLDS,
    class_ids: Optional[Sequence[int]] = None,
    protocol_tag: str = "coco",
    jobs: int = 1,
) -> EvalReport:
    """COCO-style mAP with predictions classed by ``caption_class_id``.

    AP is computed for each (class, threshold) cell; classes without ground
    truth are left out of the mean. The result does not depend on ``jobs``.

    Raises:
        EmptyDatasetError: the dataset has no ground-truth boxes at all.
    """
    thresholds = tuple(float(t) for t in iou_thresholds)
    if not thresholds:
        raise ValueError("at least one IoU threshold is required")
    for t in thresholds:
        if not 0 < t <= 1:
            raise ValueError(f"IoU threshold {t} outside (0, 1]")
    if not ds.ground_truth:
        raise EmptyDatasetError("dataset has no ground-truth boxes")

    gt_classes = {g.class_id for g in ds.ground_truth}
    wanted = sorted(gt_classes if class_ids is None else set(class_ids) & gt_classes)
    by_class: dict[int, dict[int, list]] = {c: {} for c in wanted}
    for p in preds:
        cell = by_class.get(p.caption_class_id)
        if cell is not None:
            cell.setdefault(p.image_id, []).append(p)

    def work(c):
        return _eval_class(ds, by_class[c], c, thresholds)

    if jobs > 1 and len(wanted) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, wanted))
    else:
        results = [work(c) for c in wanted]

    per_class = {c: r[0] for c, r in zip(wanted, results)}
    curves = {(c, t): curve for c, r in zip(wanted, results) for t, curve in zip(thresholds, r[2])}
    counts = [
        tuple(sum(r[1][k][j] for r in results) for j in range(3)) for k in range(len(thresholds))
    ]
    if per_class:
        table = np.array([per_class[c] for c in wanted])
        m = float(np.mean(table.mean(axis=0)))
    else:
        m = 0.0
    return EvalReport(per_class, m, counts, protocol_tag, thresholds, curves=curves)


def mean_over(report: EvalReport, class_ids) -> Optional[float]:
    """mAP restricted to ``class_ids`` (those with ground truth); None if empty."""
    rows = [report.per_class_ap[c] for c in class_ids if c in report.per_class_ap]
    if not rows:
        return None
    return float(np.mean(np.array(rows).mean(axis=0)))
