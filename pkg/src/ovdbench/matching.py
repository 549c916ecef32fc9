"""Greedy prediction to ground-truth assignment (COCO style, no crowd regions)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .geometry import iou


@dataclass(frozen=True)
class MatchResult:
    """Outcome of matching one (image, class) cell.

    ``scores`` is indexed like the prediction list that was matched so the
    result can be pooled into a precision/recall curve later.
    """

    matched_pairs: tuple[tuple[int, int, float], ...]
    false_positives: tuple[int, ...]
    false_negatives: tuple[int, ...]
    iou_threshold: float
    scores: tuple[float, ...] = ()
    image_id: int = 0

    @property
    def tp_flags(self) -> dict[int, bool]:
        flags = {p: True for p, _, _ in self.matched_pairs}
        flags.update({p: False for p in self.false_positives})
        return flags


def match_greedy(preds: Sequence, gts: Sequence, iou_threshold: float, image_id: int = 0) -> MatchResult:
    """Assign predictions to ground truth greedily by descending score.

    Each prediction (ties broken by input index) takes the still-unmatched
    ground truth box with the highest IoU, lowest index first on IoU ties,
    provided that IoU reaches ``iou_threshold``.

    Args:
        preds: objects with ``.box`` and ``.score``, all from one image/class.
        gts: objects with ``.box`` from the same image/class.
        iou_threshold: in (0, 1].
    """
    if not 0 < iou_threshold <= 1:
        raise ValueError(f"iou_threshold must be in (0, 1], got {iou_threshold}")
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].score, i))
    taken = [False] * len(gts)
    pairs, fps = [], []
    for pi in order:
        best, best_iou = -1, iou_threshold
        for gi, g in enumerate(gts):
            if taken[gi]:
                continue
            v = iou(preds[pi].box, g.box)
            if v > best_iou or (best < 0 and v >= best_iou):
                best, best_iou = gi, v
        if best >= 0:
            taken[best] = True
            pairs.append((pi, best, best_iou))
        else:
            fps.append(pi)
    fns = [gi for gi in range(len(gts)) if not taken[gi]]
    return MatchResult(
        matched_pairs=tuple(pairs),
        false_positives=tuple(fps),
        false_negatives=tuple(fns),
        iou_threshold=iou_threshold,
        scores=tuple(float(p.score) for p in preds),
        image_id=image_id,
    )
