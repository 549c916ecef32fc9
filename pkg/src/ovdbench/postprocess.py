"""Overlap-proportion suppression, cross-caption aggregation and greedy NMS.

The caption-level filter works in two stages. First boxes outside the size
window are dropped. Then a box is dropped when more than
``overlap_threshold`` of its own area lies inside a higher-scoring box that
survived the size stage. Unlike NMS, the comparison is asymmetric (a small
box inside a big one is removed, not the big one) and, by default, a box that
is itself suppressed still suppresses others.
"""
from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .datamodel import Prediction, group_predictions
from .geometry import Box, iou, overlap_ratio


@dataclass(frozen=True)
class SuppressionConfig:
    overlap_threshold: float = 0.8
    min_width: float = 0.0
    min_height: float = 0.0
    max_width: float = math.inf
    max_height: float = math.inf
    # NMS-style alternative: only boxes that end up kept may suppress
    only_kept_suppress: bool = False

    def __post_init__(self):
        if not 0 < self.overlap_threshold <= 1:
            raise ValueError(f"overlap_threshold must be in (0, 1], got {self.overlap_threshold}")
        if not (0 <= self.min_width <= self.max_width and 0 <= self.min_height <= self.max_height):
            raise ValueError("size limits must satisfy 0 <= min <= max in each dimension")

    def size_ok(self, box: Box) -> bool:
        too_small = box.width < self.min_width and box.height < self.min_height
        too_large = box.width > self.max_width or box.height > self.max_height
        return not (too_small or too_large)


# Retail-product and car presets: 80% overlap, (min W x H) - (max W x H).
PRESETS = {
    "rp": SuppressionConfig(0.8, 200, 200, 2250, 2000),
    "c": SuppressionConfig(0.8, 14, 14, 960, 960),
}


@dataclass(frozen=True)
class AggregatedBox:
    box: Box
    occurrence_count: int
    top_tokens: tuple[tuple[str, int], ...]
    max_score: float

    def to_dict(self) -> dict:
        return {
            "bbox": [float(v) for v in self.box.to_list()],
            "occurrence_count": self.occurrence_count,
            "top_tokens": [[t, n] for t, n in self.top_tokens],
            "max_score": float(self.max_score),
        }


def _by_score(preds: Sequence[Prediction]) -> list[int]:
    return sorted(range(len(preds)), key=lambda i: (-preds[i].score, i))


def suppress_caption(preds: Sequence[Prediction], cfg: SuppressionConfig) -> list[Prediction]:
    """Filter one caption's predictions on one image; output by descending score."""
    survivors = [p for p in preds if cfg.size_ok(p.box)]
    order = _by_score(survivors)
    kept: list[Prediction] = []
    for rank, i in enumerate(order):
        p = survivors[i]
        suppressors = kept if cfg.only_kept_suppress else (survivors[j] for j in order[:rank])
        if any(q.score > p.score and overlap_ratio(p.box, q.box) > cfg.overlap_threshold for q in suppressors):
            continue
        kept.append(p)
    return kept


def suppress_all(preds: Iterable[Prediction], cfg: SuppressionConfig) -> list[Prediction]:
    """Apply :func:`suppress_caption` to every (image, caption) group."""
    groups = group_predictions(preds)
    out = []
    for key in sorted(groups):
        out.extend(suppress_caption(groups[key], cfg))
    return out


def aggregate_image(filtered_per_caption: Mapping[int, Sequence[Prediction]]) -> list[AggregatedBox]:
    """Merge one image's per-caption outputs into boxes with occurrence counts.

    Boxes are the same box when their coordinates round to the same integer
    pixels. Result is ordered by occurrence count, then score, descending.
    """
    captions: dict[tuple, set] = defaultdict(set)
    tokens: dict[tuple, Counter] = defaultdict(Counter)
    best: dict[tuple, float] = {}
    for caption_id, preds in filtered_per_caption.items():
        for p in preds:
            key = p.box.rounded()
            captions[key].add(caption_id)
            tokens[key][p.token] += 1
            best[key] = max(best.get(key, -math.inf), p.score)
    out = []
    for key in captions:
        top = sorted(tokens[key].items(), key=lambda kv: (-kv[1], kv[0]))[:3]
        out.append(AggregatedBox(Box(*map(float, key)), len(captions[key]), tuple(top), best[key]))
    out.sort(key=lambda a: (-a.occurrence_count, -a.max_score, a.box.rounded()))
    return out


def aggregate_predictions(preds: Iterable[Prediction]) -> dict[int, list[AggregatedBox]]:
    per_image: dict[int, dict[int, list]] = defaultdict(lambda: defaultdict(list))
    for p in preds:
        per_image[p.image_id][p.caption_class_id].append(p)
    return {im: aggregate_image(per_image[im]) for im in sorted(per_image)}


def standard_nms(preds: Sequence[Prediction], iou_threshold: float) -> list[Prediction]:
    """Classic greedy NMS; suppressed boxes never suppress anything."""
    if not 0 < iou_threshold <= 1:
        raise ValueError(f"iou_threshold must be in (0, 1], got {iou_threshold}")
    remaining = _by_score(preds)
    keep = []
    while remaining:
        i = remaining.pop(0)
        keep.append(preds[i])
        remaining = [j for j in remaining if iou(preds[i].box, preds[j].box) <= iou_threshold]
    return keep
