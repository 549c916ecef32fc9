"""Leakage-safe train/val/test splitting and class statistics.

Frames of one video sequence taken within ``gap`` seconds of each other must
land in the same split. Chaining that pairwise rule gives temporal clusters,
which are then assigned to splits whole.
"""
from __future__ import annotations

import logging
import random
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

from .datamodel import Dataset, ImageRecord
from .errors import InfeasibleError

log = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "val", "test")
DEFAULT_GAP = 5.0
# NEU-171K-C image counts for train:val:test
NEU_C_COUNTS = (64658, 12903, 11802)
RATIO_TOLERANCE = 0.02


def ratios_from_counts(counts: Sequence[float]) -> tuple[float, float, float]:
    total = float(sum(counts))
    return tuple(c / total for c in counts)


NEU_C_RATIOS = ratios_from_counts(NEU_C_COUNTS)


@dataclass(frozen=True)
class SplitAssignment:
    assignment: dict[int, str]
    achieved_ratios: tuple[float, float, float]
    cluster_count: int

    def members(self, name: str) -> list[int]:
        return sorted(i for i, s in self.assignment.items() if s == name)

    def sizes(self) -> tuple[int, int, int]:
        return tuple(len(self.members(n)) for n in SPLIT_NAMES)

    def to_dict(self, gap: float, seed: int) -> dict:
        out = {name: self.members(name) for name in SPLIT_NAMES}
        out["gap_seconds"] = float(gap)
        out["seed"] = seed
        return out


def temporal_clusters(images: Iterable[ImageRecord], gap: float = DEFAULT_GAP) -> list[tuple[int, ...]]:
    """Group frames connected by chains of gaps <= ``gap`` within a sequence.

    Images without a sequence are singletons. Clusters are returned sorted by
    their smallest image id, members sorted ascending.
    """
    if gap <= 0:
        raise ValueError("gap must be positive")
    by_seq = defaultdict(list)
    clusters = []
    for im in images:
        if im.sequence_id is None:
            clusters.append((im.image_id,))
        else:
            by_seq[im.sequence_id].append(im)
    for seq in by_seq.values():
        seq.sort(key=lambda im: (im.timestamp, im.image_id))
        current = [seq[0].image_id]
        for prev, im in zip(seq, seq[1:]):
            if im.timestamp - prev.timestamp <= gap:
                current.append(im.image_id)
            else:
                clusters.append(tuple(sorted(current)))
                current = [im.image_id]
        clusters.append(tuple(sorted(current)))
    clusters.sort()
    return clusters


def split(
    clusters: Sequence[Sequence[int]],
    target_ratios: Sequence[float],
    seed: int = 0,
    tolerance: float = RATIO_TOLERANCE,
) -> SplitAssignment:
    """Assign clusters whole to train/val/test, largest cluster first.

    Each cluster goes to the split with the largest remaining deficit
    (target count minus images already assigned; lowest split index on ties).
    Equal-size clusters are visited in a seed-shuffled order. Missing the
    targets by more than ``tolerance`` only logs a warning.

    Raises:
        InfeasibleError: a single cluster is larger than the biggest split
            target plus the tolerance (at least one image).
    """
    ratios = tuple(float(r) for r in target_ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1) > 1e-9:
        raise ValueError(f"target ratios must be three non-negative numbers summing to 1, got {ratios}")
    clusters = [tuple(c) for c in clusters]
    total = sum(len(c) for c in clusters)
    if total == 0:
        return SplitAssignment({}, (0.0, 0.0, 0.0), 0)
    largest = max(len(c) for c in clusters)
    # slack is never below one image: counts are integers
    if largest > max(ratios) * total + max(tolerance * total, 1.0):
        raise InfeasibleError(
            f"a cluster of {largest} images exceeds the largest split target "
            f"({max(ratios):.4f} of {total} images) beyond tolerance {tolerance}"
        )

    order = list(range(len(clusters)))
    random.Random(seed).shuffle(order)
    order.sort(key=lambda i: -len(clusters[i]))  # stable: shuffled among equal sizes

    filled = [0, 0, 0]
    assignment = {}
    for i in order:
        deficits = [ratios[k] * total - filled[k] for k in range(3)]
        k = max(range(3), key=lambda j: (deficits[j], -j))
        filled[k] += len(clusters[i])
        for image_id in clusters[i]:
            assignment[image_id] = SPLIT_NAMES[k]
    achieved = tuple(f / total for f in filled)
    worst = max(abs(a - r) for a, r in zip(achieved, ratios))
    if worst > tolerance:
        log.warning("split ratios %s miss targets %s by %.4f", achieved, ratios, worst)
    return SplitAssignment(assignment, achieved, len(clusters))


def leakage_violations(images: Iterable[ImageRecord], assignment: SplitAssignment, gap: float = DEFAULT_GAP):
    """All same-sequence frame pairs within ``gap`` seconds that were split apart.

    Exhaustive pairwise scan, independent of the clustering code.
    """
    by_seq = defaultdict(list)
    for im in images:
        if im.sequence_id is not None:
            by_seq[im.sequence_id].append(im)
    bad = []
    for seq in by_seq.values():
        for i, a in enumerate(seq):
            for b in seq[i + 1 :]:
                if abs(a.timestamp - b.timestamp) <= gap and assignment.assignment[a.image_id] != assignment.assignment[b.image_id]:
                    bad.append((a.image_id, b.image_id))
    return bad


def class_distribution(ds: Dataset) -> list[tuple[int, int]]:
    """(class_id, number of images containing it), most frequent first."""
    images = defaultdict(set)
    for g in ds.ground_truth:
        images[g.class_id].add(g.image_id)
    return sorted(((c, len(s)) for c, s in images.items()), key=lambda x: (-x[1], x[0]))
