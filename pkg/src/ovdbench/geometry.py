"""Axis-aligned box arithmetic.

Boxes are corner-form ``(x_min, y_min, x_max, y_max)`` in pixels. Degenerate
(zero-width or zero-height) boxes are legal and simply have zero area.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence


@dataclass(frozen=True)
class Box:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"non-finite box coordinates: {coords}")
        if self.x_max < self.x_min or self.y_max < self.y_min:
            raise ValueError(f"inverted box: {coords}")

    @classmethod
    def from_xywh(cls, x: float, y: float, w: float, h: float) -> "Box":
        return cls(x, y, x + w, y + h)

    @classmethod
    def from_list(cls, values: Sequence[float]) -> "Box":
        if len(values) != 4:
            raise ValueError(f"expected 4 box coordinates, got {len(values)}")
        return cls(*(float(v) for v in values))

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def to_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]

    def clamp(self, width: float, height: float) -> "Box":
        """Clip the box to the image rectangle ``[0, width] x [0, height]``."""
        x0 = min(max(self.x_min, 0.0), width)
        y0 = min(max(self.y_min, 0.0), height)
        x1 = min(max(self.x_max, 0.0), width)
        y1 = min(max(self.y_max, 0.0), height)
        return Box(x0, y0, x1, y1)

    def contains(self, other: "Box") -> bool:
        return (
            self.x_min <= other.x_min
            and self.y_min <= other.y_min
            and other.x_max <= self.x_max
            and other.y_max <= self.y_max
        )

    def rounded(self) -> tuple[int, int, int, int]:
        """Coordinates rounded half-up to the nearest integer pixel."""
        return tuple(int(math.floor(c + 0.5)) for c in self.to_list())


def area(b: Box) -> float:
    return (b.x_max - b.x_min) * (b.y_max - b.y_min)


def intersection(a: Box, b: Box) -> float:
    w = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    h = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if w <= 0 or h <= 0:
        return 0.0
    return w * h


def iou(a: Box, b: Box) -> float:
    """Intersection over union; 0 when the union is empty."""
    inter = intersection(a, b)
    union = area(a) + area(b) - inter
    if union <= 0:
        return 0.0
    return inter / union


def overlap_ratio(candidate: Box, other: Box) -> float:
    """Fraction of ``candidate``'s own area covered by ``other``.

    Not symmetric: a small box inside a large one has ratio 1 against the
    large box, while the large box has a ratio equal to the area quotient.
    Returns 0 for a zero-area candidate.
    """
    a = area(candidate)
    if a <= 0:
        return 0.0
    return intersection(candidate, other) / a


def union_area(boxes: Iterable[Box]) -> float:
    """Exact area of a union of boxes by coordinate compression."""
    boxes = [b for b in boxes if area(b) > 0]
    if not boxes:
        return 0.0
    xs = sorted({c for b in boxes for c in (b.x_min, b.x_max)})
    ys = sorted({c for b in boxes for c in (b.y_min, b.y_max)})
    total = 0.0
    for x0, x1 in zip(xs, xs[1:]):
        for y0, y1 in zip(ys, ys[1:]):
            if any(b.x_min <= x0 and x1 <= b.x_max and b.y_min <= y0 and y1 <= b.y_max for b in boxes):
                total += (x1 - x0) * (y1 - y0)
    return total


def visible_fraction(target: Box, occluders: Iterable[Box]) -> float:
    """Share of ``target`` not covered by any of ``occluders``."""
    a = area(target)
    if a <= 0:
        return 0.0
    clipped = []
    for o in occluders:
        x0, y0 = max(o.x_min, target.x_min), max(o.y_min, target.y_min)
        x1, y1 = min(o.x_max, target.x_max), min(o.y_max, target.y_max)
        if x1 > x0 and y1 > y0:
            clipped.append(Box(x0, y0, x1, y1))
    return 1.0 - union_area(clipped) / a
