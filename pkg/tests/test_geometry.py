import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ovdbench.geometry import Box, area, intersection, iou, overlap_ratio, union_area, visible_fraction
from oracles import raster_iou, raster_overlap


@pytest.mark.parametrize(
    "box, expected",
    [((0, 0, 10, 10), 100), ((5, 5, 5, 9), 0), ((0, 0, 1920, 1080), 2_073_600)],
)
def test_area(box, expected):
    assert area(Box(*box)) == expected


def test_iou_examples():
    a = Box(0, 0, 10, 10)
    assert iou(a, a) == 1.0
    assert iou(a, Box(20, 20, 30, 30)) == 0.0
    b = Box(5, 0, 15, 10)
    # 50 shared unit cells out of 150
    assert raster_iou(a, b) == pytest.approx(1 / 3, abs=0)
    assert iou(a, b) == pytest.approx(1 / 3, abs=1e-15)


def test_iou_zero_union():
    p = Box(3, 3, 3, 3)
    assert iou(p, p) == 0.0


def test_overlap_ratio_examples():
    big = Box(0, 0, 20, 10)
    small = Box(0, 0, 10, 10)
    assert overlap_ratio(small, big) == 1.0
    assert raster_overlap(big, small) == 0.5
    assert overlap_ratio(big, small) == 0.5
    assert overlap_ratio(small, Box(30, 30, 40, 40)) == 0.0
    assert overlap_ratio(Box(1, 1, 1, 5), big) == 0.0


def test_box_validation():
    with pytest.raises(ValueError):
        Box(5, 0, 4, 1)
    with pytest.raises(ValueError):
        Box(0, 0, float("nan"), 1)


def test_clamp():
    assert Box(-5, 10, 2000, 90).clamp(1920, 80) == Box(0, 10, 1920, 80)


coord = st.integers(0, 64)


@st.composite
def int_boxes(draw):
    x0, x1 = sorted((draw(coord), draw(coord)))
    y0, y1 = sorted((draw(coord), draw(coord)))
    return Box(float(x0), float(y0), float(x1), float(y1))


@given(int_boxes(), int_boxes())
def test_iou_bounded_by_overlap_ratios(a, b):
    v = iou(a, b)
    assert 0.0 <= v <= min(overlap_ratio(a, b), overlap_ratio(b, a)) + 1e-15
    assert max(overlap_ratio(a, b), overlap_ratio(b, a)) <= 1.0
    assert v == iou(b, a)


@given(int_boxes(), int_boxes())
def test_containment_gives_full_ratio(a, b):
    outer = Box(min(a.x_min, b.x_min), min(a.y_min, b.y_min), max(a.x_max, b.x_max), max(a.y_max, b.y_max))
    if area(a) > 0:
        assert overlap_ratio(a, outer) == 1.0


def test_raster_agreement_random():
    rng = random.Random(7)
    for _ in range(300):
        a = Box(*_rand(rng))
        b = Box(*_rand(rng))
        assert abs(iou(a, b) - raster_iou(a, b)) <= 1e-9
        assert abs(overlap_ratio(a, b) - raster_overlap(a, b)) <= 1e-9


def _rand(rng):
    x0, x1 = sorted(rng.sample(range(65), 2))
    y0, y1 = sorted(rng.sample(range(65), 2))
    return float(x0), float(y0), float(x1), float(y1)


def test_union_and_visibility():
    a, b = Box(0, 0, 10, 10), Box(5, 5, 15, 15)
    assert union_area([a, b]) == 175
    assert intersection(a, b) == 25
    assert visible_fraction(a, [b]) == 0.75
    assert visible_fraction(a, [Box(0, 0, 10, 8)]) == pytest.approx(0.2)
    assert visible_fraction(a, []) == 1.0
