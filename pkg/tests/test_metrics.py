import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ovdbench.datamodel import ClassEntry, Dataset, GroundTruth, ImageRecord, Prediction
from ovdbench.errors import EmptyDatasetError
from ovdbench.geometry import Box, iou
from ovdbench.matching import MatchResult
from ovdbench.metrics import COCO_IOU_THRESHOLDS, RECALL_GRID, average_precision, coco_map, pr_curve

from oracles import brute_force_map, random_instance


def _results(flags_scores):
    """One MatchResult per prediction, image ids in rank order."""
    out = []
    for i, (tp, s) in enumerate(flags_scores):
        out.append(
            MatchResult(((0, 0, 1.0),) if tp else (), () if tp else (0,), (), 0.5, (s,), image_id=i)
        )
    return out


def test_thresholds_and_grid():
    assert COCO_IOU_THRESHOLDS == (0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95)
    assert len(RECALL_GRID) == 101 and RECALL_GRID[37] == 37 / 100


def test_pr_curve_examples():
    c = pr_curve(_results([(True, 0.9), (True, 0.8)]), 2)
    assert c.points[-1] == (1.0, 1.0)
    assert len(pr_curve([], 3)) == 0
    c = pr_curve(_results([(True, 0.9), (False, 0.8)]), 1)
    assert c.points == [(1.0, 1.0), (1.0, 0.5)]


def test_average_precision_examples():
    assert average_precision(pr_curve(_results([(True, 0.9)]), 1)) == 1.0
    assert average_precision(pr_curve([], 1)) == 0.0
    assert average_precision(pr_curve(_results([(False, 0.9), (True, 0.8)]), 1)) == 0.5


def test_average_precision_partial_recall():
    # one of two gt found at rank 1: precision 1 on grid points 0..0.5
    assert average_precision(pr_curve(_results([(True, 0.9)]), 2)) == pytest.approx(51 / 101)


def _tiny():
    ds = Dataset(
        (ImageRecord(1, 100, 100), ImageRecord(2, 100, 100)),
        (ClassEntry(1, "a", "an a"), ClassEntry(2, "b", "a b"), ClassEntry(3, "c", "a c")),
        (
            GroundTruth(1, Box(0, 0, 10, 10), 1),
            GroundTruth(1, Box(20, 20, 40, 40), 2),
            GroundTruth(2, Box(5, 5, 50, 50), 1),
        ),
    )
    return ds


def test_perfect_and_empty():
    ds = _tiny()
    preds = [Prediction(g.image_id, g.box, 1.0, "w", g.class_id) for g in ds.ground_truth]
    r = coco_map(ds, preds)
    assert r.map == 1.0
    assert sorted(r.per_class_ap) == [1, 2]  # class 3 has no gt
    assert r.counts == [(3, 0, 0)] * 10
    r0 = coco_map(ds, [])
    assert r0.map == 0.0 and r0.counts[0] == (0, 0, 3)


def test_empty_dataset_error():
    ds = Dataset((ImageRecord(1, 10, 10),), (ClassEntry(1, "a", "a"),), ())
    with pytest.raises(EmptyDatasetError):
        coco_map(ds, [])


def test_bad_thresholds():
    with pytest.raises(ValueError):
        coco_map(_tiny(), [], iou_thresholds=[1.5])
    with pytest.raises(ValueError):
        coco_map(_tiny(), [], iou_thresholds=[])


def test_frozen_value():
    # oracle-computed and frozen: one TP at rank 2 behind an FP for class 1,
    # class 2 found exactly
    ds = _tiny()
    preds = [
        Prediction(1, Box(60, 60, 90, 90), 0.9, "w", 1),
        Prediction(1, Box(0, 0, 10, 10), 0.8, "w", 1),
        Prediction(1, Box(20, 20, 40, 40), 0.7, "w", 2),
    ]
    expected = brute_force_map(ds, preds, COCO_IOU_THRESHOLDS, size=100)
    # class 1: precision 0.5 up to recall 0.5 -> 51*0.5/101; class 2: 1.0
    assert expected == pytest.approx((25.5 / 101 + 1.0) / 2, abs=1e-12)
    assert abs(coco_map(ds, preds).map - expected) <= 1e-12


def test_jobs_do_not_change_result():
    ds, preds = random_instance(3, max_classes=3)
    a = coco_map(ds, preds, jobs=1)
    b = coco_map(ds, preds, jobs=4)
    assert a.to_dict() == b.to_dict()


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_matches_oracle(seed):
    ds, preds = random_instance(seed)
    thr = (0.5, 0.75, 0.95)
    assert abs(coco_map(ds, preds, thr).map - brute_force_map(ds, preds, thr)) <= 1e-9


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_bounds_monotone_duplicates(seed):
    ds, preds = random_instance(seed)
    per_t = [coco_map(ds, preds, [t]).map for t in COCO_IOU_THRESHOLDS]
    assert all(0.0 <= v <= 1.0 for v in per_t)
    assert all(a >= b - 1e-12 for a, b in zip(per_t, per_t[1:]))


def _ambiguous(ds, preds, t):
    """Some prediction reaches ``t`` with two or more gt boxes of its class."""
    for p in preds:
        gts = ds.gt_by_image_class.get((p.image_id, p.caption_class_id), [])
        if sum(iou(p.box, g.box) >= t for g in gts) > 1:
            return True
    return False


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_duplicates_never_help_when_unambiguous(seed):
    ds, preds = random_instance(seed)
    if _ambiguous(ds, preds, 0.5):
        return
    assert coco_map(ds, preds + preds).map <= coco_map(ds, preds).map + 1e-12


def test_duplicate_can_help_when_box_covers_two_objects():
    # one box with IoU >= 0.5 against two gt boxes: its copy takes the second
    ds = Dataset(
        (ImageRecord(1, 64, 64),),
        (ClassEntry(3, "c", "c"),),
        (GroundTruth(1, Box(20, 26, 54, 64), 3), GroundTruth(1, Box(13, 35, 58, 63), 3)),
    )
    p = Prediction(1, Box(13, 37, 62, 63), 0.8, "w", 3)
    assert _ambiguous(ds, [p], 0.5)
    single = coco_map(ds, [p], [0.5]).map
    double = coco_map(ds, [p, p], [0.5]).map
    assert (single, double) == (pytest.approx(51 / 101), 1.0)


def test_table_and_dict():
    ds = _tiny()
    r = coco_map(ds, [Prediction(1, Box(0, 0, 10, 10), 1.0, "w", 1)])
    table = r.to_table({1: "a", 2: "b"})
    assert "AP50" in table and "mAP" in table
    d = r.to_dict()
    assert d["protocol"] == "coco" and set(d["per_class_ap"]) == {"1", "2"}
