"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the summary lines.
"""
import random
import time

from ovdbench.cli import main as cli_main
from ovdbench.datamodel import Prediction
from ovdbench.datasettools import NEU_C_RATIOS, leakage_violations, split, temporal_clusters
from ovdbench.embedcache import CostModel, HashBagEmbedder
from ovdbench.geometry import Box, iou, overlap_ratio
from ovdbench.metrics import COCO_IOU_THRESHOLDS, coco_map
from ovdbench.postprocess import PRESETS, SuppressionConfig, aggregate_predictions, suppress_caption
from ovdbench.protocols import (
    GroundingQuery,
    ProtocolConfig,
    eval_3fovd,
    eval_fgovd,
    eval_ovvg,
    eval_supervised,
)
from ovdbench.synth import (
    MockDetectorConfig,
    SceneSpec,
    embedding_detect,
    generate_dataset,
    make_fgovd_groups,
    make_grounding_queries,
    mock_detect_all,
    perfect_fgovd_scores,
    perfect_predictions,
)
from ovdbench.postprocess import suppress_all

from oracles import brute_force_map, random_instance, random_int_box, raster_iou, raster_overlap


def report(n, name, ok, detail):
    print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {n}: {name}: {detail}")
    assert ok, detail


def test_criterion_1_map_oracle():
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(500):
        ds, preds = random_instance(seed, max_images=4, max_boxes=8, max_classes=3)
        worst = max(worst, abs(coco_map(ds, preds).map - brute_force_map(ds, preds, COCO_IOU_THRESHOLDS)))
    dt = time.perf_counter() - t0
    report(1, "mAP oracle equivalence", worst <= 1e-9 and dt < 10, f"max |delta| {worst:.2e} over 500 instances, {dt:.2f}s")


def test_criterion_2_geometry_oracle():
    rng = random.Random(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        a, b = random_int_box(rng), random_int_box(rng)
        worst = max(
            worst,
            abs(iou(a, b) - raster_iou(a, b)),
            abs(overlap_ratio(a, b) - raster_overlap(a, b)),
            abs(overlap_ratio(b, a) - raster_overlap(b, a)),
        )
    dt = time.perf_counter() - t0
    report(2, "geometry oracle", worst <= 1e-9 and dt < 5, f"max |delta| {worst:.2e} over 1000 pairs, {dt:.2f}s")


def _random_caption_set(rng, scale):
    preds = []
    for _ in range(rng.randint(0, 15)):
        if preds and rng.random() < 0.5:
            b = rng.choice(preds).box
            x0 = b.x_min + rng.uniform(-0.1, 0.6) * b.width
            y0 = b.y_min + rng.uniform(-0.1, 0.6) * b.height
            w, h = b.width * rng.uniform(0.05, 1.0), b.height * rng.uniform(0.05, 1.0)
            box = Box(max(0.0, x0), max(0.0, y0), max(0.0, x0) + w, max(0.0, y0) + h)
        else:
            x0, y0 = rng.uniform(0, scale), rng.uniform(0, scale)
            box = Box(x0, y0, x0 + rng.uniform(1, scale), y0 + rng.uniform(1, scale))
        preds.append(Prediction(1, box, round(rng.random(), 2), "w", 1))
    return preds


def test_criterion_3_suppression_contract():
    rng = random.Random(3)
    failures = 0
    for case in range(1000):
        cfg = PRESETS["rp" if case % 2 else "c"]
        preds = _random_caption_set(rng, 3000 if case % 2 else 1200)
        out = suppress_caption(preds, cfg)
        ok = all(p in preds for p in out)
        ok &= suppress_caption(out, cfg) == out
        ok &= all(cfg.size_ok(p.box) for p in out)
        ok &= not any(
            q.score > p.score and overlap_ratio(p.box, q.box) > 0.8 for p in out for q in out
        )
        failures += not ok
    report(3, "suppression contract", failures == 0, f"{1000 - failures}/1000 cases satisfy subset, idempotence, overlap and size bounds")


SPEC4 = SceneSpec(n_images=60, n_classes=12)
DET4 = MockDetectorConfig(
    localization_jitter=4,
    tp_score_range=(0.2, 1.0),
    component_fp_rate=2.5,
    fp_score_mode="relative",
    fp_score_range=(0.5, 0.95),
    distractor_rate=0.5,
    seed=3,
)


def test_criterion_4_postprocessing_gain():
    t0 = time.perf_counter()
    ds = generate_dataset(SPEC4, seed=1)
    preds, _ = mock_detect_all(ds, DET4)
    before = eval_3fovd(ds, preds).map
    after = eval_3fovd(ds, preds, ProtocolConfig(suppression=PRESETS["c"])).map
    gain = (after - before) / before
    dt = time.perf_counter() - t0
    ok = gain >= 0.10 and dt < 30 and len(ds.images) >= 50 and len(ds.classes) >= 10
    report(4, "post-processing gain", ok, f"mAP {before:.4f} -> {after:.4f} ({gain:+.1%}), {dt:.2f}s")


def test_criterion_5_mechanism():
    ds = generate_dataset(SPEC4, seed=1)
    preds, traces = mock_detect_all(ds, DET4)
    kept = {id(p) for p in suppress_all(preds, PRESETS["c"])}
    eligible = removed = 0
    for t in traces.values():
        for ci, pi in t.components:
            if pi is not None and preds[pi].score > preds[ci].score:
                eligible += 1
                removed += id(preds[ci]) not in kept
    k = len(ds.classes)
    agg = aggregate_predictions([p for p in preds if id(p) in kept])
    distractor_boxes = {(preds[i].image_id, preds[i].box.rounded()) for t in traces.values() for i in t.distractors}
    counts = [
        a.occurrence_count
        for im, boxes in agg.items()
        for a in boxes
        if (im, a.box.rounded()) in distractor_boxes
    ]
    ok = eligible > 0 and removed == eligible and counts and all(c == k for c in counts) and len(counts) == len(distractor_boxes)
    report(5, "nested-FP removal and occurrence counts", ok, f"{removed}/{eligible} components removed; {len(counts)} shared boxes with count {set(counts)} (K={k})")


def test_criterion_6_leakage():
    t0 = time.perf_counter()
    worst, leaks = 0.0, 0
    for seed in range(200):
        rng = random.Random(seed)
        spec = SceneSpec(
            n_images=rng.randint(300, 600),
            n_classes=3,
            objects_per_image=(0, 0),
            n_sequences=rng.randint(10, 40),
        )
        ds = generate_dataset(spec, seed)
        s = split(temporal_clusters(ds.images), NEU_C_RATIOS, seed=seed)
        leaks += len(leakage_violations(ds.images, s))
        worst = max(worst, max(abs(a - r) for a, r in zip(s.achieved_ratios, NEU_C_RATIOS)))
    dt = time.perf_counter() - t0
    ok = leaks == 0 and worst <= 0.02 and dt < 10
    report(6, "leakage-safe split", ok, f"{leaks} leaking pairs, worst ratio error {worst:.4f}, {dt:.2f}s")


def test_criterion_7_cache_complexity():
    ds = generate_dataset(SceneSpec(n_images=20, n_classes=15), seed=7)
    emb = HashBagEmbedder()
    cached, uncached = CostModel(), CostModel()
    a = embedding_detect(ds, emb, cached, use_cache=True)
    b = embedding_detect(ds, emb, uncached, use_cache=False)
    ra, rb = eval_3fovd(ds, a).to_dict(), eval_3fovd(ds, b).to_dict()
    ok = cached.encoder_calls <= 35 and uncached.encoder_calls == 300 and a == b and ra == rb
    report(7, "embedding cache call counts", ok, f"encoder calls {cached.encoder_calls} cached vs {uncached.encoder_calls} uncached; identical reports: {ra == rb}")


def test_criterion_8_protocol_sanity():
    ds = generate_dataset(SceneSpec(n_images=15, n_classes=8), seed=8)
    names = {c.class_id: c.name for c in ds.classes}
    sup = [Prediction(g.image_id, g.box, 1.0, names[g.class_id], g.class_id) for g in ds.ground_truth]
    groups = make_fgovd_groups(ds, k=2)
    queries = make_grounding_queries(ds)
    perfect = {
        "supervised": eval_supervised(ds, sup).map,
        "3fovd": eval_3fovd(ds, perfect_predictions(ds)).map,
        "ovvg": eval_ovvg(queries, {i: q.gt_box for i, q in enumerate(queries)}).accuracy,
        "fgovd": float(all(eval_fgovd(ds, groups, perfect_fgovd_scores(ds, groups)).extra["group_hits"])),
    }
    # "empty": no boxes for mAP protocols; grounding and caption groups need one
    # entry per item, so they get a degenerate zero-score box instead
    nothing = Box(0, 0, 0, 0)
    empty_fg = {(gi, ci): (nothing, 0.0) for gi, g in enumerate(groups) for ci in range(len(g.captions))}
    empty = {
        "supervised": eval_supervised(ds, []).map,
        "3fovd": eval_3fovd(ds, []).map,
        "ovvg": eval_ovvg(queries, {i: nothing for i in range(len(queries))}).accuracy,
        "fgovd": eval_fgovd(ds, groups, empty_fg).map,
    }
    ok = all(v == 1.0 for v in perfect.values()) and all(v == 0.0 for v in empty.values())
    report(8, "protocol sanity", ok, f"perfect {perfect}; empty {empty}")


def _snapshot(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_criterion_9_cli_determinism(tmp_path, capsys):
    src = tmp_path / "src"
    assert cli_main(["synth", "--out", str(src), "--images", "30", "--classes", "6", "--sequences", "4", "--component-rate", "2", "--distractor-rate", "0.5", "--seed", "5"]) == 0
    capsys.readouterr()
    ds = str(src / "dataset.json")
    preds = str(src / "predictions.json")
    commands = {
        "synth": ["synth", "--images", "30", "--classes", "6", "--sequences", "4", "--component-rate", "2", "--seed", "5"],
        "evaluate-3fovd": ["evaluate", "--dataset", ds, "--predictions", preds, "--protocol", "3fovd", "--preset", "c"],
        "evaluate-fgovd": ["evaluate", "--dataset", ds, "--predictions", str(src / "fgovd.json"), "--protocol", "fgovd"],
        "evaluate-ovvg": ["evaluate", "--dataset", ds, "--predictions", str(src / "ovvg.json"), "--protocol", "ovvg"],
        "postprocess": ["postprocess", "--dataset", ds, "--predictions", preds, "--preset", "rp"],
        "split": ["split", "--dataset", ds, "--seed", "3"],
        "stats": ["stats", "--dataset", ds],
        "validate": ["validate", "--dataset", ds, "--predictions", preds],
    }
    differing = []
    for name, argv in commands.items():
        outs = []
        for jobs in ("1", "4"):
            out = tmp_path / f"{name}-{jobs}"
            out.mkdir()
            code = cli_main(argv + ["--out", str(out), "--jobs", jobs])
            outs.append((code, _snapshot(out), capsys.readouterr().out))
        if outs[0] != outs[1] or outs[0][0] != 0:
            differing.append(f"{name} (exit {outs[0][0]}/{outs[1][0]})")
    report(9, "CLI determinism", not differing, f"{len(commands) - len(differing)}/{len(commands)} commands byte-identical across --jobs 1/4; failing: {differing}")
