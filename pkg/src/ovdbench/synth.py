"""Synthetic scenes and mock detectors for end-to-end checks.

The mock open-vocabulary detector reproduces three habits of real
caption-conditioned detectors:

* the class name is often out of vocabulary and comes back as ``[UNK]``;
* words of the caption that name parts ("text", "logo", "wheel") fire small
  boxes nested inside the object;
* labels are single words, never the whole caption.

All randomness comes from explicit seeds, so a given (spec, config, seed)
always yields the same files byte for byte.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .datamodel import UNK_TOKEN, ClassEntry, Dataset, GroundTruth, ImageRecord, Prediction
from .embedcache import CostModel, EmbeddingCache, normalize, score_alignment
from .geometry import Box, overlap_ratio, visible_fraction
from .protocols import CaptionGroup, GroundingQuery, make_negative_captions, tokenize

COARSE_NAMES = ("sedan", "suv", "truck", "bag", "bottle", "box")
PALETTE = ("red", "green", "blue", "white", "black", "silver", "yellow")
COMPONENT_WORDS = ("text", "logo", "wheel")
CAPTION_TEMPLATE = "the {name} is mostly {color} and its front shows a {components}"
MIN_VISIBLE = 1.0 / 3.0


@dataclass(frozen=True)
class SceneSpec:
    n_images: int = 20
    image_size: tuple[int, int] = (1280, 720)
    objects_per_image: tuple[int, int] = (1, 5)
    n_classes: int = 10
    n_coarse: int = 3
    novel_fraction: float = 0.3
    object_size: tuple[int, int] = (40, 300)
    # placement retries until no pair overlaps more than this share of either box
    max_overlap: float = 0.5
    # 0 means still images; otherwise images are frames of this many videos
    n_sequences: int = 0
    frame_interval: tuple[float, float] = (0.5, 12.0)
    caption_template: str = CAPTION_TEMPLATE
    component_words: tuple[str, ...] = COMPONENT_WORDS

    def __post_init__(self):
        if self.n_images < 1 or self.n_classes < 1 or self.n_coarse < 1:
            raise ValueError("image, class and coarse counts must be positive")
        lo, hi = self.objects_per_image
        if not 0 <= lo <= hi:
            raise ValueError("objects_per_image must satisfy 0 <= lo <= hi")
        if not 0 < self.object_size[0] <= self.object_size[1]:
            raise ValueError("object_size must satisfy 0 < lo <= hi")
        if "{name}" not in self.caption_template:
            raise ValueError("caption template must contain {name}")


@dataclass(frozen=True)
class MockDetectorConfig:
    """Mock detector behaviour.

    ``fp_score_mode="absolute"`` draws component scores from
    ``fp_score_range``; ``"relative"`` multiplies the parent's score by a draw
    from that range, so each component scores below its own parent but may
    outrank weaker objects elsewhere. Distractors are one shared large box per
    image emitted under every caption, with probability ``distractor_rate``.
    """

    localization_jitter: float = 0.0
    tp_score_range: tuple[float, float] = (0.6, 1.0)
    miss_rate: float = 0.0
    component_fp_rate: float = 0.0
    component_words: tuple[str, ...] = COMPONENT_WORDS
    unk_rate: float = 0.0
    seed: int = 0
    fp_score_range: tuple[float, float] = (0.1, 0.4)
    fp_score_mode: str = "absolute"
    distractor_rate: float = 0.0
    distractor_score_range: tuple[float, float] = (0.02, 0.08)

    def __post_init__(self):
        for name in ("miss_rate", "unk_rate", "distractor_rate"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must be a probability")
        if self.localization_jitter < 0 or self.component_fp_rate < 0:
            raise ValueError("jitter and component_fp_rate must be non-negative")
        for name in ("tp_score_range", "fp_score_range", "distractor_score_range"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise ValueError(f"{name} must satisfy 0 <= lo <= hi")
        if self.fp_score_mode not in ("absolute", "relative"):
            raise ValueError("fp_score_mode must be 'absolute' or 'relative'")


@dataclass
class DetectionTrace:
    """Which predictions the mock detector injected as part false positives.

    ``components`` pairs each component prediction index with the index of
    its parent prediction (None when the parent object was missed).
    """

    components: list[tuple[int, Optional[int]]] = field(default_factory=list)
    distractors: list[int] = field(default_factory=list)


# -- scenes ------------------------------------------------------------------


def occlusion_filter(boxes: Sequence[Box]) -> list[int]:
    """Indices of boxes at least one third visible; later boxes lie on top."""
    return [
        i for i, b in enumerate(boxes) if visible_fraction(b, boxes[i + 1 :]) >= MIN_VISIBLE
    ]


def make_classes(spec: SceneSpec, rng: np.random.Generator) -> list[ClassEntry]:
    n_novel = int(round(spec.n_classes * spec.novel_fraction))
    novel = set(rng.permutation(spec.n_classes)[:n_novel].tolist())
    classes = []
    for k in range(spec.n_classes):
        coarse = k % spec.n_coarse
        name = f"{COARSE_NAMES[coarse % len(COARSE_NAMES)]} model{k + 1}"
        colour = PALETTE[int(rng.integers(len(PALETTE)))]
        caption = spec.caption_template.format(
            name=name, color=colour, components=" and a ".join(spec.component_words)
        )
        classes.append(ClassEntry(k + 1, name, caption, coarse + 1, "novel" if k in novel else "base"))
    return classes


def _place_objects(spec: SceneSpec, rng: np.random.Generator) -> list[Box]:
    w_img, h_img = spec.image_size
    lo, hi = spec.object_size
    n = int(rng.integers(spec.objects_per_image[0], spec.objects_per_image[1] + 1))
    boxes: list[Box] = []
    for _ in range(n):
        for _attempt in range(30):
            w = int(rng.integers(lo, min(hi, w_img) + 1))
            h = int(rng.integers(lo, min(hi, h_img) + 1))
            x = int(rng.integers(0, w_img - w + 1))
            y = int(rng.integers(0, h_img - h + 1))
            b = Box(float(x), float(y), float(x + w), float(y + h))
            if all(
                overlap_ratio(b, o) <= spec.max_overlap and overlap_ratio(o, b) <= spec.max_overlap
                for o in boxes
            ):
                boxes.append(b)
                break
    return boxes


def generate_dataset(spec: SceneSpec = SceneSpec(), seed: int = 0) -> Dataset:
    """Random but reproducible dataset; heavily occluded objects get no box."""
    rng = np.random.default_rng(seed)
    classes = make_classes(spec, rng)
    w_img, h_img = spec.image_size

    images = []
    if spec.n_sequences > 0:
        bounds = np.linspace(0, spec.n_images, spec.n_sequences + 1).round().astype(int)
        for s, (a, b) in enumerate(zip(bounds, bounds[1:])):
            t = 0.0
            for i in range(a, b):
                images.append(ImageRecord(i + 1, float(w_img), float(h_img), round(t, 3), s + 1))
                t += float(rng.uniform(*spec.frame_interval))
    else:
        images = [ImageRecord(i + 1, float(w_img), float(h_img)) for i in range(spec.n_images)]

    gts = []
    for im in images:
        boxes = _place_objects(spec, rng)
        labels = rng.integers(1, spec.n_classes + 1, size=len(boxes))
        for i in occlusion_filter(boxes):
            gts.append(GroundTruth(im.image_id, boxes[i], int(labels[i])))
    return Dataset(images, classes, gts)


# -- mock detector -------------------------------------------------------------


def _jitter(rng, box: Box, amount: float, width: float, height: float) -> Box:
    if amount <= 0:
        return box
    half = amount * math.sqrt(3.0)  # uniform noise with standard deviation `amount`
    c = np.array(box.to_list()) + rng.uniform(-half, half, size=4)
    x0, x1 = sorted((c[0], c[2]))
    y0, y1 = sorted((c[1], c[3]))
    return Box(float(x0), float(y0), float(x1), float(y1)).clamp(width, height)


def _nested_box(rng, parent: Box) -> Box:
    fw, fh = rng.uniform(0.15, 0.45, size=2)
    ox = rng.uniform(0.02, 0.98 - fw)
    oy = rng.uniform(0.02, 0.98 - fh)
    x0 = parent.x_min + ox * parent.width
    y0 = parent.y_min + oy * parent.height
    return Box(float(x0), float(y0), float(x0 + fw * parent.width), float(y0 + fh * parent.height))


def distractor_box(image: ImageRecord, seed: int, rate: float) -> Optional[Box]:
    """The per-image shared box, identical under every caption (or None)."""
    rng = np.random.default_rng([seed, image.image_id, 104729])
    if rng.random() >= rate:
        return None
    fw, fh = rng.uniform(0.3, 0.7, size=2)
    x0 = rng.uniform(0, 1 - fw) * image.width
    y0 = rng.uniform(0, 1 - fh) * image.height
    return Box(float(round(x0)), float(round(y0)), float(round(x0 + fw * image.width)), float(round(y0 + fh * image.height)))


def mock_detect_traced(ds: Dataset, class_id: int, cfg: MockDetectorConfig) -> tuple[list[Prediction], DetectionTrace]:
    """Predictions for one class caption over every image, plus an injection trace."""
    cls = ds.class_by_id[class_id]
    rng = np.random.default_rng([cfg.seed, class_id])
    name_tokens = tokenize(cls.name)
    caption_tokens = tokenize(cls.caption)
    preds: list[Prediction] = []
    trace = DetectionTrace()

    def emit(box, score, token):
        preds.append(Prediction(im.image_id, box, float(score), token, class_id))
        return len(preds) - 1

    for im in ds.images:
        for g in ds.gt_by_image_class.get((im.image_id, class_id), []):
            missed = rng.random() < cfg.miss_rate
            parent_idx, parent_box, parent_score = None, g.box, None
            if not missed:
                box = _jitter(rng, g.box, cfg.localization_jitter, im.width, im.height)
                token = name_tokens[int(rng.integers(len(name_tokens)))]
                if rng.random() < cfg.unk_rate:
                    token = UNK_TOKEN
                parent_score = rng.uniform(*cfg.tp_score_range)
                parent_idx = emit(box, parent_score, token)
                parent_box = box
            n_comp = int(rng.poisson(cfg.component_fp_rate)) if cfg.component_fp_rate > 0 else 0
            for _ in range(n_comp):
                box = _nested_box(rng, parent_box)
                word = cfg.component_words[int(rng.integers(len(cfg.component_words)))]
                u = rng.uniform(*cfg.fp_score_range)
                score = u * parent_score if cfg.fp_score_mode == "relative" and parent_score is not None else u
                trace.components.append((emit(box, score, word), parent_idx))
        if cfg.distractor_rate > 0:
            box = distractor_box(im, cfg.seed, cfg.distractor_rate)
            if box is not None:
                token = caption_tokens[int(rng.integers(len(caption_tokens)))]
                trace.distractors.append(emit(box, rng.uniform(*cfg.distractor_score_range), token))
    return preds, trace


def mock_detect(ds: Dataset, class_id: int, cfg: MockDetectorConfig) -> list[Prediction]:
    """Noisy detections of ``class_id`` objects plus nested part false positives.

    With zero jitter, zero miss rate and no part boxes this returns exactly
    the class's ground-truth boxes.
    """
    return mock_detect_traced(ds, class_id, cfg)[0]


def mock_detect_all(ds: Dataset, cfg: MockDetectorConfig) -> tuple[list[Prediction], dict[int, DetectionTrace]]:
    """Run the mock detector once per class caption."""
    preds, traces = [], {}
    for c in ds.class_ids():
        p, t = mock_detect_traced(ds, c, cfg)
        offset = len(preds)
        traces[c] = DetectionTrace(
            [(i + offset, None if j is None else j + offset) for i, j in t.components],
            [i + offset for i in t.distractors],
        )
        preds.extend(p)
    return preds, traces


# -- embedding-based detector ------------------------------------------------


def scene_features(ds: Dataset, image_id: int, embedder, noise: float = 0.25, seed: int = 0) -> list[tuple[Box, np.ndarray]]:
    """Stand-in visual features: each object's caption embedding plus noise."""
    rng = np.random.default_rng([seed, image_id])
    out = []
    for g in ds.gt_by_image.get(image_id, []):
        base = np.asarray(embedder(ds.class_by_id[g.class_id].caption), dtype=np.float64)
        out.append((g.box, normalize(base + noise * rng.standard_normal(len(base)) / math.sqrt(len(base)))))
    return out


def embedding_detect(
    ds: Dataset,
    embedder,
    cost: CostModel,
    use_cache: bool = True,
    noise: float = 0.25,
    seed: int = 0,
) -> list[Prediction]:
    """Caption-conditioned detector scored by region/caption cosine similarity.

    With ``use_cache`` each image and each caption is encoded once
    (N + K encoder calls). Without it every (image, caption) pair runs the
    encoders afresh and counts as one call (N * K calls). Outputs are identical.
    """
    images = EmbeddingCache(cost)
    captions = EmbeddingCache(cost)
    preds = []
    for im in ds.images:
        for cls in ds.classes:
            if use_cache:
                regions = images.lookup(
                    f"image:{im.image_id}", lambda: _pack(scene_features(ds, im.image_id, embedder, noise, seed))
                )
                text = captions.get_or_compute(cls.caption, embedder)
            else:
                cost.add_encoder()
                regions = _pack(scene_features(ds, im.image_id, embedder, noise, seed))
                text = np.asarray(embedder(cls.caption), dtype=np.float32)
            token = tokenize(cls.name)[-1]
            for g, feat in zip(ds.gt_by_image.get(im.image_id, []), regions):
                s = max(0.0, score_alignment(feat, text, cost))
                preds.append(Prediction(im.image_id, g.box, s, token, cls.class_id))
    return preds


def _pack(features) -> np.ndarray:
    if not features:
        return np.zeros((0, 0), dtype=np.float32)
    return np.stack([f for _, f in features]).astype(np.float32)


# -- protocol fixtures ---------------------------------------------------------


def perfect_predictions(ds: Dataset, score: float = 1.0) -> list[Prediction]:
    """Every ground-truth box, predicted under its own class caption."""
    return [
        Prediction(g.image_id, g.box, score, tokenize(ds.class_by_id[g.class_id].name)[-1], g.class_id)
        for g in ds.ground_truth
    ]


def make_fgovd_groups(
    ds: Dataset, palette: Sequence[str] = PALETTE, k: int = 2, vocabularies: int = 1, seed: int = 0
) -> list[CaptionGroup]:
    """One caption group per object and vocabulary, negatives by colour swap."""
    groups = []
    for v in range(vocabularies):
        for im in ds.images:
            for j, g in enumerate(ds.gt_by_image.get(im.image_id, [])):
                positive = ds.class_by_id[g.class_id].caption
                sub_seed = int(np.random.default_rng([seed, v, im.image_id, j]).integers(2**31))
                negatives = make_negative_captions(positive, palette, k, sub_seed)
                groups.append(CaptionGroup((im.image_id, j), positive, tuple(negatives), v))
    return groups


def perfect_fgovd_scores(ds: Dataset, groups: Sequence[CaptionGroup]) -> dict[tuple[int, int], tuple[Box, float]]:
    scores = {}
    for gi, g in enumerate(groups):
        image_id, j = g.object_ref
        box = ds.gt_by_image[image_id][j].box
        for ci in range(len(g.captions)):
            scores[(gi, ci)] = (box, 0.9 if ci == 0 else 0.1)
    return scores


def make_grounding_queries(ds: Dataset) -> list[GroundingQuery]:
    return [GroundingQuery(g.image_id, ds.class_by_id[g.class_id].caption, g.box) for g in ds.ground_truth]
