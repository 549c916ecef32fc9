"""Evaluators for the four detection protocols.

* ``supervised``: closed-set detection; tokens are class names, greedy NMS,
  then COCO mAP.
* ``threef_ovd``: one fixed caption per class reused on every image; every box
  produced under caption ``t_c`` is a detection of class ``c`` whatever word it
  was attached to.
* ``fg_ovd``: each object has a positive caption and a few near-miss
  negatives; a hit needs the positive ranked first and a well-placed box.
* ``ov_vg``: visual grounding, one box per phrase, scored as top-1 accuracy.
"""
from __future__ import annotations

import random
import re
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .datamodel import UNK_TOKEN, Dataset, Prediction, record_errors
from .errors import (
    IntegrityError,
    MissingAnswerError,
    MissingScoreError,
    MultipleAnswerError,
    NoAttributeError,
    SchemaError,
    TokenNotInCaptionError,
    UnknownClassError,
)
from .geometry import Box, iou
from .matching import MatchResult
from .metrics import COCO_IOU_THRESHOLDS, EvalReport, average_precision, coco_map, mean_over, pr_curve
from .postprocess import SuppressionConfig, standard_nms, suppress_all

VARIANTS = ("supervised", "threef_ovd", "fg_ovd", "ov_vg")
_WORD = re.compile(r"[a-z0-9]+(?:['-][a-z0-9]+)*")


def tokenize(text: str) -> list[str]:
    """Lower-cased word tokens; hyphenated words also yield their parts."""
    out = []
    for w in _WORD.findall(text.lower()):
        out.append(w)
        if "-" in w:
            out.extend(w.split("-"))
    return out


@dataclass(frozen=True)
class ProtocolConfig:
    variant: str = "threef_ovd"
    iou_thresholds: tuple[float, ...] = COCO_IOU_THRESHOLDS
    # supervised
    nms_iou_threshold: float = 0.5
    # threef_ovd
    suppression: Optional[SuppressionConfig] = None
    strict_tokens: bool = False
    # fg_ovd
    negatives_per_positive: int = 1
    vocabularies: int = 1
    # ov_vg
    grounding_iou_threshold: float = 0.5
    jobs: int = 1

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown protocol variant {self.variant!r}; expected one of {VARIANTS}")
        if self.negatives_per_positive < 1 or self.vocabularies < 1:
            raise ValueError("negatives_per_positive and vocabularies must be >= 1")
        if not self.iou_thresholds:
            raise ValueError("iou_thresholds must be non-empty")


@dataclass(frozen=True)
class CaptionGroup:
    """One object's caption group: the positive first, then its negatives."""

    object_ref: tuple[int, int]
    positive: str
    negatives: tuple[str, ...]
    vocabulary: int = 0

    def __post_init__(self):
        object.__setattr__(self, "negatives", tuple(self.negatives))
        if not self.negatives:
            raise ValueError(f"group {self.object_ref}: at least one negative caption is required")
        if self.positive in self.negatives:
            raise ValueError(f"group {self.object_ref}: a negative equals the positive caption")

    @property
    def captions(self) -> tuple[str, ...]:
        return (self.positive,) + self.negatives


@dataclass(frozen=True)
class GroundingQuery:
    image_id: int
    caption: str
    gt_box: Box

    def __post_init__(self):
        if not self.caption:
            raise ValueError("grounding caption must be non-empty")


@dataclass
class GroundingReport:
    accuracy: float
    correct: int
    total: int
    iou_threshold: float
    per_query: list[bool] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "protocol": "ov_vg",
            "accuracy": float(self.accuracy),
            "correct": self.correct,
            "total": self.total,
            "iou_threshold": float(self.iou_threshold),
            "per_query": self.per_query,
        }

    def to_table(self) -> str:
        return (
            "protocol: ov_vg\n"
            f"accuracy@{self.iou_threshold:.2f}: {self.accuracy:.4f} ({self.correct}/{self.total})\n"
        )


# -- supervised --------------------------------------------------------------


def eval_supervised(ds: Dataset, preds: Sequence[Prediction], cfg: ProtocolConfig = ProtocolConfig("supervised")) -> EvalReport:
    """Closed-set evaluation: tokens name the class; NMS per (image, class).

    Raises:
        UnknownClassError: a token that is not a class name.
    """
    cells = defaultdict(list)
    for p in preds:
        cls = ds.class_by_name.get(p.token)
        if cls is None:
            raise UnknownClassError(f"prediction on image {p.image_id}: unknown class {p.token!r}")
        cells[(p.image_id, cls.class_id)].append(replace(p, caption_class_id=cls.class_id))
    kept = []
    for key in sorted(cells):
        kept.extend(standard_nms(cells[key], cfg.nms_iou_threshold))
    return coco_map(ds, kept, cfg.iou_thresholds, protocol_tag="supervised", jobs=cfg.jobs)


# -- 3F-OVD ------------------------------------------------------------------


def check_tokens(ds: Dataset, preds: Sequence[Prediction]) -> None:
    """Raise if a prediction's token is not drawn from its caption (``[UNK]`` allowed)."""
    vocab = {c.class_id: set(tokenize(c.caption)) for c in ds.classes}
    for p in preds:
        if p.token == UNK_TOKEN:
            continue
        words = tokenize(p.token)
        if not words or not set(words) <= vocab[p.caption_class_id]:
            raise TokenNotInCaptionError(
                f"prediction on image {p.image_id}: token {p.token!r} not in caption "
                f"of class {p.caption_class_id}"
            )


def eval_3fovd(ds: Dataset, per_caption_preds: Sequence[Prediction], cfg: ProtocolConfig = ProtocolConfig()) -> EvalReport:
    """Caption-conditioned evaluation over base and novel classes.

    Suppression (``cfg.suppression``) is applied per (image, caption) before
    scoring. The report's ``extra`` holds ``map_base`` and ``map_novel``
    (None when a side has no ground truth) and the number of removed boxes.
    """
    if cfg.strict_tokens:
        check_tokens(ds, per_caption_preds)
    preds = list(per_caption_preds)
    removed = 0
    if cfg.suppression is not None:
        kept = suppress_all(preds, cfg.suppression)
        removed = len(preds) - len(kept)
        preds = kept
    report = coco_map(ds, preds, cfg.iou_thresholds, protocol_tag="threef_ovd", jobs=cfg.jobs)
    report.extra.update(
        map_base=mean_over(report, ds.class_ids("base")),
        map_novel=mean_over(report, ds.class_ids("novel")),
        suppressed=removed,
    )
    return report


# -- FG-OVD ------------------------------------------------------------------


def fgovd_decisions(groups: Sequence[CaptionGroup], caption_scores: Mapping[tuple[int, int], tuple[Box, float]]):
    """Per group: (chosen caption index, its box, its score).

    Ties resolve to the lowest caption index, i.e. the positive first.
    """
    out = []
    for gi, g in enumerate(groups):
        best = None
        for ci in range(len(g.captions)):
            entry = caption_scores.get((gi, ci))
            if entry is None:
                raise MissingScoreError(f"group {gi}: no score for caption {ci}")
            box, score = entry
            if best is None or score > best[2]:
                best = (ci, box, float(score))
        out.append(best)
    return out


def eval_fgovd(
    ds: Dataset,
    groups: Sequence[CaptionGroup],
    caption_scores: Mapping[tuple[int, int], tuple[Box, float]],
    cfg: ProtocolConfig = ProtocolConfig("fg_ovd"),
) -> EvalReport:
    """Rank-the-positive evaluation.

    Each group yields one detection: the box and score of its top caption.
    The detection is a true positive only if that caption is the positive and
    its box reaches the IoU threshold against the object's box. AP is pooled
    over groups of the same class, averaged over classes, IoU thresholds and
    finally over vocabularies.

    Raises:
        MissingScoreError: a (group, caption) pair without a score.
    """
    decisions = fgovd_decisions(groups, caption_scores)
    vocab_ids = sorted({g.vocabulary for g in groups})
    if any(v < 0 or v >= cfg.vocabularies for v in vocab_ids):
        raise ValueError(f"group vocabulary ids must lie in [0, {cfg.vocabularies})")

    cells = defaultdict(list)  # (vocab, class) -> [(group index, gt box)]
    for gi, g in enumerate(groups):
        image_id, obj = g.object_ref
        gts = ds.gt_by_image.get(image_id, [])
        if not 0 <= obj < len(gts):
            raise ValueError(f"group {gi}: object {g.object_ref} not in dataset")
        cells[(g.vocabulary, gts[obj].class_id)].append((gi, gts[obj].box))

    thresholds = tuple(cfg.iou_thresholds)
    per_vocab_class: dict[int, dict[int, list[float]]] = defaultdict(dict)
    counts = [[0, 0, 0] for _ in thresholds]
    first_outcomes: dict[int, bool] = {}
    for (v, c), members in sorted(cells.items()):
        aps = []
        for k, t in enumerate(thresholds):
            results = []
            for gi, gt_box in members:
                ci, box, score = decisions[gi]
                hit = ci == 0 and iou(box, gt_box) >= t
                results.append(
                    MatchResult(
                        matched_pairs=((0, 0, iou(box, gt_box)),) if hit else (),
                        false_positives=() if hit else (0,),
                        false_negatives=() if hit else (0,),
                        iou_threshold=t,
                        scores=(score,),
                        image_id=gi,
                    )
                )
                counts[k][0 if hit else 1] += 1
                counts[k][2] += 0 if hit else 1
                if k == 0:
                    first_outcomes[gi] = hit
            aps.append(average_precision(pr_curve(results, len(members))))
        per_vocab_class[v][c] = aps

    vocab_maps = []
    for v in vocab_ids:
        table = np.array(list(per_vocab_class[v].values()))
        vocab_maps.append(float(np.mean(table.mean(axis=0))))
    per_class = {}
    for c in sorted({c for d in per_vocab_class.values() for c in d}):
        rows = [per_vocab_class[v][c] for v in vocab_ids if c in per_vocab_class[v]]
        per_class[c] = np.array(rows).mean(axis=0).tolist()
    report = EvalReport(
        per_class_ap=per_class,
        map=float(np.mean(vocab_maps)) if vocab_maps else 0.0,
        counts=[tuple(x) for x in counts],
        protocol_tag="fg_ovd",
        iou_thresholds=thresholds,
    )
    report.extra.update(
        map_per_vocabulary=vocab_maps,
        group_hits=[first_outcomes[i] for i in range(len(groups))],
    )
    return report


def make_negative_captions(positive: str, palette: Sequence[str], k: int, seed: int) -> list[str]:
    """Near-miss captions by swapping one colour word for another.

    Each output differs from ``positive`` in exactly one palette word
    occurrence. The choice among all possible swaps is seeded.

    Raises:
        NoAttributeError: ``positive`` contains no palette word.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    colours = list(dict.fromkeys(w.lower() for w in palette))
    if len(colours) < 2:
        raise ValueError("palette needs at least two distinct colours")
    pattern = re.compile(r"\b(" + "|".join(map(re.escape, colours)) + r")\b", re.IGNORECASE)
    hits = list(pattern.finditer(positive))
    if not hits:
        raise NoAttributeError(f"no palette colour in caption {positive!r}")
    candidates = []
    for m in hits:
        for colour in colours:
            if colour != m.group(0).lower():
                text = positive[: m.start()] + colour + positive[m.end():]
                if text != positive and text not in candidates:
                    candidates.append(text)
    if k > len(candidates):
        raise ValueError(f"only {len(candidates)} distinct negatives possible, {k} requested")
    return random.Random(seed).sample(candidates, k)


# -- OV-VG -------------------------------------------------------------------

Answer = Union[Box, Sequence[Box]]


def eval_ovvg(queries: Sequence[GroundingQuery], answers: Mapping[int, Answer], iou_threshold: float = 0.5) -> GroundingReport:
    """Top-1 grounding accuracy: share of queries whose answer box hits the target.

    ``answers`` maps query index to one box (a one-element list is accepted).

    Raises:
        MissingAnswerError: a query without an answer.
        MultipleAnswerError: a query answered with more than one box.
    """
    hits = []
    for qi, q in enumerate(queries):
        if qi not in answers:
            raise MissingAnswerError(f"query {qi} (image {q.image_id}) has no answer")
        ans = answers[qi]
        if not isinstance(ans, Box):
            ans = list(ans)
            if len(ans) != 1:
                err = MultipleAnswerError if len(ans) > 1 else MissingAnswerError
                raise err(f"query {qi} (image {q.image_id}) has {len(ans)} answer boxes")
            ans = ans[0]
        hits.append(iou(ans, q.gt_box) >= iou_threshold)
    n = len(hits)
    correct = sum(hits)
    return GroundingReport(correct / n if n else 0.0, correct, n, iou_threshold, hits)


# -- wire formats ------------------------------------------------------------
#
# fgovd file: {"groups": [{"image_id", "object_index", "positive", "negatives",
#              "vocabulary"?}], "scores": [{"group", "caption", "bbox", "score"}]}
# ovvg file:  {"queries": [{"image_id", "caption", "bbox"}],
#              "answers": [{"query", "bbox"}]}


def _field(rec, key, where):
    if not isinstance(rec, dict):
        raise SchemaError(f"{where}: expected an object")
    if key not in rec:
        raise SchemaError(f"{where}: missing required field {key!r}")
    return rec[key]


def _as_box(values, where) -> Box:
    if not isinstance(values, (list, tuple)) or len(values) != 4:
        raise SchemaError(f"{where}: bbox must be a list of 4 numbers")
    return Box.from_list([float(v) for v in values])


def fgovd_from_dict(data: dict, ds: Dataset, source: str = "<fgovd>"):
    """Parse an FG-OVD file into ``(groups, caption_scores)``."""
    groups = []
    for i, rec in enumerate(_field(data, "groups", source)):
        where = f"{source}: groups[{i}]"
        with record_errors(where):
            image_id = int(_field(rec, "image_id", where))
            obj = int(_field(rec, "object_index", where))
            if not 0 <= obj < len(ds.gt_by_image.get(image_id, [])):
                raise IntegrityError(f"{where}: object ({image_id}, {obj}) not in dataset")
            groups.append(
                CaptionGroup(
                    (image_id, obj),
                    str(_field(rec, "positive", where)),
                    tuple(str(t) for t in _field(rec, "negatives", where)),
                    int(rec.get("vocabulary", 0)),
                )
            )
    scores = {}
    for i, rec in enumerate(_field(data, "scores", source)):
        where = f"{source}: scores[{i}]"
        with record_errors(where):
            gi, ci = int(_field(rec, "group", where)), int(_field(rec, "caption", where))
            if not 0 <= gi < len(groups) or not 0 <= ci < len(groups[gi].captions):
                raise IntegrityError(f"{where}: no caption {ci} in group {gi}")
            scores[(gi, ci)] = (_as_box(_field(rec, "bbox", where), where), float(_field(rec, "score", where)))
    return groups, scores


def fgovd_to_dict(groups: Sequence[CaptionGroup], caption_scores) -> dict:
    return {
        "groups": [
            {
                "image_id": g.object_ref[0],
                "object_index": g.object_ref[1],
                "positive": g.positive,
                "negatives": list(g.negatives),
                "vocabulary": g.vocabulary,
            }
            for g in groups
        ],
        "scores": [
            {"group": gi, "caption": ci, "bbox": [float(v) for v in box.to_list()], "score": float(s)}
            for (gi, ci), (box, s) in sorted(caption_scores.items())
        ],
    }


def ovvg_from_dict(data: dict, ds: Optional[Dataset] = None, source: str = "<ovvg>"):
    """Parse an OV-VG file into ``(queries, answers)``; repeated answers become lists."""
    queries = []
    for i, rec in enumerate(_field(data, "queries", source)):
        where = f"{source}: queries[{i}]"
        with record_errors(where):
            image_id = int(_field(rec, "image_id", where))
            if ds is not None and image_id not in ds.image_by_id:
                raise IntegrityError(f"{where}: image_id {image_id} not in dataset")
            caption = str(_field(rec, "caption", where))
            queries.append(GroundingQuery(image_id, caption, _as_box(_field(rec, "bbox", where), where)))
    answers: dict[int, list[Box]] = defaultdict(list)
    for i, rec in enumerate(_field(data, "answers", source)):
        where = f"{source}: answers[{i}]"
        with record_errors(where):
            qi = int(_field(rec, "query", where))
            if not 0 <= qi < len(queries):
                raise IntegrityError(f"{where}: query {qi} does not exist")
            answers[qi].append(_as_box(_field(rec, "bbox", where), where))
    return queries, dict(answers)


def ovvg_to_dict(queries: Sequence[GroundingQuery], answers: Mapping[int, Answer]) -> dict:
    out_answers = []
    for qi in sorted(answers):
        boxes = [answers[qi]] if isinstance(answers[qi], Box) else list(answers[qi])
        out_answers.extend({"query": qi, "bbox": [float(v) for v in b.to_list()]} for b in boxes)
    return {
        "queries": [
            {"image_id": q.image_id, "caption": q.caption, "bbox": [float(v) for v in q.gt_box.to_list()]}
            for q in queries
        ],
        "answers": out_answers,
    }
