"""Dataset and prediction records, JSON ingestion and canonical serialization.

The on-disk annotation format is COCO-like::

    {"images": [{"id", "width", "height", "timestamp"?, "sequence_id"?}],
     "categories": [{"id", "name", "caption", "coarse_class_id", "novelty"}],
     "annotations": [{"image_id", "bbox": [x_min, y_min, x_max, y_max],
                      "category_id"}]}

and predictions are a list (or ``{"predictions": [...]}``) of
``{"image_id", "bbox", "score", "token", "caption_class_id"}``.

Output files are written canonically: sorted keys, two-space indent and every
float printed with six decimals, so that equal content gives equal bytes.
"""
from __future__ import annotations

import json
import math
from collections import defaultdict
from contextlib import contextmanager
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Optional

from .errors import IntegrityError, NegativeScoreError, ParseError, SchemaError, ValidationError
from .geometry import Box

UNK_TOKEN = "[UNK]"
NOVELTY_VALUES = ("base", "novel")


@dataclass(frozen=True)
class ImageRecord:
    image_id: int
    width: float
    height: float
    timestamp: Optional[float] = None
    sequence_id: Optional[int] = None

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise SchemaError(f"image {self.image_id}: width/height must be positive")
        if (self.timestamp is None) != (self.sequence_id is None):
            raise SchemaError(
                f"image {self.image_id}: timestamp and sequence_id must be given together"
            )


@dataclass(frozen=True)
class ClassEntry:
    class_id: int
    name: str
    caption: str
    coarse_class_id: int = 0
    novelty: str = "base"

    def __post_init__(self):
        if not self.caption:
            raise SchemaError(f"category {self.class_id}: caption must be non-empty")
        if self.novelty not in NOVELTY_VALUES:
            raise SchemaError(
                f"category {self.class_id}: novelty must be one of {NOVELTY_VALUES}, "
                f"got {self.novelty!r}"
            )


@dataclass(frozen=True)
class GroundTruth:
    image_id: int
    box: Box
    class_id: int


@dataclass(frozen=True)
class Prediction:
    image_id: int
    box: Box
    score: float
    token: str
    caption_class_id: int

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise SchemaError(f"prediction on image {self.image_id}: non-finite score")
        if self.score < 0:
            raise NegativeScoreError(
                f"prediction on image {self.image_id}: negative score {self.score}"
            )


@dataclass(frozen=True)
class Dataset:
    images: tuple[ImageRecord, ...] = ()
    classes: tuple[ClassEntry, ...] = ()
    ground_truth: tuple[GroundTruth, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "images", tuple(self.images))
        object.__setattr__(self, "classes", tuple(self.classes))
        object.__setattr__(self, "ground_truth", tuple(self.ground_truth))
        validate_dataset(self)

    @cached_property
    def image_by_id(self) -> dict[int, ImageRecord]:
        return {im.image_id: im for im in self.images}

    @cached_property
    def class_by_id(self) -> dict[int, ClassEntry]:
        return {c.class_id: c for c in self.classes}

    @cached_property
    def class_by_name(self) -> dict[str, ClassEntry]:
        return {c.name: c for c in self.classes}

    @cached_property
    def gt_by_image(self) -> dict[int, list[GroundTruth]]:
        """Ground truth per image, in file order (the FG-OVD object index)."""
        out = defaultdict(list)
        for g in self.ground_truth:
            out[g.image_id].append(g)
        return dict(out)

    @cached_property
    def gt_by_image_class(self) -> dict[tuple[int, int], list[GroundTruth]]:
        out = defaultdict(list)
        for g in self.ground_truth:
            out[(g.image_id, g.class_id)].append(g)
        return dict(out)

    def class_ids(self, novelty: Optional[str] = None) -> list[int]:
        return sorted(c.class_id for c in self.classes if novelty is None or c.novelty == novelty)

    @property
    def vocabulary(self) -> set[str]:
        """Token universe of all class captions."""
        from .protocols import tokenize

        return {t for c in self.classes for t in tokenize(c.caption)}


def validate_dataset(ds: Dataset) -> None:
    seen = set()
    for im in ds.images:
        if im.image_id in seen:
            raise IntegrityError(f"duplicate image id {im.image_id}")
        seen.add(im.image_id)
    class_ids = set()
    for c in ds.classes:
        if c.class_id in class_ids:
            raise IntegrityError(f"duplicate category id {c.class_id}")
        class_ids.add(c.class_id)
    for i, g in enumerate(ds.ground_truth):
        if g.image_id not in seen:
            raise IntegrityError(f"annotation #{i}: image_id {g.image_id} not in images")
        if g.class_id not in class_ids:
            raise IntegrityError(f"annotation #{i}: category_id {g.class_id} not in categories")


# -- parsing ---------------------------------------------------------------


def _require(record: dict, key: str, where: str):
    if not isinstance(record, dict):
        raise SchemaError(f"{where}: expected an object, got {type(record).__name__}")
    if key not in record:
        raise SchemaError(f"{where}: missing required field {key!r}")
    return record[key]


@contextmanager
def record_errors(where: str):
    """Name the offending record in any error raised while parsing it."""
    try:
        yield
    except ValidationError as exc:
        msg = str(exc)
        raise type(exc)(msg if msg.startswith(where) else f"{where}: {msg}") from None
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: {exc}") from None


def _box(values, where: str) -> Box:
    if not isinstance(values, (list, tuple)) or len(values) != 4:
        raise SchemaError(f"{where}: bbox must be a list of 4 numbers")
    return Box.from_list([float(v) for v in values])


def read_json(path) -> Any:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ParseError(f"{path}: file not found") from None
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not UTF-8 text ({exc})") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: malformed JSON ({exc})") from None


def _list_field(data, key, source):
    value = _require(data, key, source)
    if not isinstance(value, list):
        raise SchemaError(f"{source}: {key!r} must be a list")
    return value


def dataset_from_dict(data: dict, source: str = "<dataset>") -> Dataset:
    if not isinstance(data, dict):
        raise SchemaError(f"{source}: top level must be an object")
    images = []
    for i, rec in enumerate(_list_field(data, "images", source)):
        where = f"{source}: images[{i}]"
        with record_errors(where):
            ts = rec.get("timestamp") if isinstance(rec, dict) else None
            seq = rec.get("sequence_id") if isinstance(rec, dict) else None
            images.append(
                ImageRecord(
                    image_id=int(_require(rec, "id", where)),
                    width=float(_require(rec, "width", where)),
                    height=float(_require(rec, "height", where)),
                    timestamp=None if ts is None else float(ts),
                    sequence_id=None if seq is None else int(seq),
                )
            )
    classes = []
    for i, rec in enumerate(_list_field(data, "categories", source)):
        where = f"{source}: categories[{i}]"
        with record_errors(where):
            classes.append(
                ClassEntry(
                    class_id=int(_require(rec, "id", where)),
                    name=str(_require(rec, "name", where)),
                    caption=str(_require(rec, "caption", where)),
                    coarse_class_id=int(rec.get("coarse_class_id", 0)),
                    novelty=str(rec.get("novelty", "base")),
                )
            )
    image_by_id = {}
    for im in images:
        if im.image_id in image_by_id:
            raise IntegrityError(f"{source}: duplicate image id {im.image_id}")
        image_by_id[im.image_id] = im
    gts = []
    for i, rec in enumerate(_list_field(data, "annotations", source)):
        where = f"{source}: annotations[{i}]"
        with record_errors(where):
            image_id = int(_require(rec, "image_id", where))
            box = _box(_require(rec, "bbox", where), where)
            class_id = int(_require(rec, "category_id", where))
            im = image_by_id.get(image_id)
            if im is None:
                raise IntegrityError(f"{where}: image_id {image_id} not in images")
            gts.append(GroundTruth(image_id, box.clamp(im.width, im.height), class_id))
    with record_errors(source):
        return Dataset(images, classes, gts)


def load_dataset(path) -> Dataset:
    """Load and validate a dataset file; boxes are clamped to image bounds.

    Raises:
        ParseError: unreadable or malformed JSON.
        SchemaError: a required field is missing or ill-typed.
        IntegrityError: duplicate ids or dangling references.
    """
    return dataset_from_dict(read_json(path), source=str(path))


def predictions_from_list(records, ds: Dataset, source: str = "<predictions>") -> list[Prediction]:
    if isinstance(records, dict):
        records = _require(records, "predictions", source)
    if not isinstance(records, list):
        raise SchemaError(f"{source}: expected a list of predictions")
    preds = []
    for i, rec in enumerate(records):
        where = f"{source}: [{i}]"
        with record_errors(where):
            image_id = int(_require(rec, "image_id", where))
            caption_class_id = int(_require(rec, "caption_class_id", where))
            if image_id not in ds.image_by_id:
                raise IntegrityError(f"{where}: image_id {image_id} not in dataset")
            if caption_class_id not in ds.class_by_id:
                raise IntegrityError(f"{where}: caption_class_id {caption_class_id} not in dataset")
            box = _box(_require(rec, "bbox", where), where)
            score = float(_require(rec, "score", where))
            preds.append(Prediction(image_id, box, score, str(_require(rec, "token", where)), caption_class_id))
    # stable sort: file order preserved inside each (image, caption) group
    preds.sort(key=lambda p: (p.image_id, p.caption_class_id))
    return preds


def load_predictions(path, ds: Dataset) -> list[Prediction]:
    """Load predictions, validated against ``ds`` and grouped by (image, caption).

    Raises:
        NegativeScoreError: a score below zero.
        ParseError, SchemaError, IntegrityError: as for :func:`load_dataset`.
    """
    return predictions_from_list(read_json(path), ds, source=str(path))


def group_predictions(preds: Iterable[Prediction]) -> dict[tuple[int, int], list[Prediction]]:
    """``(image_id, caption_class_id) -> predictions`` in input order."""
    out = defaultdict(list)
    for p in preds:
        out[(p.image_id, p.caption_class_id)].append(p)
    return dict(out)


# -- serialization -----------------------------------------------------------


def dataset_to_dict(ds: Dataset) -> dict:
    images = []
    for im in ds.images:
        rec = {"id": im.image_id, "width": float(im.width), "height": float(im.height)}
        if im.sequence_id is not None:
            rec["timestamp"] = float(im.timestamp)
            rec["sequence_id"] = im.sequence_id
        images.append(rec)
    return {
        "images": images,
        "categories": [
            {
                "id": c.class_id,
                "name": c.name,
                "caption": c.caption,
                "coarse_class_id": c.coarse_class_id,
                "novelty": c.novelty,
            }
            for c in ds.classes
        ],
        "annotations": [
            {"image_id": g.image_id, "bbox": [float(v) for v in g.box.to_list()], "category_id": g.class_id}
            for g in ds.ground_truth
        ],
    }


def prediction_to_dict(p: Prediction) -> dict:
    return {
        "image_id": p.image_id,
        "bbox": [float(v) for v in p.box.to_list()],
        "score": float(p.score),
        "token": p.token,
        "caption_class_id": p.caption_class_id,
    }


def _format_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite float {x}")
    s = f"{x:.6f}"
    return "0.000000" if s == "-0.000000" else s


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or isinstance(obj, (bool, str)):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _format_float(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {_encode(obj[k], indent, level + 1)}"
            for k in sorted(obj, key=str)
        ]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    # numpy scalars and the like
    if hasattr(obj, "item"):
        return _encode(obj.item(), indent, level)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def canonical_dumps(obj, indent: int = 2) -> str:
    """Deterministic JSON: sorted keys, fixed six-decimal floats, trailing newline."""
    return _encode(obj, indent, 0) + "\n"


def write_canonical(path, obj) -> None:
    Path(path).write_text(canonical_dumps(obj), encoding="utf-8")


def save_dataset(ds: Dataset, path, manifest: Optional[dict] = None) -> None:
    data = dataset_to_dict(ds)
    if manifest is not None:
        data["manifest"] = manifest
    write_canonical(path, data)


def save_predictions(preds: Iterable[Prediction], path, manifest: Optional[dict] = None) -> None:
    records = [prediction_to_dict(p) for p in preds]
    write_canonical(path, records if manifest is None else {"predictions": records, "manifest": manifest})
