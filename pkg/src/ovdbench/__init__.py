"""Offline evaluation toolkit for caption-conditioned, fine-grained object detection."""

__version__ = "0.1.0"

from .geometry import Box, area, intersection, iou, overlap_ratio
from .datamodel import (
    ClassEntry,
    Dataset,
    GroundTruth,
    ImageRecord,
    Prediction,
    load_dataset,
    load_predictions,
    save_dataset,
    save_predictions,
)
from .matching import MatchResult, match_greedy
from .metrics import COCO_IOU_THRESHOLDS, EvalReport, PRCurve, average_precision, coco_map, pr_curve
from .postprocess import PRESETS, AggregatedBox, SuppressionConfig, aggregate_image, standard_nms, suppress_caption
from .protocols import (
    CaptionGroup,
    GroundingQuery,
    ProtocolConfig,
    eval_3fovd,
    eval_fgovd,
    eval_ovvg,
    eval_supervised,
    make_negative_captions,
)
from .embedcache import CostModel, EmbeddingCache, HashBagEmbedder, score_alignment
from .datasettools import SplitAssignment, class_distribution, split, temporal_clusters
