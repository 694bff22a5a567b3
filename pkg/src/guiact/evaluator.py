"""Step-level Type Match / Exact Match scoring and grounding metrics."""

from __future__ import annotations

import math
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, Optional, Sequence, Tuple, Union

from .action import COORD_MAX, ActionType, Coord, Direction, UnifiedAction, action_type_of
from .adapters import ConversionOutcome, ZeroDisplacement, normalize_coord, swipe_direction

BBox = Tuple[int, int, int, int]

DEFAULT_TOLERANCE = 140
IOU_THRESHOLD = Fraction(1, 2)
TEXT_RULE = "NFC + strip; Latin letters compared case-insensitively"


class EmptyInput(ValueError):
    pass


def check_bbox(bbox: Sequence[float], upper: float = COORD_MAX) -> BBox:
    if len(bbox) != 4:
        raise ValueError(f"bbox needs 4 numbers, got {bbox!r}")
    x0, y0, x1, y1 = bbox
    if not (0 <= x0 <= x1 <= upper and 0 <= y0 <= y1 <= upper):
        raise ValueError(f"invalid bbox {tuple(bbox)}")
    return (x0, y0, x1, y1)


def bbox_from_pixels(bbox: Sequence[float], width: float, height: float) -> BBox:
    """Absolute pixel box to [0,1000] units using the screenshot size."""
    x0, y0 = normalize_coord(bbox[0], bbox[1], width, height)
    x1, y1 = normalize_coord(bbox[2], bbox[3], width, height)
    return check_bbox((x0, y0, x1, y1))


@dataclass(frozen=True)
class GroundTruthStep:
    episode_id: str
    step_id: Union[int, str]
    gt_action: UnifiedAction
    gt_bbox: Optional[BBox] = None
    low_level_instruction: Optional[str] = None

    def __post_init__(self) -> None:
        if self.gt_bbox is not None:
            if self.gt_action.point is None:
                raise ValueError("gt_bbox given for an action without POINT")
            object.__setattr__(self, "gt_bbox", check_bbox(tuple(self.gt_bbox)))


@dataclass(frozen=True)
class StepEvaluation:
    type_match: bool
    exact_match: bool
    failure_reason: str = ""
    gt_type: Optional[ActionType] = None
    status_compound: bool = False

    def __post_init__(self) -> None:
        if self.exact_match and not self.type_match:
            raise ValueError("exact match without type match")


@dataclass(frozen=True)
class TypeBreakdown:
    n: int
    tm: int
    em: int


@dataclass(frozen=True)
class BenchmarkReport:
    n_steps: int
    tm_count: int
    em_count: int
    per_type: Dict[str, TypeBreakdown] = field(default_factory=dict)
    status_compound_steps: int = 0

    @property
    def tm_rate(self) -> float:
        return self.tm_count / self.n_steps

    @property
    def em_rate(self) -> float:
        return self.em_count / self.n_steps

    def to_dict(self) -> dict:
        return {
            "n_steps": self.n_steps,
            "tm_count": self.tm_count,
            "em_count": self.em_count,
            "tm_rate": self.tm_rate,
            "em_rate": self.em_rate,
            "per_type": {k: {"n": v.n, "tm": v.tm, "em": v.em} for k, v in sorted(self.per_type.items())},
            "status_compound_steps": self.status_compound_steps,
        }


# -- point and box geometry ------------------------------------------------

def point_in_bbox(pred: Sequence[float], bbox: Sequence[float]) -> bool:
    x, y = pred
    return bbox[0] <= x <= bbox[2] and bbox[1] <= y <= bbox[3]


def match_point(pred: Sequence[float], gt: GroundTruthStep, tolerance: float = DEFAULT_TOLERANCE) -> bool:
    """Box containment (inclusive) when the step has a box, else distance to the gt point."""
    if gt.gt_action.point is None:
        raise ValueError("ground truth has no POINT")
    if gt.gt_bbox is not None:
        return point_in_bbox(pred, gt.gt_bbox)
    gx, gy = gt.gt_action.point
    return math.hypot(pred[0] - gx, pred[1] - gy) <= tolerance


def _area(b: Sequence[float]) -> Fraction:
    return Fraction(b[2] - b[0]) * Fraction(b[3] - b[1])


def iou_fraction(a: Sequence[float], b: Sequence[float]) -> Fraction:
    """Exact IoU; two identical degenerate boxes count as a perfect overlap."""
    a = [Fraction(v) for v in a]
    b = [Fraction(v) for v in b]
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    inter = iw * ih if iw > 0 and ih > 0 else Fraction(0)
    union = _area(a) + _area(b) - inter
    if union == 0:
        return Fraction(1) if a == b else Fraction(0)
    return inter / union


def iou(a: Sequence[float], b: Sequence[float]) -> float:
    return float(iou_fraction(a, b))


def eval_grounding_point(pred: Sequence[float], gt_bbox: Sequence[float]) -> bool:
    return point_in_bbox(pred, gt_bbox)


def eval_grounding_bbox(pred_bbox: Sequence[float], gt_bbox: Sequence[float],
                        threshold: Fraction = IOU_THRESHOLD) -> bool:
    return iou_fraction(pred_bbox, gt_bbox) >= threshold


def normalize_text(s: str) -> str:
    s = unicodedata.normalize("NFC", s).strip()
    out = []
    for ch in s:
        if ch.isalpha() and unicodedata.name(ch, "").startswith("LATIN"):
            out.append(ch.casefold())
        else:
            out.append(ch)
    return unicodedata.normalize("NFC", "".join(out))


def text_equal(a: str, b: str) -> bool:
    return normalize_text(a) == normalize_text(b)


def eval_bbox2text(pred: str, gt: str) -> bool:
    return text_equal(pred, gt)


# -- step scoring ----------------------------------------------------------

def _swipe_dir(action: UnifiedAction) -> Optional[Direction]:
    if isinstance(action.to, Direction):
        return action.to
    try:
        return swipe_direction(action.point, action.to)
    except ZeroDisplacement:
        return None


def _param_mismatch(pred: UnifiedAction, gt: GroundTruthStep, kind: ActionType,
                    tolerance: float) -> str:
    g = gt.gt_action
    if kind in (ActionType.CLICK, ActionType.LONG_PRESS):
        if not match_point(pred.point, gt, tolerance):
            return f"point {pred.point} misses target"
    elif kind is ActionType.SWIPE:
        pd, gd = _swipe_dir(pred), _swipe_dir(g)
        if pd is None or gd is None:
            if pred.to != g.to:
                return "degenerate swipe endpoints differ"
        elif pd is not gd:
            return f"direction {pd.value} != {gd.value}"
    elif kind is ActionType.TYPE:
        if not text_equal(pred.type_text, g.type_text):
            return "text differs"
    elif kind is ActionType.PRESS:
        if pred.press is not g.press:
            return f"key {pred.press.value} != {g.press.value}"
    if pred.status is not g.status:
        return f"status {pred.status.value} != {g.status.value}"
    return ""


def evaluate_step(pred: Union[ConversionOutcome, UnifiedAction, None], gt: GroundTruthStep,
                  tolerance: float = DEFAULT_TOLERANCE) -> StepEvaluation:
    """Score one prediction. ``None`` stands for an unparseable prediction."""
    gt_type = action_type_of(gt.gt_action)
    compound = gt.gt_action.is_status_compound
    if isinstance(pred, ConversionOutcome):
        if pred.dropped:
            return StepEvaluation(False, False, f"dropped: {pred.reason}", gt_type, compound)
        pred = pred.action
    if pred is None:
        return StepEvaluation(False, False, "unparseable prediction", gt_type, compound)

    pred_type = action_type_of(pred)
    compound = compound or pred.is_status_compound
    if pred_type is not gt_type:
        return StepEvaluation(False, False, f"type {pred_type.value} != {gt_type.value}", gt_type, compound)
    reason = _param_mismatch(pred, gt, gt_type, tolerance)
    return StepEvaluation(True, reason == "", reason, gt_type, compound)


def aggregate(evals: Iterable[StepEvaluation]) -> BenchmarkReport:
    n = tm = em = compound = 0
    by_type: Dict[str, Counter] = {}
    for e in evals:
        n += 1
        tm += e.type_match
        em += e.exact_match
        compound += e.status_compound
        key = e.gt_type.value if e.gt_type is not None else "UNKNOWN"
        c = by_type.setdefault(key, Counter())
        c["n"] += 1
        c["tm"] += e.type_match
        c["em"] += e.exact_match
    if n == 0:
        raise EmptyInput("no steps to aggregate")
    per_type = {k: TypeBreakdown(c["n"], c["tm"], c["em"]) for k, c in by_type.items()}
    return BenchmarkReport(n, tm, em, per_type, compound)


def merge_reports(a: BenchmarkReport, b: BenchmarkReport) -> BenchmarkReport:
    """Combine reports from disjoint shards."""
    per_type = dict(a.per_type)
    for k, v in b.per_type.items():
        if k in per_type:
            o = per_type[k]
            per_type[k] = TypeBreakdown(o.n + v.n, o.tm + v.tm, o.em + v.em)
        else:
            per_type[k] = v
    return BenchmarkReport(
        a.n_steps + b.n_steps, a.tm_count + b.tm_count, a.em_count + b.em_count,
        per_type, a.status_compound_steps + b.status_compound_steps,
    )


def degenerate_bbox(point: Coord) -> BBox:
    return (point[0], point[1], point[0], point[1])
