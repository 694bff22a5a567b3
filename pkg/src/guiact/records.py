"""Line-delimited JSON datasets: predictions, ground truth, reward and advantage batches."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Tuple, Union

from .action import UnifiedAction, action_from_obj, parse_unified
from .adapters import FORMATS, UNIFIED_FORMAT, RawPrediction
from .evaluator import GroundTruthStep, bbox_from_pixels

StepKey = Tuple[str, str]


class RecordError(ValueError):
    """A dataset line is malformed."""


def read_jsonl(path: Union[str, Path]) -> Iterator[Tuple[int, Any]]:
    """Yield ``(line_number, value)`` for every non-blank line. OSError propagates."""
    with open(path, encoding="utf-8") as f:
        for n, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                yield n, json.loads(line)
            except json.JSONDecodeError as e:
                raise RecordError(f"{path}:{n}: invalid JSON ({e})") from None


def step_key(rec: Dict[str, Any]) -> StepKey:
    if "episode_id" not in rec or "step_id" not in rec:
        raise RecordError("record needs episode_id and step_id")
    return (str(rec["episode_id"]), str(rec["step_id"]))


def parse_screen(value: Any) -> Optional[Tuple[int, int]]:
    """Accept ``[w, h]``, ``{"width": w, "height": h}`` or ``"WxH"``."""
    if value is None:
        return None
    if isinstance(value, str):
        parts = value.lower().split("x")
        if len(parts) != 2:
            raise RecordError(f"screen must look like WxH, got {value!r}")
        try:
            w, h = int(parts[0]), int(parts[1])
        except ValueError:
            raise RecordError(f"screen must look like WxH, got {value!r}") from None
    elif isinstance(value, dict):
        w, h = value.get("width"), value.get("height")
    elif isinstance(value, (list, tuple)) and len(value) == 2:
        w, h = value
    else:
        raise RecordError(f"unreadable screen {value!r}")
    if not (isinstance(w, int) and isinstance(h, int) and w > 0 and h > 0):
        raise RecordError(f"screen dimensions must be positive integers, got {value!r}")
    return (w, h)


@dataclass(frozen=True)
class PredictionRecord:
    key: Optional[StepKey]  # None when the line carries no episode/step ids
    raw: RawPrediction
    extra: Dict[str, Any]


def prediction_from_record(rec: Dict[str, Any], *, format_override: Optional[str] = None,
                           low_instruction: bool = False,
                           screen_override: Optional[Tuple[int, int]] = None) -> PredictionRecord:
    if not isinstance(rec, dict):
        raise RecordError("prediction line must be a JSON object")
    fmt = format_override or rec.get("format")
    if fmt is None:
        raise RecordError("no format: pass --format or give each line a 'format'")
    if fmt not in FORMATS and fmt != UNIFIED_FORMAT:
        raise RecordError(f"unknown format {fmt!r}")
    text = rec.get("text")
    if not isinstance(text, str):
        raise RecordError("prediction needs a 'text' string")
    screen = None
    if fmt == "qwen25vl":
        screen = screen_override or parse_screen(rec.get("screen"))
        if screen is None:
            raise RecordError("qwen25vl predictions need a screen size")
    low = low_instruction or bool(rec.get("low_instruction_mode", False))
    extra = {k: v for k, v in rec.items() if k not in ("text", "format", "screen", "low_instruction_mode")}
    key = step_key(rec) if "episode_id" in rec or "step_id" in rec else None
    return PredictionRecord(key, RawPrediction(text, fmt, screen, low), extra)


def _gt_action(value: Any) -> UnifiedAction:
    if isinstance(value, str):
        return parse_unified(value, evaluation=True)
    return action_from_obj(value, evaluation=True)


def gt_from_record(rec: Dict[str, Any]) -> GroundTruthStep:
    """Ground-truth line: ``gt_action`` as compact string or object, box in
    [0,1000] units as ``gt_bbox`` or in pixels as ``gt_bbox_px`` + ``screen``."""
    if not isinstance(rec, dict):
        raise RecordError("ground-truth line must be a JSON object")
    key = step_key(rec)
    if "gt_action" not in rec:
        raise RecordError("ground truth needs 'gt_action'")
    try:
        action = _gt_action(rec["gt_action"])
        bbox = rec.get("gt_bbox")
        if bbox is None and rec.get("gt_bbox_px") is not None:
            screen = parse_screen(rec.get("screen"))
            if screen is None:
                raise RecordError("gt_bbox_px needs the screenshot size in 'screen'")
            bbox = bbox_from_pixels(rec["gt_bbox_px"], *screen)
        return GroundTruthStep(
            episode_id=key[0], step_id=key[1], gt_action=action,
            gt_bbox=tuple(bbox) if bbox is not None else None,
            low_level_instruction=rec.get("low_level_instruction"),
        )
    except RecordError:
        raise
    except ValueError as e:
        raise RecordError(f"episode {key[0]} step {key[1]}: {e}") from None


def load_ground_truth(path: Union[str, Path]) -> Dict[StepKey, GroundTruthStep]:
    out: Dict[StepKey, GroundTruthStep] = {}
    for n, rec in read_jsonl(path):
        try:
            gt = gt_from_record(rec)
        except RecordError as e:
            raise RecordError(f"{path}:{n}: {e}") from None
        k = (gt.episode_id, str(gt.step_id))
        if k in out:
            raise RecordError(f"{path}:{n}: duplicate step {k}")
        out[k] = gt
    return out


def dump_jsonl(rows: List[Dict[str, Any]]) -> str:
    return "".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in rows)
