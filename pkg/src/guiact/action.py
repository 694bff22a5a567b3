"""Unified compact-JSON action model: parsing, validation and serialization."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Optional, Tuple, Union

COORD_MAX = 1000
DEFAULT_DURATION_MS = 200
CLICK_MAX_DURATION_MS = 200

Coord = Tuple[int, int]


class Direction(str, Enum):
    UP = "up"
    DOWN = "down"
    LEFT = "left"
    RIGHT = "right"


class SpecialKey(str, Enum):
    HOME = "HOME"
    BACK = "BACK"
    ENTER = "ENTER"
    # Evaluation-only: some baselines have a recent-apps key the model schema lacks.
    RECENT = "RECENT"


CANONICAL_KEYS = frozenset({SpecialKey.HOME, SpecialKey.BACK, SpecialKey.ENTER})


class TaskStatus(str, Enum):
    CONTINUE = "continue"
    FINISH = "finish"
    SATISFIED = "satisfied"
    IMPOSSIBLE = "impossible"
    INTERRUPT = "interrupt"
    NEED_FEEDBACK = "need_feedback"


class ActionType(str, Enum):
    CLICK = "CLICK"
    LONG_PRESS = "LONG_PRESS"
    SWIPE = "SWIPE"
    TYPE = "TYPE"
    PRESS = "PRESS"
    WAIT = "WAIT"
    STATUS_ONLY = "STATUS_ONLY"


class ActionError(ValueError):
    category = "error"


class FormatError(ActionError):
    """Input is not a well-formed JSON document."""

    category = "format_error"


class SchemaViolation(ActionError):
    """Well-formed JSON that breaks the action schema."""

    category = "schema_violation"


class InvariantViolation(ActionError):
    category = "invariant_violation"


@dataclass(frozen=True)
class UnifiedAction:
    """One atomic action.

    ``duration`` is ``None`` when the key is absent; ``thought`` never takes
    part in equality.
    """

    point: Optional[Coord] = None
    to: Union[Direction, Coord, None] = None
    type_text: Optional[str] = None
    press: Optional[SpecialKey] = None
    status: TaskStatus = TaskStatus.CONTINUE
    duration: Optional[int] = None
    thought: Optional[str] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        try:
            if isinstance(self.point, list):
                object.__setattr__(self, "point", tuple(self.point))
            if isinstance(self.to, list):
                object.__setattr__(self, "to", tuple(self.to))
            elif isinstance(self.to, str) and not isinstance(self.to, Direction):
                object.__setattr__(self, "to", Direction(self.to))
            if isinstance(self.press, str) and not isinstance(self.press, SpecialKey):
                object.__setattr__(self, "press", SpecialKey(self.press))
            if isinstance(self.status, str) and not isinstance(self.status, TaskStatus):
                object.__setattr__(self, "status", TaskStatus(self.status))
        except ValueError as e:
            raise InvariantViolation(str(e)) from None
        check_invariants(self, evaluation=True)

    @property
    def is_status_compound(self) -> bool:
        """True when a non-default status rides along with a real action."""
        return self.status is not TaskStatus.CONTINUE and action_type_of(self) is not ActionType.STATUS_ONLY

    @property
    def effective_duration(self) -> int:
        return DEFAULT_DURATION_MS if self.duration is None else self.duration


ValidationVerdict = str  # "valid" | "format_error" | "schema_violation"


@dataclass(frozen=True)
class ValidationReport:
    verdict: ValidationVerdict
    detail: str = ""

    def __post_init__(self) -> None:
        if (self.verdict == "valid") != (self.detail == ""):
            raise ValueError("a valid report carries no detail; an invalid one must")

    @property
    def ok(self) -> bool:
        return self.verdict == "valid"


def _is_int(v: Any) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _check_coord(value: Any, what: str, exc: type = InvariantViolation) -> Coord:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise exc(f"{what} must be a pair of integers")
    x, y = value
    if not (_is_int(x) and _is_int(y)):
        raise exc(f"{what} coordinates must be integers, got {value!r}")
    if not (0 <= x <= COORD_MAX and 0 <= y <= COORD_MAX):
        raise exc(f"{what} {list(value)} outside [0,{COORD_MAX}]")
    return (x, y)


def check_invariants(action: UnifiedAction, *, evaluation: bool = False) -> None:
    """Raise InvariantViolation if ``action`` is not a legal action."""
    if action.point is not None:
        _check_coord(action.point, "POINT")
    if action.to is not None:
        if action.point is None:
            raise InvariantViolation("'to' requires POINT")
        if not isinstance(action.to, Direction):
            _check_coord(action.to, "to")
    if action.press is not None:
        if not isinstance(action.press, SpecialKey):
            raise InvariantViolation(f"bad key {action.press!r}")
        if action.point is not None:
            raise InvariantViolation("PRESS and POINT are mutually exclusive")
        if action.type_text is not None:
            raise InvariantViolation("PRESS and TYPE are mutually exclusive")
        if not evaluation and action.press not in CANONICAL_KEYS:
            raise InvariantViolation(f"PRESS {action.press.value} is evaluation-only")
    if action.type_text is not None and not isinstance(action.type_text, str):
        raise InvariantViolation("TYPE must be a string")
    if action.thought is not None and not isinstance(action.thought, str):
        raise InvariantViolation("thought must be a string")
    if not isinstance(action.status, TaskStatus):
        raise InvariantViolation(f"bad status {action.status!r}")
    if action.duration is not None and (not _is_int(action.duration) or action.duration < 0):
        raise InvariantViolation("duration must be a non-negative integer")


# -- parsing ---------------------------------------------------------------

def _reject_constant(name: str) -> Any:
    raise FormatError(f"non-standard JSON constant {name}")


def _pairs_no_dupes(pairs: list) -> dict:
    out: dict = {}
    for k, v in pairs:
        if k in out:
            raise SchemaViolation(f"duplicate key {k!r}")
        out[k] = v
    return out


def _decode(text: Union[bytes, str]) -> Any:
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError(f"not UTF-8: {e}") from None
    try:
        return json.loads(text, object_pairs_hook=_pairs_no_dupes, parse_constant=_reject_constant)
    except json.JSONDecodeError as e:
        raise FormatError(str(e)) from None


def _enum_member(enum_cls: type, value: Any, key: str) -> Any:
    if not isinstance(value, str):
        raise SchemaViolation(f"{key} must be a string")
    try:
        return enum_cls(value)
    except ValueError:
        raise SchemaViolation(f"{key} {value!r} is not one of {[m.value for m in enum_cls]}") from None


_KNOWN_KEYS = ("thought", "POINT", "to", "TYPE", "PRESS", "duration", "STATUS")


def action_from_obj(obj: Any, *, evaluation: bool = False, require_thought: bool = False) -> UnifiedAction:
    """Build an action from an already-decoded JSON value."""
    if not isinstance(obj, dict):
        raise SchemaViolation("action must be a JSON object")
    unknown = [k for k in obj if k not in _KNOWN_KEYS]
    if unknown:
        raise SchemaViolation(f"unknown key(s) {unknown}")

    thought = obj.get("thought")
    if "thought" in obj and not isinstance(thought, str):
        raise SchemaViolation("thought must be a string")
    if require_thought and thought is None:
        raise SchemaViolation("thought is required")

    point = _check_coord(obj["POINT"], "POINT", SchemaViolation) if "POINT" in obj else None

    to: Union[Direction, Coord, None] = None
    if "to" in obj:
        raw = obj["to"]
        to = _enum_member(Direction, raw, "to") if isinstance(raw, str) else _check_coord(raw, "to", SchemaViolation)

    type_text = obj.get("TYPE")
    if "TYPE" in obj and not isinstance(type_text, str):
        raise SchemaViolation("TYPE must be a string")

    press = _enum_member(SpecialKey, obj["PRESS"], "PRESS") if "PRESS" in obj else None
    if press is not None and not evaluation and press not in CANONICAL_KEYS:
        raise SchemaViolation(f"PRESS {press.value!r} is not one of ['HOME', 'BACK', 'ENTER']")

    duration = obj.get("duration")
    if "duration" in obj and (not _is_int(duration) or duration < 0):
        raise SchemaViolation("duration must be a non-negative integer")

    status = _enum_member(TaskStatus, obj["STATUS"], "STATUS") if "STATUS" in obj else TaskStatus.CONTINUE

    try:
        return UnifiedAction(
            point=point, to=to, type_text=type_text, press=press,
            status=status, duration=duration, thought=thought,
        )
    except InvariantViolation as e:
        raise SchemaViolation(str(e)) from None


def parse_unified(text: Union[bytes, str], *, evaluation: bool = False,
                  require_thought: bool = False) -> UnifiedAction:
    """Parse a compact action string.

    Raises FormatError for malformed JSON and SchemaViolation for anything
    the schema rejects. ``evaluation`` admits the RECENT key.
    """
    return action_from_obj(_decode(text), evaluation=evaluation, require_thought=require_thought)


def validate(text: Union[bytes, str], *, evaluation: bool = False,
             require_thought: bool = False) -> ValidationReport:
    try:
        parse_unified(text, evaluation=evaluation, require_thought=require_thought)
    except ActionError as e:
        return ValidationReport(e.category, str(e) or e.category)
    return ValidationReport("valid")


# -- serialization ---------------------------------------------------------

def canonicalize(action: UnifiedAction) -> UnifiedAction:
    """Drop a redundant default duration.

    200 ms is the default whenever another component is present; on its own
    it is a wait and must be kept.
    """
    has_other = action.point is not None or action.type_text is not None or action.press is not None
    if has_other and action.duration == DEFAULT_DURATION_MS:
        return replace(action, duration=None)
    return action


def _s(value: str) -> str:
    return json.dumps(value, ensure_ascii=False)


def _c(coord: Coord) -> str:
    return f"[{coord[0]},{coord[1]}]"


def serialize_compact(action: UnifiedAction, *, evaluation: bool = False) -> bytes:
    check_invariants(action, evaluation=evaluation)
    a = canonicalize(action)
    parts = []
    if a.thought is not None:
        parts.append('"thought":' + _s(a.thought))
    if a.point is not None:
        parts.append('"POINT":' + _c(a.point))
    if a.to is not None:
        parts.append('"to":' + (_s(a.to.value) if isinstance(a.to, Direction) else _c(a.to)))
    if a.type_text is not None:
        parts.append('"TYPE":' + _s(a.type_text))
    if a.press is not None:
        parts.append('"PRESS":' + _s(a.press.value))
    if a.duration is not None:
        parts.append(f'"duration":{a.duration}')
    if a.status is not TaskStatus.CONTINUE:
        parts.append('"STATUS":' + _s(a.status.value))
    return ("{" + ",".join(parts) + "}").encode("utf-8")


def to_compact_str(action: UnifiedAction, *, evaluation: bool = False) -> str:
    return serialize_compact(action, evaluation=evaluation).decode("utf-8")


# -- taxonomy --------------------------------------------------------------

def action_type_of(action: UnifiedAction) -> ActionType:
    """Partition actions into the types compared by Type Match.

    Status rides along: an action plus ``finish`` is typed by the action.
    """
    if action.press is not None:
        return ActionType.PRESS
    if action.type_text is not None:
        return ActionType.TYPE
    if action.point is not None:
        if action.to is not None:
            return ActionType.SWIPE
        if action.effective_duration > CLICK_MAX_DURATION_MS:
            return ActionType.LONG_PRESS
        return ActionType.CLICK
    if action.duration is not None:
        return ActionType.WAIT
    return ActionType.STATUS_ONLY


def has_unquoted_whitespace(data: Union[bytes, str]) -> bool:
    """True if any space/tab/newline/CR appears outside a JSON string literal."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    in_str = escaped = False
    for b in data:
        if in_str:
            if escaped:
                escaped = False
            elif b == 0x5C:
                escaped = True
            elif b == 0x22:
                in_str = False
        elif b == 0x22:
            in_str = True
        elif b in (0x20, 0x09, 0x0A, 0x0D):
            return True
    return False

