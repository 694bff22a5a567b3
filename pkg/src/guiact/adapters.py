"""Convert baseline agents' raw outputs into unified actions.

Each ``_convert_*`` function follows one baseline's mapping table. Source
parsing is lenient about surrounding prose: the last well-formed action
expression in the text wins.
"""

from __future__ import annotations

import ast
import json
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Callable, Dict, Iterator, Optional, Sequence, Tuple

from .action import (
    COORD_MAX,
    ActionError,
    Coord,
    Direction,
    SpecialKey,
    TaskStatus,
    UnifiedAction,
)

FORMATS = ("qwen25vl", "uitars", "osatlas", "osgenesis", "odyssey", "aguvis")
# Native compact-JSON output, scored without conversion.
UNIFIED_FORMAT = "unified"

SCREEN_CENTER: Coord = (500, 500)
DEFAULT_LONG_PRESS_MS = 1000


class ConversionError(ValueError):
    kind = "parse_failure"


class ParseFailure(ConversionError):
    """Source text is not parseable in its own format."""


class OutOfScreen(ConversionError):
    kind = "out_of_screen"


class ZeroDisplacement(ValueError):
    pass


@dataclass(frozen=True)
class RawPrediction:
    text: str
    format: str
    screen: Optional[Tuple[int, int]] = None
    low_instruction_mode: bool = False

    def __post_init__(self) -> None:
        if self.format not in FORMATS and self.format != UNIFIED_FORMAT:
            raise ValueError(f"unknown format {self.format!r}")
        if (self.format == "qwen25vl") != (self.screen is not None):
            raise ValueError("screen size is required for qwen25vl and only for it")
        if self.screen is not None:
            w, h = self.screen
            if w <= 0 or h <= 0:
                raise ValueError(f"bad screen size {self.screen}")


@dataclass(frozen=True)
class ConversionOutcome:
    action: Optional[UnifiedAction] = None
    dropped: bool = False
    reason: str = ""

    def __post_init__(self) -> None:
        if (self.action is None) != self.dropped:
            raise ValueError("exactly one of action / dropped must hold")

    @classmethod
    def drop(cls, reason: str) -> "ConversionOutcome":
        return cls(action=None, dropped=True, reason=reason)


# -- geometry helpers ------------------------------------------------------

_REVERSED = {
    Direction.UP: Direction.DOWN,
    Direction.DOWN: Direction.UP,
    Direction.LEFT: Direction.RIGHT,
    Direction.RIGHT: Direction.LEFT,
}


def reverse_direction(d: Direction) -> Direction:
    return _REVERSED[Direction(d)]


def swipe_direction(start: Sequence[float], end: Sequence[float]) -> Direction:
    """Dominant-axis direction of a gesture; ties go horizontal. Screen +y points down."""
    dx = end[0] - start[0]
    dy = end[1] - start[1]
    if dx == 0 and dy == 0:
        raise ZeroDisplacement(f"swipe from {tuple(start)} to itself")
    if abs(dx) >= abs(dy):
        return Direction.RIGHT if dx > 0 else Direction.LEFT
    return Direction.DOWN if dy > 0 else Direction.UP


def normalize_coord(x: float, y: float, width: float, height: float) -> Coord:
    """Pixel position to [0,1000] units, floored like ``int(x/width*1000)``.

    Exact rational arithmetic so that e.g. half the width lands on 500.
    """
    if width <= 0 or height <= 0:
        raise ValueError("screen dimensions must be positive")
    if not (0 <= x <= width and 0 <= y <= height):
        raise OutOfScreen(f"({x}, {y}) outside {width}x{height} screen")
    fx = Fraction(x) * COORD_MAX / Fraction(width)
    fy = Fraction(y) * COORD_MAX / Fraction(height)
    return (int(fx), int(fy))


def scale_unit_coord(x: float, y: float) -> Coord:
    """[0,1] fractions to [0,1000] units, rounded half-up."""
    if not (0 <= x <= 1 and 0 <= y <= 1):
        raise OutOfScreen(f"({x}, {y}) outside [0,1]")
    return (_round_half_up(Fraction(x) * COORD_MAX), _round_half_up(Fraction(y) * COORD_MAX))


def _round_half_up(v: Fraction) -> int:
    return int((v + Fraction(1, 2)).__floor__())


def _norm_pair(x: Any, y: Any) -> Coord:
    """Coordinates already in [0,1000] units; round floats half-up."""
    try:
        fx, fy = Fraction(x), Fraction(y)
    except (TypeError, ValueError):
        raise ParseFailure(f"non-numeric coordinates {x!r}, {y!r}") from None
    px, py = _round_half_up(fx), _round_half_up(fy)
    if not (0 <= px <= COORD_MAX and 0 <= py <= COORD_MAX):
        raise OutOfScreen(f"({x}, {y}) outside [0,{COORD_MAX}]")
    return (px, py)


def _ms(seconds: Any) -> int:
    if isinstance(seconds, bool) or not isinstance(seconds, (int, float)):
        raise ParseFailure(f"time must be a number, got {seconds!r}")
    if seconds < 0:
        raise ParseFailure(f"negative time {seconds!r}")
    return _round_half_up(Fraction(seconds) * 1000)


def _direction(value: Any) -> Direction:
    try:
        return Direction(str(value).strip().strip("'\"").lower())
    except ValueError:
        raise ParseFailure(f"unknown direction {value!r}") from None


def _scroll(direction: Direction, reverse: bool) -> UnifiedAction:
    return UnifiedAction(point=SCREEN_CENTER, to=reverse_direction(direction) if reverse else direction)


# -- text extraction helpers ----------------------------------------------

_DECODER = json.JSONDecoder()


def _json_objects(text: str) -> Iterator[dict]:
    """Every top-level JSON object embedded in ``text``, in order."""
    i = 0
    while True:
        i = text.find("{", i)
        if i < 0:
            return
        try:
            obj, end = _DECODER.raw_decode(text, i)
        except json.JSONDecodeError:
            i += 1
            continue
        if isinstance(obj, dict):
            yield obj
        i = end


def _last_json_object(text: str, accept: Callable[[dict], bool]) -> dict:
    found = [o for o in _json_objects(text) if accept(o)]
    if not found:
        raise ParseFailure("no action object found")
    return found[-1]


_CALL_START = re.compile(r"[A-Za-z_][\w.]*\s*\(")


def _match_paren(text: str, open_idx: int) -> int:
    depth = 0
    quote = None
    i = open_idx
    while i < len(text):
        c = text[i]
        if quote:
            if c == "\\":
                i += 1
            elif c == quote:
                quote = None
        elif c in "'\"":
            quote = c
        elif c == "(":
            depth += 1
        elif c == ")":
            depth -= 1
            if depth == 0:
                return i
        i += 1
    return -1


@dataclass(frozen=True)
class _Call:
    name: str
    args: Tuple[Any, ...]
    kwargs: Dict[str, Any]


def _literal(node: ast.AST) -> Any:
    try:
        return ast.literal_eval(node)
    except (ValueError, TypeError, SyntaxError):
        raise ParseFailure(f"non-literal argument {ast.unparse(node)!r}") from None


def _calls(text: str) -> Iterator[_Call]:
    """Python-style calls like ``click(start_box='(1,2)')`` found in ``text``."""
    pos = 0
    while True:
        m = _CALL_START.search(text, pos)
        if not m:
            return
        open_idx = m.end() - 1
        close = _match_paren(text, open_idx)
        if close < 0:
            pos = m.start() + 1
            continue
        src = text[m.start():close + 1]
        try:
            node = ast.parse(src, mode="eval").body
        except SyntaxError:
            pos = m.start() + 1
            continue
        if isinstance(node, ast.Call):
            try:
                yield _Call(
                    name=ast.unparse(node.func),
                    args=tuple(_literal(a) for a in node.args),
                    kwargs={k.arg: _literal(k.value) for k in node.keywords if k.arg},
                )
            except ParseFailure:
                pass
            else:
                pos = close + 1
                continue
        pos = m.start() + 1


def _last_call(text: str, known: Sequence[str]) -> _Call:
    calls = [c for c in _calls(text) if c.name in known]
    if not calls:
        raise ParseFailure("no recognised action call found")
    return calls[-1]


def _after_marker(text: str, marker: str) -> str:
    """Text after the last ``marker`` (case-insensitive), or all of it."""
    idx = text.lower().rfind(marker.lower())
    return text[idx + len(marker):] if idx >= 0 else text


_NUM = r"-?\d+(?:\.\d+)?"


def _numbers(s: str) -> list:
    return [float(t) if "." in t else int(t) for t in re.findall(_NUM, s)]


# -- Qwen2.5-VL ------------------------------------------------------------

_QWEN_TOOL_CALL = re.compile(r"<tool_call>(.*?)</tool_call>", re.DOTALL)
_QWEN_BUTTONS = {"back": SpecialKey.BACK, "home": SpecialKey.HOME, "enter": SpecialKey.ENTER}


def _qwen_args(text: str) -> dict:
    blocks = _QWEN_TOOL_CALL.findall(text)
    source = blocks[-1] if blocks else text
    obj = _last_json_object(source, lambda o: "action" in o or isinstance(o.get("arguments"), dict))
    args = obj.get("arguments", obj)
    if isinstance(args, str):
        try:
            args = json.loads(args)
        except json.JSONDecodeError:
            raise ParseFailure("arguments is not JSON") from None
    if not isinstance(args, dict) or "action" not in args:
        raise ParseFailure("tool call without an action")
    return args


def _qwen_coord(args: dict, key: str, screen: Tuple[int, int]) -> Tuple[Coord, Tuple[float, float]]:
    c = args.get(key)
    if not isinstance(c, (list, tuple)) or len(c) != 2:
        raise ParseFailure(f"{key} must be [x, y]")
    if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in c):
        raise ParseFailure(f"{key} must be numeric")
    return normalize_coord(c[0], c[1], *screen), (c[0], c[1])


def _convert_qwen25vl(raw: RawPrediction) -> ConversionOutcome:
    args = _qwen_args(raw.text)
    act = args["action"]
    screen = raw.screen
    assert screen is not None
    if act == "click":
        point, _ = _qwen_coord(args, "coordinate", screen)
        return ConversionOutcome(UnifiedAction(point=point))
    if act == "long_press":
        point, _ = _qwen_coord(args, "coordinate", screen)
        if "time" not in args:
            raise ParseFailure("long_press without time")
        return ConversionOutcome(UnifiedAction(point=point, duration=_ms(args["time"])))
    if act == "swipe":
        start, start_px = _qwen_coord(args, "coordinate", screen)
        _, end_px = _qwen_coord(args, "coordinate2", screen)
        try:
            direction = swipe_direction(start_px, end_px)
        except ZeroDisplacement as e:
            return ConversionOutcome.drop(str(e))
        return ConversionOutcome(UnifiedAction(point=start, to=direction))
    if act == "type":
        text = args.get("text")
        if not isinstance(text, str):
            raise ParseFailure("type without text")
        return ConversionOutcome(UnifiedAction(type_text=text))
    if act == "system_button":
        button = str(args.get("button", "")).lower()
        if button not in _QWEN_BUTTONS:
            return ConversionOutcome.drop(f"system_button {args.get('button')!r} has no unified key")
        return ConversionOutcome(UnifiedAction(press=_QWEN_BUTTONS[button]))
    if act == "terminate":
        return ConversionOutcome(UnifiedAction(status=TaskStatus.FINISH))
    if act == "wait":
        if "time" not in args:
            raise ParseFailure("wait without time")
        return ConversionOutcome(UnifiedAction(duration=_ms(args["time"])))
    if act in ("key", "open"):
        return ConversionOutcome.drop(f"qwen25vl action {act!r} has no unified mapping")
    raise ParseFailure(f"unknown qwen25vl action {act!r}")


# -- UI-TARS ---------------------------------------------------------------

_UITARS_ACTIONS = ("click", "long_press", "type", "scroll", "press_back", "press_home", "wait", "finished")


def _uitars_point(box: Any) -> Coord:
    nums = _numbers(str(box).replace("<|box_start|>", "").replace("<|box_end|>", ""))
    if len(nums) == 2:
        return _norm_pair(*nums)
    if len(nums) == 4:
        # A box instead of a point: use its centre.
        return _norm_pair(Fraction(nums[0] + nums[2]) / 2, Fraction(nums[1] + nums[3]) / 2)
    raise ParseFailure(f"cannot read a point from {box!r}")


def _arg(call: _Call, name: str, pos: int = 0) -> Any:
    if name in call.kwargs:
        return call.kwargs[name]
    if len(call.args) > pos:
        return call.args[pos]
    raise ParseFailure(f"{call.name} is missing {name}")


def _convert_uitars(raw: RawPrediction) -> ConversionOutcome:
    call = _last_call(_after_marker(raw.text, "Action:"), _UITARS_ACTIONS)
    n = call.name
    if n == "click":
        return ConversionOutcome(UnifiedAction(point=_uitars_point(_arg(call, "start_box"))))
    if n == "long_press":
        point = _uitars_point(_arg(call, "start_box"))
        t = call.kwargs.get("time", call.args[1] if len(call.args) > 1 else "")
        if t in ("", None):
            duration = DEFAULT_LONG_PRESS_MS
        else:
            nums = _numbers(str(t))
            if len(nums) != 1 or nums[0] < 0:
                raise ParseFailure(f"bad long_press time {t!r}")
            duration = _round_half_up(Fraction(nums[0]))
        return ConversionOutcome(UnifiedAction(point=point, duration=duration))
    if n == "type":
        return ConversionOutcome(UnifiedAction(type_text=str(_arg(call, "content"))))
    if n == "scroll":
        return ConversionOutcome(_scroll(_direction(_arg(call, "direction")), reverse=True))
    if n == "press_back":
        return ConversionOutcome(UnifiedAction(press=SpecialKey.BACK))
    if n == "press_home":
        return ConversionOutcome(UnifiedAction(press=SpecialKey.HOME))
    if n == "wait":
        return ConversionOutcome(UnifiedAction(duration=200))
    return ConversionOutcome(UnifiedAction(status=TaskStatus.FINISH))  # finished


# -- OS-Atlas --------------------------------------------------------------

_ATLAS_RE = re.compile(
    r"\b(?P<name>LONG_PRESS|CLICK|TYPE|SCROLL|PRESS_BACK|PRESS_HOME|PRESS_RECENT|WAIT|COMPLETE)\b"
    r"(?P<rest>[^\n]*)"
)
_ATLAS_POINT = re.compile(rf"\[\[\s*({_NUM})\s*,\s*({_NUM})\s*\]\]")


def _convert_osatlas(raw: RawPrediction) -> ConversionOutcome:
    matches = list(_ATLAS_RE.finditer(_after_marker(raw.text, "actions:")))
    if not matches:
        raise ParseFailure("no OS-Atlas action found")
    m = matches[-1]
    name, rest = m.group("name"), m.group("rest").strip()
    if name in ("CLICK", "LONG_PRESS"):
        pm = _ATLAS_POINT.search(rest)
        if not pm:
            raise ParseFailure(f"{name} without [[x, y]]")
        point = _norm_pair(*_numbers(pm.group(1) + " " + pm.group(2)))
        if name == "CLICK":
            return ConversionOutcome(UnifiedAction(point=point))
        return ConversionOutcome(UnifiedAction(point=point, duration=DEFAULT_LONG_PRESS_MS))
    if name == "TYPE":
        if not (rest.startswith("[") and "]" in rest):
            raise ParseFailure("TYPE without [text]")
        return ConversionOutcome(UnifiedAction(type_text=rest[1:rest.rindex("]")]))
    if name == "SCROLL":
        dm = re.match(r"\[\s*(\w+)\s*\]", rest)
        if not dm:
            raise ParseFailure("SCROLL without [direction]")
        return ConversionOutcome(_scroll(_direction(dm.group(1)), reverse=raw.low_instruction_mode))
    if name == "PRESS_BACK":
        return ConversionOutcome(UnifiedAction(press=SpecialKey.BACK))
    if name == "PRESS_HOME":
        return ConversionOutcome(UnifiedAction(press=SpecialKey.HOME))
    if name == "PRESS_RECENT":
        return ConversionOutcome(UnifiedAction(press=SpecialKey.RECENT))
    if name == "WAIT":
        return ConversionOutcome(UnifiedAction(duration=200))
    return ConversionOutcome(UnifiedAction(status=TaskStatus.FINISH))  # COMPLETE


# -- OS-Genesis ------------------------------------------------------------

_GENESIS_POINT_ACTIONS = ("click", "dismiss", "get_text")


def _genesis_point(obj: dict) -> Coord:
    if "x" not in obj or "y" not in obj:
        raise ParseFailure(f"{obj.get('action_type')} without x, y")
    return _norm_pair(obj["x"], obj["y"])


def _convert_osgenesis(raw: RawPrediction) -> ConversionOutcome:
    obj = _last_json_object(raw.text, lambda o: "action_type" in o)
    act = obj["action_type"]
    if act in ("type", "input_text"):
        text = obj.get("text")
        if not isinstance(text, str):
            raise ParseFailure("type without text")
        return ConversionOutcome(UnifiedAction(type_text=text))
    if act in _GENESIS_POINT_ACTIONS:
        return ConversionOutcome(UnifiedAction(point=_genesis_point(obj)))
    if act == "long_press":
        return ConversionOutcome(UnifiedAction(point=_genesis_point(obj), duration=DEFAULT_LONG_PRESS_MS))
    if act == "navigate_home":
        return ConversionOutcome(UnifiedAction(press=SpecialKey.HOME))
    if act == "navigate_back":
        return ConversionOutcome(UnifiedAction(press=SpecialKey.BACK))
    if act == "scroll":
        return ConversionOutcome(_scroll(_direction(obj.get("direction")), reverse=raw.low_instruction_mode))
    if act == "wait":
        return ConversionOutcome(UnifiedAction(duration=200))
    return ConversionOutcome.drop(f"osgenesis action {act!r} has no unified mapping")


# -- OdysseyAgent ----------------------------------------------------------

_ODYSSEY_RE = re.compile(
    r"\b(?P<name>LONG_PRESS|CLICK|SCROLL|TYPE|TEXT|PRESS_HOME|PRESS_BACK|PRESS_RECENT|HOME|BACK|RECENT|COMPLETE|IMPOSSIBLE)\b"
    r"\s*:?\s*(?P<rest>[^\n]*)"
)


def _convert_odyssey(raw: RawPrediction) -> ConversionOutcome:
    matches = list(_ODYSSEY_RE.finditer(raw.text))
    if not matches:
        raise ParseFailure("no OdysseyAgent action found")
    m = matches[-1]
    name, rest = m.group("name"), m.group("rest").strip()
    if name in ("CLICK", "LONG_PRESS"):
        nums = _numbers(rest)
        if len(nums) < 2:
            raise ParseFailure(f"{name} without (x, y)")
        point = _norm_pair(nums[0], nums[1])
        if name == "CLICK":
            return ConversionOutcome(UnifiedAction(point=point))
        return ConversionOutcome(UnifiedAction(point=point, duration=DEFAULT_LONG_PRESS_MS))
    if name == "SCROLL":
        return ConversionOutcome(_scroll(_direction(rest.strip("[]() ")), reverse=False))
    if name in ("TYPE", "TEXT"):
        return ConversionOutcome(UnifiedAction(type_text=rest))
    if name in ("HOME", "PRESS_HOME"):
        return ConversionOutcome(UnifiedAction(press=SpecialKey.HOME))
    if name in ("BACK", "PRESS_BACK"):
        return ConversionOutcome(UnifiedAction(press=SpecialKey.BACK))
    if name in ("RECENT", "PRESS_RECENT"):
        return ConversionOutcome.drop("RECENT is outside the unified action space")
    if name == "IMPOSSIBLE":
        return ConversionOutcome(UnifiedAction(status=TaskStatus.IMPOSSIBLE))
    return ConversionOutcome(UnifiedAction(status=TaskStatus.FINISH))  # COMPLETE


# -- Aguvis ----------------------------------------------------------------

_AGUVIS_ACTIONS = (
    "pyautogui.click", "mobile.long_press", "pyautogui.scroll", "pyautogui.hscroll",
    "pyautogui.write", "mobile.home", "mobile.back", "mobile.terminate", "mobile.open_app",
    "mobile.wait", "mobile.swipe",
)
AGUVIS_WAIT_MS = 3000


def _aguvis_xy(call: _Call) -> Coord:
    x, y = _arg(call, "x", 0), _arg(call, "y", 1)
    if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in (x, y)):
        raise ParseFailure(f"{call.name} coordinates must be numbers")
    return scale_unit_coord(x, y)


def _aguvis_scroll_amount(call: _Call) -> float:
    for key in ("clicks", "page", "amount"):
        if key in call.kwargs:
            v = call.kwargs[key]
            break
    else:
        if not call.args:
            raise ParseFailure(f"{call.name} without an amount")
        v = call.args[0]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ParseFailure(f"{call.name} amount must be a number")
    return v


def _convert_aguvis(raw: RawPrediction) -> ConversionOutcome:
    call = _last_call(raw.text, _AGUVIS_ACTIONS)
    n = call.name
    if n == "pyautogui.click":
        return ConversionOutcome(UnifiedAction(point=_aguvis_xy(call)))
    if n == "mobile.long_press":
        return ConversionOutcome(UnifiedAction(point=_aguvis_xy(call), duration=DEFAULT_LONG_PRESS_MS))
    if n in ("pyautogui.scroll", "pyautogui.hscroll"):
        amount = _aguvis_scroll_amount(call)
        if amount == 0:
            return ConversionOutcome.drop("zero scroll amount")
        if n == "pyautogui.scroll":
            direction = Direction.UP if amount > 0 else Direction.DOWN
        else:
            direction = Direction.RIGHT if amount > 0 else Direction.LEFT
        return ConversionOutcome(_scroll(direction, reverse=False))
    if n == "pyautogui.write":
        text = _arg(call, "message")
        if not isinstance(text, str):
            raise ParseFailure("write without text")
        return ConversionOutcome(UnifiedAction(type_text=text))
    if n == "mobile.home":
        return ConversionOutcome(UnifiedAction(press=SpecialKey.HOME))
    if n == "mobile.back":
        return ConversionOutcome(UnifiedAction(press=SpecialKey.BACK))
    if n == "mobile.terminate":
        return ConversionOutcome(UnifiedAction(status=TaskStatus.FINISH))
    if n == "mobile.open_app":
        return ConversionOutcome.drop("open_app is outside the unified action space")
    if n == "mobile.wait":
        return ConversionOutcome(UnifiedAction(duration=AGUVIS_WAIT_MS))
    # mobile.swipe
    start, end = _arg(call, "from_coord", 0), _arg(call, "to_coord", 1)
    if not (isinstance(start, (list, tuple)) and isinstance(end, (list, tuple)) and len(start) == len(end) == 2):
        raise ParseFailure("swipe needs from_coord and to_coord pairs")
    point = scale_unit_coord(*start)
    scale_unit_coord(*end)
    try:
        direction = swipe_direction(start, end)
    except ZeroDisplacement as e:
        return ConversionOutcome.drop(str(e))
    return ConversionOutcome(UnifiedAction(point=point, to=direction))


def _convert_unified(raw: RawPrediction) -> ConversionOutcome:
    from .action import parse_unified

    try:
        return ConversionOutcome(parse_unified(raw.text.strip(), evaluation=True))
    except ActionError as e:
        raise ParseFailure(f"{e.category}: {e}") from None


_CONVERTERS: Dict[str, Callable[[RawPrediction], ConversionOutcome]] = {
    "qwen25vl": _convert_qwen25vl,
    "uitars": _convert_uitars,
    "osatlas": _convert_osatlas,
    "osgenesis": _convert_osgenesis,
    "odyssey": _convert_odyssey,
    "aguvis": _convert_aguvis,
    UNIFIED_FORMAT: _convert_unified,
}


def convert(raw: RawPrediction) -> ConversionOutcome:
    """Convert one raw prediction.

    Raises ConversionError when the text cannot be read in its declared
    format; actions with no unified counterpart come back ``dropped``.
    """
    try:
        return _CONVERTERS[raw.format](raw)
    except ActionError as e:
        # A mapped value broke an action invariant.
        raise ParseFailure(str(e)) from None
