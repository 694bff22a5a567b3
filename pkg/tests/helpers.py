"""Random generators shared by property and acceptance tests."""

from __future__ import annotations

import random

from guiact.action import Direction, SpecialKey, TaskStatus, UnifiedAction
from guiact.evaluator import GroundTruthStep

_ALPHABET = "abcXYZ 0189,.!?\t\n\"\\/{}[]:中文字返回音乐éß😀"


def random_text(rng: random.Random, max_len: int = 12) -> str:
    return "".join(rng.choice(_ALPHABET) for _ in range(rng.randint(0, max_len)))


def random_coord(rng: random.Random):
    return (rng.randint(0, 1000), rng.randint(0, 1000))


def random_action(rng: random.Random, *, evaluation: bool = False) -> UnifiedAction:
    kind = rng.choice(["click", "long", "swipe_dir", "swipe_pt", "type", "press", "wait", "status"])
    kw: dict = {}
    if kind == "click":
        kw["point"] = random_coord(rng)
        if rng.random() < 0.3:
            kw["duration"] = rng.randint(0, 200)
    elif kind == "long":
        kw.update(point=random_coord(rng), duration=rng.randint(201, 5000))
    elif kind == "swipe_dir":
        kw.update(point=random_coord(rng), to=rng.choice(list(Direction)))
        if rng.random() < 0.3:
            kw["duration"] = rng.randint(0, 2000)
    elif kind == "swipe_pt":
        kw.update(point=random_coord(rng), to=random_coord(rng))
    elif kind == "type":
        kw["type_text"] = random_text(rng)
    elif kind == "press":
        keys = list(SpecialKey) if evaluation else [SpecialKey.HOME, SpecialKey.BACK, SpecialKey.ENTER]
        kw["press"] = rng.choice(keys)
    elif kind == "wait":
        kw["duration"] = rng.randint(0, 10000)
    if rng.random() < 0.25 or kind == "status":
        kw["status"] = rng.choice(list(TaskStatus))
    if rng.random() < 0.3:
        kw["thought"] = random_text(rng, 30)
    return UnifiedAction(**kw)


def self_gt(action: UnifiedAction, episode: str = "e", step: int = 0) -> GroundTruthStep:
    bbox = None
    if action.point is not None:
        bbox = (action.point[0], action.point[1], action.point[0], action.point[1])
    return GroundTruthStep(episode, step, action, bbox)


def random_gt(rng: random.Random, episode: str = "e", step: int = 0) -> GroundTruthStep:
    action = random_action(rng)
    bbox = None
    if action.point is not None and rng.random() < 0.7:
        x, y = action.point
        bbox = (max(0, x - rng.randint(0, 80)), max(0, y - rng.randint(0, 80)),
                min(1000, x + rng.randint(0, 80)), min(1000, y + rng.randint(0, 80)))
    return GroundTruthStep(episode, step, action, bbox)


def corrupt_params(gt: GroundTruthStep) -> UnifiedAction:
    """Same action type as the reference, at least one parameter wrong."""
    from dataclasses import replace

    from guiact.action import ActionType, action_type_of
    from guiact.adapters import ZeroDisplacement, reverse_direction, swipe_direction

    a = gt.gt_action
    kind = action_type_of(a)
    if kind in (ActionType.CLICK, ActionType.LONG_PRESS):
        x, y = a.point
        return replace(a, point=(0 if x > 500 else 1000, y))
    if kind is ActionType.SWIPE:
        if isinstance(a.to, Direction):
            return replace(a, to=reverse_direction(a.to))
        try:
            return replace(a, to=reverse_direction(swipe_direction(a.point, a.to)))
        except ZeroDisplacement:
            return replace(a, to=Direction.UP)
    if kind is ActionType.TYPE:
        return replace(a, type_text=a.type_text + "x")
    if kind is ActionType.PRESS:
        return replace(a, press=SpecialKey.BACK if a.press is not SpecialKey.BACK else SpecialKey.HOME)
    # WAIT and STATUS_ONLY: the status is the only compared parameter
    other = TaskStatus.FINISH if a.status is not TaskStatus.FINISH else TaskStatus.IMPOSSIBLE
    return replace(a, status=other)


def corrupt_type(gt: GroundTruthStep) -> UnifiedAction:
    if gt.gt_action.press is not None:
        return UnifiedAction(type_text="x")
    return UnifiedAction(press=SpecialKey.BACK)
