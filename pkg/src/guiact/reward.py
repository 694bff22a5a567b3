"""Rule-based RFT reward: format check first, then semantic correctness."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from .action import ActionError, parse_unified
from .evaluator import DEFAULT_TOLERANCE, GroundTruthStep, evaluate_step

FORMAT_FAILURE = -1
WRONG = 0
CORRECT = 1


@dataclass(frozen=True)
class RewardSignal:
    value: int
    stage: str  # "format" | "semantic"
    detail: str = ""

    def __post_init__(self) -> None:
        if self.value not in (-1, 0, 1):
            raise ValueError(f"reward {self.value} outside {{-1, 0, 1}}")
        if (self.value == -1) != (self.stage == "format"):
            raise ValueError("-1 is reserved for format failures")
        if self.stage not in ("format", "semantic"):
            raise ValueError(f"unknown stage {self.stage!r}")


def score(raw_output: Union[bytes, str], gt: GroundTruthStep, *, require_thought: bool = False,
          tolerance: float = DEFAULT_TOLERANCE) -> RewardSignal:
    """Reward one model output against its reference step.

    Any schema violation counts as a format failure. With
    ``require_thought`` a missing ``thought`` field fails the format check.
    """
    try:
        action = parse_unified(raw_output, require_thought=require_thought)
    except ActionError as e:
        return RewardSignal(FORMAT_FAILURE, "format", f"{e.category}: {e}")
    ev = evaluate_step(action, gt, tolerance)
    if ev.exact_match:
        return RewardSignal(CORRECT, "semantic")
    return RewardSignal(WRONG, "semantic", ev.failure_reason)
