"""GRPO numeric kernels: group-normalized advantages and the clipped objective."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np


class GroupTooSmall(ValueError):
    pass


class ShapeMismatch(ValueError):
    pass


@dataclass(frozen=True)
class GRPOConfig:
    epsilon: float = 0.2
    beta: float = 0.04
    group_size: int = 8

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if not self.beta >= 0 or math.isinf(self.beta):
            raise ValueError("beta must be finite and >= 0")
        if self.group_size < 2:
            raise ValueError("group_size must be >= 2")


@dataclass(frozen=True)
class AdvantageGroup:
    rewards: Tuple[float, ...]
    advantages: Tuple[float, ...]
    zero_variance: bool


@dataclass(frozen=True)
class TokenSequenceLogProbs:
    """Per-token log-probs of one response under the current, old and reference policies."""

    logp_theta: np.ndarray
    logp_old: np.ndarray
    logp_ref: np.ndarray

    def __post_init__(self) -> None:
        arrs = []
        for name in ("logp_theta", "logp_old", "logp_ref"):
            a = np.asarray(getattr(self, name), dtype=np.float64)
            if a.ndim != 1:
                raise ShapeMismatch(f"{name} must be 1-D")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} has non-finite values")
            object.__setattr__(self, name, a)
            arrs.append(a)
        if not (len(arrs[0]) == len(arrs[1]) == len(arrs[2])):
            raise ShapeMismatch("log-prob arrays differ in length")
        if len(arrs[0]) == 0:
            raise ShapeMismatch("empty response")

    def __len__(self) -> int:
        return len(self.logp_theta)


def advantage_group(rewards: Sequence[float]) -> AdvantageGroup:
    r = np.asarray(rewards, dtype=np.float64)
    if r.ndim != 1 or len(r) < 2:
        raise GroupTooSmall("a group needs at least two rewards")
    if not np.all(np.isfinite(r)):
        raise ValueError("rewards must be finite")
    # Tied rewards carry no signal; dividing by std would be 0/0.
    if r.max() == r.min():
        return AdvantageGroup(tuple(r.tolist()), (0.0,) * len(r), True)
    centered = r - r.mean()
    # Rescale first so squaring cannot underflow for tiny reward gaps.
    centered = centered / np.max(np.abs(centered))
    std = np.sqrt(np.mean(centered ** 2))
    return AdvantageGroup(tuple(r.tolist()), tuple((centered / std).tolist()), False)


def group_advantages(rewards: Sequence[float]) -> list:
    """(r_i - mean) / std with population std; all zeros when every reward ties."""
    return list(advantage_group(rewards).advantages)


def token_kl(logp_theta: float, logp_ref: float) -> float:
    """k3 estimator of KL(pi_theta || pi_ref) at one token; never negative."""
    d = float(logp_ref) - float(logp_theta)
    if d == 0.0:
        return 0.0
    if abs(d) < 1e-3:
        # Series for exp(d) - d - 1; avoids cancellation near zero.
        return d * d * (1 / 2 + d * (1 / 6 + d * (1 / 24 + d * (1 / 120 + d / 720))))
    return max(math.expm1(d) - d, 0.0)


_token_kl_vec = np.vectorize(token_kl, otypes=[np.float64])


def response_objective(lp: TokenSequenceLogProbs, advantage: float, config: GRPOConfig) -> float:
    """Token-averaged clipped surrogate minus the KL penalty for one response."""
    ratio = np.exp(lp.logp_theta - lp.logp_old)
    unclipped = ratio * advantage
    clipped = np.clip(ratio, 1 - config.epsilon, 1 + config.epsilon) * advantage
    surrogate = np.minimum(unclipped, clipped)
    if config.beta:
        surrogate = surrogate - config.beta * _token_kl_vec(lp.logp_theta, lp.logp_ref)
    return float(np.mean(surrogate))


def grpo_objective(groups: Sequence[Tuple[Sequence[TokenSequenceLogProbs], Sequence[float]]],
                   config: GRPOConfig = GRPOConfig()) -> float:
    """Mean over groups of the mean over responses of ``response_objective``."""
    if not groups:
        raise ShapeMismatch("no groups")
    per_group = []
    for responses, advantages in groups:
        if len(responses) != len(advantages) or not responses:
            raise ShapeMismatch(f"{len(responses)} responses vs {len(advantages)} advantages")
        per_group.append(math.fsum(response_objective(lp, a, config) for lp, a in zip(responses, advantages))
                         / len(responses))
    return math.fsum(per_group) / len(per_group)
