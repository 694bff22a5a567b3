"""Unified GUI-agent action space: conversion, scoring, GRPO math and rollout simulation."""

__version__ = "0.1.0"

from .action import (
    ActionType,
    Direction,
    SpecialKey,
    TaskStatus,
    UnifiedAction,
    ValidationReport,
    action_type_of,
    parse_unified,
    serialize_compact,
    validate,
)
from .adapters import ConversionOutcome, RawPrediction, convert

__all__ = [
    "ActionType",
    "ConversionOutcome",
    "Direction",
    "RawPrediction",
    "SpecialKey",
    "TaskStatus",
    "UnifiedAction",
    "ValidationReport",
    "action_type_of",
    "convert",
    "parse_unified",
    "serialize_compact",
    "validate",
]
