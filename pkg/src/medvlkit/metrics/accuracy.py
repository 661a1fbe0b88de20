"""Answer accuracy for VQA and classification."""

from __future__ import annotations

from typing import Sequence

from ..core import Choice, GroundTruth, ParsedOutput, Text
from ..errors import AlignmentError, DegenerateReference
from ..parse import normalize_answer, tokenize


def _correct(pred: ParsedOutput, gt: GroundTruth, mode: str) -> bool:
    if mode == "choice":
        return isinstance(pred, Choice) and isinstance(gt, Choice) and pred.index == gt.index
    if mode == "exact":
        return (
            isinstance(pred, Text)
            and isinstance(gt, Text)
            and normalize_answer(pred.text) == normalize_answer(gt.text)
        )
    raise ValueError(f"unknown accuracy mode {mode!r}")


def accuracy(preds: Sequence[ParsedOutput], gts: Sequence[GroundTruth], mode: str = "exact") -> float:
    """Percent of predictions matching their ground truth.

    ``mode="choice"`` compares option indices; ``mode="exact"`` compares
    normalized answer text. ``ParseFailed`` predictions count as wrong.
    """
    if len(preds) != len(gts):
        raise AlignmentError(f"{len(preds)} predictions vs {len(gts)} ground truths")
    if not preds:
        raise ValueError("accuracy of an empty set is undefined")
    correct = sum(_correct(p, g, mode) for p, g in zip(preds, gts))
    return 100.0 * correct / len(preds)


def token_recall(pred: str, gt: str) -> float:
    """Fraction of distinct ground-truth tokens present in the prediction."""
    want = set(tokenize(gt))
    if not want:
        raise DegenerateReference(f"reference normalizes to empty: {gt!r}")
    return len(want & set(tokenize(pred))) / len(want)
