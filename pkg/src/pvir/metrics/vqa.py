"""Multiple-choice accuracy and valid-choice rate."""

from __future__ import annotations

from typing import Iterable, Optional

from ..core import AnswerRecord, VQAScores
from ..errors import EmptyInput


def vqa_scores(items: Iterable[tuple[Optional[str], AnswerRecord]]) -> VQAScores:
    """Score ``(ground_truth_letter, answer)`` pairs.

    An answer with no extractable choice is both invalid and incorrect.
    """
    items = list(items)
    if not items:
        raise EmptyInput("vqa_scores needs at least one item")
    correct = valid = 0
    for truth, record in items:
        if record.extracted is None:
            continue
        valid += 1
        if truth is not None and record.extracted == truth.lower():
            correct += 1
    n = len(items)
    return VQAScores(accuracy_pct=100.0 * correct / n, valid_rate_pct=100.0 * valid / n)
