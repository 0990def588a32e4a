"""Temporal IoU and per-phase mean IoU."""

from __future__ import annotations

from typing import Optional, Sequence

from ..core import PHASES, NUM_PHASES, PhaseLabel, PhaseSegmentation, TimeInterval
from ..errors import LengthMismatch


def interval_iou(p: TimeInterval, g: TimeInterval) -> float:
    """Intersection over union of two closed intervals on the time axis.

    Two degenerate intervals score 1 when identical and 0 otherwise; a
    degenerate interval against a non-empty one always scores 0.
    """
    inter = max(0.0, min(p.end_s, g.end_s) - max(p.start_s, g.start_s))
    union = p.length + g.length - inter
    if union <= 0.0:
        return 1.0 if (p.start_s, p.end_s) == (g.start_s, g.end_s) else 0.0
    return inter / union


def phase_miou(preds: Sequence[Optional[PhaseSegmentation]],
               gts: Sequence[PhaseSegmentation]) -> tuple[dict[PhaseLabel, float], float]:
    """Mean IoU per phase over index-aligned samples, plus the mean over phases.

    A phase missing from a prediction (or a ``None`` prediction) scores 0 for
    that sample. Samples whose ground truth lacks a phase are left out of that
    phase's mean; a phase with no ground truth anywhere scores 0.
    """
    if len(preds) != len(gts):
        raise LengthMismatch(f"{len(preds)} predictions vs {len(gts)} ground truths")
    per_phase: dict[PhaseLabel, float] = {}
    for phase in PHASES:
        total, count = 0.0, 0
        for pred, gt in zip(preds, gts):
            g = gt.get(phase)
            if g is None:
                continue
            count += 1
            p = pred.get(phase) if pred is not None else None
            if p is not None:
                total += interval_iou(p, g)
        per_phase[phase] = total / count if count else 0.0
    overall = sum(per_phase.values()) / NUM_PHASES
    return per_phase, overall


def overall_miou(per_phase) -> float:
    """Mean of the five per-phase values (accepts a mapping or a sequence)."""
    values = list(per_phase.values()) if hasattr(per_phase, "values") else list(per_phase)
    if len(values) != NUM_PHASES:
        raise LengthMismatch(f"expected {NUM_PHASES} per-phase values, got {len(values)}")
    return sum(values) / NUM_PHASES
