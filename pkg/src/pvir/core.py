"""Domain types shared by all stages: phases, intervals, events, analyses.

Everything here is an immutable value. Video content is only ever referenced
by URI; no frame data lives in these types.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

from .errors import PhaseAbsent


class PhaseLabel(enum.IntEnum):
    """The five ordered behavioral phases of a pedestrian-vehicle encounter."""

    PRE_RECOGNITION = 0
    RECOGNITION = 1
    JUDGMENT = 2
    ACTION = 3
    AVOIDANCE = 4

    @property
    def title(self) -> str:
        return _PHASE_TITLES[self]

    @classmethod
    def parse(cls, value) -> "PhaseLabel":
        """Accept an index, a digit string, or a (loosely spelled) phase name."""
        if isinstance(value, PhaseLabel):
            return value
        if isinstance(value, bool):
            raise ValueError(f"not a phase: {value!r}")
        if isinstance(value, int):
            return cls(value)
        if isinstance(value, str):
            key = value.strip().lower()
            if key.isdigit():
                return cls(int(key))
            key = key.replace("-", "").replace("_", "").replace(" ", "")
            if key.startswith("phase") and key[5:].isdigit():
                return cls(int(key[5:]))
            if key in _PHASE_ALIASES:
                return _PHASE_ALIASES[key]
        raise ValueError(f"not a phase: {value!r}")


_PHASE_TITLES = {
    PhaseLabel.PRE_RECOGNITION: "Pre-recognition",
    PhaseLabel.RECOGNITION: "Recognition",
    PhaseLabel.JUDGMENT: "Judgment",
    PhaseLabel.ACTION: "Action",
    PhaseLabel.AVOIDANCE: "Avoidance",
}

_PHASE_ALIASES = {
    "prerecognition": PhaseLabel.PRE_RECOGNITION,
    "recognition": PhaseLabel.RECOGNITION,
    "judgment": PhaseLabel.JUDGMENT,
    "judgement": PhaseLabel.JUDGMENT,
    "action": PhaseLabel.ACTION,
    "avoidance": PhaseLabel.AVOIDANCE,
}

PHASES: tuple[PhaseLabel, ...] = tuple(PhaseLabel)
NUM_PHASES = len(PHASES)


def format_seconds(value: float) -> str:
    """Render seconds with at most millisecond precision and no trailing zeros."""
    text = f"{value:.3f}".rstrip("0").rstrip(".")
    return "0" if text in ("", "-0") else text


@dataclass(frozen=True)
class TimeInterval:
    start_s: float
    end_s: float

    def __post_init__(self):
        if not (math.isfinite(self.start_s) and math.isfinite(self.end_s)):
            raise ValueError(f"non-finite interval ({self.start_s}, {self.end_s})")
        if self.start_s < 0 or self.end_s < self.start_s:
            raise ValueError(f"invalid interval ({self.start_s}, {self.end_s})")

    @property
    def length(self) -> float:
        return self.end_s - self.start_s

    @property
    def is_degenerate(self) -> bool:
        return self.end_s == self.start_s

    def shifted(self, offset_s: float) -> "TimeInterval":
        return TimeInterval(self.start_s + offset_s, self.end_s + offset_s)

    def __str__(self) -> str:
        return f"{format_seconds(self.start_s)}--{format_seconds(self.end_s)}"


@dataclass(frozen=True)
class Violation:
    """A constraint problem detected (and possibly repaired) in a segmentation.

    ``kind`` is one of ``ClampedStart``, ``ClampedEnd``, ``InvertedInterval``,
    ``Degenerate``, ``MissingPhase`` or ``OrderInversion``. For order
    inversions ``phase`` is the later phase whose start precedes its
    predecessor's.
    """

    kind: str
    phase: Optional[PhaseLabel] = None

    def __str__(self) -> str:
        return self.kind if self.phase is None else f"{self.kind}({int(self.phase)})"


@dataclass(frozen=True)
class PhaseSegmentation:
    entries: Mapping[PhaseLabel, TimeInterval]
    duration_s: float
    violations: tuple[Violation, ...] = ()

    def __post_init__(self):
        ordered = {PhaseLabel.parse(k): self.entries[k] for k in sorted(self.entries, key=int)}
        object.__setattr__(self, "entries", ordered)
        object.__setattr__(self, "violations", tuple(self.violations))
        for phase, interval in ordered.items():
            if interval.end_s > self.duration_s + 1e-9:
                raise ValueError(f"phase {int(phase)} ends after duration {self.duration_s}")

    def __contains__(self, phase) -> bool:
        return PhaseLabel.parse(phase) in self.entries

    def get(self, phase) -> Optional[TimeInterval]:
        return self.entries.get(PhaseLabel.parse(phase))

    def interval(self, phase) -> TimeInterval:
        phase = PhaseLabel.parse(phase)
        try:
            return self.entries[phase]
        except KeyError:
            raise PhaseAbsent(phase) from None

    @property
    def phases(self) -> tuple[PhaseLabel, ...]:
        return tuple(self.entries)

    @property
    def is_complete(self) -> bool:
        return len(self.entries) == NUM_PHASES


class ViewKind(str, enum.Enum):
    OVERHEAD = "overhead"
    VEHICLE = "vehicle"


@dataclass(frozen=True)
class ViewStream:
    view_id: str
    kind: ViewKind
    video_uri: str
    motion_energy_uri: Optional[str] = None
    offset_s: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ViewKind(self.kind))


class Perspective(str, enum.Enum):
    PEDESTRIAN = "pedestrian"
    VEHICLE = "vehicle"


class QAScope(str, enum.Enum):
    VEHICLE_VIEW = "vehicle_view"
    OVERHEAD_VIEW = "overhead_view"
    ENVIRONMENT = "environment"


CHOICES = ("a", "b", "c", "d")


@dataclass(frozen=True)
class CaptionRecord:
    phase: PhaseLabel
    perspective: Perspective
    text: str
    views: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "phase", PhaseLabel.parse(self.phase))
        object.__setattr__(self, "perspective", Perspective(self.perspective))
        object.__setattr__(self, "views", tuple(self.views))
        if not self.text.strip():
            raise ValueError("caption text is empty")


@dataclass(frozen=True)
class QAItem:
    qa_id: str
    scope: QAScope
    question: str
    options: Mapping[str, str]
    phase: Optional[PhaseLabel] = None
    answer: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "scope", QAScope(self.scope))
        if self.phase is not None:
            object.__setattr__(self, "phase", PhaseLabel.parse(self.phase))
        opts = {str(k).lower(): v for k, v in self.options.items()}
        if sorted(opts) != list(CHOICES):
            raise ValueError(f"options: expected 4 (a-d), got {sorted(opts)}")
        object.__setattr__(self, "options", {k: opts[k] for k in CHOICES})
        if self.answer is not None:
            answer = self.answer.strip().lower()
            if answer not in CHOICES:
                raise ValueError(f"answer {self.answer!r} not in a-d")
            object.__setattr__(self, "answer", answer)

    def __hash__(self):
        return hash((self.qa_id, self.scope, self.question, self.phase, self.answer))


@dataclass(frozen=True)
class AnswerRecord:
    qa_id: str
    raw_text: str
    extracted: Optional[str] = None
    views: tuple[str, ...] = ()

    def __post_init__(self):
        if self.extracted is not None and self.extracted not in CHOICES:
            raise ValueError(f"extracted choice {self.extracted!r} not in a-d")
        object.__setattr__(self, "views", tuple(self.views))


@dataclass(frozen=True)
class GroundTruth:
    segmentation: Optional[PhaseSegmentation] = None
    captions: tuple[CaptionRecord, ...] = ()
    qa: tuple[QAItem, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "captions", tuple(self.captions))
        object.__setattr__(self, "qa", tuple(self.qa))


@dataclass(frozen=True)
class MultiViewEvent:
    """One incident.

    ``origin_s`` is where the event timeline starts on the source recordings;
    it is 0 for pre-cut clips and the look-back window start for triggered
    events.
    """

    event_id: str
    duration_s: float
    views: tuple[ViewStream, ...]
    ground_truth: Optional[GroundTruth] = None
    origin_s: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "views", tuple(self.views))
        if not self.views:
            raise ValueError("views: empty")
        if not self.duration_s > 0:
            raise ValueError(f"duration_s must be positive, got {self.duration_s}")
        ids = [v.view_id for v in self.views]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate view ids in {ids}")

    def view(self, view_id: str) -> ViewStream:
        for v in self.views:
            if v.view_id == view_id:
                return v
        raise KeyError(view_id)

    def questions(self, phase: Optional[PhaseLabel] = None) -> list[QAItem]:
        """Ground-truth questions scoped to ``phase``; ``None`` selects environment questions."""
        if self.ground_truth is None:
            return []
        if phase is None:
            return [q for q in self.ground_truth.qa if q.scope is QAScope.ENVIRONMENT]
        return [q for q in self.ground_truth.qa
                if q.scope is not QAScope.ENVIRONMENT and q.phase == phase]


@dataclass(frozen=True)
class ItemError:
    """A single failed request inside an otherwise successful phase analysis."""

    item: str
    error: str


@dataclass(frozen=True)
class PhaseAnalysis:
    phase: PhaseLabel
    captions: tuple[CaptionRecord, ...] = ()
    answers: tuple[tuple[QAItem, AnswerRecord], ...] = ()
    errors: tuple[ItemError, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "phase", PhaseLabel.parse(self.phase))
        object.__setattr__(self, "captions", tuple(self.captions))
        object.__setattr__(self, "answers", tuple(tuple(p) for p in self.answers))
        object.__setattr__(self, "errors", tuple(self.errors))


@dataclass(frozen=True)
class EventInfoSet:
    """Everything the synthesis stage reasons over: boundaries, captions, answers."""

    segmentation: PhaseSegmentation
    captions: tuple[CaptionRecord, ...] = ()
    answers: tuple[tuple[QAItem, AnswerRecord], ...] = ()
    views: tuple[ViewStream, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "captions", tuple(self.captions))
        object.__setattr__(self, "answers", tuple(tuple(p) for p in self.answers))
        object.__setattr__(self, "views", tuple(self.views))
        for qa, record in self.answers:
            if qa.qa_id != record.qa_id:
                raise ValueError(f"answer {record.qa_id!r} paired with question {qa.qa_id!r}")

    @property
    def is_empty(self) -> bool:
        return not (self.segmentation.entries or self.captions or self.answers)


@dataclass(frozen=True)
class CaptionScores:
    bleu: float
    meteor: float
    rouge_l: float
    cider: float
    score: float


@dataclass(frozen=True)
class VQAScores:
    accuracy_pct: float
    valid_rate_pct: float

    def __post_init__(self):
        for name in ("accuracy_pct", "valid_rate_pct"):
            value = getattr(self, name)
            if not 0.0 <= value <= 100.0:
                raise ValueError(f"{name}={value} outside [0, 100]")


@dataclass(frozen=True)
class EvaluationSummary:
    per_phase_miou: Mapping[PhaseLabel, float]
    overall_miou: float
    caption: Optional[CaptionScores] = None
    vqa: Mapping[QAScope, VQAScores] = field(default_factory=dict)

    def __post_init__(self):
        per_phase = {PhaseLabel.parse(k): float(v) for k, v in self.per_phase_miou.items()}
        if sorted(per_phase) != list(PHASES):
            raise ValueError("per_phase_miou must cover all five phases")
        object.__setattr__(self, "per_phase_miou", per_phase)
        for value in per_phase.values():
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"mIoU {value} outside [0, 1]")
        mean = sum(per_phase.values()) / NUM_PHASES
        if abs(mean - self.overall_miou) > 1e-12:
            raise ValueError(f"overall_miou {self.overall_miou} != mean of phases {mean}")
        if self.caption is not None:
            c = self.caption
            if not all(0.0 <= x <= 1.0 for x in (c.bleu, c.meteor, c.rouge_l)) or c.cider < 0:
                raise ValueError(f"caption components out of range: {c}")


def validate_segmentation(raw: Mapping, duration_s: float) -> PhaseSegmentation:
    """Clamp raw ``phase -> (start, end)`` pairs into a well-formed segmentation.

    Never rejects its input: every repair or anomaly is recorded in
    ``violations``. Inverted pairs are swapped, degenerate pairs kept, and
    phases whose start precedes the previous phase's start are flagged but
    left as they are.
    """
    if not duration_s > 0:
        raise ValueError(f"duration_s must be positive, got {duration_s}")
    entries: dict[PhaseLabel, TimeInterval] = {}
    violations: list[Violation] = []
    normalized = {PhaseLabel.parse(k): v for k, v in raw.items()}
    for phase in PHASES:
        if phase not in normalized or normalized[phase] is None:
            violations.append(Violation("MissingPhase", phase))
            continue
        value = normalized[phase]
        if isinstance(value, TimeInterval):
            start, end = value.start_s, value.end_s
        else:
            start, end = (float(x) for x in value)
        if math.isnan(start) or math.isnan(end):
            violations.append(Violation("MissingPhase", phase))
            continue
        if start > end:
            violations.append(Violation("InvertedInterval", phase))
            start, end = end, start
        if start < 0:
            violations.append(Violation("ClampedStart", phase))
            start = 0.0
        elif start > duration_s:
            violations.append(Violation("ClampedStart", phase))
            start = float(duration_s)
        if end > duration_s:
            violations.append(Violation("ClampedEnd", phase))
            end = float(duration_s)
        elif end < 0:
            violations.append(Violation("ClampedEnd", phase))
            end = 0.0
        if start == end:
            violations.append(Violation("Degenerate", phase))
        entries[phase] = TimeInterval(start, end)
    present = [p for p in PHASES if p in entries]
    for prev, cur in zip(present, present[1:]):
        if entries[cur].start_s < entries[prev].start_s:
            violations.append(Violation("OrderInversion", cur))
    return PhaseSegmentation(entries, float(duration_s), tuple(violations))


def phase_slice(event: MultiViewEvent, seg: PhaseSegmentation, phase) -> list[tuple[ViewStream, TimeInterval]]:
    """Per-view clip bounds for one phase.

    The shared interval is moved onto each view's own clock by adding its
    ``offset_s`` and clamped to that view's extent ``[0, duration_s + offset_s]``.
    """
    interval = seg.interval(phase)
    return [(view, _on_view_clock(event, view, interval)) for view in event.views]


def full_event_clips(event: MultiViewEvent) -> list[tuple[ViewStream, TimeInterval]]:
    """Whole-event bounds for every view, on each view's own clock."""
    whole = TimeInterval(0.0, event.duration_s)
    return [(view, _on_view_clock(event, view, whole)) for view in event.views]


def _on_view_clock(event: MultiViewEvent, view: ViewStream, interval: TimeInterval) -> TimeInterval:
    hi = max(0.0, event.duration_s + view.offset_s)
    start = min(max(interval.start_s + view.offset_s, 0.0), hi)
    end = min(max(interval.end_s + view.offset_s, 0.0), hi)
    return TimeInterval(start, end)
