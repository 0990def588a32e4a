"""Phase-specific captioning and multiple-choice VQA over multi-view clips."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Optional, Sequence, Union

from .backend import Backend, GenerateRequest, GenerationParams, MediaRef, fingerprint, media_for_clips
from .core import (CHOICES, AnswerRecord, CaptionRecord, ItemError, MultiViewEvent, Perspective,
                   PhaseAnalysis, PhaseLabel, PhaseSegmentation, QAItem, QAScope, TimeInterval,
                   ViewKind, ViewStream, full_event_clips, phase_slice)
from .errors import BackendError

logger = logging.getLogger(__name__)

CAPTION_TEMPLATES = {
    Perspective.PEDESTRIAN: "Could you describe this video with caption for pedestrian?",
    Perspective.VEHICLE: "Could you describe this video with caption for vehicle?",
}
ANSWER_DIRECTIVE = "Please output your final answer after `answer_choice': ."

DEFAULT_REASONING_MODEL = "phavr-vlm"

Clip = tuple[ViewStream, TimeInterval]


@dataclass(frozen=True)
class CaptionTask:
    perspective: Perspective


@dataclass(frozen=True)
class VQATask:
    qa_id: str


@dataclass(frozen=True)
class ReasoningPrompt:
    text: str
    media: tuple[MediaRef, ...]
    task: Union[CaptionTask, VQATask]
    view_ids: tuple[str, ...] = ()

    def to_request(self, model_id: str = DEFAULT_REASONING_MODEL,
                   params: Optional[GenerationParams] = None) -> GenerateRequest:
        return GenerateRequest(model_id, self.text, self.media, params or GenerationParams())


def build_caption_prompt(clips: Sequence[Clip], perspective, origin_s: float = 0.0) -> ReasoningPrompt:
    if not clips:
        raise ValueError("clips: empty")
    perspective = Perspective(perspective)
    return ReasoningPrompt(CAPTION_TEMPLATES[perspective], media_for_clips(clips, origin_s),
                           CaptionTask(perspective), tuple(v.view_id for v, _ in clips))


_SCOPE_KIND = {QAScope.VEHICLE_VIEW: ViewKind.VEHICLE, QAScope.OVERHEAD_VIEW: ViewKind.OVERHEAD}


def build_vqa_prompt(qa: QAItem, clips: Sequence[Clip], origin_s: float = 0.0) -> ReasoningPrompt:
    """Question, the four options on their own lines, then the answer directive.

    View-scoped questions keep only clips of the matching camera kind (all
    clips if none match). Environment questions use ``clips`` unchanged, so
    callers pass whole-event clips for them.
    """
    kind = _SCOPE_KIND.get(qa.scope)
    chosen = list(clips)
    if kind is not None:
        matching = [c for c in clips if c[0].kind is kind]
        if matching:
            chosen = matching
        else:
            logger.warning("question %s: no %s view available, using all views", qa.qa_id, kind.value)
    lines = [qa.question.strip()]
    lines.extend(f"{letter}. {qa.options[letter]}" for letter in CHOICES)
    lines.append(ANSWER_DIRECTIVE)
    return ReasoningPrompt("\n".join(lines), media_for_clips(chosen, origin_s), VQATask(qa.qa_id),
                           tuple(v.view_id for v, _ in chosen))


_SEP = r"['\"`]?\s*[:=]\s*['\"`(\[]?\s*"
_ANSWER_PATTERNS = (
    re.compile(rf"answer_choice{_SEP}([a-d])(?![a-z])", re.IGNORECASE),
    re.compile(rf"answer{_SEP}([a-d])(?![a-z])", re.IGNORECASE),
    re.compile(rf"choice{_SEP}([a-d])(?![a-z])", re.IGNORECASE),
    re.compile(r"(?<![a-z0-9_'’])([a-d])(?![a-z0-9_'’])", re.IGNORECASE),
)


def extract_answer_choice(raw_text: str) -> Optional[str]:
    """Pull a choice letter out of free-form model output.

    Patterns are tried in priority order (``answer_choice: x``,
    ``answer: x``, ``choice: x``, then any standalone letter a-d) and the
    first hit wins.
    """
    for pattern in _ANSWER_PATTERNS:
        match = pattern.search(raw_text or "")
        if match:
            return match.group(1).lower()
    return None


def _call(backend: Backend, prompt: ReasoningPrompt, model_id: str, trace: Optional[list], item: str) -> str:
    request = prompt.to_request(model_id)
    fp = fingerprint(request)
    try:
        response = backend.generate(request)
    except BackendError as exc:
        if exc.fingerprint is None:
            exc.fingerprint = fp
        raise
    if trace is not None:
        trace.append({"item": item, "fingerprint": fp, "raw": response.text})
    return response.text


def answer_question(backend: Backend, qa: QAItem, clips: Sequence[Clip], *, origin_s: float = 0.0,
                    model_id: str = DEFAULT_REASONING_MODEL, trace: Optional[list] = None) -> AnswerRecord:
    prompt = build_vqa_prompt(qa, clips, origin_s)
    raw = _call(backend, prompt, model_id, trace, f"vqa:{qa.qa_id}")
    return AnswerRecord(qa.qa_id, raw, extract_answer_choice(raw), prompt.view_ids)


def analyze_phase(backend: Backend, event: MultiViewEvent, seg: PhaseSegmentation, phase,
                  questions: Sequence[QAItem] = (), *, model_id: str = DEFAULT_REASONING_MODEL,
                  trace: Optional[list] = None) -> PhaseAnalysis:
    """Caption one phase from both perspectives and answer its questions.

    A failed request is recorded in ``errors`` and the remaining items still
    run; only a missing phase aborts (:class:`~pvir.errors.PhaseAbsent`).
    """
    phase = PhaseLabel.parse(phase)
    clips = phase_slice(event, seg, phase)
    captions, answers, errors = [], [], []
    for perspective in Perspective:
        prompt = build_caption_prompt(clips, perspective, event.origin_s)
        item = f"caption:{perspective.value}"
        try:
            text = _call(backend, prompt, model_id, trace, item)
        except BackendError as exc:
            errors.append(ItemError(item, str(exc)))
            continue
        if text.strip():
            captions.append(CaptionRecord(phase, perspective, text, prompt.view_ids))
        else:
            errors.append(ItemError(item, "empty caption"))
    for qa in questions:
        try:
            record = answer_question(backend, qa, clips, origin_s=event.origin_s, model_id=model_id, trace=trace)
        except BackendError as exc:
            errors.append(ItemError(f"vqa:{qa.qa_id}", str(exc)))
            continue
        answers.append((qa, record))
    return PhaseAnalysis(phase, tuple(captions), tuple(answers), tuple(errors))


def analyze_environment(backend: Backend, event: MultiViewEvent, questions: Sequence[QAItem], *,
                        model_id: str = DEFAULT_REASONING_MODEL,
                        trace: Optional[list] = None) -> tuple[list[tuple[QAItem, AnswerRecord]], list[ItemError]]:
    """Answer whole-event (environment) questions over full-length clips of every view."""
    clips = full_event_clips(event)
    answers, errors = [], []
    for qa in questions:
        try:
            answers.append((qa, answer_question(backend, qa, clips, origin_s=event.origin_s,
                                                model_id=model_id, trace=trace)))
        except BackendError as exc:
            errors.append(ItemError(f"vqa:{qa.qa_id}", str(exc)))
    return answers, errors
