"""Multi-view phase segmentation: prompt construction and response parsing.

Accepted response syntaxes, tried in this order:

* JSON: ``{"0": [28.8, 29.9], ...}``, ``{"Action": {"start": 32.6, "end": 37.8}}``
  or a list of ``{"phase": 3, "start": 32.6, "end": 37.8}`` objects, optionally
  inside a fenced code block;
* key/value lines: ``Phase 3: start=32.6, end=37.8``;
* labeled lines: ``Phase 3 (Action): 32.6 - 37.8`` or ``Action: 32.6s to 37.8s``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Optional

from .backend import Backend, GenerateRequest, GenerationParams, MediaRef, fingerprint, media_for_clips
from .core import (PHASES, MultiViewEvent, PhaseLabel, PhaseSegmentation, ViewKind,
                   format_seconds, full_event_clips, validate_segmentation)
from .errors import BackendError, Unparseable

PHASE_DEFINITIONS: tuple[str, ...] = (
    "Phase 0 (Pre-recognition): The timing before the start of environment awareness "
    "(crosswalks, traffic signals, vehicles, etc.).",
    "Phase 1 (Recognition): The timing from the start of environment awareness "
    "(crosswalks, traffic signals, vehicles, etc.) until a judgment is made.",
    "Phase 2 (Judgment): In principle, the moment from which environmental awareness is "
    "completed until the start of an action.",
    "Phase 3 (Action): Start of movement of any part of the body (excluding eyes and ears) "
    "up to the time a result (e.g., collision) occurs.",
    "Phase 4 (Avoidance): The time after avoidability is clear until the time of avoidance "
    "happened or failure to avoid.",
)

GROUNDING_INSTRUCTION = (
    "You are provided with multiple synchronized videos of a traffic event from different "
    "viewpoints. Your task is to identify and locate the temporal boundaries for five distinct "
    "phases based on the following definitions:"
)
TIMESTAMP_DIRECTIVE = "Provide the start and end timestamps for each phase in seconds."

DEFAULT_GROUNDING_MODEL = "tg-vlm"


@dataclass(frozen=True)
class PhaseDefinitionSet:
    definitions: tuple[str, ...] = PHASE_DEFINITIONS

    def __post_init__(self):
        object.__setattr__(self, "definitions", tuple(self.definitions))
        if len(self.definitions) != len(PHASES):
            raise ValueError(f"expected {len(PHASES)} phase definitions, got {len(self.definitions)}")


@dataclass(frozen=True)
class GroundingMedia:
    media: MediaRef
    view_id: str
    kind: ViewKind


@dataclass(frozen=True)
class GroundingPrompt:
    system_text: str
    media: tuple[GroundingMedia, ...]

    def to_request(self, model_id: str = DEFAULT_GROUNDING_MODEL,
                   params: Optional[GenerationParams] = None) -> GenerateRequest:
        return GenerateRequest(model_id, self.system_text, tuple(m.media for m in self.media),
                               params or GenerationParams())


def build_grounding_prompt(event: MultiViewEvent,
                           defs: PhaseDefinitionSet = PhaseDefinitionSet()) -> GroundingPrompt:
    clips = full_event_clips(event)
    refs = media_for_clips(clips, event.origin_s)
    lines = [GROUNDING_INSTRUCTION]
    lines.extend(defs.definitions)
    lines.append(TIMESTAMP_DIRECTIVE)
    lines.append("")
    for i, (view, _) in enumerate(clips, 1):
        lines.append(f"Video {i}: {view.kind.value} view ({view.view_id})")
    media = tuple(GroundingMedia(ref, view.view_id, view.kind) for ref, (view, _) in zip(refs, clips))
    return GroundingPrompt("\n".join(lines), media)


_NUM = r"(-?\d+(?:\.\d+)?)"
_UNIT = r"\s*(?:s|sec|secs|seconds)?"
_NAME = r"pre-?recognition|(?<![-\w])recognition|judge?ment|action|avoidance"
_KEY = rf"(phase\s*_?\s*[0-4]|{_NAME})"
_LABEL_TAIL = r"(?:\s*\([^)\n]*\))?\s*[:=\-–]?\s*"
_RANGE_SEP = r"\s*(?:--|-|–|—|to|~)\s*"

_LINE_RE = re.compile(rf"{_KEY}{_LABEL_TAIL}{_NUM}{_UNIT}{_RANGE_SEP}{_NUM}{_UNIT}", re.IGNORECASE)
_KV_RE = re.compile(
    rf"{_KEY}[^\n]*?\bstart(?:_s)?\s*[=:]\s*{_NUM}{_UNIT}[^\n]*?\bend(?:_s)?\s*[=:]\s*{_NUM}",
    re.IGNORECASE,
)
_FENCE_RE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL | re.IGNORECASE)


def _phase_key(text: str) -> Optional[PhaseLabel]:
    try:
        return PhaseLabel.parse(re.sub(r"[\s_]", "", text))
    except ValueError:
        return None


def _from_regex(pattern: re.Pattern, text: str) -> dict:
    found = {}
    for match in pattern.finditer(text):
        phase = _phase_key(match.group(1))
        if phase is not None and phase not in found:
            found[phase] = (float(match.group(2)), float(match.group(3)))
    return found


def _json_candidates(text: str):
    for block in _FENCE_RE.findall(text):
        yield block
    for opener, closer in (("{", "}"), ("[", "]")):
        start, end = text.find(opener), text.rfind(closer)
        if 0 <= start < end:
            yield text[start:end + 1]


def _pair(value) -> Optional[tuple[float, float]]:
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return float(value[0]), float(value[1])
    if isinstance(value, dict):
        start = value.get("start", value.get("start_s"))
        end = value.get("end", value.get("end_s"))
        if start is not None and end is not None:
            return float(start), float(end)
    return None


def _from_json(text: str) -> dict:
    for blob in _json_candidates(text):
        try:
            data = json.loads(blob)
        except ValueError:
            continue
        if isinstance(data, dict) and isinstance(data.get("phases"), (list, dict)):
            data = data["phases"]
        found = {}
        try:
            if isinstance(data, dict):
                for key, value in data.items():
                    phase, pair = _phase_key(str(key)), _pair(value)
                    if phase is not None and pair is not None:
                        found.setdefault(phase, pair)
            elif isinstance(data, list):
                for entry in data:
                    if isinstance(entry, dict) and "phase" in entry:
                        phase, pair = _phase_key(str(entry["phase"])), _pair(entry)
                        if phase is not None and pair is not None:
                            found.setdefault(phase, pair)
        except (TypeError, ValueError):
            continue
        if found:
            return found
    return {}


def parse_segmentation_response(text: str, duration_s: float) -> PhaseSegmentation:
    for parser in (_from_json, lambda t: _from_regex(_KV_RE, t), lambda t: _from_regex(_LINE_RE, t)):
        raw = parser(text)
        if raw:
            return validate_segmentation(raw, duration_s)
    raise Unparseable("no phase timestamps found in response", raw_text=text)


def render_segmentation(seg: PhaseSegmentation, style: str = "lines") -> str:
    """Format a segmentation in one of the accepted response syntaxes (``lines``, ``json``, ``kv``)."""
    if style == "json":
        return json.dumps({str(int(p)): [iv.start_s, iv.end_s] for p, iv in seg.entries.items()})
    out = []
    for phase, iv in seg.entries.items():
        start, end = format_seconds(iv.start_s), format_seconds(iv.end_s)
        if style == "lines":
            out.append(f"Phase {int(phase)} ({phase.title}): {start} - {end}")
        elif style == "kv":
            out.append(f"Phase {int(phase)}: start={start}, end={end}")
        else:
            raise ValueError(f"unknown style {style!r}")
    return "\n".join(out)


def segment_event(backend: Backend, event: MultiViewEvent, defs: PhaseDefinitionSet = PhaseDefinitionSet(),
                  *, model_id: str = DEFAULT_GROUNDING_MODEL, trace: Optional[list] = None) -> PhaseSegmentation:
    """Ask the grounding model for phase boundaries and parse its answer.

    The raw response (and the request fingerprint) is appended to ``trace``
    before parsing, so it survives an :class:`Unparseable` failure.
    """
    request = build_grounding_prompt(event, defs).to_request(model_id)
    fp = fingerprint(request)
    try:
        response = backend.generate(request)
    except BackendError as exc:
        if exc.fingerprint is None:
            exc.fingerprint = fp
        raise
    if trace is not None:
        trace.append({"fingerprint": fp, "raw": response.text})
    return parse_segmentation_response(response.text, event.duration_s)

