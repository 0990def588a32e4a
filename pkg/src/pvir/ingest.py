"""Dataset manifests, event annotation files and persisted run artifacts.

Event file (UTF-8 JSON, one per event)::

    {"event_id": "...", "duration_s": 43.7, "origin_s": 0.0,
     "views": [{"view_id", "kind": "overhead"|"vehicle", "video_uri",
                "motion_energy_uri"?, "offset_s"?}],
     "annotations": {"phases": [{"phase": 0, "start_s", "end_s"}],
                     "captions": [{"phase", "perspective", "text"}],
                     "qa": [{"qa_id", "scope", "phase"?, "question",
                             "options": {"a", "b", "c", "d"}, "answer"?}]},
     "acquisition": {...}}

Manifest: ``{"dataset_id", "split": "train"|"test"|"other", "events": [relative paths]}``.
Run artifacts: ``<root>/<run_id>/<event_id>/<stage>.json``.
"""

from __future__ import annotations

import datetime as _dt
import enum
import json
import os
import re
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

from .core import (AnswerRecord, CaptionRecord, GroundTruth, ItemError, MultiViewEvent, PhaseAnalysis,
                   PhaseLabel, PhaseSegmentation, QAItem, QAScope, TimeInterval, ViewStream, Violation,
                   validate_segmentation)
from .errors import IoError, ParseError, SchemaError
from .metrics.evaluate import EventPrediction

SPLITS = ("train", "test", "other")


class Stage(str, enum.Enum):
    TRIGGER = "trigger"
    SYNC = "sync"
    SEGMENTATION = "segmentation"
    REASONING = "reasoning"
    SYNTHESIS = "synthesis"


@dataclass(frozen=True)
class DatasetManifest:
    dataset_id: str
    split: str
    events: tuple[Path, ...]


@dataclass(frozen=True)
class RunArtifact:
    run_id: str
    event_id: str
    stage: Stage
    path: Path
    payload: Any
    created_at: _dt.datetime


def dumps(payload) -> str:
    """Canonical JSON used for every file this package writes."""
    return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def read_json(path) -> Any:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError("InvalidJSON", exc.msg, line=exc.lineno, path=str(path)) from exc


# -- manifest -------------------------------------------------------------------

def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    data = read_json(path)
    if not isinstance(data, dict):
        raise ParseError("BadValue", "manifest must be a JSON object", path=str(path))
    for key in ("dataset_id", "split", "events"):
        if key not in data:
            raise ParseError("MissingField", key, field=key, path=str(path))
    if data["split"] not in SPLITS:
        raise ParseError("BadValue", f"split must be one of {SPLITS}", field="split", path=str(path))
    if not isinstance(data["events"], list):
        raise ParseError("BadValue", "events must be a list", field="events", path=str(path))
    seen = set()
    events = []
    for i, rel in enumerate(data["events"]):
        resolved = (path.parent / rel).resolve()
        if resolved in seen:
            raise ParseError("DuplicateEvent", str(rel), field=f"events[{i}]", path=str(path))
        seen.add(resolved)
        events.append(resolved)
    return DatasetManifest(str(data["dataset_id"]), data["split"], tuple(events))


def write_manifest(path, dataset_id: str, split: str, event_paths) -> None:
    path = Path(path)
    rel = [os.path.relpath(Path(p), path.parent) for p in event_paths]
    path.write_text(dumps({"dataset_id": dataset_id, "split": split, "events": rel}), encoding="utf-8")


# -- event files ------------------------------------------------------------------

def _req(data: dict, key: str, path: str):
    if not isinstance(data, dict):
        raise SchemaError(path, "expected object")
    if key not in data or data[key] is None:
        raise SchemaError(f"{path}.{key}" if path else key, "missing")
    return data[key]


def _num(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(path, "expected number")
    return float(value)


def _list(data: dict, key: str, path: str) -> list:
    value = data.get(key, [])
    if not isinstance(value, list):
        raise SchemaError(f"{path}.{key}", "expected list")
    return value


def event_from_dict(data: Any) -> MultiViewEvent:
    """Build and validate an event from its JSON document; raises :class:`SchemaError`."""
    if not isinstance(data, dict):
        raise SchemaError("$", "expected object")
    event_id = str(_req(data, "event_id", ""))
    duration = _num(_req(data, "duration_s", ""), "duration_s")
    if duration <= 0:
        raise SchemaError("duration_s", "must be positive")
    raw_views = _req(data, "views", "")
    if not isinstance(raw_views, list):
        raise SchemaError("views", "expected list")
    if not raw_views:
        raise SchemaError("views", "empty")
    views = []
    for i, v in enumerate(raw_views):
        p = f"views[{i}]"
        try:
            views.append(ViewStream(
                view_id=str(_req(v, "view_id", p)),
                kind=_req(v, "kind", p),
                video_uri=str(_req(v, "video_uri", p)),
                motion_energy_uri=v.get("motion_energy_uri"),
                offset_s=_num(v.get("offset_s", 0.0), f"{p}.offset_s"),
            ))
        except ValueError as exc:
            if isinstance(exc, SchemaError):
                raise
            raise SchemaError(f"{p}.kind", str(exc)) from exc
    ids = [v.view_id for v in views]
    if len(set(ids)) != len(ids):
        raise SchemaError("views", "duplicate view_id")

    gt = None
    ann = data.get("annotations")
    if ann is not None:
        if not isinstance(ann, dict):
            raise SchemaError("annotations", "expected object")
        gt = GroundTruth(
            segmentation=_segmentation_from_annotations(ann, duration),
            captions=tuple(_caption(c, f"annotations.captions[{i}]")
                           for i, c in enumerate(_list(ann, "captions", "annotations"))),
            qa=tuple(_qa(q, f"annotations.qa[{i}]") for i, q in enumerate(_list(ann, "qa", "annotations"))),
        )
    origin = _num(data.get("origin_s", 0.0), "origin_s")
    return MultiViewEvent(event_id, duration, tuple(views), gt, origin)


def _phase(value, path: str) -> PhaseLabel:
    try:
        return PhaseLabel.parse(value)
    except ValueError as exc:
        raise SchemaError(path, str(exc)) from exc


def _segmentation_from_annotations(ann: dict, duration: float) -> Optional[PhaseSegmentation]:
    if "phases" not in ann:
        return None
    raw = {}
    for i, entry in enumerate(_list(ann, "phases", "annotations")):
        p = f"annotations.phases[{i}]"
        phase = _phase(_req(entry, "phase", p), f"{p}.phase")
        if phase in raw:
            raise SchemaError(f"{p}.phase", "duplicate phase")
        raw[phase] = (_num(_req(entry, "start_s", p), f"{p}.start_s"), _num(_req(entry, "end_s", p), f"{p}.end_s"))
    return validate_segmentation(raw, duration)


def _caption(data, path: str) -> CaptionRecord:
    phase = _phase(_req(data, "phase", path), f"{path}.phase")
    perspective = _req(data, "perspective", path)
    text = _req(data, "text", path)
    if not isinstance(text, str) or not text.strip():
        raise SchemaError(f"{path}.text", "empty")
    try:
        return CaptionRecord(phase, perspective, text, tuple(data.get("views", ())))
    except ValueError as exc:
        raise SchemaError(f"{path}.perspective", str(exc)) from exc


def _qa(data, path: str) -> QAItem:
    qa_id = str(_req(data, "qa_id", path))
    scope_raw = _req(data, "scope", path)
    try:
        scope = QAScope(scope_raw)
    except ValueError as exc:
        raise SchemaError(f"{path}.scope", str(exc)) from exc
    phase = None
    if scope is not QAScope.ENVIRONMENT:
        phase = _phase(_req(data, "phase", path), f"{path}.phase")
    elif data.get("phase") is not None:
        raise SchemaError(f"{path}.phase", "environment questions carry no phase")
    question = _req(data, "question", path)
    options = _req(data, "options", path)
    if not isinstance(options, dict):
        raise SchemaError(f"{path}.options", "expected object")
    if len(options) != 4 or sorted(str(k).lower() for k in options) != ["a", "b", "c", "d"]:
        raise SchemaError(f"{path}.options", f"expected 4 (a-d), got {len(options)}")
    answer = data.get("answer")
    if answer is not None and str(answer).strip().lower() not in ("a", "b", "c", "d"):
        raise SchemaError(f"{path}.answer", "must be one of a-d")
    return QAItem(qa_id, scope, str(question), {str(k): str(v) for k, v in options.items()}, phase, answer)


def event_to_dict(event: MultiViewEvent) -> dict:
    out: dict = {
        "event_id": event.event_id,
        "duration_s": _ms(event.duration_s),
        "views": [_view_to_dict(v) for v in event.views],
    }
    if event.origin_s:
        out["origin_s"] = _ms(event.origin_s)
    gt = event.ground_truth
    if gt is not None:
        ann: dict = {}
        if gt.segmentation is not None:
            ann["phases"] = [{"phase": int(p), "start_s": _ms(iv.start_s), "end_s": _ms(iv.end_s)}
                             for p, iv in gt.segmentation.entries.items()]
        ann["captions"] = [caption_to_dict(c) for c in gt.captions]
        ann["qa"] = [qa_to_dict(q) for q in gt.qa]
        out["annotations"] = ann
    return out


def _ms(x: float) -> float:
    return round(float(x), 3)


def _view_to_dict(v: ViewStream) -> dict:
    out = {"view_id": v.view_id, "kind": v.kind.value, "video_uri": v.video_uri}
    if v.motion_energy_uri is not None:
        out["motion_energy_uri"] = v.motion_energy_uri
    if v.offset_s:
        out["offset_s"] = _ms(v.offset_s)
    return out


def serialize_event(event: MultiViewEvent) -> str:
    return dumps(event_to_dict(event))


def load_event(path) -> MultiViewEvent:
    path = Path(path)
    data = read_json(path)
    return event_from_dict(data)


def load_event_document(path) -> tuple[MultiViewEvent, dict]:
    """The parsed event plus its raw JSON (for optional keys such as ``acquisition``)."""
    data = read_json(path)
    return event_from_dict(data), data


# -- stage payload codecs -----------------------------------------------------------

def segmentation_to_dict(seg: PhaseSegmentation) -> dict:
    return {
        "duration_s": seg.duration_s,
        "phases": [{"phase": int(p), "start_s": iv.start_s, "end_s": iv.end_s} for p, iv in seg.entries.items()],
        "violations": [str(v) for v in seg.violations],
    }


_VIOLATION_RE = re.compile(r"^(\w+)(?:\((\d)\))?$")


def segmentation_from_dict(data: dict) -> PhaseSegmentation:
    entries = {PhaseLabel.parse(e["phase"]): TimeInterval(float(e["start_s"]), float(e["end_s"]))
               for e in data["phases"]}
    violations = []
    for text in data.get("violations", []):
        match = _VIOLATION_RE.match(text)
        if not match:
            raise SchemaError("violations", f"cannot parse {text!r}")
        phase = PhaseLabel(int(match.group(2))) if match.group(2) is not None else None
        violations.append(Violation(match.group(1), phase))
    return PhaseSegmentation(entries, float(data["duration_s"]), tuple(violations))


def caption_to_dict(c: CaptionRecord) -> dict:
    out = {"phase": int(c.phase), "perspective": c.perspective.value, "text": c.text}
    if c.views:
        out["views"] = list(c.views)
    return out


def qa_to_dict(q: QAItem) -> dict:
    out = {"qa_id": q.qa_id, "scope": q.scope.value, "question": q.question, "options": dict(q.options)}
    if q.phase is not None:
        out["phase"] = int(q.phase)
    if q.answer is not None:
        out["answer"] = q.answer
    return out


def qa_from_dict(d: dict) -> QAItem:
    return _qa(d, "question")


def answer_to_dict(a: AnswerRecord) -> dict:
    return {"qa_id": a.qa_id, "raw_text": a.raw_text, "extracted": a.extracted, "views": list(a.views)}


def answer_from_dict(d: dict) -> AnswerRecord:
    return AnswerRecord(d["qa_id"], d["raw_text"], d.get("extracted"), tuple(d.get("views", ())))


def analysis_to_dict(a: PhaseAnalysis) -> dict:
    return {
        "phase": int(a.phase),
        "captions": [caption_to_dict(c) for c in a.captions],
        "answers": [{"question": qa_to_dict(q), "answer": answer_to_dict(r)} for q, r in a.answers],
        "errors": [{"item": e.item, "error": e.error} for e in a.errors],
    }


def analysis_from_dict(d: dict) -> PhaseAnalysis:
    return PhaseAnalysis(
        phase=PhaseLabel.parse(d["phase"]),
        captions=tuple(_caption(c, f"captions[{i}]") for i, c in enumerate(d.get("captions", []))),
        answers=tuple((_qa(p["question"], f"answers[{i}].question"), answer_from_dict(p["answer"]))
                      for i, p in enumerate(d.get("answers", []))),
        errors=tuple(ItemError(e["item"], e["error"]) for e in d.get("errors", [])),
    )


# -- run artifacts ------------------------------------------------------------------------

_key_locks: dict[tuple, threading.Lock] = {}
_key_locks_guard = threading.Lock()


def _lock_for(key: tuple) -> threading.Lock:
    with _key_locks_guard:
        return _key_locks.setdefault(key, threading.Lock())


def artifact_path(root, run_id: str, event_id: str, stage) -> Path:
    return Path(root) / run_id / event_id / f"{Stage(stage).value}.json"


def write_atomic(path: Path, text: str) -> None:
    """Write via a temporary file in the target directory, then rename over the target."""
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as handle:
                handle.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def persist_stage_output(run_id: str, event_id: str, stage, payload, root="runs") -> RunArtifact:
    stage = Stage(stage)
    path = artifact_path(root, run_id, event_id, stage)
    with _lock_for((str(Path(root).resolve()), run_id, event_id, stage)):
        write_atomic(path, dumps(payload))
    return RunArtifact(run_id, event_id, stage, path, payload, _dt.datetime.now(_dt.timezone.utc))


def load_stage_output(run_id: str, event_id: str, stage, root="runs") -> Optional[Any]:
    path = artifact_path(root, run_id, event_id, stage)
    if not path.exists():
        return None
    return read_json(path)


def load_run_predictions(root, run_id: str) -> dict[str, EventPrediction]:
    """Rebuild per-event predictions from a persisted run directory."""
    run_dir = Path(root) / run_id
    if not run_dir.is_dir():
        raise IoError(f"run directory not found: {run_dir}")
    predictions = {}
    for event_dir in sorted(p for p in run_dir.iterdir() if p.is_dir()):
        event_id = event_dir.name
        seg_payload = load_stage_output(run_id, event_id, Stage.SEGMENTATION, root) or {}
        seg = seg_payload.get("segmentation")
        segmentation = segmentation_from_dict(seg) if seg else None
        reasoning = load_stage_output(run_id, event_id, Stage.REASONING, root) or {}
        captions, answers = [], []
        for d in reasoning.get("phases", []):
            analysis = analysis_from_dict(d)
            captions.extend(analysis.captions)
            answers.extend(r for _, r in analysis.answers)
        for d in reasoning.get("environment", {}).get("answers", []):
            answers.append(answer_from_dict(d["answer"]))
        predictions[event_id] = EventPrediction(event_id, segmentation, tuple(captions), tuple(answers))
    return predictions
