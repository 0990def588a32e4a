"""Incident report synthesis: event information set, expert prompt, validated JSON report."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .backend import Backend, GenerateRequest, GenerationParams, fingerprint
from .core import (PHASES, AnswerRecord, EventInfoSet, PhaseAnalysis, PhaseLabel, PhaseSegmentation,
                   QAItem, ViewKind, ViewStream, format_seconds)
from .errors import BackendError, EmptyInfo, ExhaustedRetries, SchemaViolations, UnknownPhase

DEFAULT_SYNTHESIS_MODEL = "synthesis-llm"

RISK_LEVELS = ("Moderate", "High", "Critical", "Impact")
INTERACTION_FIELDS = ("initial_separation", "convergence_pattern", "communication",
                      "mutual_awareness", "critical_failure")
PHASE_ROW_FIELDS = ("phase", "time", "pedestrian_state", "vehicle_action", "risk_level")

FEEDBACK_HEADER = "VALIDATION ERRORS IN ATTEMPT {attempt} (fix all of them and return the full JSON report):"


@dataclass(frozen=True)
class PhaseRow:
    phase: PhaseLabel
    time: str
    pedestrian_state: str
    vehicle_action: str
    risk_level: str


@dataclass(frozen=True)
class InteractionDynamics:
    initial_separation: str
    convergence_pattern: str
    communication: str
    mutual_awareness: str
    critical_failure: str


@dataclass(frozen=True)
class BehaviorAnalysis:
    phase_table: tuple[PhaseRow, ...]
    interaction_dynamics: InteractionDynamics


@dataclass(frozen=True)
class CausalLink:
    phase: PhaseLabel
    factor: str


@dataclass(frozen=True)
class ContributingFactors:
    primary: tuple[str, ...]
    environmental: tuple[str, ...]


@dataclass(frozen=True)
class EventDiagnosis:
    classification: str
    severity: str
    causal_chain: tuple[CausalLink, ...]
    contributing_factors: ContributingFactors
    prevention_strategies: tuple[str, ...] = ()


@dataclass(frozen=True)
class IncidentReport:
    scene_understanding: str
    behavior_analysis: BehaviorAnalysis
    event_diagnosis: EventDiagnosis
    summary: str


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")


@dataclass(frozen=True)
class SynthesisPrompt:
    role_text: str
    input_block: str
    instruction_block: str
    output_schema_text: str

    def __post_init__(self):
        for name in ("role_text", "input_block", "instruction_block", "output_schema_text"):
            if not getattr(self, name).strip():
                raise ValueError(f"{name} is empty")

    @property
    def text(self) -> str:
        return "\n\n".join([
            "# ROLE\n" + self.role_text,
            "# INPUT\n" + self.input_block,
            "# INSTRUCTIONS\n" + self.instruction_block,
            "# OUTPUT SCHEMA\n" + self.output_schema_text,
        ])


# -- event information set ---------------------------------------------------

def assemble_event_info(seg: PhaseSegmentation, analyses: Sequence[PhaseAnalysis],
                        environment_answers: Sequence[tuple[QAItem, AnswerRecord]] = (),
                        views: Sequence[ViewStream] = ()) -> EventInfoSet:
    """Merge per-phase analyses into one chronologically ordered information set.

    Environment (whole-event) answers come first, then each phase's
    captions and answers in phase order.
    """
    for analysis in analyses:
        if analysis.phase not in seg:
            raise UnknownPhase(f"analysis for phase {int(analysis.phase)} not present in segmentation")
    ordered = sorted(analyses, key=lambda a: int(a.phase))
    captions = tuple(c for a in ordered for c in a.captions)
    answers = tuple(environment_answers) + tuple(p for a in ordered for p in a.answers)
    return EventInfoSet(seg, captions, answers, tuple(views))


# -- prompt ------------------------------------------------------------------

ROLE_TEXT = (
    "You are a domain expert in pedestrian-vehicle interaction analysis and traffic safety "
    "diagnostics. You reason about incidents as a sequence of behavioral phases following the "
    "Perception-Reaction Time paradigm, and you compare observations across camera perspectives "
    "before drawing causal conclusions."
)

INSTRUCTIONS = (
    "Scene understanding: describe the environment, road layout, weather, lighting, traffic "
    "volume and infrastructure relevant to pedestrian safety.",
    "Behavior interpretation: for each phase, state the pedestrian state, the vehicle action and "
    "the risk level, reconciling the egocentric and exocentric perspectives; then characterise "
    "the interaction dynamics between the two parties.",
    "Causal inference: reconstruct the causal chain phase by phase, in ascending phase order, and "
    "separate primary from environmental contributing factors.",
    "Diagnostic synthesis: classify the incident, assess its severity, formulate targeted "
    "prevention strategies and write a concise summary.",
)

_VIEW_LABELS = {
    ViewKind.VEHICLE: "egocentric (vehicle view)",
    ViewKind.OVERHEAD: "exocentric (overhead view)",
}

SCHEMA_SKELETON = {
    "scene_understanding": "<free text>",
    "behavior_analysis": {
        "phase_table": [{
            "phase": "<Pre-recognition|Recognition|Judgment|Action|Avoidance>",
            "time": "<start--end in seconds>",
            "pedestrian_state": "<text>",
            "vehicle_action": "<text>",
            "risk_level": "<" + "|".join(RISK_LEVELS) + ">",
        }],
        "interaction_dynamics": {name: "<text>" for name in INTERACTION_FIELDS},
    },
    "event_diagnosis": {
        "classification": "<text>",
        "severity": "<text>",
        "causal_chain": [{"phase": "<0-4, ascending, each at most once>", "factor": "<text>"}],
        "contributing_factors": {"primary": ["<text>"], "environmental": ["<text>"]},
        "prevention_strategies": ["<text>"],
    },
    "summary": "<free text>",
}


def _input_block(info: EventInfoSet) -> str:
    seg = info.segmentation
    lines = ["Mapping definitions:"]
    lines.append("- Phase indices: " + ", ".join(f"{int(p)} = {p.title}" for p in PHASES))
    lines.append(f"- Perspectives: {_VIEW_LABELS[ViewKind.VEHICLE]} footage is recorded from the vehicle; "
                 f"{_VIEW_LABELS[ViewKind.OVERHEAD]} footage comes from fixed infrastructure cameras.")
    for view in info.views:
        lines.append(f"- View {view.view_id}: {_VIEW_LABELS[view.kind]}")
    lines.append("")
    lines.append(f"Phase timeline (event duration {format_seconds(seg.duration_s)} s):")
    for phase, interval in seg.entries.items():
        lines.append(f"- Phase {int(phase)} ({phase.title}): "
                     f"{format_seconds(interval.start_s)} - {format_seconds(interval.end_s)} s")
    missing = [p for p in PHASES if p not in seg]
    if missing:
        lines.append("- Phases not segmented: " + ", ".join(f"{int(p)} ({p.title})" for p in missing))
    if info.captions:
        lines.append("")
        lines.append("Phase captions:")
        for cap in info.captions:
            where = f" [views: {', '.join(cap.views)}]" if cap.views else ""
            lines.append(f"- Phase {int(cap.phase)} ({cap.phase.title}), {cap.perspective.value} caption{where}: "
                         f"{_one_line(cap.text)}")
    if info.answers:
        lines.append("")
        lines.append("Question answers:")
        for qa, record in info.answers:
            scope = "Environment" if qa.phase is None else f"Phase {int(qa.phase)} ({qa.phase.title})"
            where = f" [views: {', '.join(record.views)}]" if record.views else ""
            lines.append(f"- {scope}, {qa.scope.value} question {qa.qa_id}{where}: {_one_line(qa.question)}")
            if record.extracted is not None:
                lines.append(f"  answer: ({record.extracted}) {_one_line(qa.options[record.extracted])}")
            else:
                lines.append(f"  answer: no valid choice ({_one_line(record.raw_text)[:200]})")
    return "\n".join(lines)


def _one_line(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip()


def build_synthesis_prompt(info: EventInfoSet) -> SynthesisPrompt:
    if info.is_empty:
        raise EmptyInfo("event information set is empty")
    instructions = "\n".join(f"{i}. {step}" for i, step in enumerate(INSTRUCTIONS, 1))
    schema = ("Return a single JSON object with exactly this structure:\n"
              + json.dumps(SCHEMA_SKELETON, indent=2, sort_keys=False))
    return SynthesisPrompt(ROLE_TEXT, _input_block(info), instructions, schema)


def feedback_block(attempt: int, violations: Sequence[str]) -> str:
    lines = [FEEDBACK_HEADER.format(attempt=attempt)]
    lines.extend(f"{i}. {v}" for i, v in enumerate(violations, 1))
    return "\n".join(lines)


# -- validation ----------------------------------------------------------------

_FENCE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL | re.IGNORECASE)


def _load_json(text: str):
    fenced = _FENCE.search(text)
    body = fenced.group(1) if fenced else text
    try:
        return json.loads(body)
    except ValueError:
        start, end = body.find("{"), body.rfind("}")
        if 0 <= start < end:
            return json.loads(body[start:end + 1])
        raise


class _Checker:
    def __init__(self):
        self.violations: list[str] = []

    def fail(self, path: str, rule: str) -> None:
        self.violations.append(f"{path}: {rule}")

    def obj(self, parent: Optional[dict], key: str, path: str) -> Optional[dict]:
        """Child object ``parent[key]``, or ``None`` (with a violation) when absent or not an object."""
        if parent is None:
            return None
        value = parent.get(key)
        if not isinstance(value, dict):
            self.fail(path, "missing" if value is None else "expected object")
            return None
        return value

    def items(self, parent: Optional[dict], key: str, path: str) -> list:
        if parent is None:
            return []
        value = parent.get(key)
        if not isinstance(value, list):
            self.fail(path, "missing" if value is None else "expected list")
            return []
        if not value:
            self.fail(path, "empty list")
        return value

    def text(self, parent: Optional[dict], key: str, path: str) -> str:
        if parent is None:
            return ""
        value = parent.get(key)
        if value is None:
            self.fail(path, "missing")
            return ""
        if not isinstance(value, str) or not value.strip():
            self.fail(path, "expected non-empty string")
            return ""
        return value

    def text_list(self, parent: Optional[dict], key: str, path: str, required: bool = True) -> tuple[str, ...]:
        if parent is None:
            return ()
        value = parent.get(key)
        if value is None:
            if required:
                self.fail(path, "missing")
            return ()
        if not isinstance(value, list) or not all(isinstance(v, str) and v.strip() for v in value):
            self.fail(path, "expected list of non-empty strings")
            return ()
        if required and not value:
            self.fail(path, "empty list")
        return tuple(value)

    def phase(self, parent: dict, path: str) -> Optional[PhaseLabel]:
        if "phase" not in parent:
            self.fail(path, "missing")
            return None
        try:
            return PhaseLabel.parse(parent["phase"])
        except ValueError:
            self.fail(path, f"unknown phase {parent['phase']!r}")
            return None


def validate_report(text: str) -> IncidentReport:
    """Parse and check a model's JSON report; raise :class:`SchemaViolations` listing every problem."""
    try:
        data = _load_json(text)
    except ValueError as exc:
        raise SchemaViolations([f"$: invalid JSON ({exc})"]) from None
    return report_from_dict(data)


def report_from_dict(data) -> IncidentReport:
    check = _Checker()
    if not isinstance(data, dict):
        raise SchemaViolations(["$: expected object"])
    scene = check.text(data, "scene_understanding", "scene_understanding")
    summary = check.text(data, "summary", "summary")

    behavior = check.obj(data, "behavior_analysis", "behavior_analysis")
    rows = []
    for i, row in enumerate(check.items(behavior, "phase_table", "behavior_analysis.phase_table")):
        path = f"behavior_analysis.phase_table[{i}]"
        if not isinstance(row, dict):
            check.fail(path, "expected object")
            continue
        phase = check.phase(row, f"{path}.phase")
        values = {k: check.text(row, k, f"{path}.{k}") for k in PHASE_ROW_FIELDS[1:]}
        if values["risk_level"] and values["risk_level"] not in RISK_LEVELS:
            check.fail(f"{path}.risk_level", f"must be one of {', '.join(RISK_LEVELS)}")
        if phase is not None:
            rows.append(PhaseRow(phase, **values))
    dyn_path = "behavior_analysis.interaction_dynamics"
    dyn = check.obj(behavior, "interaction_dynamics", dyn_path)
    dynamics = {k: check.text(dyn, k, f"{dyn_path}.{k}") for k in INTERACTION_FIELDS}

    diag = check.obj(data, "event_diagnosis", "event_diagnosis")
    classification = check.text(diag, "classification", "event_diagnosis.classification")
    severity = check.text(diag, "severity", "event_diagnosis.severity")
    chain = []
    for i, link in enumerate(check.items(diag, "causal_chain", "event_diagnosis.causal_chain")):
        path = f"event_diagnosis.causal_chain[{i}]"
        if not isinstance(link, dict):
            check.fail(path, "expected object")
            continue
        phase = check.phase(link, f"{path}.phase")
        factor = check.text(link, "factor", f"{path}.factor")
        if phase is not None:
            chain.append(CausalLink(phase, factor))
    phases = [int(link.phase) for link in chain]
    if any(b <= a for a, b in zip(phases, phases[1:])):
        check.fail("event_diagnosis.causal_chain", "phase order")
    cf_path = "event_diagnosis.contributing_factors"
    factors = check.obj(diag, "contributing_factors", cf_path)
    primary = check.text_list(factors, "primary", f"{cf_path}.primary")
    environmental = check.text_list(factors, "environmental", f"{cf_path}.environmental")
    prevention = check.text_list(diag, "prevention_strategies", "event_diagnosis.prevention_strategies",
                                 required=False)

    if check.violations:
        raise SchemaViolations(check.violations)
    return IncidentReport(
        scene_understanding=scene,
        behavior_analysis=BehaviorAnalysis(tuple(rows), InteractionDynamics(**dynamics)),
        event_diagnosis=EventDiagnosis(classification, severity, tuple(chain),
                                       ContributingFactors(primary, environmental), prevention),
        summary=summary,
    )


def report_to_dict(report: IncidentReport) -> dict:
    b, d = report.behavior_analysis, report.event_diagnosis
    diagnosis = {
        "classification": d.classification,
        "severity": d.severity,
        "causal_chain": [{"phase": str(int(link.phase)), "factor": link.factor} for link in d.causal_chain],
        "contributing_factors": {"primary": list(d.contributing_factors.primary),
                                 "environmental": list(d.contributing_factors.environmental)},
    }
    if d.prevention_strategies:
        diagnosis["prevention_strategies"] = list(d.prevention_strategies)
    return {
        "scene_understanding": report.scene_understanding,
        "behavior_analysis": {
            "phase_table": [{"phase": row.phase.title, "time": row.time, "pedestrian_state": row.pedestrian_state,
                             "vehicle_action": row.vehicle_action, "risk_level": row.risk_level}
                            for row in b.phase_table],
            "interaction_dynamics": {k: getattr(b.interaction_dynamics, k) for k in INTERACTION_FIELDS},
        },
        "event_diagnosis": diagnosis,
        "summary": report.summary,
    }


def report_to_json(report: IncidentReport) -> str:
    """Canonical serialization: sorted keys, two-space indent, trailing newline."""
    return json.dumps(report_to_dict(report), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def render_report_text(report: IncidentReport) -> str:
    b, d = report.behavior_analysis, report.event_diagnosis
    out = ["SCENE UNDERSTANDING", report.scene_understanding, "", "BEHAVIOR ANALYSIS"]
    header = ("Phase", "Time (s)", "Pedestrian state", "Vehicle action", "Risk")
    rows = [header] + [(r.phase.title, r.time, r.pedestrian_state, r.vehicle_action, r.risk_level)
                       for r in b.phase_table]
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    for row in rows:
        out.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    out.append("")
    for name in INTERACTION_FIELDS:
        out.append(f"{name.replace('_', ' ').capitalize()}: {getattr(b.interaction_dynamics, name)}")
    out += ["", "EVENT DIAGNOSIS", f"Classification: {d.classification}", f"Severity: {d.severity}",
            "Causal chain:"]
    out += [f"  {int(link.phase)} {link.phase.title}: {link.factor}" for link in d.causal_chain]
    out.append("Primary factors:")
    out += [f"  - {f}" for f in d.contributing_factors.primary]
    out.append("Environmental factors:")
    out += [f"  - {f}" for f in d.contributing_factors.environmental]
    if d.prevention_strategies:
        out.append("Prevention strategies:")
        out += [f"  - {s}" for s in d.prevention_strategies]
    out += ["", "SUMMARY", report.summary]
    return "\n".join(out) + "\n"


# -- retry loop ------------------------------------------------------------------

@dataclass
class SynthesisAttempt:
    attempt: int
    prompt_text: str
    fingerprint: str
    raw: str
    violations: list[str] = field(default_factory=list)


def synthesize_report(backend: Backend, info: EventInfoSet, policy: RetryPolicy = RetryPolicy(), *,
                      model_id: str = DEFAULT_SYNTHESIS_MODEL, params: Optional[GenerationParams] = None,
                      trace: Optional[list] = None) -> IncidentReport:
    """Generate a report, feeding validation errors back until one passes or attempts run out.

    Each retry prompt is the base prompt followed by the feedback blocks of
    every previous failed attempt. Every attempt is appended to ``trace``
    as a :class:`SynthesisAttempt`.
    """
    prompt_text = build_synthesis_prompt(info).text
    violations: list[str] = []
    for attempt in range(1, policy.max_attempts + 1):
        request = GenerateRequest(model_id, prompt_text, (), params or GenerationParams())
        fp = fingerprint(request)
        try:
            response = backend.generate(request)
        except BackendError as exc:
            if exc.fingerprint is None:
                exc.fingerprint = fp
            raise
        record = SynthesisAttempt(attempt, prompt_text, fp, response.text)
        if trace is not None:
            trace.append(record)
        try:
            return validate_report(response.text)
        except SchemaViolations as exc:
            violations = exc.violations
            record.violations = list(violations)
        prompt_text = prompt_text + "\n\n" + feedback_block(attempt, violations)
    raise ExhaustedRetries(policy.max_attempts, violations)
