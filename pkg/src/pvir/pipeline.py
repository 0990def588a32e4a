"""End-to-end orchestration of the four stages over a dataset manifest."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Optional

from .backend import DEFAULT_MAX_CONCURRENCY, Backend, HttpBackend, MockBackend, load_fixtures
from .core import MultiViewEvent
from .errors import BackendError, ConfigError, ExhaustedRetries, IoError, ParseError, PvirError, Unparseable
from .grounding import DEFAULT_GROUNDING_MODEL, PhaseDefinitionSet, segment_event
from .ingest import (Stage, analysis_from_dict, analysis_to_dict, answer_from_dict, answer_to_dict,
                     dumps, load_event_document, load_manifest, load_stage_output, persist_stage_output,
                     qa_from_dict, qa_to_dict, read_json, segmentation_from_dict, segmentation_to_dict,
                     write_atomic)
from .reasoning import DEFAULT_REASONING_MODEL, analyze_environment, analyze_phase
from .sync import estimate_offset, load_motion_energy
from .synthesis import (DEFAULT_SYNTHESIS_MODEL, RetryPolicy, assemble_event_info, report_to_dict,
                        synthesize_report)
from .trigger import TriggerParams, detect_trigger, load_trajectories

logger = logging.getLogger(__name__)

STAGE_BACKENDS = ("grounding", "reasoning", "synthesis")
DEFAULT_MODELS = {"grounding": DEFAULT_GROUNDING_MODEL, "reasoning": DEFAULT_REASONING_MODEL,
                  "synthesis": DEFAULT_SYNTHESIS_MODEL}
STOP_STAGES = ("segment", "analyze", "synthesize")


@dataclass(frozen=True)
class BackendConfig:
    kind: str
    model_id: str
    url: Optional[str] = None
    fixtures: Optional[Path] = None
    timeout_s: Optional[float] = None
    max_retries: int = 3
    token_env: Optional[str] = None


@dataclass(frozen=True)
class RunConfig:
    manifest: Path
    backends: Mapping[str, BackendConfig]
    output_dir: Path
    trigger: TriggerParams = TriggerParams()
    retry: RetryPolicy = RetryPolicy()
    max_concurrency: int = DEFAULT_MAX_CONCURRENCY


def _path(base: Path, value) -> Path:
    p = Path(value)
    return p if p.is_absolute() else (base / p)


def load_config(path) -> RunConfig:
    """Read a JSON run configuration; relative paths resolve against the config's directory."""
    path = Path(path)
    try:
        data = read_json(path)
    except (IoError, ParseError) as exc:
        raise ConfigError(str(exc)) from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    base = path.parent
    if "manifest" not in data:
        raise ConfigError("manifest: missing")
    manifest = _path(base, data["manifest"])
    if not manifest.exists():
        raise ConfigError(f"manifest: {manifest} does not exist")
    raw_backends = data.get("backends", {})
    if not isinstance(raw_backends, dict):
        raise ConfigError("backends: expected object")
    backends = {}
    for stage in STAGE_BACKENDS:
        spec = raw_backends.get(stage, raw_backends.get("default"))
        if spec is None:
            raise ConfigError(f"backends.{stage}: missing (and no default)")
        backends[stage] = _backend_config(spec, stage, base)
    try:
        trigger = TriggerParams(**data.get("trigger", {}))
        retry = RetryPolicy(**data.get("retry", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    max_conc = int(data.get("max_concurrency", DEFAULT_MAX_CONCURRENCY))
    if max_conc < 1:
        raise ConfigError("max_concurrency must be at least 1")
    return RunConfig(manifest, backends, _path(base, data.get("output_dir", "runs")), trigger, retry, max_conc)


def _backend_config(spec, stage: str, base: Path) -> BackendConfig:
    if not isinstance(spec, dict) or spec.get("kind") not in ("mock", "http"):
        raise ConfigError(f"backends.{stage}.kind: expected 'mock' or 'http'")
    fixtures = None
    if spec["kind"] == "mock":
        if "fixtures" not in spec:
            raise ConfigError(f"backends.{stage}.fixtures: missing")
        fixtures = _path(base, spec["fixtures"])
        if not fixtures.is_dir():
            raise ConfigError(f"backends.{stage}.fixtures: {fixtures} is not a directory")
    return BackendConfig(
        kind=spec["kind"],
        model_id=spec.get("model_id", DEFAULT_MODELS[stage]),
        url=spec.get("url"),
        fixtures=fixtures,
        timeout_s=spec.get("timeout_s"),
        max_retries=int(spec.get("max_retries", 3)),
        token_env=spec.get("token_env"),
    )


def make_backend(cfg: BackendConfig, url_override: Optional[str] = None,
                 max_concurrency: int = DEFAULT_MAX_CONCURRENCY) -> Backend:
    if cfg.kind == "mock":
        return MockBackend(load_fixtures(cfg.fixtures))
    url = url_override or cfg.url or os.environ.get("PVIR_BACKEND_URL")
    if not url:
        raise ConfigError("http backend needs a url (config, --backend-url or PVIR_BACKEND_URL)")
    token = os.environ.get(cfg.token_env) if cfg.token_env else None
    return HttpBackend(url, timeout_s=cfg.timeout_s, max_retries=cfg.max_retries, token=token,
                       max_concurrency=max_concurrency)


@dataclass
class EventResult:
    event_id: str
    ok: bool = True
    completed: list[str] = field(default_factory=list)
    error: Optional[str] = None

    def to_dict(self) -> dict:
        return {"event_id": self.event_id, "ok": self.ok, "completed": self.completed, "error": self.error}


@dataclass
class StageContext:
    run_id: str
    output_dir: Path
    backends: Mapping[str, Backend]
    models: Mapping[str, str]
    trigger: TriggerParams = TriggerParams()
    retry: RetryPolicy = RetryPolicy()
    definitions: PhaseDefinitionSet = PhaseDefinitionSet()
    reuse: bool = False

    def persist(self, event_id: str, stage: Stage, payload) -> None:
        persist_stage_output(self.run_id, event_id, stage, payload, self.output_dir)

    def load(self, event_id: str, stage: Stage):
        return load_stage_output(self.run_id, event_id, stage, self.output_dir)


def _acquire(ctx: StageContext, event: MultiViewEvent, spec: dict, base: Path) -> MultiViewEvent:
    """Trigger detection and view synchronization for events that ship raw acquisition data."""
    if "trajectories" in spec:
        windows = detect_trigger(load_trajectories(_path(base, spec["trajectories"])), ctx.trigger)
        ctx.persist(event.event_id, Stage.TRIGGER, {"windows": [
            {"pedestrian_id": w.pedestrian_id, "vehicle_id": w.vehicle_id, "trigger_t_s": w.trigger_t_s,
             "start_s": w.window.start_s, "end_s": w.window.end_s} for w in windows]})
    reference = event.views[0]
    if reference.motion_energy_uri is None or not any(v.motion_energy_uri for v in event.views[1:]):
        return event
    ref_signal = load_motion_energy(_path(base, reference.motion_energy_uri))
    max_lag_s = float(spec.get("max_lag_s", 5.0))
    offsets, views = {}, [replace(reference, offset_s=0.0)]
    for view in event.views[1:]:
        if view.motion_energy_uri is None:
            views.append(view)
            continue
        est = estimate_offset(ref_signal, load_motion_energy(_path(base, view.motion_energy_uri)), max_lag_s)
        offsets[view.view_id] = {"offset_s": est.offset_s, "confidence": est.confidence}
        views.append(replace(view, offset_s=est.offset_s))
    ctx.persist(event.event_id, Stage.SYNC, {"reference": reference.view_id, "offsets": offsets})
    return replace(event, views=tuple(views))


def process_event(ctx: StageContext, event_path: Path, stop_after: str = "synthesize") -> EventResult:
    """Run every stage for one event file, persisting each stage's output.

    Failures are caught and reported in the returned result so that one bad
    event never stops the others.
    """
    try:
        event, doc = load_event_document(event_path)
    except PvirError as exc:
        return EventResult(event_path.stem, ok=False, error=f"load: {exc}")
    result = EventResult(event.event_id)
    try:
        if isinstance(doc.get("acquisition"), dict):
            event = _acquire(ctx, event, doc["acquisition"], event_path.parent)
            result.completed.append("acquire")

        seg = None
        if ctx.reuse:
            previous = ctx.load(event.event_id, Stage.SEGMENTATION)
            if previous and previous.get("segmentation"):
                seg = segmentation_from_dict(previous["segmentation"])
        if seg is None:
            trace: list = []
            try:
                seg = segment_event(ctx.backends["grounding"], event, ctx.definitions,
                                    model_id=ctx.models["grounding"], trace=trace)
            except (Unparseable, BackendError) as exc:
                ctx.persist(event.event_id, Stage.SEGMENTATION,
                            {"segmentation": None, "raw": trace, "error": f"{type(exc).__name__}: {exc}"})
                raise
            ctx.persist(event.event_id, Stage.SEGMENTATION,
                        {"segmentation": segmentation_to_dict(seg), "raw": trace, "error": None})
        result.completed.append("segment")
        if stop_after == "segment":
            return result

        analyses = env_answers = None
        if ctx.reuse:
            previous = ctx.load(event.event_id, Stage.REASONING)
            if previous:
                analyses = [analysis_from_dict(d) for d in previous["phases"]]
                env_answers = [(qa_from_dict(p["question"]), answer_from_dict(p["answer"]))
                               for p in previous["environment"]["answers"]]
        if analyses is None:
            trace = []
            backend, model = ctx.backends["reasoning"], ctx.models["reasoning"]
            analyses = [analyze_phase(backend, event, seg, phase, event.questions(phase),
                                      model_id=model, trace=trace) for phase in seg.phases]
            env_answers, env_errors = analyze_environment(backend, event, event.questions(None),
                                                          model_id=model, trace=trace)
            ctx.persist(event.event_id, Stage.REASONING, {
                "phases": [analysis_to_dict(a) for a in analyses],
                "environment": {
                    "answers": [{"question": qa_to_dict(q), "answer": answer_to_dict(r)} for q, r in env_answers],
                    "errors": [{"item": e.item, "error": e.error} for e in env_errors],
                },
                "raw": trace,
            })
        result.completed.append("analyze")
        if stop_after == "analyze":
            return result

        info = assemble_event_info(seg, analyses, env_answers, event.views)
        attempts: list = []
        try:
            report = synthesize_report(ctx.backends["synthesis"], info, ctx.retry,
                                       model_id=ctx.models["synthesis"], trace=attempts)
        except (ExhaustedRetries, BackendError) as exc:
            ctx.persist(event.event_id, Stage.SYNTHESIS, {"report": None, "attempts": _attempts(attempts),
                                                          "error": f"{type(exc).__name__}: {exc}"})
            raise
        ctx.persist(event.event_id, Stage.SYNTHESIS, {"report": report_to_dict(report),
                                                      "attempts": _attempts(attempts), "error": None})
        result.completed.append("synthesize")
    except (PvirError, ValueError) as exc:
        logger.error("event %s failed: %s", event.event_id, exc)
        result.ok = False
        result.error = f"{type(exc).__name__}: {exc}"
    return result


def _attempts(attempts) -> list[dict]:
    return [{"attempt": a.attempt, "fingerprint": a.fingerprint, "prompt_text": a.prompt_text,
             "raw": a.raw, "violations": a.violations} for a in attempts]


def run_pipeline(config: RunConfig, run_id: str = "default", events: Optional[Iterable[str]] = None,
                 stop_after: str = "synthesize", backend_url: Optional[str] = None,
                 backends: Optional[Mapping[str, Backend]] = None, reuse: bool = False) -> tuple[int, list[EventResult]]:
    """Process every manifest event (optionally filtered by id) and return ``(exit_code, results)``.

    Exit code is 0 when every event completed and 1 when any failed.
    ``backends`` overrides the configured ones (useful for in-process mocks).
    """
    if stop_after not in STOP_STAGES:
        raise ConfigError(f"stage must be one of {STOP_STAGES}")
    try:
        manifest = load_manifest(config.manifest)
    except PvirError as exc:
        raise ConfigError(f"manifest: {exc}") from exc
    if backends is None:
        backends = {stage: make_backend(cfg, backend_url, config.max_concurrency)
                    for stage, cfg in config.backends.items()}
    ctx = StageContext(run_id, config.output_dir, backends,
                       {stage: cfg.model_id for stage, cfg in config.backends.items()},
                       config.trigger, config.retry, reuse=reuse)
    paths = list(manifest.events)
    wanted = set(events) if events else None
    if wanted is not None:
        paths = [p for p in paths if _event_id_of(p) in wanted]
    with ThreadPoolExecutor(max_workers=config.max_concurrency) as pool:
        results = list(pool.map(lambda p: process_event(ctx, p, stop_after), paths))
    write_atomic(Path(config.output_dir) / run_id / "run_summary.json",
                 dumps({"run_id": run_id, "stage": stop_after, "events": [r.to_dict() for r in results]}))
    return (0 if all(r.ok for r in results) else 1), results


def _event_id_of(path: Path) -> str:
    try:
        return str(read_json(path).get("event_id", path.stem))
    except PvirError:
        return path.stem


def format_results(results: Iterable[EventResult]) -> str:
    rows = [("event", "status", "completed", "error")]
    for r in results:
        rows.append((r.event_id, "ok" if r.ok else "FAILED", ",".join(r.completed) or "-", r.error or ""))
    widths = [max(len(row[i]) for row in rows) for i in range(4)]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in rows)


def load_ground_truth(config: RunConfig) -> list[MultiViewEvent]:
    manifest = load_manifest(config.manifest)
    return [load_event_document(p)[0] for p in manifest.events]

