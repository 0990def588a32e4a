"""A self-contained sample dataset: the reversing-vehicle incident from the phase risk table.

``write_sample_dataset(root)`` lays out an event file, a manifest, mock
fixture directories for the three model stages and a run config, so that
``pvir run --config <root>/config.json`` works offline. Fixtures are
recorded by driving the real stage functions against a scripted responder,
which keeps their fingerprints in lockstep with the prompts the pipeline
builds.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Callable, Optional

from .backend import GenerateRequest, GenerateResponse, fingerprint, save_fixtures
from .core import PhaseLabel, Perspective
from .grounding import segment_event
from .ingest import dumps, event_from_dict, write_atomic
from .reasoning import CAPTION_TEMPLATES, analyze_environment, analyze_phase
from .synthesis import assemble_event_info, synthesize_report

DURATION_S = 43.7

PHASE_TIMES = {
    0: (28.8, 29.9),
    1: (29.8, 30.8),
    2: (30.7, 32.5),
    3: (32.6, 37.8),
    4: (37.8, 43.7),
}

GROUNDING_RESPONSE = "\n".join([
    "Phase 0 (Pre-recognition): 28.8 - 29.9",
    "Phase 1 (Recognition): 29.8 - 30.8",
    "Phase 2 (Judgment): 30.7 - 32.5",
    "Phase 3 (Action): 32.6 - 37.8",
    "Phase 4 (Avoidance): 37.8 - 43.7",
])

# (pedestrian state, vehicle action, risk level) per phase
PHASE_ROWS = {
    0: ("Standing, distracted", "Preparing", "Moderate"),
    1: ("Still, distracted", "About to reverse", "High"),
    2: ("Moving forward", "Reversing 5 km/h", "High"),
    3: ("In vehicle lane", "Reversing 5 km/h", "Critical"),
    4: ("Thrown back", "Collision", "Impact"),
}

GT_CAPTIONS = {
    (0, "pedestrian"): "A man in dark clothes stands behind the parked car looking down at his phone.",
    (0, "vehicle"): "The car is stopped on a narrow residential street and the driver prepares to back up.",
    (1, "pedestrian"): "The man stays still behind the car with his eyes on his phone.",
    (1, "vehicle"): "The car is about to reverse while the man is standing close behind it.",
    (2, "pedestrian"): "The man starts walking forward toward the rear of the car.",
    (2, "vehicle"): "The car begins to reverse slowly at about five kilometers per hour.",
    (3, "pedestrian"): "The man walks into the lane behind the car without looking up.",
    (3, "vehicle"): "The car keeps reversing slowly toward the man walking in the lane.",
    (4, "pedestrian"): "The man is hit by the rear of the car and falls backward onto the road.",
    (4, "vehicle"): "The reversing car strikes the man and stops after the collision.",
}

PREDICTED_CAPTIONS = {
    (0, "pedestrian"): "A man in black clothes is standing behind the car and looking at his phone.",
    (0, "vehicle"): "The car is stopped on a residential street and prepares to back up.",
    (1, "pedestrian"): "The man remains still behind the car looking at his phone.",
    (1, "vehicle"): "The car is about to reverse with the man standing behind it.",
    (2, "pedestrian"): "The man begins walking forward toward the car.",
    (2, "vehicle"): "The car starts to reverse slowly.",
    (3, "pedestrian"): "The man walks in the lane behind the car while using his phone.",
    (3, "vehicle"): "The car continues reversing toward the man in the lane.",
    (4, "pedestrian"): "The man is struck by the car and falls back onto the road.",
    (4, "vehicle"): "The reversing car hits the man and then stops.",
}

QUESTIONS = [
    {"qa_id": "env-weather", "scope": "environment", "question": "What is the weather in the scene?",
     "options": {"a": "Clear", "b": "Rainy", "c": "Snowy", "d": "Foggy"}, "answer": "a"},
    {"qa_id": "env-sidewalk", "scope": "environment", "question": "Is there a sidewalk along the road?",
     "options": {"a": "Yes, on both sides", "b": "Yes, on one side", "c": "No", "d": "Cannot be determined"},
     "answer": "c"},
    {"qa_id": "p0-ovh-attention", "scope": "overhead_view", "phase": 0,
     "question": "What is the pedestrian paying attention to?",
     "options": {"a": "The vehicle", "b": "The traffic signal", "c": "A smartphone", "d": "Another pedestrian"},
     "answer": "c"},
    {"qa_id": "p2-veh-motion", "scope": "vehicle_view", "phase": 2, "question": "How is the vehicle moving?",
     "options": {"a": "Going straight ahead", "b": "Reversing slowly", "c": "Turning left", "d": "Stopped"},
     "answer": "b"},
    {"qa_id": "p3-ovh-position", "scope": "overhead_view", "phase": 3,
     "question": "Where is the pedestrian relative to the vehicle?",
     "options": {"a": "In front of it", "b": "On the sidewalk", "c": "Behind it in the lane", "d": "Beside it"},
     "answer": "c"},
    {"qa_id": "p4-veh-outcome", "scope": "vehicle_view", "phase": 4, "question": "What happens to the pedestrian?",
     "options": {"a": "Crosses safely", "b": "Stops in time", "c": "Is struck and falls", "d": "Walks away"},
     "answer": "c"},
]

# raw model answers per question id; one is deliberately unextractable
PREDICTED_ANSWERS = {
    "env-weather": "answer_choice: a",
    "env-sidewalk": "The road has no sidewalk. answer_choice: c",
    "p0-ovh-attention": "answer_choice: c",
    "p2-veh-motion": "Answer: b",
    "p3-ovh-position": "answer_choice: a",
    "p4-veh-outcome": "The pedestrian is knocked over by the reversing car.",
}

REPORT = {
    "scene_understanding": (
        "Daytime with clear weather on a straight residential street carrying little traffic. "
        "The road has no sidewalk and no marked crossing, so pedestrians share the carriageway "
        "with vehicles."
    ),
    "behavior_analysis": {
        "phase_table": [
            {"phase": PhaseLabel(p).title, "time": f"{PHASE_TIMES[p][0]}--{PHASE_TIMES[p][1]}",
             "pedestrian_state": row[0], "vehicle_action": row[1], "risk_level": row[2]}
            for p, row in PHASE_ROWS.items()
        ],
        "interaction_dynamics": {
            "initial_separation": "Close range, pedestrian standing behind the vehicle",
            "convergence_pattern": "Vehicle backing up while the pedestrian moved toward it",
            "communication": "None observed",
            "mutual_awareness": "Neither side noticed the other before contact",
            "critical_failure": "Phone distraction on one side and an unchecked reverse on the other",
        },
    },
    "event_diagnosis": {
        "classification": "Collision",
        "severity": "Pedestrian knocked backward to the ground, possible injury",
        "causal_chain": [
            {"phase": "0", "factor": "Pedestrian waits behind the car absorbed in a phone"},
            {"phase": "1", "factor": "Driver gets ready to reverse while the pedestrian stays distracted"},
            {"phase": "2", "factor": "Pedestrian steps forward just as the car starts backing up"},
            {"phase": "3", "factor": "Paths converge with neither party aware of the other"},
            {"phase": "4", "factor": "Contact happens before any evasive reaction"},
        ],
        "contributing_factors": {
            "primary": [
                "Pedestrian attention on a smartphone",
                "Vehicle reversing without confirming the path was clear",
                "No mutual awareness",
            ],
            "environmental": [
                "No sidewalk, so walking happens in the vehicle lane",
                "No physical separation between pedestrian and vehicle space",
                "Shared-space residential layout",
            ],
        },
        "prevention_strategies": [
            "Rear sensing with automatic braking on reversing vehicles",
            "Separated walkways on residential streets",
        ],
    },
    "summary": (
        "A distracted pedestrian walked into the path of a slowly reversing car on a street "
        "without sidewalks and was knocked down; neither party noticed the other in time."
    ),
}

VIEWS = [
    ("overhead-1", "overhead"),
    ("overhead-2", "overhead"),
    ("overhead-3", "overhead"),
    ("vehicle-1", "vehicle"),
]


def sample_event_dict(event_id: str = "reversing-collision") -> dict:
    return {
        "event_id": event_id,
        "duration_s": DURATION_S,
        "views": [{"view_id": vid, "kind": kind, "video_uri": f"videos/{event_id}/{vid}.mp4"}
                  for vid, kind in VIEWS],
        "annotations": {
            "phases": [{"phase": p, "start_s": s, "end_s": e} for p, (s, e) in PHASE_TIMES.items()],
            "captions": [{"phase": p, "perspective": persp, "text": text}
                         for (p, persp), text in GT_CAPTIONS.items()],
            "qa": copy.deepcopy(QUESTIONS),
        },
    }


class _Responder:
    """Backend that answers through a callable and remembers every (fingerprint, text) pair."""

    def __init__(self, respond: Callable[[GenerateRequest], str]):
        self.respond = respond
        self.recorded: dict[str, str] = {}

    def generate(self, request: GenerateRequest) -> GenerateResponse:
        text = self.respond(request)
        self.recorded[fingerprint(request)] = text
        return GenerateResponse(text)


def record_fixtures(event_dict: dict, grounding_text: str = GROUNDING_RESPONSE,
                    report: Optional[dict] = None) -> dict[str, dict[str, str]]:
    """Fixtures (stage -> fingerprint -> text) that replay this sample through the pipeline.

    When ``grounding_text`` does not parse, only the grounding fixture is recorded.
    """
    event = event_from_dict(event_dict)
    by_question = {q["question"]: q["qa_id"] for q in QUESTIONS}
    state = {"phase": None}

    def reasoning(request: GenerateRequest) -> str:
        for perspective, template in CAPTION_TEMPLATES.items():
            if request.prompt_text == template:
                return PREDICTED_CAPTIONS[(int(state["phase"]), Perspective(perspective).value)]
        return PREDICTED_ANSWERS[by_question[request.prompt_text.splitlines()[0]]]

    grounding = _Responder(lambda r: grounding_text)
    reasoner = _Responder(reasoning)
    synthesizer = _Responder(lambda r: json.dumps(report or REPORT, indent=2))
    out = {"grounding": grounding.recorded, "reasoning": reasoner.recorded, "synthesis": synthesizer.recorded}
    try:
        seg = segment_event(grounding, event)
    except ValueError:
        return out
    analyses = []
    for phase in seg.phases:
        state["phase"] = phase
        analyses.append(analyze_phase(reasoner, event, seg, phase, event.questions(phase)))
    env_answers, _ = analyze_environment(reasoner, event, event.questions(None))
    synthesize_report(synthesizer, assemble_event_info(seg, analyses, env_answers, event.views))
    return out


def write_sample_dataset(root, extra_events: dict[str, str] | None = None) -> Path:
    """Write the sample dataset under ``root`` and return the config path.

    ``extra_events`` maps additional event ids to the grounding response
    their mock should return (e.g. unparseable prose to exercise failure
    isolation).
    """
    root = Path(root)
    events = {"reversing-collision": GROUNDING_RESPONSE}
    events.update(extra_events or {})
    merged: dict[str, dict[str, str]] = {"grounding": {}, "reasoning": {}, "synthesis": {}}
    paths = []
    for event_id, grounding_text in events.items():
        doc = sample_event_dict(event_id)
        write_atomic(root / "events" / f"{event_id}.json", dumps(doc))
        paths.append(f"events/{event_id}.json")
        for stage, recorded in record_fixtures(doc, grounding_text).items():
            merged[stage].update(recorded)
    for stage, fixtures in merged.items():
        save_fixtures(root / "fixtures" / stage, fixtures)
    write_atomic(root / "manifest.json", dumps({"dataset_id": "pvir-sample", "split": "test", "events": paths}))
    config = {
        "manifest": "manifest.json",
        "output_dir": "runs",
        "max_concurrency": 2,
        "backends": {stage: {"kind": "mock", "fixtures": f"fixtures/{stage}"} for stage in merged},
        "retry": {"max_attempts": 3},
    }
    write_atomic(root / "config.json", dumps(config))
    return root / "config.json"


__all__ = ["PHASE_TIMES", "REPORT", "GROUNDING_RESPONSE", "sample_event_dict",
           "record_fixtures", "write_sample_dataset"]
