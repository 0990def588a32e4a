import pytest
from hypothesis import given, settings, strategies as st

from pvir.backend import MockBackend, fingerprint
from pvir.core import MultiViewEvent, PhaseLabel, ViewStream, validate_segmentation
from pvir.errors import BackendTimeout, Unparseable
from pvir.grounding import (PHASE_DEFINITIONS, TIMESTAMP_DIRECTIVE, PhaseDefinitionSet, build_grounding_prompt,
                            parse_segmentation_response, render_segmentation, segment_event)

PHASE_TIMES_SAMPLE = {0: (28.8, 29.9), 1: (29.8, 30.8), 2: (30.7, 32.5), 3: (32.6, 37.8), 4: (37.8, 43.7)}
PHASE_LINES = """Phase 0: 28.8 - 29.9
Phase 1: 29.8 - 30.8
Phase 2: 30.7 - 32.5
Phase 3: 32.6 - 37.8
Phase 4: 37.8 - 43.7"""


def event(n_views=4, order=None):
    kinds = ["overhead", "overhead", "overhead", "vehicle"][:n_views]
    views = [ViewStream(f"v{i}", k, f"file:///v{i}.mp4") for i, k in enumerate(kinds)]
    if order:
        views = [views[i] for i in order]
    return MultiViewEvent("evt", 43.7, views)


def as_dict(seg):
    return {int(p): (iv.start_s, iv.end_s) for p, iv in seg.entries.items()}


def test_definitions_are_verbatim():
    assert len(PHASE_DEFINITIONS) == 5
    assert PHASE_DEFINITIONS[0].startswith(
        "Phase 0 (Pre-recognition): The timing before the start of environment awareness")
    with pytest.raises(ValueError):
        PhaseDefinitionSet(PHASE_DEFINITIONS[:4])


def test_prompt_for_four_views():
    prompt = build_grounding_prompt(event())
    assert len(prompt.media) == 4
    text = prompt.system_text
    positions = [text.index(d) for d in PHASE_DEFINITIONS]
    assert positions == sorted(positions)
    assert TIMESTAMP_DIRECTIVE in text
    assert all(m.media.start_s == 0 and m.media.end_s == 43.7 for m in prompt.media)
    assert all(m.media.fps == 2 and m.media.max_pixels == 6400 for m in prompt.media)


def test_prompt_single_view_and_order():
    one = build_grounding_prompt(event(1))
    assert len(one.media) == 1
    shuffled = build_grounding_prompt(event(4, order=[3, 1, 0, 2]))
    assert [m.view_id for m in shuffled.media] == ["v3", "v1", "v0", "v2"]
    assert build_grounding_prompt(event()) == build_grounding_prompt(event())
    assert build_grounding_prompt(event()).system_text == build_grounding_prompt(event()).system_text


def test_parse_labeled_lines():
    seg = parse_segmentation_response(PHASE_LINES, 43.7)
    assert as_dict(seg) == PHASE_TIMES_SAMPLE
    assert seg.violations == ()


@pytest.mark.parametrize("text", [
    '{"0": [28.8, 29.9], "1": [29.8, 30.8], "2": [30.7, 32.5], "3": [32.6, 37.8], "4": [37.8, 43.7]}',
    "```json\n" + '{"phases": [{"phase": 0, "start": 28.8, "end": 29.9}, {"phase": 1, "start": 29.8, "end": 30.8},'
    ' {"phase": 2, "start": 30.7, "end": 32.5}, {"phase": 3, "start": 32.6, "end": 37.8},'
    ' {"phase": 4, "start": 37.8, "end": 43.7}]}' + "\n```",
    "Here you go:\nPre-recognition: start=28.8, end=29.9\nRecognition: start=29.8, end=30.8\n"
    "Judgement: start=30.7, end=32.5\nAction: start=32.6, end=37.8\nAvoidance: start=37.8, end=43.7",
    "Pre-recognition: 28.8s to 29.9s\nRecognition: 29.8s to 30.8s\nJudgment: 30.7s to 32.5s\n"
    "Action: 32.6s to 37.8s\nAvoidance: 37.8s to 43.7s",
])
def test_parse_other_syntaxes(text):
    assert as_dict(parse_segmentation_response(text, 43.7)) == PHASE_TIMES_SAMPLE


def test_parse_failures_and_partial():
    with pytest.raises(Unparseable) as exc:
        parse_segmentation_response("The pedestrian crossed the road slowly.", 43.7)
    assert "crossed" in exc.value.raw_text
    seg = parse_segmentation_response("\n".join(PHASE_LINES.splitlines()[:4]), 43.7)
    assert [str(v) for v in seg.violations] == ["MissingPhase(4)"]


interval = st.tuples(st.integers(0, 43700), st.integers(0, 43700)).map(lambda t: (min(t) / 1000, max(t) / 1000))


@settings(max_examples=100)
@given(st.dictionaries(st.integers(0, 4), interval, min_size=1), st.sampled_from(["lines", "json", "kv"]))
def test_render_parse_roundtrip(raw, style):
    seg = validate_segmentation(raw, 43.7)
    assert parse_segmentation_response(render_segmentation(seg, style), 43.7) == seg


def test_segment_event_with_mock():
    ev = event()
    backend = MockBackend()
    backend.add(build_grounding_prompt(ev).to_request(), PHASE_LINES)
    trace = []
    assert as_dict(segment_event(backend, ev, trace=trace)) == PHASE_TIMES_SAMPLE
    assert trace[0]["raw"] == PHASE_LINES


def test_segment_event_garbage_keeps_raw():
    trace = []
    with pytest.raises(Unparseable):
        segment_event(MockBackend(default="no idea"), event(), trace=trace)
    assert trace == [{"fingerprint": trace[0]["fingerprint"], "raw": "no idea"}]


def test_segment_event_timeout_carries_fingerprint():
    ev = event()
    with pytest.raises(BackendTimeout) as exc:
        segment_event(MockBackend(script=[BackendTimeout("slow")]), ev)
    assert exc.value.fingerprint == fingerprint(build_grounding_prompt(ev).to_request())
