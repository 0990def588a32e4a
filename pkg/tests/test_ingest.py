import copy
import json
import os

import pytest
from hypothesis import given, settings, strategies as st

from pvir.core import AnswerRecord, CaptionRecord, ItemError, PhaseAnalysis, PhaseLabel, QAItem, validate_segmentation
from pvir.errors import IoError, ParseError, SchemaError
from pvir.ingest import (Stage, analysis_from_dict, analysis_to_dict, artifact_path, event_from_dict,
                         event_to_dict, load_event, load_manifest, load_stage_output, persist_stage_output,
                         segmentation_from_dict, segmentation_to_dict, serialize_event, write_manifest)
from pvir.sample import sample_event_dict


def write(path, payload):
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


def test_manifest_loads_and_resolves(tmp_path):
    (tmp_path / "ev").mkdir()
    write(tmp_path / "m.json", {"dataset_id": "d", "split": "test", "events": ["ev/a.json", "ev/b.json", "c.json"]})
    m = load_manifest(tmp_path / "m.json")
    assert len(m.events) == 3
    assert m.events[0] == (tmp_path / "ev" / "a.json").resolve()


def test_manifest_errors(tmp_path):
    write(tmp_path / "dup.json", {"dataset_id": "d", "split": "test", "events": ["a.json", "./a.json"]})
    with pytest.raises(ParseError) as exc:
        load_manifest(tmp_path / "dup.json")
    assert exc.value.kind == "DuplicateEvent"
    write(tmp_path / "nosplit.json", {"dataset_id": "d", "events": []})
    with pytest.raises(ParseError) as exc:
        load_manifest(tmp_path / "nosplit.json")
    assert (exc.value.kind, exc.value.field) == ("MissingField", "split")
    (tmp_path / "broken.json").write_text('{\n "dataset_id": "d",\n oops\n}')
    with pytest.raises(ParseError) as exc:
        load_manifest(tmp_path / "broken.json")
    assert exc.value.kind == "InvalidJSON" and exc.value.line == 3
    with pytest.raises(IoError):
        load_manifest(tmp_path / "missing.json")


def test_write_manifest_roundtrip(tmp_path):
    write_manifest(tmp_path / "m.json", "d", "train", [tmp_path / "x.json"])
    assert load_manifest(tmp_path / "m.json").events == ((tmp_path / "x.json").resolve(),)


def test_load_sample_event(tmp_path):
    path = write(tmp_path / "e.json", sample_event_dict())
    event = load_event(path)
    kinds = [v.kind.value for v in event.views]
    assert kinds.count("overhead") == 3 and kinds.count("vehicle") == 1
    gt = event.ground_truth
    assert gt.segmentation.is_complete and gt.segmentation.violations == ()
    assert gt.segmentation.interval(PhaseLabel.ACTION).start_s == 32.6
    assert len(gt.captions) == 10
    assert load_event(write(tmp_path / "again.json", json.loads(serialize_event(event)))) == event


def test_schema_errors_name_fields():
    doc = sample_event_dict()
    doc["views"] = []
    with pytest.raises(SchemaError, match="views: empty"):
        event_from_dict(doc)
    doc = sample_event_dict()
    del doc["annotations"]["qa"][0]["options"]["d"]
    with pytest.raises(SchemaError, match="options: expected 4") as exc:
        event_from_dict(doc)
    assert exc.value.field == "annotations.qa[0].options"


def _paths(node, prefix=()):
    """Every (path, key) of a required-looking key in the document."""
    if isinstance(node, dict):
        for k, v in node.items():
            yield prefix, k
            yield from _paths(v, prefix + (k,))
    elif isinstance(node, list):
        for i, v in enumerate(node):
            yield from _paths(v, prefix + (i,))


OPTIONAL = {"origin_s", "offset_s", "motion_energy_uri", "annotations", "captions", "qa", "phases", "answer",
            "views_", "phase"}


@pytest.mark.parametrize("index", range(0, 200, 7))
def test_field_deletion_fuzz_names_field(index):
    doc = sample_event_dict()
    paths = [p for p in _paths(doc) if p[1] not in OPTIONAL and not (len(p[0]) and p[0][-1] == "options")]
    prefix, key = paths[index % len(paths)]
    mutated = copy.deepcopy(doc)
    node = mutated
    for step in prefix:
        node = node[step]
    del node[key]
    with pytest.raises(SchemaError) as exc:
        event_from_dict(mutated)
    assert key in exc.value.field


ms = st.integers(0, 60_000).map(lambda x: x / 1000)


@st.composite
def events(draw):
    n = draw(st.integers(1, 4))
    views = [{"view_id": f"v{i}", "kind": draw(st.sampled_from(["overhead", "vehicle"])),
              "video_uri": f"v{i}.mp4", "offset_s": draw(st.integers(-2000, 2000)) / 1000} for i in range(n)]
    duration = draw(st.integers(1, 60_000)) / 1000
    phases = []
    for p in draw(st.sets(st.integers(0, 4))):
        a, b = sorted((draw(ms), draw(ms)))
        phases.append({"phase": p, "start_s": min(a, duration), "end_s": min(b, duration)})
    qa = [{"qa_id": "env", "scope": "environment", "question": draw(st.text(min_size=1)),
           "options": {k: draw(st.text()) for k in "abcd"}, "answer": draw(st.sampled_from("abcd"))}]
    caps = [{"phase": draw(st.integers(0, 4)), "perspective": "vehicle", "text": draw(st.text(min_size=1).filter(str.strip))}]
    return {"event_id": draw(st.text(min_size=1, max_size=8)), "duration_s": duration, "views": views,
            "annotations": {"phases": phases, "captions": caps, "qa": qa}}


@settings(max_examples=60)
@given(events())
def test_event_roundtrip(doc):
    event = event_from_dict(doc)
    again = event_from_dict(json.loads(serialize_event(event)))
    assert again == event
    assert event_to_dict(again) == event_to_dict(event)


def test_segmentation_codec_preserves_violations():
    seg = validate_segmentation({0: (5, 3), 2: (-1, 99)}, 20)
    assert segmentation_from_dict(segmentation_to_dict(seg)) == seg


def test_analysis_codec():
    qa = QAItem("q", "vehicle_view", "?", {"a": "1", "b": "2", "c": "3", "d": "4"}, phase=3, answer="b")
    a = PhaseAnalysis(3, (CaptionRecord(3, "vehicle", "car reverses", ("v1",)),),
                      ((qa, AnswerRecord("q", "answer_choice: b", "b", ("v1",))),), (ItemError("caption:pedestrian", "boom"),))
    assert analysis_from_dict(analysis_to_dict(a)) == a


def test_persist_stage_output(tmp_path):
    art = persist_stage_output("r1", "e1", "segmentation", {"x": 1}, root=tmp_path)
    assert art.path == tmp_path / "r1" / "e1" / "segmentation.json"
    assert art.stage is Stage.SEGMENTATION
    persist_stage_output("r1", "e1", Stage.SEGMENTATION, {"x": 2}, root=tmp_path)
    assert load_stage_output("r1", "e1", "segmentation", tmp_path) == {"x": 2}
    assert sorted(os.listdir(tmp_path / "r1" / "e1")) == ["segmentation.json"]
    assert artifact_path(tmp_path, "r1", "e1", "synthesis").name == "synthesis.json"


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
def test_persist_unwritable(tmp_path):
    locked = tmp_path / "locked"
    locked.mkdir()
    locked.chmod(0o500)
    with pytest.raises(IoError):
        persist_stage_output("r", "e", "trigger", {}, root=locked)


def test_persist_into_file_path_is_ioerror(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(IoError):
        persist_stage_output("r", "e", "trigger", {}, root=blocker)
