import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from oracles import (oracle_bleu, oracle_cider, oracle_iou, oracle_meteor, oracle_meteor_alignment,
                     oracle_rouge_l)
from pvir.core import (PHASES, AnswerRecord, CaptionRecord, GroundTruth, MultiViewEvent, QAItem,
                       TimeInterval, ViewStream, validate_segmentation)
from pvir.errors import EmptyCorpus, EmptyInput, LengthMismatch, MissingGroundTruth
from pvir.metrics import (EventPrediction, bleu, caption_score, cider, evaluate_run, format_summary_table,
                          interval_iou, meteor, meteor_alignment, overall_miou, phase_miou, rouge_l,
                          summary_to_dict, tokenize, vqa_scores)

VOCAB = list("abcdef")
sentences = st.lists(st.sampled_from(VOCAB), min_size=0, max_size=8)
nonempty = st.lists(st.sampled_from(VOCAB), min_size=1, max_size=8)


# -- tokenize ---------------------------------------------------------------

@pytest.mark.parametrize("text,tokens", [
    ("The cat sat.", ["the", "cat", "sat"]),
    ("", []),
    ("a,b  c", ["a", "b", "c"]),
    ("snake_case and CAPS!", ["snake", "case", "and", "caps"]),
])
def test_tokenize(text, tokens):
    assert tokenize(text) == tokens


@given(st.text())
def test_tokenize_has_no_empty_tokens(text):
    toks = tokenize(text)
    assert all(toks) and toks == tokenize(" ".join(toks))


# -- interval IoU and mIoU -----------------------------------------------------

def test_interval_iou_examples():
    assert interval_iou(TimeInterval(2, 6), TimeInterval(4, 8)) == pytest.approx(1 / 3)
    assert interval_iou(TimeInterval(2, 6), TimeInterval(2, 6)) == 1.0
    assert interval_iou(TimeInterval(0, 1), TimeInterval(2, 3)) == 0.0
    assert interval_iou(TimeInterval(1, 1), TimeInterval(1, 1)) == 1.0
    assert interval_iou(TimeInterval(1, 1), TimeInterval(0, 2)) == 0.0


bounds = st.tuples(st.integers(0, 40), st.integers(0, 40)).map(lambda t: (min(t) / 4, max(t) / 4))


@given(bounds, bounds)
def test_interval_iou_matches_oracle_and_is_symmetric(p, g):
    P, G = TimeInterval(*p), TimeInterval(*g)
    value = interval_iou(P, G)
    assert abs(value - oracle_iou(p, g)) <= 1e-9
    assert value == interval_iou(G, P)
    if P.length > 0 and G.length > 0:
        assert (value == 1.0) == (p == g)


PHASE_TIMES_SAMPLE = {0: (28.8, 29.9), 1: (29.8, 30.8), 2: (30.7, 32.5), 3: (32.6, 37.8), 4: (37.8, 43.7)}


def test_phase_miou_identity():
    segs = [validate_segmentation(PHASE_TIMES_SAMPLE, 43.7)] * 10
    per_phase, overall = phase_miou(segs, segs)
    assert all(v == 1.0 for v in per_phase.values()) and overall == 1.0


def test_phase_miou_missing_prediction_scores_zero():
    gt = validate_segmentation(PHASE_TIMES_SAMPLE, 43.7)
    empty = validate_segmentation({}, 43.7)
    per_phase, overall = phase_miou([gt, empty], [gt, gt])
    assert all(v == 0.5 for v in per_phase.values())
    assert phase_miou([None], [gt])[1] == 0.0


def test_phase_miou_length_mismatch():
    gt = validate_segmentation(PHASE_TIMES_SAMPLE, 43.7)
    with pytest.raises(LengthMismatch):
        phase_miou([gt], [gt, gt])


def test_overall_miou_from_reported_phases():
    assert overall_miou([0.7887, 0.5091, 0.3662, 0.4208, 0.3559]) == pytest.approx(0.4881, abs=1e-4)
    with pytest.raises(LengthMismatch):
        overall_miou([0.5] * 4)


@settings(max_examples=50)
@given(st.lists(st.tuples(bounds, bounds), min_size=1, max_size=6), st.randoms())
def test_phase_miou_is_permutation_invariant(pairs, rnd):
    preds = [validate_segmentation({0: p}, 10) for p, _ in pairs]
    gts = [validate_segmentation({0: g}, 10) for _, g in pairs]
    order = list(range(len(pairs)))
    rnd.shuffle(order)
    a = phase_miou(preds, gts)[0][PHASES[0]]
    b = phase_miou([preds[i] for i in order], [gts[i] for i in order])[0][PHASES[0]]
    assert a == pytest.approx(b, abs=1e-12)
    assert a == pytest.approx(sum(interval_iou(TimeInterval(*p), TimeInterval(*g)) for p, g in pairs) / len(pairs))


# -- BLEU / ROUGE-L / METEOR ----------------------------------------------------

def test_bleu_examples():
    s = "the cat sat on the mat".split()
    assert bleu(s, s) == 1.0
    assert bleu([], s) == 0.0
    # shares unigrams and bigrams but no 3- or 4-grams
    cand, ref = "a b x c d".split(), "a b y c d z".split()
    p = [4 / 5, 2 / 4, 1e-9, 1e-9]
    expected = math.exp(1 - 6 / 5) * math.exp(sum(math.log(x) for x in p) / 4)
    assert bleu(cand, ref) == pytest.approx(expected, rel=1e-12)
    assert bleu(cand, ref) <= math.exp(0.25 * math.log(1e-9))
    # two-token candidate: only unigram and bigram orders exist
    assert bleu(["a", "b"], ["a", "c"]) == pytest.approx(math.sqrt(0.5 * 1e-9), rel=1e-12)
    assert bleu(["a", "b"], ["a", "b"]) == 1.0


def test_rouge_l_examples():
    assert rouge_l(["the", "cat"], ["the", "cat", "sat"]) == pytest.approx(0.8)
    assert rouge_l(["a", "b"], ["a", "b"]) == 1.0
    assert rouge_l(["a"], ["b"]) == 0.0
    assert rouge_l([], ["b"]) == 0.0


def test_meteor_examples():
    assert meteor(list("wxyz"), list("wxyz")) == 0.9921875
    assert meteor(["a"], ["b"]) == 0.0
    assert meteor_alignment(["a", "c", "b"], ["a", "b", "c"]) == oracle_meteor_alignment(["a", "c", "b"], ["a", "b", "c"])
    assert meteor(["a", "c", "b"], ["a", "b", "c"]) == pytest.approx(oracle_meteor(["a", "c", "b"], ["a", "b", "c"]))


def test_meteor_budget_fallback_still_counts_matches():
    cand = ["a"] * 30 + ["b"] * 30
    ref = ["b"] * 30 + ["a"] * 30
    m, chunks = meteor_alignment(cand, ref, state_budget=10)
    assert m == 60 and chunks >= 2


@settings(max_examples=200, deadline=None)
@given(sentences, sentences)
def test_text_metrics_match_oracles(c, r):
    assert abs(bleu(c, r) - oracle_bleu(c, r)) <= 1e-9
    assert abs(rouge_l(c, r) - oracle_rouge_l(c, r)) <= 1e-9
    assert abs(meteor(c, r) - oracle_meteor(c, r)) <= 1e-9
    for value in (bleu(c, r), rouge_l(c, r), meteor(c, r)):
        assert 0.0 <= value <= 1.0


@given(nonempty)
def test_identity_values(s):
    assert bleu(s, s) == 1.0
    assert rouge_l(s, s) == 1.0
    assert meteor(s, s) == 1 - 0.5 / len(s) ** 3


# -- CIDEr ---------------------------------------------------------------------------

def test_cider_two_disjoint_items():
    corpus = [(list("abcd"), [list("abcd")]), (list("wxyz"), [list("wxyz")])]
    scores = cider(corpus)
    assert scores == pytest.approx(oracle_cider(corpus), abs=1e-12)
    assert scores[0] == pytest.approx(1.0)  # unit cosine at every n, averaged
    worse = cider([(list("abcx"), [list("abcd")]), (list("wxyz"), [list("wxyz")])])
    assert worse[0] < scores[0]


def test_cider_degenerate_cases():
    assert cider([(["a", "b"], [["c", "d"]]), (["e"], [["e"]])])[0] == 0.0
    assert cider([(["a", "b"], [["a", "b"]])]) == [0.0]
    with pytest.raises(EmptyCorpus):
        cider([])


corpora = st.lists(st.tuples(sentences, st.lists(sentences, min_size=1, max_size=3)), min_size=1, max_size=6)


@settings(max_examples=200, deadline=None)
@given(corpora)
def test_cider_matches_oracle(corpus):
    scores = cider(corpus)
    assert all(s >= 0 for s in scores)
    assert scores == pytest.approx(oracle_cider(corpus), abs=1e-9)


@settings(max_examples=50)
@given(corpora, st.randoms())
def test_cider_relabeling_invariance(corpus, rnd):
    order = list(range(len(corpus)))
    rnd.shuffle(order)
    shuffled = cider([corpus[i] for i in order])
    base = cider(corpus)
    assert [shuffled[order.index(i)] for i in range(len(corpus))] == pytest.approx(base, abs=1e-12)


# -- composite score -----------------------------------------------------------------

@pytest.mark.parametrize("b,m,r,c,reported,tol", [
    (0.292, 0.486, 0.513, 0.315, 33.063, 0.01),
    (0.276, 0.469, 0.494, 0.273, 31.667, 0.05),
    (0.308, 0.503, 0.532, 0.357, 34.462, 0.05),
    (0.243, 0.451, 0.439, 0.692, 30.03, 0.05),
    (0.221, 0.419, 0.426, 0.867, 28.81, 0.05),
])
def test_caption_score_reported_rows(b, m, r, c, reported, tol):
    assert abs(caption_score(b, r, m, c) - reported) <= tol


def test_caption_score_zero_and_affine():
    assert caption_score(0, 0, 0, 0) == 0
    base = caption_score(0.2, 0.3, 0.4, 0.5)
    assert caption_score(0.2, 0.3, 0.4, 1.0) - base == pytest.approx(100 * 0.1 * 0.5 / 4)


# -- VQA -----------------------------------------------------------------------------------

def _answers(spec):
    return [(truth, AnswerRecord(f"q{i}", got or "", got)) for i, (truth, got) in enumerate(spec)]


def test_vqa_scores_examples():
    assert vqa_scores(_answers([("a", "a"), ("b", "b")])) == vqa_scores(_answers([("c", "c")]))
    s = vqa_scores(_answers([("a", "a"), ("b", "b"), ("c", "d"), ("d", None)]))
    assert (s.accuracy_pct, s.valid_rate_pct) == (50.0, 75.0)
    s = vqa_scores(_answers([("a", None)] * 3))
    assert (s.accuracy_pct, s.valid_rate_pct) == (0.0, 0.0)
    with pytest.raises(EmptyInput):
        vqa_scores([])


# -- evaluate_run ----------------------------------------------------------------------------

def _gt_event(event_id, times=PHASE_TIMES_SAMPLE):
    seg = validate_segmentation(times, 43.7)
    caps = (CaptionRecord(0, "pedestrian", "a man stands behind the car"),
            CaptionRecord(0, "vehicle", "the car prepares to reverse slowly"))
    qa = (QAItem("q1", "environment", "weather?", {"a": "clear", "b": "rain", "c": "snow", "d": "fog"}, answer="a"),
          QAItem("q2", "vehicle_view", "motion?", {"a": "1", "b": "2", "c": "3", "d": "4"}, phase=3, answer="b"))
    return MultiViewEvent(event_id, 43.7, [ViewStream("v", "vehicle", "v.mp4")], GroundTruth(seg, caps, qa))


def _perfect(event):
    gt = event.ground_truth
    return EventPrediction(event.event_id, gt.segmentation, gt.captions,
                           tuple(AnswerRecord(q.qa_id, f"answer_choice: {q.answer}", q.answer) for q in gt.qa))


def test_evaluate_identity_run():
    events = [_gt_event("e1"), _gt_event("e2")]
    summary = evaluate_run([_perfect(e) for e in events], events)
    assert summary.overall_miou == 1.0
    assert summary.caption.bleu == 1.0 and summary.caption.rouge_l == 1.0
    assert all(s.accuracy_pct == 100.0 for s in summary.vqa.values())
    assert "mIoU overall" in format_summary_table(summary)
    assert summary_to_dict(summary)["overall_miou"] == 1.0


def test_evaluate_errors():
    with pytest.raises(EmptyInput):
        evaluate_run([], [])
    with pytest.raises(MissingGroundTruth):
        evaluate_run([EventPrediction("ghost")], [_gt_event("e1")])


def test_evaluate_mixed_run_matches_scripted_oracle():
    rng = random.Random(7)
    events, preds = [], []
    pair_texts, seg_pairs, vqa = [], [], {}
    for k in range(5):
        times = {p: (s + rng.uniform(-1, 1), e + rng.uniform(-1, 1)) for p, (s, e) in PHASE_TIMES_SAMPLE.items()}
        event = _gt_event(f"e{k}")
        events.append(event)
        seg = validate_segmentation({p: t for p, t in times.items() if p != k}, 43.7)
        words = ["the", "car", "man", "reverses", "stands", "slowly", "behind"]
        caps = tuple(CaptionRecord(c.phase, c.perspective, " ".join(rng.sample(words, 4)))
                     for c in event.ground_truth.captions)
        answers = (AnswerRecord("q1", "x", rng.choice(["a", "b", None])), AnswerRecord("q2", "y", "b"))
        preds.append(EventPrediction(event.event_id, seg, caps, answers))
        for gt_cap, cap in zip(event.ground_truth.captions, caps):
            pair_texts.append((tokenize(cap.text), tokenize(gt_cap.text)))
        seg_pairs.append((seg, event.ground_truth.segmentation))
        for q, a in zip(event.ground_truth.qa, answers):
            vqa.setdefault(q.scope, []).append(q.answer == a.extracted)

    summary = evaluate_run(preds, events)
    for phase in PHASES:
        ious = [oracle_iou((p.interval(phase).start_s, p.interval(phase).end_s),
                           (g.interval(phase).start_s, g.interval(phase).end_s)) if phase in p else 0.0
                for p, g in seg_pairs]
        assert summary.per_phase_miou[phase] == pytest.approx(sum(ious) / len(ious), abs=1e-9)
    n = len(pair_texts)
    assert summary.caption.bleu == pytest.approx(sum(oracle_bleu(c, r) for c, r in pair_texts) / n, abs=1e-9)
    assert summary.caption.meteor == pytest.approx(sum(oracle_meteor(c, r) for c, r in pair_texts) / n, abs=1e-9)
    assert summary.caption.rouge_l == pytest.approx(sum(oracle_rouge_l(c, r) for c, r in pair_texts) / n, abs=1e-9)
    cider_oracle = sum(oracle_cider([(c, [r]) for c, r in pair_texts])) / n
    assert summary.caption.cider == pytest.approx(cider_oracle, abs=1e-9)
    for scope, hits in vqa.items():
        assert summary.vqa[scope].accuracy_pct == pytest.approx(100 * sum(hits) / len(hits))
