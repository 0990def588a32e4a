"""Run-level evaluation: segmentation mIoU, caption composite score, VQA rates."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

from ..core import (PHASES, AnswerRecord, CaptionRecord, CaptionScores, EvaluationSummary,
                    MultiViewEvent, PhaseSegmentation, QAScope)
from ..errors import EmptyInput, MissingGroundTruth
from .cider import cider
from .temporal import phase_miou
from .text import bleu, meteor, rouge_l, tokenize
from .vqa import vqa_scores

CIDER_WEIGHT = 0.1


def caption_score(bleu: float, rouge_l: float, meteor: float, cider: float) -> float:
    """Composite caption score on the 0-100 scale used for reporting."""
    return 100.0 * (bleu + rouge_l + meteor + CIDER_WEIGHT * cider) / 4.0


@dataclass(frozen=True)
class EventPrediction:
    """What a run produced for one event, as consumed by :func:`evaluate_run`."""

    event_id: str
    segmentation: Optional[PhaseSegmentation] = None
    captions: tuple[CaptionRecord, ...] = ()
    answers: tuple[AnswerRecord, ...] = ()


def score_captions(pairs: list[tuple[str, str]]) -> CaptionScores:
    """Average sentence-level BLEU/ROUGE-L/METEOR and corpus CIDEr over ``(candidate, reference)`` texts."""
    if not pairs:
        raise EmptyInput("no caption pairs")
    tokens = [(tokenize(c), tokenize(r)) for c, r in pairs]
    n = len(tokens)
    b = sum(bleu(c, r) for c, r in tokens) / n
    rl = sum(rouge_l(c, r) for c, r in tokens) / n
    m = sum(meteor(c, r) for c, r in tokens) / n
    cd = sum(cider([(c, [r]) for c, r in tokens])) / n
    return CaptionScores(bleu=b, meteor=m, rouge_l=rl, cider=cd, score=caption_score(b, rl, m, cd))


def evaluate_run(predictions, ground_truth) -> EvaluationSummary:
    """Score a run against ground truth.

    ``predictions`` is an iterable (or ``event_id`` mapping) of
    :class:`EventPrediction`; ``ground_truth`` an iterable or mapping of
    annotated :class:`MultiViewEvent`. Events with ground truth but no
    prediction score zero everywhere, which keeps failed events in the
    denominator.
    """
    preds = _by_id(predictions, lambda p: p.event_id)
    gts = _by_id(ground_truth, lambda e: e.event_id)
    if not preds and not gts:
        raise EmptyInput("nothing to evaluate")
    for event_id in preds:
        if event_id not in gts or gts[event_id].ground_truth is None:
            raise MissingGroundTruth(event_id)
    event_ids = sorted(gts)

    seg_preds, seg_gts = [], []
    caption_pairs: list[tuple[str, str]] = []
    vqa_items: dict[QAScope, list] = {}
    for event_id in event_ids:
        gt = gts[event_id].ground_truth
        if gt is None:
            continue
        pred = preds.get(event_id) or EventPrediction(event_id)
        if gt.segmentation is not None:
            seg_preds.append(pred.segmentation)
            seg_gts.append(gt.segmentation)
        for ref in gt.captions:
            cand = next((c.text for c in pred.captions
                         if c.phase == ref.phase and c.perspective == ref.perspective), "")
            caption_pairs.append((cand, ref.text))
        answers = {a.qa_id: a for a in pred.answers}
        for qa in gt.qa:
            if qa.answer is None:
                continue
            record = answers.get(qa.qa_id) or AnswerRecord(qa.qa_id, "")
            vqa_items.setdefault(qa.scope, []).append((qa.answer, record))

    if seg_gts:
        per_phase, overall = phase_miou(seg_preds, seg_gts)
    else:
        per_phase, overall = {p: 0.0 for p in PHASES}, 0.0
    captions = score_captions(caption_pairs) if caption_pairs else None
    vqa = {scope: vqa_scores(items) for scope, items in sorted(vqa_items.items(), key=lambda kv: kv[0].value)}
    return EvaluationSummary(per_phase_miou=per_phase, overall_miou=overall, caption=captions, vqa=vqa)


def _by_id(values, key) -> dict:
    if isinstance(values, Mapping):
        return dict(values)
    return {key(v): v for v in values}


def summary_to_dict(summary: EvaluationSummary) -> dict:
    out = {
        "per_phase_miou": {p.title: summary.per_phase_miou[p] for p in PHASES},
        "overall_miou": summary.overall_miou,
        "caption": None,
        "vqa": {scope.value: {"accuracy_pct": s.accuracy_pct, "valid_rate_pct": s.valid_rate_pct}
                for scope, s in summary.vqa.items()},
    }
    if summary.caption is not None:
        c = summary.caption
        out["caption"] = {"bleu": c.bleu, "meteor": c.meteor, "rouge_l": c.rouge_l,
                          "cider": c.cider, "score": c.score}
    return out


def format_summary_table(summary: EvaluationSummary) -> str:
    rows = [("Segmentation", "", "")]
    for phase in PHASES:
        rows.append(("", f"mIoU {phase.title}", f"{summary.per_phase_miou[phase]:.4f}"))
    rows.append(("", "mIoU overall", f"{summary.overall_miou:.4f}"))
    if summary.caption is not None:
        c = summary.caption
        rows.append(("Captioning", "", ""))
        for name, value in (("BLEU-4", c.bleu), ("METEOR", c.meteor), ("ROUGE-L", c.rouge_l),
                            ("CIDEr", c.cider)):
            rows.append(("", name, f"{value:.3f}"))
        rows.append(("", "Score", f"{c.score:.3f}"))
    if summary.vqa:
        rows.append(("VQA", "", ""))
        for scope, s in summary.vqa.items():
            rows.append(("", f"{scope.value} accuracy %", f"{s.accuracy_pct:.2f}"))
            rows.append(("", f"{scope.value} valid rate %", f"{s.valid_rate_pct:.2f}"))
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    return "\n".join(f"{a:<{widths[0]}}  {b:<{widths[1]}}  {c:>{widths[2]}}".rstrip() for a, b, c in rows)
