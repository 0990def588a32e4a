"""Evaluation metrics for every pipeline stage."""

from .cider import CiderItem, cider, corpus_cider, document_frequency
from .evaluate import (EventPrediction, caption_score, evaluate_run, format_summary_table,
                       score_captions, summary_to_dict)
from .temporal import interval_iou, overall_miou, phase_miou
from .text import bleu, lcs_length, meteor, meteor_alignment, ngrams, rouge_l, tokenize
from .vqa import vqa_scores

__all__ = [
    "CiderItem", "EventPrediction", "bleu", "caption_score", "cider", "corpus_cider",
    "document_frequency", "evaluate_run", "format_summary_table", "interval_iou", "lcs_length",
    "meteor", "meteor_alignment", "ngrams", "overall_miou", "phase_miou", "rouge_l",
    "score_captions", "summary_to_dict", "tokenize", "vqa_scores",
]
