"""Score a handful of captions, intervals and answers with the evaluation metrics."""

from pvir.core import AnswerRecord, TimeInterval
from pvir.metrics import (bleu, caption_score, cider, interval_iou, meteor, overall_miou, rouge_l, tokenize,
                          vqa_scores)
from pvir.sample import GT_CAPTIONS, PREDICTED_CAPTIONS

pairs = [(tokenize(PREDICTED_CAPTIONS[k]), tokenize(GT_CAPTIONS[k])) for k in sorted(GT_CAPTIONS)]

print(f"{'phase/perspective':<20} {'BLEU':>6} {'ROUGE-L':>8} {'METEOR':>7}")
for key, (cand, ref) in zip(sorted(GT_CAPTIONS), pairs):
    print(f"{key[0]}/{key[1]:<18} {bleu(cand, ref):6.3f} {rouge_l(cand, ref):8.3f} {meteor(cand, ref):7.3f}")

b = sum(bleu(c, r) for c, r in pairs) / len(pairs)
r = sum(rouge_l(c, r) for c, r in pairs) / len(pairs)
m = sum(meteor(c, r) for c, r in pairs) / len(pairs)
cd = sum(cider([(c, [r]) for c, r in pairs])) / len(pairs)
print(f"\ncorpus: BLEU {b:.3f}  ROUGE-L {r:.3f}  METEOR {m:.3f}  CIDEr {cd:.3f}  score {caption_score(b, r, m, cd):.2f}")

# temporal overlap for a prediction that starts late
print("\nIoU of [30.0, 31.0] against [29.8, 30.8]:",
      round(interval_iou(TimeInterval(30.0, 31.0), TimeInterval(29.8, 30.8)), 4))
print("overall mIoU of five per-phase values:", round(overall_miou([0.9, 0.7, 0.5, 0.6, 0.8]), 4))

answers = [("a", AnswerRecord("q1", "answer_choice: a", "a")),
           ("c", AnswerRecord("q2", "answer_choice: b", "b")),
           ("b", AnswerRecord("q3", "I am not sure"))]
print("VQA:", vqa_scores(answers))
