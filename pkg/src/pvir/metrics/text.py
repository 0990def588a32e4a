"""Sentence-level caption metrics: BLEU, ROUGE-L and METEOR.

All three work on lists of lowercase tokens as produced by :func:`tokenize`
and compare one candidate against one reference.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from typing import Sequence

BLEU_ZERO_FLOOR = 1e-9

_PUNCT = re.compile(r"[^\w\s]|_")


def tokenize(text: str) -> list[str]:
    """Lowercase, turn punctuation into spaces and split on whitespace."""
    return _PUNCT.sub(" ", text.lower()).split()


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate: Sequence[str], reference: Sequence[str], max_n: int = 4) -> float:
    """Single-reference BLEU with uniform weights and the usual brevity penalty.

    A zero n-gram precision is floored at ``BLEU_ZERO_FLOOR`` so that loosely
    matching candidates still receive a small positive score; a candidate
    sharing no unigram at all with the reference scores 0. Orders longer than
    the candidate have no n-grams to score and are left out of the geometric
    mean (effective order), so short identical sentences still score 1.
    """
    c_l, r_l = len(candidate), len(reference)
    if c_l == 0:
        return 0.0
    orders = min(max_n, c_l)
    log_sum = 0.0
    for n in range(1, orders + 1):
        cand = ngrams(candidate, n)
        total = sum(cand.values())
        ref = ngrams(reference, n)
        clipped = sum(min(count, ref[gram]) for gram, count in cand.items())
        if n == 1 and clipped == 0:
            return 0.0
        log_sum += math.log(max(clipped / total, BLEU_ZERO_FLOOR)) / orders
    bp = 1.0 if c_l > r_l else math.exp(1.0 - r_l / c_l)
    return bp * math.exp(log_sum)


def lcs_length(x: Sequence[str], y: Sequence[str]) -> int:
    if len(x) < len(y):
        x, y = y, x
    prev = [0] * (len(y) + 1)
    for a in x:
        cur = [0]
        for j, b in enumerate(y, 1):
            cur.append(prev[j - 1] + 1 if a == b else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: Sequence[str], reference: Sequence[str], beta: float = 1.0) -> float:
    lcs = lcs_length(candidate, reference)
    if lcs == 0:
        return 0.0
    p = lcs / len(candidate)
    r = lcs / len(reference)
    b2 = beta * beta
    return (1 + b2) * r * p / (r + b2 * p)


# Exact chunk minimisation explores (position, used-reference-set, previous
# match) states; above this many states fall back to a greedy aligner.
METEOR_EXACT_STATE_BUDGET = 200_000


class _BudgetExceeded(Exception):
    pass


def meteor_alignment(candidate: Sequence[str], reference: Sequence[str],
                     state_budget: int = METEOR_EXACT_STATE_BUDGET) -> tuple[int, int]:
    """Return ``(matches, chunks)`` for the best exact-unigram alignment.

    The alignment maximises the number of one-to-one matches, then
    minimises the number of chunks (runs of matches contiguous in both
    sentences).
    """
    positions: dict[str, list[int]] = {}
    for j, tok in enumerate(reference):
        positions.setdefault(tok, []).append(j)
    try:
        return _exact_alignment(candidate, positions, state_budget)
    except _BudgetExceeded:
        return _greedy_alignment(candidate, positions)


def _exact_alignment(candidate, positions, state_budget):
    n = len(candidate)
    memo: dict = {}

    def best(i: int, used: int, prev: int) -> tuple[int, int]:
        # returns (matches, -chunks) for candidate[i:], maximised lexicographically
        if i == n:
            return (0, 0)
        key = (i, used, prev)
        hit = memo.get(key)
        if hit is not None:
            return hit
        if len(memo) >= state_budget:
            raise _BudgetExceeded
        options = []
        free = [j for j in positions.get(candidate[i], ()) if not used >> j & 1]
        for j in free:
            m, neg_chunks = best(i + 1, used | (1 << j), j)
            options.append((m + 1, neg_chunks - (0 if j == prev + 1 and prev >= 0 else 1)))
        # skipping a matchable token can only pay off when the candidate has
        # more copies of it than remain in the reference
        if not free or _surplus(candidate, i, free):
            options.append(best(i + 1, used, -1))
        result = max(options)
        memo[key] = result
        return result

    def _surplus(cand, i, free):
        remaining = sum(1 for tok in cand[i:] if tok == cand[i])
        return remaining > len(free)

    matches, neg_chunks = best(0, 0, -1)
    return matches, -neg_chunks


def _greedy_alignment(candidate, positions):
    used: set[int] = set()
    prev = -1
    matches = chunks = 0
    for tok in candidate:
        free = [j for j in positions.get(tok, ()) if j not in used]
        if not free:
            prev = -1
            continue
        j = prev + 1 if prev >= 0 and prev + 1 in free else free[0]
        if not (prev >= 0 and j == prev + 1):
            chunks += 1
        used.add(j)
        matches += 1
        prev = j
    return matches, chunks


def meteor(candidate: Sequence[str], reference: Sequence[str]) -> float:
    """Exact-match METEOR: harmonic F-mean weighted towards recall, times a fragmentation penalty."""
    matches, chunks = meteor_alignment(candidate, reference)
    if matches == 0:
        return 0.0
    p = matches / len(candidate)
    r = matches / len(reference)
    f_mean = 10 * p * r / (r + 9 * p)
    penalty = 0.5 * chunks ** 3 / matches ** 3
    return f_mean * (1 - penalty)
