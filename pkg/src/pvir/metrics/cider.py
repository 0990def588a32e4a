"""Corpus-level CIDEr (TF-IDF weighted n-gram cosine similarity)."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from ..errors import EmptyCorpus
from .text import ngrams


@dataclass(frozen=True)
class CiderItem:
    candidate: tuple[str, ...]
    references: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "candidate", tuple(self.candidate))
        refs = tuple(tuple(r) for r in self.references)
        if not refs:
            raise ValueError("every CIDEr item needs at least one reference")
        object.__setattr__(self, "references", refs)


def _as_items(corpus) -> list[CiderItem]:
    return [item if isinstance(item, CiderItem) else CiderItem(item[0], item[1]) for item in corpus]


def document_frequency(items: Sequence[CiderItem], max_n: int = 4) -> Counter:
    """Number of items whose reference set contains each n-gram at least once."""
    df: Counter = Counter()
    for item in items:
        seen = set()
        for ref in item.references:
            for n in range(1, max_n + 1):
                seen.update(ngrams(ref, n))
        df.update(seen)
    return df


def _tfidf(tokens, n, df, log_corpus):
    counts = ngrams(tokens, n)
    total = sum(counts.values())
    vec = {}
    for gram, count in counts.items():
        # n-grams never seen in any reference get df = 1, as in the reference scorer
        idf = log_corpus - math.log(max(1.0, df[gram]))
        vec[gram] = count / total * idf
    return vec


def _cosine(u: dict, v: dict) -> float:
    nu = math.sqrt(sum(x * x for x in u.values()))
    nv = math.sqrt(sum(x * x for x in v.values()))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    if len(u) > len(v):
        u, v = v, u
    return sum(x * v.get(g, 0.0) for g, x in u.items()) / (nu * nv)


def cider(corpus, max_n: int = 4) -> list[float]:
    """Per-item CIDEr scores for ``corpus``, a sequence of ``(candidate, references)``.

    IDF is computed once over the whole corpus from reference presence, so a
    one-item corpus scores 0 everywhere (every n-gram has IDF ``ln 1``).
    """
    items = _as_items(corpus)
    if not items:
        raise EmptyCorpus("CIDEr needs at least one item")
    df = document_frequency(items, max_n)
    log_corpus = math.log(len(items))
    scores = []
    for item in items:
        total = 0.0
        for n in range(1, max_n + 1):
            cand_vec = _tfidf(item.candidate, n, df, log_corpus)
            sims = [_cosine(cand_vec, _tfidf(ref, n, df, log_corpus)) for ref in item.references]
            total += sum(sims) / len(sims) / max_n
        scores.append(total)
    return scores


def corpus_cider(corpus, max_n: int = 4) -> float:
    scores = cider(corpus, max_n)
    return sum(scores) / len(scores)
