"""Beam search over the copy mixture, repetition re-ranking, and
length-controlled summarization."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .abstractor import AbstractorModel, DocContext, decode_last, encode_document
from .corpus import BOS_ID, EOS_ID, PAD_ID, UNK_ID, Document, Vocabulary
from .extractor import ExtractorModel, extract_prototype, score_words
from .labeler import bin_length
from .prototype import Prototype

_BANNED = (PAD_ID, UNK_ID, BOS_ID)


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple[int, ...]  # BOS-prefixed extended ids
    logprob: float
    finished: bool = False

    @property
    def body(self) -> tuple[int, ...]:
        """Tokens without BOS and the trailing EOS."""
        end = -1 if self.tokens[-1] == EOS_ID and len(self.tokens) > 1 else None
        return self.tokens[1:end]


def _rank_key(h: Hypothesis):
    return (-h.logprob, h.tokens)


def beam_search(model: AbstractorModel, ctx: DocContext, n_beam: int, max_len: int) -> list[Hypothesis]:
    """Keep ``n_beam`` live hypotheses; a hypothesis that emits EOS retires to
    the finished pool and its slot is refilled. Hypotheses reaching ``max_len``
    generated tokens are retired as length-capped. Returns up to ``n_beam``
    hypotheses sorted by log-probability (ties by token ids)."""
    if n_beam < 1 or max_len < 1:
        raise ValueError("n_beam and max_len must be at least 1")
    active = [Hypothesis((BOS_ID,), 0.0)]
    finished: list[Hypothesis] = []
    for step in range(max_len):
        last = step == max_len - 1
        candidates = []
        for h, out in zip(active, decode_last(model, ctx, np.array([h.tokens for h in active]))):
            logp = np.full(out.p.shape, -np.inf)
            np.log(out.p, out=logp, where=out.p > 0)
            logp[list(_BANNED)] = -np.inf
            k = min(n_beam, int(np.isfinite(logp).sum()))
            # stable sort: equal scores keep the lower token id first
            for tok in np.argsort(-logp, kind="stable")[:k]:
                candidates.append(Hypothesis(h.tokens + (int(tok),), h.logprob + float(logp[tok])))
        candidates.sort(key=_rank_key)
        active = []
        for c in candidates:
            if c.tokens[-1] == EOS_ID or last:
                finished.append(Hypothesis(c.tokens, c.logprob, True))
            else:
                active.append(c)
            if len(active) == n_beam:
                break
        if not active:
            break
        if len(finished) >= n_beam:
            kth = sorted(finished, key=_rank_key)[n_beam - 1].logprob
            if active[0].logprob <= kth:
                break
    return sorted(finished, key=_rank_key)[:n_beam]


def repeated_ngrams(tokens: Sequence, n: int = 3) -> int:
    """Occurrences of each n-gram beyond its first."""
    counts = Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))
    return sum(c - 1 for c in counts.values())


def rerank(candidates: Sequence[Hypothesis]) -> Hypothesis:
    """Fewest repeated trigrams wins; ties by higher log-probability, then token ids."""
    if not candidates:
        raise ValueError("rerank needs at least one candidate")
    return min(candidates, key=lambda h: (repeated_ngrams(h.body), -h.logprob, h.tokens))


@dataclass
class SummaryResult:
    tokens: tuple[str, ...]
    prototype: Prototype
    K: int
    logprob: float
    repeated_trigrams: int


def summarize(
    extractor: ExtractorModel,
    abstractor: AbstractorModel,
    vocab: Vocabulary,
    doc: Document,
    K: int | None = None,
    default_k: int | None = None,
    n_beam: int = 5,
    max_len: int | None = None,
) -> SummaryResult:
    """Extract a top-K prototype, decode with beam search and re-rank.

    Without ``K`` the calibrated ``default_k`` (binned mean validation
    reference length) is used. ``max_len`` defaults to ``2K + 10``.
    """
    if K is None:
        if default_k is None:
            raise ValueError("no K given and no calibrated default; train the abstractor with a validation set")
        K = default_k
    if K < 1:
        raise ValueError("K must be at least 1")
    scores = score_words(extractor, doc, vocab)
    proto = extract_prototype(doc, scores, min(K, len(doc)))
    ctx = encode_document(abstractor, vocab, doc.tokens, proto)
    limit = min(max_len or 2 * K + 10, abstractor.cfg.max_decode_len)
    best = rerank(beam_search(abstractor, ctx, n_beam, limit))
    words = tuple(ctx.copy_vocab.token(i) for i in best.body)
    return SummaryResult(words, proto, K, best.logprob, repeated_ngrams(best.body))


def default_k_from_lengths(lengths: Sequence[int]) -> int:
    return bin_length(max(1, int(round(float(np.mean(lengths))))))
