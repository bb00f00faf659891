"""ROUGE-1/2/L on raw token sequences (no stemming, no stopword removal)."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, overlap: int, n_cand: int, n_ref: int) -> "RougeScore":
        if n_cand == 0 or n_ref == 0:
            return cls(0.0, 0.0, 0.0)
        p = overlap / n_cand
        r = overlap / n_ref
        f = 2 * p * r / (p + r) if p + r > 0 else 0.0
        return cls(p, r, f)


def ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: Sequence[str], reference: Sequence[str], n: int = 1) -> RougeScore:
    if n not in (1, 2):
        raise ValueError(f"rouge_n supports n=1 or n=2, got {n}")
    cand = ngram_counts(candidate, n)
    ref = ngram_counts(reference, n)
    overlap = sum((cand & ref).values())
    return RougeScore.from_counts(overlap, sum(cand.values()), sum(ref.values()))


def lcs_table(a: Sequence, b: Sequence) -> list[list[int]]:
    """Prefix LCS table: ``table[i][j]`` is the LCS length of ``a[:i]`` and ``b[:j]``."""
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i, x in enumerate(a, start=1):
        row, prev = table[i], table[i - 1]
        for j, y in enumerate(b, start=1):
            row[j] = prev[j - 1] + 1 if x == y else max(prev[j], row[j - 1])
    return table


def lcs_length(a: Sequence, b: Sequence) -> int:
    return lcs_table(a, b)[-1][-1]


def rouge_l(candidate: Sequence[str], reference: Sequence[str]) -> RougeScore:
    return RougeScore.from_counts(lcs_length(candidate, reference), len(candidate), len(reference))


METRICS = ("rouge1", "rouge2", "rougeL")


def score_all(candidate: Sequence[str], reference: Sequence[str]) -> dict[str, RougeScore]:
    return {
        "rouge1": rouge_n(candidate, reference, 1),
        "rouge2": rouge_n(candidate, reference, 2),
        "rougeL": rouge_l(candidate, reference),
    }


def corpus_scores(pairs: Iterable[tuple[Sequence[str], Sequence[str]]]) -> dict[str, RougeScore]:
    """Average P, R and F1 of each metric over (candidate, reference) pairs."""
    sums = {m: [0.0, 0.0, 0.0] for m in METRICS}
    n = 0
    for cand, ref in pairs:
        n += 1
        for m, s in score_all(cand, ref).items():
            acc = sums[m]
            acc[0] += s.precision
            acc[1] += s.recall
            acc[2] += s.f1
    if n == 0:
        return {m: RougeScore(0.0, 0.0, 0.0) for m in METRICS}
    return {m: RougeScore(p / n, r / n, f / n) for m, (p, r, f) in sums.items()}
