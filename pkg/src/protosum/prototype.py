"""Importance scores and the top-K, order-preserving prototype ranking rule.

Shared by inference-time extraction (ranking over the whole source) and
gold-prototype construction (ranking restricted to oracle sentences).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class ImportanceScores:
    word: np.ndarray
    sentence: np.ndarray
    weighted: np.ndarray

    def to_json(self) -> dict:
        return {
            "word": self.word.tolist(),
            "sentence": self.sentence.tolist(),
            "weighted": self.weighted.tolist(),
        }


@dataclass(frozen=True)
class Prototype:
    tokens: tuple[str, ...]
    positions: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.tokens)

    def to_json(self) -> dict:
        return {"tokens": list(self.tokens), "positions": list(self.positions)}


def weighted_scores(word: np.ndarray, sentence_lengths: Sequence[int]) -> ImportanceScores:
    """Weight each word score by the mean word score of its sentence."""
    word = np.asarray(word, dtype=np.float64)
    lengths = np.asarray(sentence_lengths, dtype=np.int64)
    if lengths.sum() != word.shape[0]:
        raise ValueError(f"sentence lengths sum to {lengths.sum()}, expected {word.shape[0]}")
    starts = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    sentence = np.add.reduceat(word, starts) / lengths
    weighted = word * np.repeat(sentence, lengths)
    return ImportanceScores(word=word, sentence=sentence, weighted=weighted)


def select_top_k(scores: np.ndarray, k: int, candidates: Sequence[int] | None = None) -> list[int]:
    """Positions of the ``k`` highest scores, returned in increasing order.

    Ties go to the lower position. ``candidates`` restricts the ranking to a
    subset of positions; if fewer than ``k`` are available, all are returned.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    scores = np.asarray(scores)
    pool = np.arange(len(scores)) if candidates is None else np.asarray(sorted(candidates), dtype=np.int64)
    if len(pool) == 0:
        return []
    order = np.argsort(-scores[pool], kind="stable")
    return sorted(pool[order[:k]].tolist())


def build_prototype(tokens: Sequence[str], positions: Sequence[int]) -> Prototype:
    return Prototype(tuple(tokens[p] for p in positions), tuple(int(p) for p in positions))
