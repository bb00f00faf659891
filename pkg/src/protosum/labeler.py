"""Pseudo-label construction: oracle sentences, LCS word alignment, binary
word labels, length bins and gold prototypes."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import Document
from .prototype import ImportanceScores, Prototype, build_prototype, select_top_k
from .rouge import ngram_counts

BIN_SIZE = 5


@dataclass(frozen=True)
class LabeledExample:
    doc: Document
    oracle_sentences: tuple[int, ...]
    labels: np.ndarray
    alignment: tuple[tuple[int, int], ...]
    K: int
    gold_prototype: Prototype | None = None

    def with_prototype(self, proto: Prototype) -> "LabeledExample":
        return replace(self, gold_prototype=proto)

    def to_json(self) -> dict:
        return {
            "id": self.doc.id,
            "oracle_sentences": list(self.oracle_sentences),
            "labels": self.labels.tolist(),
            "alignment": [list(p) for p in self.alignment],
            "K": self.K,
            "gold_prototype_positions": (
                None if self.gold_prototype is None else list(self.gold_prototype.positions)
            ),
        }


def _recall(overlap_counts, ref_counts) -> float:
    total = sum(ref_counts.values())
    return sum((overlap_counts & ref_counts).values()) / total if total else 0.0


def _oracle_objective(selected_tokens: Sequence[str], ref1, ref2) -> float:
    r1 = _recall(ngram_counts(selected_tokens, 1), ref1)
    r2 = _recall(ngram_counts(selected_tokens, 2), ref2)
    return (r1 + r2) / 2


def select_oracle_sentences(doc: Document) -> list[int]:
    """Greedy sentence selection maximising mean(ROUGE-1 recall, ROUGE-2 recall).

    Stops when no remaining sentence gives a strictly positive gain. The first
    pick is always taken, so at least one sentence is returned.
    """
    ref1 = ngram_counts(doc.summary, 1)
    ref2 = ngram_counts(doc.summary, 2)
    selected: list[int] = []
    current = 0.0
    while len(selected) < len(doc.sentences):
        best_val, best_idx = -np.inf, None
        for j in range(len(doc.sentences)):
            if j in selected:
                continue
            trial = sorted(selected + [j])
            tokens = [tok for i in trial for tok in doc.sentences[i]]
            val = _oracle_objective(tokens, ref1, ref2)
            if val > best_val:
                best_val, best_idx = val, j
        if selected and best_val <= current:
            break
        selected.append(best_idx)
        current = best_val
    return sorted(selected)


def align_lcs(summary: Sequence[str], oracle_flat: Sequence[tuple[str, int]]) -> list[tuple[int, int]]:
    """LCS alignment of summary positions to absolute source positions.

    ``oracle_flat`` is the concatenated oracle text as (token, source position)
    pairs. The walk runs forward over a suffix table and prefers a match, then
    advancing in the oracle text, then advancing in the summary, which yields
    the leftmost-in-source LCS.
    """
    n, m = len(summary), len(oracle_flat)
    toks = [t for t, _ in oracle_flat]
    suffix = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        row, below = suffix[i], suffix[i + 1]
        for j in range(m - 1, -1, -1):
            if summary[i] == toks[j]:
                row[j] = below[j + 1] + 1
            else:
                row[j] = max(below[j], row[j + 1])
    out = []
    i = j = 0
    while i < n and j < m:
        if summary[i] == toks[j]:
            out.append((i, oracle_flat[j][1]))
            i += 1
            j += 1
        elif suffix[i][j + 1] == suffix[i][j]:
            j += 1
        else:
            i += 1
    return out


def oracle_flat(doc: Document, oracle_sentences: Sequence[int]) -> list[tuple[str, int]]:
    spans = doc.sentence_spans
    flat = []
    for j in sorted(oracle_sentences):
        start, _ = spans[j]
        flat.extend((tok, start + off) for off, tok in enumerate(doc.sentences[j]))
    return flat


def oracle_positions(doc: Document, oracle_sentences: Sequence[int]) -> list[int]:
    spans = doc.sentence_spans
    return [p for j in sorted(oracle_sentences) for p in range(*spans[j])]


def make_labels(
    doc: Document, oracle_sentences: Sequence[int], alignment: Sequence[tuple[int, int]]
) -> np.ndarray:
    allowed = set(oracle_positions(doc, oracle_sentences))
    labels = np.zeros(len(doc), dtype=np.int64)
    for t, pos in alignment:
        if pos not in allowed:
            raise ValueError(f"alignment pair ({t}, {pos}) points outside the oracle sentences")
        labels[pos] = 1
    return labels


def bin_length(T: int) -> int:
    """Nearest multiple of five to ``T``, never below five."""
    if T < 1:
        raise ValueError("summary length must be at least 1")
    return max(BIN_SIZE, BIN_SIZE * int(np.floor(T / BIN_SIZE + 0.5)))


def make_gold_prototype(
    doc: Document, oracle_sentences: Sequence[int], scores: ImportanceScores, K: int
) -> Prototype:
    positions = select_top_k(scores.weighted, K, oracle_positions(doc, oracle_sentences))
    return build_prototype(doc.tokens, positions)


def label_document(doc: Document) -> LabeledExample:
    oracle = select_oracle_sentences(doc)
    alignment = align_lcs(doc.summary, oracle_flat(doc, oracle))
    labels = make_labels(doc, oracle, alignment)
    return LabeledExample(
        doc=doc,
        oracle_sentences=tuple(oracle),
        labels=labels,
        alignment=tuple(alignment),
        K=bin_length(len(doc.summary)),
    )


def label_corpus(docs: Iterable[Document]) -> list[LabeledExample]:
    return [label_document(doc) for doc in docs]


# -- label files ----------------------------------------------------------


def write_labels(path: str | Path, examples: Iterable[LabeledExample]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_json()) + "\n")


def read_labels(path: str | Path, docs: Sequence[Document]) -> list[LabeledExample]:
    """Read label records and join them to ``docs`` by id."""
    by_id = {d.id: d for d in docs}
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            doc = by_id.get(rec["id"])
            if doc is None:
                raise ValueError(f"label record for unknown document {rec['id']!r} at line {lineno}")
            positions = rec.get("gold_prototype_positions")
            proto = None if positions is None else build_prototype(doc.tokens, positions)
            out.append(
                LabeledExample(
                    doc=doc,
                    oracle_sentences=tuple(rec["oracle_sentences"]),
                    labels=np.asarray(rec["labels"], dtype=np.int64),
                    alignment=tuple((int(t), int(p)) for t, p in rec["alignment"]),
                    K=int(rec["K"]),
                    gold_prototype=proto,
                )
            )
    return out
