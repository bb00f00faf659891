"""Tokenization, vocabularies, corpus files and the synthetic corpus generator."""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

PAD, UNK, BOS, EOS = "<pad>", "<unk>", "<s>", "</s>"
RESERVED = (PAD, UNK, BOS, EOS)
PAD_ID, UNK_ID, BOS_ID, EOS_ID = 0, 1, 2, 3

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


class CorpusError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercase and split into word runs and single punctuation marks."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Document:
    id: str
    sentences: tuple[tuple[str, ...], ...]
    summary: tuple[str, ...]

    def __post_init__(self):
        if not self.sentences:
            raise CorpusError(f"document {self.id!r} has no sentences")
        if any(len(s) == 0 for s in self.sentences):
            raise CorpusError(f"document {self.id!r} has an empty sentence")
        if not self.summary:
            raise CorpusError(f"document {self.id!r} has an empty summary")

    @property
    def tokens(self) -> list[str]:
        return [tok for sent in self.sentences for tok in sent]

    @property
    def sentence_spans(self) -> list[tuple[int, int]]:
        spans, start = [], 0
        for sent in self.sentences:
            spans.append((start, start + len(sent)))
            start += len(sent)
        return spans

    def sentence_of(self) -> np.ndarray:
        """Sentence index of every source position."""
        return np.repeat(np.arange(len(self.sentences)), [len(s) for s in self.sentences])

    def __len__(self) -> int:
        return sum(len(s) for s in self.sentences)


def make_document(id: str, sentences: Iterable[str], summary: str) -> Document:
    return Document(
        id=id,
        sentences=tuple(tuple(tokenize(s)) for s in sentences),
        summary=tuple(tokenize(summary)),
    )


def truncate(doc: Document, max_source: int, max_summary: int | None = None) -> Document:
    """Cut the source to ``max_source`` tokens (dropping sentences that fall
    entirely past the budget) and optionally the summary to ``max_summary``."""
    kept, used = [], 0
    for sent in doc.sentences:
        if used >= max_source:
            break
        take = sent[: max_source - used]
        kept.append(take)
        used += len(take)
    summary = doc.summary if max_summary is None else doc.summary[:max_summary]
    if len(kept) == len(doc.sentences) and summary == doc.summary and used == len(doc):
        return doc
    return Document(doc.id, tuple(kept), summary)


@dataclass
class Vocabulary:
    """Frequency-ranked vocabulary.

    The output vocabulary is the prefix ``itos[:output_size]`` of the input
    vocabulary, so a token's id is the same on both sides.
    """

    itos: list[str]
    output_size: int
    stoi: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if tuple(self.itos[:4]) != RESERVED:
            raise ValueError("reserved tokens must occupy ids 0-3")
        self.stoi = {tok: i for i, tok in enumerate(self.itos)}
        self.output_size = min(self.output_size, len(self.itos))

    def __len__(self) -> int:
        return len(self.itos)

    def lookup(self, token: str) -> int:
        return self.stoi.get(token, UNK_ID)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.stoi.get(t, UNK_ID) for t in tokens]

    def token(self, idx: int) -> str:
        return self.itos[idx]

    def in_output(self, token: str) -> bool:
        idx = self.stoi.get(token)
        return idx is not None and idx < self.output_size

    def to_json(self) -> dict:
        return {"itos": self.itos, "output_size": self.output_size}

    @classmethod
    def from_json(cls, data: dict) -> "Vocabulary":
        return cls(list(data["itos"]), int(data["output_size"]))


def build_vocab(corpus: Sequence[Document], input_cap: int, output_cap: int) -> Vocabulary:
    if not corpus:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    if input_cap < 4 or output_cap < 4:
        raise ValueError("vocabulary caps must be at least 4")
    counts: Counter[str] = Counter()
    for doc in corpus:
        counts.update(doc.tokens)
        counts.update(doc.summary)
    for tok in RESERVED:
        counts.pop(tok, None)
    ranked = sorted(counts, key=lambda t: (-counts[t], t))
    itos = list(RESERVED) + ranked[: input_cap - 4]
    return Vocabulary(itos, output_cap)


# -- corpus files ---------------------------------------------------------

_FIELDS = ("id", "sentences", "summary")


def read_corpus(path: str | Path) -> list[Document]:
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"malformed record at line {lineno}: {exc.msg}") from None
            if not isinstance(rec, dict):
                raise CorpusError(f"malformed record at line {lineno}: expected an object")
            for name in _FIELDS:
                if name not in rec:
                    raise CorpusError(f"missing field: {name} at line {lineno}")
            if not isinstance(rec["sentences"], list):
                raise CorpusError(f"malformed record at line {lineno}: sentences must be a list")
            try:
                docs.append(make_document(str(rec["id"]), rec["sentences"], rec["summary"]))
            except CorpusError as exc:
                raise CorpusError(f"{exc} at line {lineno}") from None
    return docs


def write_corpus(path: str | Path, docs: Iterable[Document]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            rec = {
                "id": doc.id,
                "sentences": [" ".join(s) for s in doc.sentences],
                "summary": " ".join(doc.summary),
            }
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def corpus_io(path: str | Path, mode: str, docs: Iterable[Document] | None = None) -> list[Document]:
    if mode == "read":
        return read_corpus(path)
    if mode == "write":
        docs = list(docs or [])
        write_corpus(path, docs)
        return docs
    raise ValueError(f"unknown mode {mode!r}")


# -- synthetic corpus -----------------------------------------------------

MARKER = "key"
FILLERS = ("the", "of", "and", "a", "to", "in")
END = "."


@dataclass(frozen=True)
class SynthParams:
    vocab_size: int = 60
    n_sentences: int = 4
    sentence_len: int = 10
    salient_fraction: float = 0.6
    filler_prob: float = 0.2
    length_step: int = 5

    def __post_init__(self):
        if self.length_step < 1:
            raise ValueError("length_step must be at least 1")
        if not 0 < self.salient_fraction < 1:
            raise ValueError("salient_fraction must lie in (0, 1)")
        if self.sentence_len < 3 or self.n_sentences < 1:
            raise ValueError("need at least one sentence of three tokens")
        if self.vocab_size < len(FILLERS) + 7:
            raise ValueError("vocab_size too small for fillers plus content words")


def content_words(params: SynthParams) -> list[str]:
    n = params.vocab_size - len(FILLERS) - 2
    return [f"w{i:02d}" for i in range(n)]


def _split(rng: np.random.Generator, items: Sequence[str]) -> tuple[list[str], list[str]]:
    perm = rng.permutation(len(items))
    half = len(items) // 2
    return [items[j] for j in perm[:half]], [items[j] for j in perm[half:]]


def synth_corpus(
    seed: int, n_docs: int, params: SynthParams | None = None, with_masks: bool = False
):
    """Generate documents whose summary is drawn from marked sentences.

    Every sentence is ``sentence_len`` tokens: a head, a body and the end
    token. Salient sentences start with the marker. Their bodies mix content
    words and fillers, and the summary keeps, in order:

    * every content word,
    * every filler directly after a content word,
    * the marker when the first body word is content.

    Content words and fillers are each split per document into a salient and
    a non-salient half, so no summary token type occurs in a non-salient
    sentence of the same document, while across documents every type except
    the end token appears in summaries. Summaries end on a content word
    whenever the last marked body does, as truncated prototypes do.

    The salient layout is resampled until the summary length is a multiple
    of ``length_step``. Non-salient bodies use ``filler_prob``.

    With ``with_masks`` the result is a list of ``(doc, mask)`` pairs where
    ``mask[l] == 1`` iff source word ``l`` belongs to the summary.
    """
    params = params or SynthParams()
    rng = np.random.default_rng(seed)
    words = content_words(params)
    body_len = params.sentence_len - 2
    out = []
    for i in range(n_docs):
        salient = rng.random(params.n_sentences) < params.salient_fraction
        if not salient.any():
            salient[rng.integers(params.n_sentences)] = True
        content = _split(rng, words)
        fillers = _split(rng, FILLERS)
        marked = iter(_salient_sentences(rng, int(salient.sum()), body_len, params.length_step, content[0], fillers[0]))
        sentences, mask = [], []
        for is_salient in salient:
            if is_salient:
                sent, keep = next(marked)
            else:
                body = [
                    content[1][rng.integers(len(content[1]))]
                    if rng.random() >= params.filler_prob
                    else fillers[1][rng.integers(len(fillers[1]))]
                    for _ in range(body_len)
                ]
                sent = (fillers[1][rng.integers(len(fillers[1]))], *body, END)
                keep = [False] * len(sent)
            sentences.append(sent)
            mask.extend(int(k) for k in keep)
        flat = [t for sent in sentences for t in sent]
        summary = tuple(t for t, k in zip(flat, mask) if k)
        doc = Document(f"synth-{seed}-{i:05d}", tuple(sentences), summary)
        out.append((doc, np.array(mask, dtype=np.int64)) if with_masks else doc)
    return out


def summary_slots(is_content: Sequence[bool]) -> list[bool]:
    """Which tokens of a marked sentence (head, body, end) enter the summary,
    given which body slots hold content words."""
    body = [bool(c) or (j > 0 and bool(is_content[j - 1])) for j, c in enumerate(is_content)]
    return [bool(is_content[0]), *body, False]


def _salient_sentences(
    rng: np.random.Generator,
    n_salient: int,
    body_len: int,
    step: int,
    pool: Sequence[str],
    fillers: Sequence[str],
    max_tries: int = 10_000,
) -> list[tuple[tuple[str, ...], list[bool]]]:
    """Marked sentences with their summary slots; the layout is redrawn until
    the total number of summary slots is a positive multiple of ``step``."""
    capacity = n_salient * body_len
    for _ in range(max_tries):
        n_content = int(rng.integers(n_salient, capacity + 1))
        layout = np.zeros((n_salient, body_len), dtype=bool)
        layout[np.arange(n_salient), rng.integers(body_len, size=n_salient)] = True
        free = np.flatnonzero(~layout.reshape(-1))
        layout.reshape(-1)[rng.choice(free, n_content - n_salient, replace=False)] = True
        keeps = [summary_slots(row) for row in layout]
        total = sum(sum(k) for k in keeps)
        if total % step == 0:
            break
    else:
        raise ValueError(f"no salient layout with a summary length divisible by {step}")
    out = []
    for row, keep in zip(layout, keeps):
        body = [pool[rng.integers(len(pool))] if c else fillers[rng.integers(len(fillers))] for c in row]
        out.append(((MARKER, *body, END), keep))
    return out


def split_corpus(docs: Sequence, valid_frac: float = 0.1, test_frac: float = 0.1):
    """Deterministic contiguous train/valid/test split."""
    n = len(docs)
    n_test = int(round(n * test_frac))
    n_valid = int(round(n * valid_frac))
    n_train = n - n_valid - n_test
    return list(docs[:n_train]), list(docs[n_train : n_train + n_valid]), list(docs[n_train + n_valid :])
