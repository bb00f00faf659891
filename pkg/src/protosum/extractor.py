"""Word-level prototype extractor: a small transformer encoder with a sigmoid
scoring head, sentence-weighted scores, and top-K prototype extraction."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .config import ExtractorConfig, TrainConfig
from .corpus import PAD_ID, Document, Vocabulary
from .labeler import LabeledExample
from .numerics import tensor as T
from .numerics.nn import Embedding, EncoderStack, Linear, Module, padding_mask, positional_encoding
from .numerics.optim import AdamState, adam_step
from .prototype import ImportanceScores, Prototype, build_prototype, select_top_k, weighted_scores

log = logging.getLogger(__name__)


class ExtractorModel(Module):
    def __init__(self, vocab_size: int, cfg: ExtractorConfig, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.embed = Embedding(vocab_size, cfg.d_model, rng)
        self.encoder = EncoderStack(cfg.n_blocks, cfg.d_model, cfg.n_heads, cfg.ffn_width, rng)
        self.head = Linear(cfg.d_model, 1, rng)
        self._pe = positional_encoding(cfg.max_len, cfg.d_model)

    def logits(self, ids: np.ndarray, pad: np.ndarray) -> T.Tensor:
        """Per-word logits ``(B, L)`` for a padded id batch."""
        L = ids.shape[1]
        if L > self.cfg.max_len:
            raise ValueError(f"source of {L} tokens exceeds the extractor limit {self.cfg.max_len}")
        x = self.embed(ids) + self._pe[:L]
        h = self.encoder(x, padding_mask(pad))
        return (self.head(h)).reshape(ids.shape)


def pad_batch(seqs: Sequence[Sequence[int]], pad_id: int = PAD_ID) -> tuple[np.ndarray, np.ndarray]:
    n = max(len(s) for s in seqs)
    ids = np.full((len(seqs), n), pad_id, dtype=np.int64)
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = s
    lengths = np.array([len(s) for s in seqs])
    return ids, np.arange(n)[None, :] >= lengths[:, None]


def score_corpus(
    model: ExtractorModel, docs: Sequence[Document], vocab: Vocabulary, batch_size: int = 64
) -> list[ImportanceScores]:
    out = []
    with T.no_grad():
        for start in range(0, len(docs), batch_size):
            chunk = docs[start : start + batch_size]
            ids, pad = pad_batch([vocab.encode(d.tokens) for d in chunk])
            probs = 1.0 / (1.0 + np.exp(-model.logits(ids, pad).data))
            for i, doc in enumerate(chunk):
                out.append(weighted_scores(probs[i, : len(doc)], [len(s) for s in doc.sentences]))
    return out


def score_words(model: ExtractorModel, doc: Document, vocab: Vocabulary) -> ImportanceScores:
    return score_corpus(model, [doc], vocab)[0]


def extract_prototype(doc: Document, scores: ImportanceScores, K: int) -> Prototype:
    """Top-``K`` words by weighted score over the whole source, in source order."""
    return build_prototype(doc.tokens, select_top_k(scores.weighted, K))


def extractor_loss(model: ExtractorModel, batch: Sequence[LabeledExample], vocab: Vocabulary) -> T.Tensor:
    """Binary cross-entropy averaged over every real source word in the batch."""
    ids, pad = pad_batch([vocab.encode(ex.doc.tokens) for ex in batch])
    labels = np.zeros(ids.shape)
    for i, ex in enumerate(batch):
        labels[i, : len(ex.labels)] = ex.labels
    real = (~pad).astype(np.float64)
    z = model.logits(ids, pad)
    ll = T.log_sigmoid(z) * labels + T.log_sigmoid(-z) * (1.0 - labels)
    return -(ll * real).sum() * (1.0 / real.sum())


def mean_loss(model, examples, vocab, batch_size: int = 64) -> float:
    total, words = 0.0, 0
    with T.no_grad():
        for start in range(0, len(examples), batch_size):
            chunk = examples[start : start + batch_size]
            n = sum(len(ex.labels) for ex in chunk)
            total += extractor_loss(model, chunk, vocab).item() * n
            words += n
    return total / max(words, 1)


def label_f1(model: ExtractorModel, examples: Sequence[LabeledExample], vocab: Vocabulary) -> float:
    """Micro-averaged F1 of ``p_ext > 0.5`` against the binary word labels."""
    scores = score_corpus(model, [ex.doc for ex in examples], vocab)
    tp = fp = fn = 0
    for ex, s in zip(examples, scores):
        pred = s.word > 0.5
        gold = ex.labels.astype(bool)
        tp += int((pred & gold).sum())
        fp += int((pred & ~gold).sum())
        fn += int((~pred & gold).sum())
    return 2 * tp / (2 * tp + fp + fn) if tp else 0.0


@dataclass
class TrainResult:
    model: Module
    history: list[dict]
    best_valid: float
    best_epoch: int


def train_extractor(
    train: Sequence[LabeledExample],
    valid: Sequence[LabeledExample],
    vocab: Vocabulary,
    cfg: ExtractorConfig,
    train_cfg: TrainConfig,
    seed: int,
    on_step: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Minimise the word-label BCE with Adam; keep the best-validation weights."""
    model = ExtractorModel(len(vocab), cfg, seed)
    rng = np.random.default_rng(seed + 1)
    state = AdamState(cfg.d_model, train_cfg.warmup, train_cfg.lr_scale)
    params = model.parameters()
    history = []
    best, best_epoch, best_state = np.inf, -1, model.state_dict()
    for epoch in range(train_cfg.epochs):
        order = rng.permutation(len(train))
        for start in range(0, len(order), train_cfg.batch_size):
            batch = [train[i] for i in order[start : start + train_cfg.batch_size]]
            model.zero_grad()
            loss = extractor_loss(model, batch, vocab)
            if not np.isfinite(loss.data):
                raise FloatingPointError(f"non-finite extractor loss at step {state.step + 1}")
            loss.backward()
            lr = adam_step(state, params, model.gradients())
            row = {"step": state.step, "epoch": epoch, "lr": lr, "loss": loss.item()}
            history.append(row)
            if on_step:
                on_step(row)
        v = mean_loss(model, valid, vocab) if valid else history[-1]["loss"]
        log.info("extractor epoch %d valid loss %.5f", epoch, v)
        if v < best:
            best, best_epoch, best_state = v, epoch, model.state_dict()
    model.load_state_dict(best_state)
    return TrainResult(model, history, best, best_epoch)
