"""Prototype-guided encoder-decoder with a generate / copy-source / copy-prototype mixture.

Shapes follow the batched ``(B, length, d_model)`` convention of
:mod:`protosum.numerics.nn`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .config import AbstractorConfig
from .corpus import BOS_ID, EOS, EOS_ID, PAD_ID, Vocabulary
from .numerics import tensor as T
from .numerics.nn import (
    CrossStack,
    Embedding,
    EncoderStack,
    Linear,
    Module,
    causal_mask,
    padding_mask,
    positional_encoding,
)
from .prototype import Prototype

PROB_FLOOR = 1e-12


class InputEmbedding(Module):
    """Lookup in W^e, project to d_model, ReLU, then add sinusoidal positions."""

    def __init__(self, vocab_size: int, d_word: int, d_model: int, max_len: int, rng):
        self.table = Embedding(vocab_size, d_word, rng)
        self.proj = Linear(d_word, d_model, rng)
        self._pe = positional_encoding(max_len, d_model)

    def __call__(self, ids: np.ndarray) -> T.Tensor:
        n = ids.shape[-1]
        if n > self._pe.shape[0]:
            raise ValueError(f"sequence of {n} tokens exceeds the positional table ({self._pe.shape[0]})")
        return T.relu(self.proj(self.table(ids))) + self._pe[:n]


class AbstractorModel(Module):
    def __init__(self, input_size: int, output_size: int, cfg: AbstractorConfig, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.output_size = output_size
        d, h, f, n = cfg.d_model, cfg.n_heads, cfg.ffn_width, cfg.n_blocks
        max_len = max(cfg.max_source_len, cfg.max_decode_len + 1)
        self.embed = InputEmbedding(input_size, cfg.d_word, d, max_len, rng)
        self.enc_src = EncoderStack(n, d, h, f, rng)
        self.enc_proto = EncoderStack(n, d, h, f, rng)
        self.dual_src = CrossStack(n, d, h, f, rng)
        self.dual_proto = CrossStack(n, d, h, f, rng)
        self.dec_proto = CrossStack(n, d, h, f, rng)  # stack A: rewrites the prototype
        self.dec_src = CrossStack(n, d, h, f, rng)  # stack B: complements from the source
        self.mix = Linear(3 * d, 3, rng)
        self.gen = Linear(d, output_size, rng)


@dataclass
class EncodedPair:
    mc: T.Tensor  # (B, L, d)
    mp: T.Tensor  # (B, K, d)
    src_pad: np.ndarray
    proto_pad: np.ndarray
    proto_to_src: T.Tensor  # (B, K, L) head-0 weights of the prototype dual stack's last block
    es_c: T.Tensor | None = None
    es_p: T.Tensor | None = None


def joint_encode(
    model: AbstractorModel,
    src_ids: np.ndarray,
    src_pad: np.ndarray,
    proto_ids: np.ndarray,
    proto_pad: np.ndarray,
) -> EncodedPair:
    if proto_ids.shape[-1] == 0 or (~proto_pad).sum(axis=-1).min() == 0:
        raise ValueError("prototype must contain at least one token")
    src_mask = padding_mask(src_pad)
    proto_mask = padding_mask(proto_pad)
    es_c = model.enc_src(model.embed(src_ids), src_mask)
    es_p = model.enc_proto(model.embed(proto_ids), proto_mask)
    mc, _ = model.dual_src(es_c, es_p, src_mask, proto_mask)
    mp, w = model.dual_proto(es_p, es_c, proto_mask, src_mask)
    return EncodedPair(mc, mp, src_pad, proto_pad, w[:, 0], es_c, es_p)


@dataclass
class DecoderOutput:
    ms: T.Tensor  # (B, T, d)
    alpha_c: T.Tensor  # (B, T, L)
    alpha_p: T.Tensor  # (B, T, K)
    lam: T.Tensor  # (B, T, 3): generate, copy source, copy prototype
    pg: T.Tensor  # (B, T, V_out)


def decode(model: AbstractorModel, enc: EncodedPair, dec_ids: np.ndarray) -> DecoderOutput:
    """Teacher-forced pass over ``dec_ids`` (B, T) with the subsequent mask."""
    n = dec_ids.shape[-1]
    if n > model.cfg.max_decode_len + 1:
        raise ValueError(f"prefix of {n} tokens exceeds max_decode_len={model.cfg.max_decode_len}")
    causal = causal_mask(n)
    y = model.embed(dec_ids)
    a, w_a = model.dec_proto(y, enc.mp, causal, padding_mask(enc.proto_pad))
    ms, w_b = model.dec_src(a, enc.mc, causal, padding_mask(enc.src_pad))
    alpha_p = w_a[:, 0]
    alpha_c = w_b[:, 0]
    cc = alpha_c @ enc.mc
    cp = alpha_p @ enc.mp
    lam = T.softmax(model.mix(T.concat([ms, cc, cp], axis=-1)), axis=-1)
    pg = T.softmax(model.gen(ms), axis=-1)
    return DecoderOutput(ms, alpha_c, alpha_p, lam, pg)


# -- extended vocabulary and batches ------------------------------------------


@dataclass
class CopyVocab:
    """Output vocabulary extended with a document's out-of-vocabulary source words."""

    vocab: Vocabulary
    oov: list[str] = field(default_factory=list)

    @classmethod
    def for_source(cls, vocab: Vocabulary, source: Sequence[str]) -> "CopyVocab":
        oov: list[str] = []
        for tok in source:
            if not vocab.in_output(tok) and tok not in oov:
                oov.append(tok)
        return cls(vocab, oov)

    def __len__(self) -> int:
        return self.vocab.output_size + len(self.oov)

    def ext_id(self, tok: str) -> int | None:
        if self.vocab.in_output(tok):
            return self.vocab.stoi[tok]
        try:
            return self.vocab.output_size + self.oov.index(tok)
        except ValueError:
            return None

    def token(self, ext_id: int) -> str:
        v = self.vocab.output_size
        return self.vocab.itos[ext_id] if ext_id < v else self.oov[ext_id - v]

    def input_ids(self, ext_ids) -> np.ndarray:
        """Map extended ids to input-embedding ids."""
        ext_ids = np.asarray(ext_ids)
        out = ext_ids.copy()
        v = self.vocab.output_size
        big = ext_ids >= v
        if big.any():
            out[big] = [self.vocab.lookup(self.oov[i - v]) for i in ext_ids[big]]
        return out


@dataclass
class Triple:
    """Training / scoring unit: source, prototype and target summary."""

    source: tuple[str, ...]
    prototype: Prototype
    summary: tuple[str, ...]
    id: str = ""
    alignment: tuple[tuple[int, int], ...] = ()


@dataclass
class CopyBatch:
    src_ids: np.ndarray
    src_pad: np.ndarray
    proto_ids: np.ndarray
    proto_pad: np.ndarray
    dec_in: np.ndarray  # (B, T): BOS + summary
    tgt_mask: np.ndarray  # (B, T) 1.0 on real target steps (summary + EOS)
    gen_ids: np.ndarray  # (B, T) output-vocab id of the target, 0 when out of vocabulary
    in_vocab: np.ndarray  # (B, T) 1.0 when the target is in the output vocabulary
    src_match: np.ndarray  # (B, T, L) 1.0 where source token == target
    proto_match: np.ndarray  # (B, T, K)

    @property
    def size(self) -> int:
        return self.src_ids.shape[0]


def _pad(seqs, fill=PAD_ID):
    n = max(len(s) for s in seqs)
    out = np.full((len(seqs), n), fill, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = s
    lengths = np.array([len(s) for s in seqs])
    return out, np.arange(n)[None, :] >= lengths[:, None]


def make_batch(triples: Sequence[Triple], vocab: Vocabulary) -> CopyBatch:
    src_ids, src_pad = _pad([vocab.encode(t.source) for t in triples])
    proto_ids, proto_pad = _pad([vocab.encode(t.prototype.tokens) for t in triples])
    targets = [list(t.summary) + [EOS] for t in triples]
    dec_in, dec_pad = _pad([[BOS_ID] + vocab.encode(t.summary) for t in triples])
    B, n_t = dec_in.shape
    gen_ids = np.zeros((B, n_t), dtype=np.int64)
    in_vocab = np.zeros((B, n_t))
    src_match = np.zeros((B, n_t, src_ids.shape[1]))
    proto_match = np.zeros((B, n_t, proto_ids.shape[1]))
    for b, (t, tgt) in enumerate(zip(triples, targets)):
        src = np.array(t.source, dtype=object)
        proto = np.array(t.prototype.tokens, dtype=object)
        for i, tok in enumerate(tgt):
            if vocab.in_output(tok):
                gen_ids[b, i] = vocab.stoi[tok]
                in_vocab[b, i] = 1.0
            src_match[b, i, : len(src)] = src == tok
            proto_match[b, i, : len(proto)] = proto == tok
    return CopyBatch(
        src_ids, src_pad, proto_ids, proto_pad, dec_in, (~dec_pad).astype(np.float64),
        gen_ids, in_vocab, src_match, proto_match,
    )


def encode_batch(model: AbstractorModel, batch: CopyBatch) -> EncodedPair:
    return joint_encode(model, batch.src_ids, batch.src_pad, batch.proto_ids, batch.proto_pad)


def target_probs(out: DecoderOutput, batch: CopyBatch) -> T.Tensor:
    """Mixture probability of each target token, ``(B, T)``.

    Targets outside the output vocabulary get only copy mass.
    """
    B, n_t = batch.gen_ids.shape
    bi, ti = np.meshgrid(np.arange(B), np.arange(n_t), indexing="ij")
    p_gen = out.pg[bi, ti, batch.gen_ids] * batch.in_vocab
    p_src = (out.alpha_c * batch.src_match).sum(axis=-1)
    p_proto = (out.alpha_p * batch.proto_match).sum(axis=-1)
    return out.lam[..., 0] * p_gen + out.lam[..., 1] * p_src + out.lam[..., 2] * p_proto


# -- single-document inference views -------------------------------------------


@dataclass
class StepOutput:
    p: np.ndarray  # distribution over the extended vocabulary
    alpha_c: np.ndarray
    alpha_p: np.ndarray
    lam: np.ndarray
    ms: np.ndarray
    floored: bool = False


@dataclass
class DocContext:
    """One encoded document plus the id maps needed for decoding."""

    enc: EncodedPair
    copy_vocab: CopyVocab
    src_ext: np.ndarray
    proto_ext: np.ndarray
    source: tuple[str, ...]
    prototype: Prototype


def encode_document(model: AbstractorModel, vocab: Vocabulary, source: Sequence[str], prototype: Prototype) -> DocContext:
    cv = CopyVocab.for_source(vocab, source)
    with T.no_grad():
        enc = joint_encode(
            model,
            np.array([vocab.encode(source)]),
            np.zeros((1, len(source)), dtype=bool),
            np.array([vocab.encode(prototype.tokens)]),
            np.zeros((1, len(prototype)), dtype=bool),
        )
    return DocContext(
        enc,
        cv,
        np.array([cv.ext_id(t) for t in source]),
        np.array([cv.ext_id(t) for t in prototype.tokens]),
        tuple(source),
        prototype,
    )


def mixture_distribution(ctx: DocContext, lam, pg, alpha_c, alpha_p) -> np.ndarray:
    """Full distributions over the extended vocabulary for rows of step outputs."""
    n = lam.shape[0]
    V = pg.shape[-1]
    p = np.zeros((n, len(ctx.copy_vocab)))
    p[:, :V] = lam[:, :1] * pg
    rows = np.arange(n)[:, None]
    np.add.at(p, (rows, ctx.src_ext[None, :]), lam[:, 1:2] * alpha_c)
    np.add.at(p, (rows, ctx.proto_ext[None, :]), lam[:, 2:3] * alpha_p)
    return p


def decode_last(model: AbstractorModel, ctx: DocContext, prefixes: np.ndarray) -> list[StepOutput]:
    """Step outputs for the final position of each BOS-prefixed extended-id prefix."""
    prefixes = np.atleast_2d(prefixes)
    with T.no_grad():
        out = decode(model, ctx.enc, ctx.copy_vocab.input_ids(prefixes))
    lam = out.lam.data[:, -1]
    ac = out.alpha_c.data[:, -1]
    ap = out.alpha_p.data[:, -1]
    p = mixture_distribution(ctx, lam, out.pg.data[:, -1], ac, ap)
    return [StepOutput(p[i], ac[i], ap[i], lam[i], out.ms.data[i, -1]) for i in range(len(p))]


def decode_step(model: AbstractorModel, ctx: DocContext, prefix: Sequence[int]) -> StepOutput:
    if not len(prefix) or prefix[0] != BOS_ID:
        raise ValueError("prefix must begin with BOS")
    return decode_last(model, ctx, np.asarray([prefix]))[0]


def sequence_logprob(model: AbstractorModel, ctx: DocContext, target: Sequence[int]):
    """Teacher-forced log-probability of an EOS-terminated extended-id target.

    Returns ``(logprob, steps)``. Probabilities below ``PROB_FLOOR`` are
    floored and the corresponding step is flagged.
    """
    target = list(target)
    if not target or target[-1] != EOS_ID:
        raise ValueError("target must end with EOS")
    prefix = np.array([[BOS_ID] + target[:-1]])
    with T.no_grad():
        out = decode(model, ctx.enc, ctx.copy_vocab.input_ids(prefix))
    lam, pg = out.lam.data[0], out.pg.data[0]
    ac, ap = out.alpha_c.data[0], out.alpha_p.data[0]
    p = mixture_distribution(ctx, lam, pg, ac, ap)
    steps, total = [], 0.0
    for t, y in enumerate(target):
        prob = p[t, y]
        floored = prob < PROB_FLOOR
        total += float(np.log(max(prob, PROB_FLOOR)))
        steps.append(StepOutput(p[t], ac[t], ap[t], lam[t], out.ms.data[0, t], floored))
    return total, steps
