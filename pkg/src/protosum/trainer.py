"""Generation loss (NLL plus two attention-guide terms) and the abstractor training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .abstractor import (
    AbstractorModel,
    CopyBatch,
    DecoderOutput,
    EncodedPair,
    PROB_FLOOR,
    Triple,
    decode,
    encode_batch,
    make_batch,
    target_probs,
)
from .config import AbstractorConfig, TrainConfig
from .corpus import Vocabulary
from .extractor import TrainResult
from .labeler import LabeledExample
from .numerics import tensor as T
from .numerics.optim import AdamState, adam_step

log = logging.getLogger(__name__)


class MissingPrototypeError(RuntimeError):
    pass


def attention_targets(example: LabeledExample | Triple, prototype_positions: Sequence[int] | None = None):
    """Guide targets per summary step.

    Returns ``(source, prototype)`` dicts: ``source[t]`` is the aligned source
    position l(t); ``prototype[t]`` is the prototype slot holding l(t), present
    only when that position made it into the prototype.
    """
    if prototype_positions is None:
        proto = example.gold_prototype if isinstance(example, LabeledExample) else example.prototype
        prototype_positions = proto.positions
    slot = {pos: k for k, pos in enumerate(prototype_positions)}
    source = {t: l for t, l in example.alignment}
    prototype = {t: slot[l] for t, l in source.items() if l in slot}
    return source, prototype


def triples_from_labels(examples: Sequence[LabeledExample]) -> list[Triple]:
    out = []
    for ex in examples:
        if ex.gold_prototype is None:
            raise MissingPrototypeError(
                f"document {ex.doc.id!r} has no gold prototype; run gen-prototypes first"
            )
        out.append(Triple(tuple(ex.doc.tokens), ex.gold_prototype, tuple(ex.doc.summary), ex.doc.id, ex.alignment))
    return out


def target_arrays(triples: Sequence[Triple], n_steps: int) -> tuple[np.ndarray, np.ndarray]:
    src_tgt = np.full((len(triples), n_steps), -1, dtype=np.int64)
    proto_tgt = np.full((len(triples), n_steps), -1, dtype=np.int64)
    for b, tr in enumerate(triples):
        source, prototype = attention_targets(tr)
        for t, l in source.items():
            src_tgt[b, t] = l
        for t, k in prototype.items():
            proto_tgt[b, t] = k
    return src_tgt, proto_tgt


@dataclass
class GenLossBreakdown:
    main: T.Tensor
    attn_sum: T.Tensor
    attn_proto: T.Tensor
    total: T.Tensor
    lambda_sum: float
    lambda_proto: float

    def values(self) -> dict[str, float]:
        return {
            "main": self.main.item(),
            "attn_sum": self.attn_sum.item(),
            "attn_proto": self.attn_proto.item(),
            "total": self.total.item(),
        }


def _neg_log_mean(selected: T.Tensor) -> T.Tensor:
    if selected.shape[0] == 0:
        return T.Tensor(0.0)
    return -T.log(T.clamp_min(selected, PROB_FLOOR)).sum() * (1.0 / selected.shape[0])


def gen_loss(
    out: DecoderOutput,
    enc: EncodedPair,
    batch: CopyBatch,
    src_tgt: np.ndarray,
    proto_tgt: np.ndarray,
    lambda_sum: float = 0.5,
    lambda_proto: float = 0.5,
    proto_guide: str = "decoder",
) -> GenLossBreakdown:
    probs = target_probs(out, batch)
    mask = batch.tgt_mask
    main = -(T.log(T.clamp_min(probs, PROB_FLOOR)) * mask).sum() * (1.0 / mask.sum())

    b, t = np.nonzero(src_tgt >= 0)
    attn_sum = _neg_log_mean(out.alpha_c[b, t, src_tgt[b, t]])

    b, t = np.nonzero(proto_tgt >= 0)
    if proto_guide == "decoder":
        attn_proto = _neg_log_mean(out.alpha_p[b, t, proto_tgt[b, t]])
    elif proto_guide == "encoder":
        attn_proto = _neg_log_mean(enc.proto_to_src[b, proto_tgt[b, t], src_tgt[b, t]])
    else:
        raise ValueError(f"unknown proto_guide {proto_guide!r}")

    total = main + attn_sum * lambda_sum + attn_proto * lambda_proto
    return GenLossBreakdown(main, attn_sum, attn_proto, total, lambda_sum, lambda_proto)


def batch_loss(model: AbstractorModel, triples: Sequence[Triple], vocab: Vocabulary, train_cfg: TrainConfig):
    batch = make_batch(triples, vocab)
    src_tgt, proto_tgt = target_arrays(triples, batch.dec_in.shape[1])
    enc = encode_batch(model, batch)
    out = decode(model, enc, batch.dec_in)
    return gen_loss(
        out, enc, batch, src_tgt, proto_tgt,
        train_cfg.lambda_sum, train_cfg.lambda_proto, train_cfg.proto_guide,
    )


def validation_loss(model, triples, vocab, train_cfg, batch_size: int = 64) -> float:
    """Step-weighted mean of the total loss over ``triples``."""
    total, steps = 0.0, 0
    with T.no_grad():
        for start in range(0, len(triples), batch_size):
            chunk = triples[start : start + batch_size]
            n = sum(len(t.summary) + 1 for t in chunk)
            total += batch_loss(model, chunk, vocab, train_cfg).total.item() * n
            steps += n
    return total / max(steps, 1)


def _batches(triples: Sequence[Triple], batch_size: int, rng: np.random.Generator):
    order = rng.permutation(len(triples))
    for start in range(0, len(order), batch_size):
        yield [triples[i] for i in order[start : start + batch_size]]


def train_abstractor(
    train: Sequence[Triple],
    valid: Sequence[Triple],
    vocab: Vocabulary,
    cfg: AbstractorConfig,
    train_cfg: TrainConfig,
    seed: int,
    on_step: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Teacher-forced training on (source, prototype, summary) triples.

    Keeps the weights with the lowest validation loss seen at the end of an epoch.
    """
    if any(t.prototype is None or len(t.prototype) == 0 for t in train):
        raise MissingPrototypeError("training triples need non-empty prototypes; run gen-prototypes first")
    model = AbstractorModel(len(vocab), vocab.output_size, cfg, seed)
    rng = np.random.default_rng(seed + 1)
    state = AdamState(cfg.d_model, train_cfg.warmup, train_cfg.lr_scale)
    params = model.parameters()
    history: list[dict] = []
    best, best_epoch, best_state = np.inf, -1, model.state_dict()
    for epoch in range(train_cfg.epochs):
        for batch in _batches(train, train_cfg.batch_size, rng):
            model.zero_grad()
            losses = batch_loss(model, batch, vocab, train_cfg)
            if not np.isfinite(losses.total.data):
                raise FloatingPointError(f"non-finite abstractor loss at step {state.step + 1}")
            losses.total.backward()
            grads = model.gradients()
            if not all(np.isfinite(g).all() for g in grads.values()):
                raise FloatingPointError(f"non-finite gradient at step {state.step + 1}")
            lr = adam_step(state, params, grads)
            row = {"step": state.step, "epoch": epoch, "lr": lr, **losses.values()}
            history.append(row)
            if on_step:
                on_step(row)
        v = validation_loss(model, valid, vocab, train_cfg) if valid else history[-1]["total"]
        log.info("abstractor epoch %d valid loss %.5f", epoch, v)
        if v < best:
            best, best_epoch, best_state = v, epoch, model.state_dict()
    model.load_state_dict(best_state)
    return TrainResult(model, history, best, best_epoch)


TOY_CONFIG = AbstractorConfig(
    n_blocks=1, n_heads=2, d_word=8, d_model=8, ffn_width=16, max_source_len=16, max_decode_len=16
)


def toy_batch(seed: int) -> tuple[list[Triple], Vocabulary]:
    """Two random (source L=5, prototype K=3, summary T=4) triples whose
    summaries mix in-vocabulary tokens with copy-only ones."""
    from .corpus import RESERVED
    from .prototype import build_prototype

    rng = np.random.default_rng(seed)
    words = [f"t{i}" for i in range(8)]
    vocab = Vocabulary(list(RESERVED) + words, output_size=8)  # t4..t7 are copy-only
    triples = []
    for i in range(2):
        source = tuple(rng.choice(words, 5))
        positions = sorted(rng.choice(5, 3, replace=False).tolist())
        summary_pos = sorted(rng.choice(5, 3, replace=False).tolist())
        summary = tuple(source[p] for p in summary_pos) + (str(rng.choice(words)),)
        alignment = tuple((t, p) for t, p in enumerate(summary_pos))
        triples.append(Triple(source, build_prototype(source, positions), summary, f"toy{i}", alignment))
    return triples, vocab


def toy_loss_check(seed: int, coords_per_tensor: int | None = 6, proto_guide: str = "decoder") -> float:
    """Finite-difference check of the full generation loss on the toy
    configuration. ``coords_per_tensor`` samples that many coordinates per
    parameter tensor (``None`` checks every coordinate)."""
    from .numerics.gradcheck import grad_check

    triples, vocab = toy_batch(seed)
    model = AbstractorModel(len(vocab), vocab.output_size, TOY_CONFIG, seed)
    train_cfg = TrainConfig(proto_guide=proto_guide)
    params = list(model.parameters().values())
    coords = None
    if coords_per_tensor is not None:
        rng = np.random.default_rng(seed + 7919)
        coords = {
            i: rng.choice(p.data.size, min(coords_per_tensor, p.data.size), replace=False)
            for i, p in enumerate(params)
        }
    return grad_check(lambda: batch_loss(model, triples, vocab, train_cfg).total, params, coords=coords)
