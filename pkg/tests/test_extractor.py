import numpy as np
import pytest

from protosum.config import ExtractorConfig, TrainConfig
from protosum.corpus import Document, build_vocab, synth_corpus
from protosum.extractor import (
    ExtractorModel,
    extract_prototype,
    extractor_loss,
    label_f1,
    pad_batch,
    score_corpus,
    score_words,
    train_extractor,
)
from protosum.labeler import label_corpus
from protosum.prototype import weighted_scores

SMALL = ExtractorConfig(d_model=16, n_blocks=1, n_heads=2, ffn_width=32, max_len=64)


def corpus(n, seed=0):
    examples = label_corpus(synth_corpus(seed, n))
    return examples, build_vocab([ex.doc for ex in examples], 1000, 1000)


def test_pad_batch():
    ids, pad = pad_batch([[5, 6, 7], [8]])
    assert ids.tolist() == [[5, 6, 7], [8, 0, 0]]
    assert pad.tolist() == [[False, False, False], [False, True, True]]


def test_zero_head_gives_half_and_log_two():
    examples, vocab = corpus(4)
    m = ExtractorModel(len(vocab), SMALL, 0)
    m.head.weight.data[:] = 0.0
    m.head.bias.data[:] = 0.0
    assert np.isclose(extractor_loss(m, examples, vocab).item(), np.log(2), atol=1e-12)
    s = score_words(m, examples[0].doc, vocab)
    assert np.allclose(s.word, 0.5) and np.allclose(s.weighted, 0.25)


def test_scores_ignore_padding_partners():
    examples, vocab = corpus(3)
    m = ExtractorModel(len(vocab), SMALL, 1)
    docs = [ex.doc for ex in examples]
    batched = score_corpus(m, docs, vocab)
    for doc, s in zip(docs, batched):
        alone = score_words(m, doc, vocab)
        assert np.allclose(s.word, alone.word, atol=1e-12)
        assert s.word.shape == (len(doc),)


def test_extract_prototype_is_top_k_in_source_order():
    doc = Document("d", (("a", "b", "c"), ("d", "e")), ("a",))
    scores = weighted_scores(np.array([0.9, 0.1, 0.8, 0.95, 0.2]), [3, 2])
    # sentence means 0.6 and 0.575; weighted 0.54 0.06 0.48 0.546 0.115
    proto = extract_prototype(doc, scores, 3)
    assert proto.positions == (0, 2, 3) and proto.tokens == ("a", "c", "d")
    assert extract_prototype(doc, scores, 1).tokens == ("d",)


def test_overlong_source_rejected():
    m = ExtractorModel(20, ExtractorConfig(d_model=8, n_blocks=1, n_heads=2, ffn_width=8, max_len=4), 0)
    with pytest.raises(ValueError, match="exceeds"):
        m.logits(np.ones((1, 5), dtype=int), np.zeros((1, 5), bool))


def test_learns_synthetic_labels_deterministically():
    examples, vocab = corpus(640, seed=3)
    train, valid = examples[:600], examples[600:]
    cfg = TrainConfig(batch_size=16, epochs=16, warmup=40)
    a = train_extractor(train, valid, vocab, SMALL, cfg, seed=5)
    assert label_f1(a.model, valid, vocab) > 0.9
    assert a.history[-1]["loss"] < a.history[0]["loss"]
    b = train_extractor(train, valid, vocab, SMALL, cfg, seed=5)
    sa, sb = a.model.state_dict(), b.model.state_dict()
    assert a.history == b.history and all(sa[k].tobytes() == sb[k].tobytes() for k in sa)
