"""Command-line driver for the extract-then-abstract pipeline.

Commands run in dependency order::

    synth -> label -> train-extractor -> gen-prototypes -> train-abstractor
          -> summarize -> eval
                       -> length-sweep

Every artifact lands in the output directory (``--out``, else the
``PROTOSUM_OUT`` environment variable, else ``out_dir`` from the config).
CSV reports start with a ``#`` provenance line; line-delimited JSON files get
a ``.meta.json`` sidecar; checkpoints carry the same fields in their manifest.

Exit codes: 0 success, 1 usage, 2 missing prerequisite, 3 validation failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import abstractor as abs_mod
from .config import RunConfig, load_config
from .corpus import (
    CorpusError,
    Document,
    Vocabulary,
    build_vocab,
    read_corpus,
    split_corpus,
    synth_corpus,
    truncate,
    write_corpus,
)
from .extractor import ExtractorModel, label_f1, score_corpus, train_extractor
from .infer import default_k_from_lengths, summarize
from .labeler import bin_length, label_corpus, make_gold_prototype, read_labels, write_labels
from .numerics.checkpoint import checkpoint_exists, load_checkpoint, save_checkpoint
from .numerics.gradcheck import primitive_checks
from .rouge import METRICS, corpus_scores
from .trainer import toy_loss_check, train_abstractor, triples_from_labels

log = logging.getLogger("protosum")

OUT_ENV = "PROTOSUM_OUT"
GRAD_TOLERANCE = 1e-4
SWEEP_COLUMNS = ("K", "r1_p", "r1_r", "r1_f", "r2_p", "r2_r", "r2_f", "rl_p", "rl_r", "rl_f", "len_mean", "len_std")

EXIT_OK, EXIT_USAGE, EXIT_MISSING, EXIT_INVALID = 0, 1, 2, 3


class UsageError(Exception):
    pass


class MissingDependency(Exception):
    def __init__(self, what: str, command: str):
        super().__init__(f"{what} not found; run `protosum {command}` first")


class ValidationFailure(Exception):
    pass


@dataclasses.dataclass(frozen=True)
class Paths:
    root: Path

    def __getattr__(self, name):
        files = {
            "corpus": "corpus.jsonl",
            "labels": "labels.jsonl",
            "gold_labels": "gold_labels.jsonl",
            "scores": "extractor_scores.jsonl",
            "extractor": "extractor",
            "abstractor": "abstractor",
            "extractor_log": "extractor_log.csv",
            "abstractor_log": "abstractor_log.csv",
            "summaries": "summaries.jsonl",
            "eval": "eval.csv",
            "sweep": "length_sweep.csv",
            "sweep_lengths": "length_sweep_outputs.jsonl",
            "grad_check": "grad_check.csv",
        }
        if name not in files:
            raise AttributeError(name)
        return self.root / files[name]


# -- artifact writers ------------------------------------------------------------


def provenance(cfg: RunConfig) -> dict:
    return {"config_hash": cfg.digest(), "seed": cfg.seed}


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_csv(path: Path, cfg: RunConfig, columns: Sequence[str], rows: Sequence[dict]) -> None:
    prov = provenance(cfg)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config_hash={prov['config_hash']} seed={prov['seed']}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def read_csv(path: str | Path) -> list[dict[str, str]]:
    """Read a report written by :func:`write_csv`, skipping provenance lines."""
    with open(path, encoding="utf-8") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def write_jsonl(path: Path, cfg: RunConfig, records, **meta) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    write_meta(path, cfg, **meta)


def write_meta(path: Path, cfg: RunConfig, **meta) -> None:
    body = {**provenance(cfg), **meta}
    Path(f"{path}.meta.json").write_text(json.dumps(body, indent=1, sort_keys=True) + "\n")


# -- loading with dependency checks ------------------------------------------------


def _require(path: Path, what: str, command: str) -> Path:
    if not path.exists():
        raise MissingDependency(what, command)
    return path


def load_docs(cfg: RunConfig, paths: Paths) -> list[Document]:
    src = Path(cfg.corpus.path) if cfg.corpus.path else _require(paths.corpus, "corpus", "synth")
    if not src.exists():
        raise MissingDependency(f"corpus {src}", "synth")
    docs = read_corpus(src)
    if not docs:
        raise ValidationFailure(f"corpus {src} is empty")
    return [truncate(d, cfg.corpus.max_source_len, cfg.corpus.max_summary_len) for d in docs]


def splits(cfg: RunConfig, items: Sequence):
    return split_corpus(items, cfg.corpus.valid_frac, cfg.corpus.test_frac)


def load_labels(cfg: RunConfig, paths: Paths, gold: bool = False):
    docs = load_docs(cfg, paths)
    if gold:
        path = _require(paths.gold_labels, "gold prototypes", "gen-prototypes")
    else:
        path = _require(paths.labels, "labels", "label")
    return read_labels(path, docs)


def load_extractor(cfg: RunConfig, paths: Paths) -> tuple[ExtractorModel, Vocabulary]:
    if not checkpoint_exists(paths.extractor):
        raise MissingDependency("extractor checkpoint", "train-extractor")
    params, meta = load_checkpoint(paths.extractor)
    vocab = Vocabulary(meta["vocab"], meta["output_size"])
    model = ExtractorModel(len(vocab), cfg.extractor, cfg.seed)
    model.load_state_dict(params)
    return model, vocab


def load_abstractor(cfg: RunConfig, paths: Paths, vocab: Vocabulary) -> tuple[abs_mod.AbstractorModel, int | None]:
    if not checkpoint_exists(paths.abstractor):
        raise MissingDependency("abstractor checkpoint", "train-abstractor")
    params, meta = load_checkpoint(paths.abstractor)
    model = abs_mod.AbstractorModel(len(vocab), vocab.output_size, cfg.abstractor, cfg.seed)
    model.load_state_dict(params)
    return model, meta.get("default_k")


# -- commands -------------------------------------------------------------------


def cmd_synth(cfg: RunConfig, paths: Paths, args) -> None:
    docs = synth_corpus(cfg.seed, cfg.corpus.n_docs, cfg.corpus.synth)
    write_corpus(paths.corpus, docs)
    write_meta(paths.corpus, cfg, n_docs=len(docs))
    log.info("wrote %d documents to %s", len(docs), paths.corpus)


def cmd_label(cfg: RunConfig, paths: Paths, args) -> None:
    examples = label_corpus(load_docs(cfg, paths))
    write_labels(paths.labels, examples)
    write_meta(paths.labels, cfg, n_docs=len(examples))
    log.info("labelled %d documents", len(examples))


def cmd_train_extractor(cfg: RunConfig, paths: Paths, args) -> None:
    train, valid, _ = splits(cfg, load_labels(cfg, paths))
    vocab = build_vocab([ex.doc for ex in train], cfg.corpus.input_vocab, cfg.corpus.output_vocab)
    res = train_extractor(train, valid, vocab, cfg.extractor, cfg.extractor_train, cfg.seed)
    f1 = label_f1(res.model, valid, vocab) if valid else float("nan")
    meta = {
        **provenance(cfg),
        "vocab": vocab.itos,
        "output_size": vocab.output_size,
        "best_epoch": res.best_epoch,
        "valid_loss": res.best_valid,
        "valid_label_f1": f1,
    }
    save_checkpoint(paths.extractor, res.model.state_dict(), meta)
    every = max(1, cfg.extractor_train.log_every)
    rows = [r for r in res.history if r["step"] % every == 0]
    write_csv(paths.extractor_log, cfg, ("step", "epoch", "lr", "loss"), rows)
    print(f"extractor validation word-label F1 {f1:.4f}")


def cmd_gen_prototypes(cfg: RunConfig, paths: Paths, args) -> None:
    examples = load_labels(cfg, paths)
    model, vocab = load_extractor(cfg, paths)
    scores = score_corpus(model, [ex.doc for ex in examples], vocab)
    gold = [
        ex.with_prototype(make_gold_prototype(ex.doc, ex.oracle_sentences, s, ex.K))
        for ex, s in zip(examples, scores)
    ]
    write_labels(paths.gold_labels, gold)
    write_meta(paths.gold_labels, cfg, n_docs=len(gold))
    write_jsonl(
        paths.scores, cfg, ({"id": ex.doc.id, **s.to_json()} for ex, s in zip(examples, scores)), n_docs=len(gold)
    )
    log.info("gold prototypes for %d documents", len(gold))


def cmd_train_abstractor(cfg: RunConfig, paths: Paths, args) -> None:
    train, valid, _ = splits(cfg, load_labels(cfg, paths, gold=True))
    _, vocab = load_extractor(cfg, paths)
    res = train_abstractor(
        triples_from_labels(train), triples_from_labels(valid), vocab, cfg.abstractor, cfg.abstractor_train, cfg.seed
    )
    default_k = default_k_from_lengths([len(ex.doc.summary) for ex in valid]) if valid else None
    meta = {
        **provenance(cfg),
        "default_k": default_k,
        "best_epoch": res.best_epoch,
        "valid_loss": res.best_valid,
    }
    save_checkpoint(paths.abstractor, res.model.state_dict(), meta)
    every = max(1, cfg.abstractor_train.log_every)
    rows = [r for r in res.history if r["step"] % every == 0]
    write_csv(paths.abstractor_log, cfg, ("step", "lr", "main", "attn_sum", "attn_proto", "total"), rows)
    print(f"abstractor best validation loss {res.best_valid:.4f} (epoch {res.best_epoch}); default K {default_k}")


def _test_docs(cfg: RunConfig, paths: Paths) -> list[Document]:
    _, _, test = splits(cfg, load_docs(cfg, paths))
    return test[: cfg.infer.max_docs] if cfg.infer.max_docs else test


def _decode_all(cfg, paths, docs, K):
    ext, vocab = load_extractor(cfg, paths)
    model, default_k = load_abstractor(cfg, paths, vocab)
    by_reference = K is None and cfg.infer.k_from_reference
    if K is None and default_k is None and not by_reference:
        raise ValidationFailure("no --k given and the abstractor has no calibrated default K")
    out = []
    for doc in docs:
        if by_reference:
            k = bin_length(len(doc.summary))
        else:
            k = K if K is not None else default_k
        out.append(
            summarize(ext, model, vocab, doc, K=k, n_beam=cfg.infer.n_beam, max_len=cfg.infer.max_len(k))
        )
    return out


def cmd_summarize(cfg: RunConfig, paths: Paths, args) -> None:
    docs = _test_docs(cfg, paths)
    results = _decode_all(cfg, paths, docs, args.k)
    records = (
        {
            "id": d.id,
            "K": r.K,
            "prototype": r.prototype.to_json(),
            "summary": list(r.tokens),
            "logprob": r.logprob,
            "repeated_trigrams": r.repeated_trigrams,
        }
        for d, r in zip(docs, results)
    )
    write_jsonl(paths.summaries, cfg, records, n_docs=len(docs), k=args.k)
    log.info("summarised %d documents", len(docs))


def _score_rows(pairs) -> dict:
    s = corpus_scores(pairs)
    row = {}
    for prefix, m in zip(("r1", "r2", "rl"), METRICS):
        row[f"{prefix}_p"], row[f"{prefix}_r"], row[f"{prefix}_f"] = s[m].precision, s[m].recall, s[m].f1
    return row


def cmd_eval(cfg: RunConfig, paths: Paths, args) -> None:
    cand_path = Path(args.candidates) if args.candidates else _require(paths.summaries, "summaries", "summarize")
    if not cand_path.exists():
        raise MissingDependency(f"candidates {cand_path}", "summarize")
    refs = {d.id: d.summary for d in load_docs(cfg, paths)}
    pairs = []
    with open(cand_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec.get("id") not in refs:
                raise ValidationFailure(f"candidate at line {lineno} has unknown id {rec.get('id')!r}")
            pairs.append((rec["summary"], refs[rec["id"]]))
    s = corpus_scores(pairs)
    rows = [{"metric": m, "precision": s[m].precision, "recall": s[m].recall, "f1": s[m].f1} for m in METRICS]
    write_csv(paths.eval, cfg, ("metric", "precision", "recall", "f1"), rows)
    for r in rows:
        print(f"{r['metric']:7s} P {r['precision']:.4f} R {r['recall']:.4f} F1 {r['f1']:.4f}")


def cmd_length_sweep(cfg: RunConfig, paths: Paths, args) -> None:
    docs = _test_docs(cfg, paths)
    ks = (args.k,) if args.k is not None else cfg.infer.sweep_ks
    rows, lengths = [], []
    for K in ks:
        results = _decode_all(cfg, paths, docs, K)
        lens = np.array([len(r.tokens) for r in results], dtype=np.float64)
        rows.append({"K": K, **_score_rows((r.tokens, d.summary) for r, d in zip(results, docs)),
                     "len_mean": float(lens.mean()), "len_std": float(lens.std())})
        lengths.extend({"id": d.id, "K": K, "length": len(r.tokens)} for d, r in zip(docs, results))
        log.info("K=%d mean length %.2f", K, lens.mean())
    write_csv(paths.sweep, cfg, SWEEP_COLUMNS, rows)
    write_jsonl(paths.sweep_lengths, cfg, lengths, ks=list(ks), n_docs=len(docs))
    for r in rows:
        print(f"K={r['K']:3d} len {r['len_mean']:6.2f} ± {r['len_std']:5.2f}  R-L P {r['rl_p']:.3f} R {r['rl_r']:.3f} F {r['rl_f']:.3f}")


def cmd_grad_check(cfg: RunConfig, paths: Paths, args) -> None:
    rows = []
    for name, err in primitive_checks(cfg.seed).items():
        rows.append({"check": f"primitive:{name}", "max_rel_error": err})
    for guide in ("decoder", "encoder"):
        rows.append({"check": f"abstractor_loss:{guide}", "max_rel_error": toy_loss_check(cfg.seed, proto_guide=guide)})
    write_csv(paths.grad_check, cfg, ("check", "max_rel_error"), rows)
    worst = max(r["max_rel_error"] for r in rows)
    print(f"max relative error {worst:.3e}")
    if worst > GRAD_TOLERANCE:
        raise ValidationFailure(f"gradient check failed: {worst:.3e} > {GRAD_TOLERANCE:g}")


COMMANDS = {
    "synth": cmd_synth,
    "label": cmd_label,
    "train-extractor": cmd_train_extractor,
    "gen-prototypes": cmd_gen_prototypes,
    "train-abstractor": cmd_train_abstractor,
    "summarize": cmd_summarize,
    "eval": cmd_eval,
    "length-sweep": cmd_length_sweep,
    "grad-check": cmd_grad_check,
}


# -- argument handling ------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--seed", type=int, metavar="N", help="override the configured seed")
    common.add_argument("--k", type=int, metavar="N", help="prototype size K (summarize, length-sweep)")
    common.add_argument("--out", metavar="DIR", help=f"output directory (else ${OUT_ENV}, else config out_dir)")
    parser = _Parser(prog="protosum", description="Length-controllable extract-then-abstract summarization.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "eval":
            p.add_argument("--candidates", metavar="PATH", help="summaries file to score (default: summaries.jsonl)")
    return parser


def resolve(args) -> tuple[RunConfig, Paths]:
    try:
        cfg = load_config(args.config)
    except FileNotFoundError as e:
        raise UsageError(f"config file not found: {args.config}") from e
    except (ValueError, TypeError) as e:
        raise UsageError(f"invalid config: {e}") from e
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.k is not None and args.k < 1:
        raise UsageError("--k must be at least 1")
    out = args.out or os.environ.get(OUT_ENV) or cfg.out_dir
    root = Path(out)
    root.mkdir(parents=True, exist_ok=True)
    return cfg, Paths(root)


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        args = build_parser().parse_args(argv)
        cfg, paths = resolve(args)
        COMMANDS[args.command](cfg, paths, args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except MissingDependency as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MISSING
    except (ValidationFailure, CorpusError, FloatingPointError) as e:
        print(f"validation failure: {e}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
