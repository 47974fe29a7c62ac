"""``amr`` command line.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
``AMR_THREADS`` bounds the worker threads used for corpus-level work.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shlex
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .contrastive import TrainConfig, read_triplets, retrieval_accuracy, train
from .encoder import ReferenceEncoder, config_digest, load_encoder, read_encoder_header, save_encoder
from .errors import AmrError, DataError, NumericError
from .evaluate import StsPair, read_sts_tsv, read_transfer_jsonl, sts_evaluate, transfer_evaluate
from .graph import read_penman, serialize_penman, validate, write_penman
from .integrate import Strategy, integrate
from .linearize import Scheme, length_stats, linearize
from .mixer import (DictionaryTranslator, GraphCache, MixerConfig, SubprocessParser, SubprocessTranslator,
                    TemplateParser, dump_mixed, mix_batch, run_mixed_training)
from .pipeline import PipelineConfig, StageError, run_pipeline
from .store import VectorStore, load_vectors
from .vocab import base_vocabulary, build_vocab, corpus_pieces, count_symbols, load_vocab, save_vocab

log = logging.getLogger("amr")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def threads() -> int:
    try:
        return max(1, int(os.environ.get("AMR_THREADS", "1")))
    except ValueError:
        return 1


def _pmap(fn, items):
    n = threads()
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(n) as pool:
        return list(pool.map(fn, items))


def _write(text: str, out: str | None) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


# --------------------------------------------------------------------------
# Commands


def cmd_parse(args) -> int:
    graphs = read_penman(args.input)
    bad = 0
    for g in graphs:
        for v in validate(g):
            bad += 1
            print(f"{g.id or '?'}: {v.kind} {v.node or ''} {v.detail}".rstrip(), file=sys.stderr)
    if args.out:
        write_penman(graphs, args.out)
    summary = {"graphs": len(graphs), "nodes": sum(len(g.nodes) for g in graphs),
               "edges": sum(len(g.edges) for g in graphs),
               "reentrant_graphs": sum(bool(g.reentrant_nodes()) for g in graphs)}
    print(json.dumps(summary))
    return EXIT_DATA if bad else EXIT_OK


def cmd_linearize(args) -> int:
    graphs = read_penman(args.input)
    scheme = Scheme(args.scheme)
    seqs = _pmap(lambda g: str(linearize(g, scheme)), graphs)
    _write("".join(s + "\n" for s in seqs), args.out)
    return EXIT_OK


def cmd_stats(args) -> int:
    stats = length_stats(read_penman(args.input))
    print(json.dumps(stats.as_dict(), indent=2))
    return EXIT_OK


def cmd_vocab(args) -> int:
    graphs = read_penman(args.input)
    pieces = corpus_pieces(linearize(g).tokens for g in graphs) if args.pieces else ()
    v = build_vocab(count_symbols(graphs), base_vocabulary(pieces), args.threshold)
    save_vocab(v, args.out)
    print(json.dumps({"base": len(v.base), "extensions": len(v.extensions), "threshold": v.threshold}))
    return EXIT_OK


def _systems(args):
    lexicon = json.loads(Path(args.lexicon).read_text(encoding="utf-8")) if args.lexicon else {}
    if args.translator_cmd:
        translator = SubprocessTranslator(shlex.split(args.translator_cmd))
    else:
        translator = DictionaryTranslator(lexicon)
    if args.parser_cmd:
        parser = SubprocessParser(shlex.split(args.parser_cmd))
    else:
        reverse = {}
        for table in lexicon.values():
            for en, foreign in table.items():
                reverse.setdefault(foreign, en)
        parser = TemplateParser(reverse)
    return translator, parser


def _mixer_config(args) -> MixerConfig:
    langs = [l for l in args.languages.split(",") if l]
    return MixerConfig.uniform(langs, seed=args.seed, max_steps=args.steps, batch_size=args.batch_size,
                               require_english=not args.allow_no_english)


def cmd_train(args) -> int:
    triplets = read_triplets(args.triplets)
    vocab = load_vocab(args.vocab)
    enc = ReferenceEncoder(vocab, dim=args.dim, hidden=args.hidden, seed=args.seed)
    tc = TrainConfig(args.temperature, args.batch_size, args.lr, args.epochs, args.seed)
    if args.mixed:
        translator, parser = _systems(args)
        result = run_mixed_training(triplets, _mixer_config(args), translator, parser, enc, tc, GraphCache())
        summary = {"steps": len(result.losses), "losses": result.losses}
    else:
        result = train(triplets, tc, enc)
        summary = {"epochs": len(result.losses), "losses": result.losses,
                   "retrieval_accuracy": retrieval_accuracy(triplets, enc)}
    if not np.all(np.isfinite(enc.params)):
        raise NumericError("training produced non-finite parameters")
    save_encoder(enc, args.out, args.config_hash)
    print(json.dumps(summary))
    return EXIT_OK


def cmd_mix(args) -> int:
    if not args.dry_run:
        raise UsageError("mix only supports --dry-run; use 'train --mixed' to train")
    triplets = read_triplets(args.triplets)
    translator, parser = _systems(args)
    config = _mixer_config(args)
    m = min(args.batch_size, len(triplets))
    rng = np.random.default_rng([config.seed, args.step])
    idx = rng.choice(len(triplets), size=m, replace=False) if m else []
    batch = mix_batch([triplets[i] for i in idx], config, translator, parser, rng)
    _write(dump_mixed(batch), args.out)
    return EXIT_OK


def _read_sequences(path: str) -> tuple[list[str], list[list[str]]]:
    ids, seqs = [], []
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    for i, line in enumerate(lines):
        if not line.strip():
            continue
        key, sep, body = line.partition("\t")
        if not sep:
            key, body = str(i), line
        ids.append(key)
        seqs.append(body.split())
    return ids, seqs


def cmd_embed(args) -> int:
    vocab = load_vocab(args.vocab)
    enc = load_encoder(args.model, vocab)
    digest = read_encoder_header(args.model)["digest"]
    ids, seqs = _read_sequences(args.input)
    vectors = enc.embed(seqs) if seqs else np.zeros((0, enc.dim))
    VectorStore(ids, vectors, digest).save(args.out)
    return EXIT_OK


def cmd_integrate(args) -> int:
    text = load_vectors(args.text_vecs)
    amr = load_vectors(args.amr_vecs)
    zero = bytes(16)
    if not args.force and zero not in (text.digest, amr.digest) and text.digest != amr.digest:
        raise DataError("vector stores come from different configs; pass --force to combine")
    if text.ids != amr.ids:
        if set(text.ids) != set(amr.ids):
            raise DataError("text and AMR stores hold different ids")
    fused = integrate(text.vectors, amr.rows(text.ids), Strategy(args.strategy))
    digest = amr.digest if amr.digest != zero else text.digest
    VectorStore(text.ids, fused, digest).save(args.out)
    return EXIT_OK


def cmd_eval_sts(args) -> int:
    store = load_vectors(args.vecs)
    rows = read_sts_tsv(args.pairs)
    result = sts_evaluate(StsPair(store.get(a), store.get(b), gold, group) for a, b, gold, group in rows)
    _write(json.dumps(result.as_dict(), indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_eval_transfer(args) -> int:
    store = load_vectors(args.vecs)
    seen = [l for l in args.seen.split(",") if l]
    task = read_transfer_jsonl(args.data, store.rows, seen=seen)
    report = transfer_evaluate(task, seed=args.seed)
    _write(json.dumps(report.as_dict(), indent=2) + "\n", args.out)
    return EXIT_OK


def _parse_override(item: str):
    key, sep, value = item.partition("=")
    if not sep:
        raise UsageError(f"override {item!r} must look like key.path=value")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value


def cmd_pipeline(args) -> int:
    if args.fixture:
        from .fixture import fixture_dir
        config_path = fixture_dir() / "config.json"
    elif args.config:
        config_path = Path(args.config)
    else:
        raise UsageError("pipeline needs --config or --fixture")
    overrides = dict(_parse_override(o) for o in args.set or [])
    if args.seed is not None:
        overrides["seed"] = args.seed
    config = PipelineConfig.load(config_path, overrides)
    report = run_pipeline(config, args.out, force=args.force)
    if args.print:
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        print(f"report written to {Path(args.out) / 'report.json'}")
    return EXIT_OK


# --------------------------------------------------------------------------


def _add_mixing_args(p):
    p.add_argument("--languages", default="en,de,es,it,zh,fr,ar",
                   help="comma-separated language set, weighted uniformly")
    p.add_argument("--allow-no-english", action="store_true", help=argparse.SUPPRESS)
    p.add_argument("--lexicon", help="JSON {lang: {english: foreign}} for the dictionary translator")
    p.add_argument("--translator-cmd", help="external translator: reads 'lang<TAB>sentence' lines")
    p.add_argument("--parser-cmd", help="external parser: reads sentences, writes one-line PENMAN")
    p.add_argument("--steps", type=int, default=100)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="amr", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("parse", help="parse and validate a PENMAN file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", help="re-serialize the graphs here")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("linearize", help="DFS-linearize graphs, one sequence per line")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out")
    p.add_argument("--scheme", choices=[s.value for s in Scheme], default="free")
    p.set_defaults(func=cmd_linearize)

    p = sub.add_parser("stats", help="sequence lengths under both linearization schemes")
    p.add_argument("--in", dest="input", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("vocab", help="build the extended vocabulary")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--threshold", type=int, default=5)
    p.add_argument("--pieces", action="store_true", help="seed the base with corpus word pieces")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_vocab)

    p = sub.add_parser("train", help="train the reference AMR encoder")
    p.add_argument("--triplets", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--temperature", type=float, default=0.05)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=5e-5)
    p.add_argument("--epochs", type=int, default=9)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config-hash", help="config hash to embed in the model file")
    p.add_argument("--mixed", action="store_true", help="mix languages and text/graph items per step")
    _add_mixing_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("mix", help="show one mixed batch as JSONL")
    p.add_argument("--dry-run", action="store_true")
    p.add_argument("--triplets", required=True)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=int, default=0)
    p.add_argument("--out")
    _add_mixing_args(p)
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("embed", help="encode linearized sequences into a vector store")
    p.add_argument("--model", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--in", dest="input", required=True, help="lines 'seq' or 'id<TAB>seq'")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("integrate", help="fuse text and AMR vector stores")
    p.add_argument("--text-vecs", required=True)
    p.add_argument("--amr-vecs", required=True)
    p.add_argument("--strategy", choices=[s.value for s in Strategy], default="norm-concat")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_integrate)

    p = sub.add_parser("eval-sts", help="Spearman correlation of cosine scores")
    p.add_argument("--pairs", required=True, help="TSV id1, id2, gold[, group]")
    p.add_argument("--vecs", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval_sts)

    p = sub.add_parser("eval-transfer", help="zero-shot transfer with logistic regression")
    p.add_argument("--data", required=True, help="JSONL records; texts are looked up as vector ids")
    p.add_argument("--vecs", required=True)
    p.add_argument("--seen", default="", help="comma-separated seen languages")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval_transfer)

    p = sub.add_parser("pipeline", help="run every stage from one config")
    p.add_argument("--config")
    p.add_argument("--fixture", action="store_true", help="use the bundled toy fixture")
    p.add_argument("--out", default="amr-run")
    p.add_argument("--seed", type=int)
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config entry")
    p.add_argument("--force", action="store_true", help="overwrite artifacts of another config")
    p.add_argument("--print", action="store_true", help="print the report")
    p.set_defaults(func=cmd_pipeline)
    return ap


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        return _exit_code(exc.cause)
    if isinstance(exc, NumericError):
        return EXIT_NUMERIC
    return EXIT_DATA


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"amr: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AmrError, OSError, UnicodeDecodeError) as exc:
        print(f"amr: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except (FloatingPointError, OverflowError) as exc:
        print(f"amr: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
