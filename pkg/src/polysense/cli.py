"""Command-line interface.

Subcommands: train, disambiguate, wsi, simeval, neighbors, export, synth.
Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Hyperparameters resolve as: explicit flags > TOML config file > built-in
defaults; the effective config is stored inside the model file.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

import numpy as np

from . import evaluation as ev
from .corpus import CorpusError, CorpusFile
from .disambig import disambiguate, nearest_neighbors
from .inference import NumericsError, train
from .model import (
    ModelFormatError,
    TrainConfig,
    active_sense_counts,
    export_text,
    load_model,
    polysemy_rate,
    save_model,
)
from .synth import PlantedWord, SynthLanguage, SynthSpec, generate_synthetic

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage problems by default; this CLI reserves 2 for data errors
    def error(self, message):
        raise UsageError(message)


def _parse_corpus_flag(value: str) -> CorpusFile:
    parts = value.split(",")
    if len(parts) != 4:
        raise UsageError(
            f"--corpus expects 'en_path,fg_path,align_path,lang', got {value!r}"
        )
    return CorpusFile(*[p.strip() for p in parts])


_CONFIG_FIELDS = {f.name: f for f in dataclasses.fields(TrainConfig)}


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    descriptions = {
        "alpha": "concentration of the sense prior (higher = more senses)",
        "max_senses": "maximum senses per English word",
        "dim": "embedding dimension",
        "window": "per-side English window (crosslingual contexts)",
        "cross_window": "per-side window in the aligned foreign sentence",
        "sense_threshold": "minimum posterior weight for a sense to train / count as active",
        "lr": "initial learning rate (decays linearly to ~0)",
        "iterations": "training epochs over the concatenated corpus",
        "negatives": "negative samples per context word",
        "noise_power": "unigram distortion power for the noise distribution",
        "min_count": "drop words seen fewer times than this",
        "variant": "training variant: full, one-sided, or mono",
        "seed": "seed for all randomness",
        "subsample": "frequent-word subsampling threshold (0 disables)",
        "stick_decay": "per-occurrence decay of sense-assignment counts (0 = plain accumulation)",
        "estep_noise_weight": "weight of noise-sample terms in per-token sense scores",
        "prior_scores": "stick prior form in token scores: mean = log E[p], log = E[log p]",
        "threads": ">1 enables the lock-free parallel mode (non-deterministic)",
    }
    choices = {"variant": ["full", "one-sided", "mono"], "prior_scores": ["mean", "log"]}
    types = {"int": int, "float": float, "str": str}
    for name, fld in _CONFIG_FIELDS.items():
        flag = "--" + name.replace("_", "-")
        help_text = f"{descriptions[name]} (default {fld.default})"
        if name in choices:
            parser.add_argument(flag, choices=choices[name], default=None, help=help_text)
        elif fld.type == "bool":
            parser.add_argument(flag, action=argparse.BooleanOptionalAction, default=None,
                                help=help_text)
        else:
            parser.add_argument(flag, type=types[fld.type], default=None, help=help_text)


def _resolve_config(args) -> TrainConfig:
    values = {}
    if args.config:
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        with open(args.config, "rb") as fh:
            doc = tomllib.load(fh)
        unknown = set(doc) - set(_CONFIG_FIELDS)
        if unknown:
            raise UsageError(f"unknown config keys in {args.config}: {sorted(unknown)}")
        values.update(doc)
    for name in _CONFIG_FIELDS:
        flag_value = getattr(args, name)
        if flag_value is not None:
            values[name] = flag_value
    try:
        config = TrainConfig(**values)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    if config.variant == "mono" and config.cross_window > 0:
        raise UsageError("mono variant has no foreign sentence; --cross-window must be 0")
    return config


def _config_echo(config: TrainConfig) -> str:
    pairs = " ".join(f"{f.name}={getattr(config, f.name)}" for f in dataclasses.fields(TrainConfig))
    return f"config: {pairs}"


def cmd_train(args) -> int:
    manifest = [_parse_corpus_flag(v) for v in args.corpus]
    if args.resume:
        model = load_model(args.resume)
        print(_config_echo(model.config))
        model = train(manifest, start_model=model, progress=not args.quiet)
    else:
        config = _resolve_config(args)
        print(_config_echo(config))
        if config.variant == "mono":
            print("warning: mono variant ignores the foreign side of the corpus", file=sys.stderr)
        model = train(manifest, config, progress=not args.quiet)
    save_model(model, args.out)
    hist = np.bincount(active_sense_counts(model).astype(np.int64))
    hist_s = " ".join(f"{k}:{int(n)}" for k, n in enumerate(hist) if n and k > 0)
    print(f"active-senses {hist_s}")
    print(f"polysemy-rate {polysemy_rate(model):.4f}")
    print(f"model written to {args.out}")
    return EXIT_OK


def cmd_disambiguate(args) -> int:
    model = load_model(args.model)
    if args.word is not None:
        rows = [(args.word, tuple(args.context.split()) if args.context else ())]
    elif args.tsv:
        rows = []
        with open(args.tsv, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t", 1)
                ctx = tuple(parts[1].split()) if len(parts) > 1 else ()
                rows.append((parts[0], ctx))
    else:
        raise UsageError("provide either --word (with optional --context) or --tsv")
    for word, ctx in rows:
        probs = disambiguate(model, word, ctx)
        print(word + "\t" + "\t".join(f"{p:.6g}" for p in probs))
    return EXIT_OK


def cmd_wsi(args) -> int:
    model = load_model(args.model)
    instances = ev.read_wsi_tsv(args.tsv)
    report = ev.wsi_evaluate(model, instances, aggregate=args.aggregate)
    for word in sorted(report.per_word):
        print(f"{word}\tARI\t{report.per_word[word]:.4f}")
    if report.skipped:
        print(f"skipped out-of-vocabulary targets: {' '.join(report.skipped)}", file=sys.stderr)
    print(f"average\tARI\t{report.average:.4f}")
    return EXIT_OK


def cmd_simeval(args) -> int:
    model = load_model(args.model)
    rows = ev.read_similarity_tsv(args.tsv)
    rho, scores, skipped = ev.similarity_evaluate(model, rows, mode=args.mode)
    print(f"pairs\t{len(scores)}")
    if skipped:
        print(f"skipped\t{skipped}")
    print(f"spearman\t{rho:.4f}")
    return EXIT_OK


def cmd_neighbors(args) -> int:
    model = load_model(args.model)
    hits = nearest_neighbors(model, args.word, args.sense, n=args.n,
                             include_foreign=args.include_foreign)
    for label, sim in hits:
        print(f"{label}\t{sim:.4f}")
    return EXIT_OK


def cmd_export(args) -> int:
    model = load_model(args.model)
    rows = export_text(model, args.out, include_foreign=not args.no_foreign)
    print(f"wrote {rows} vectors to {args.out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    langs = args.lang or ["f1"]
    merged = set(args.merge or [])
    unknown = merged - set(langs)
    if unknown:
        raise UsageError(f"--merge names unknown language(s): {sorted(unknown)}")
    spec = SynthSpec(
        planted=(PlantedWord(args.planted_word, args.senses, args.topic_words),),
        languages=tuple(SynthLanguage(lang, merge=lang in merged) for lang in langs),
        pairs=args.pairs,
        sentence_length=args.sentence_length,
        topic_rate=args.topic_rate,
        filler_words=args.filler_words,
        wsi_instances=args.instances,
        wsi_context=args.context_size,
        seed=args.seed,
    )
    data = generate_synthetic(spec, args.out)
    for entry in data.manifest:
        print(f"corpus\t{entry.en_path},{entry.fg_path},{entry.align_path},{entry.lang}")
    print(f"wsi\t{data.wsi_path}")
    return EXIT_OK


def _build_parser() -> _Parser:
    parser = _Parser(prog="polysense",
                     description="Multi-sense word embeddings from word-aligned parallel corpora.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a model on one or more parallel corpora")
    p.add_argument("--corpus", action="append", required=True, metavar="EN,FG,ALIGN,LANG",
                   help="corpus file triple plus language tag; repeat for multilingual training")
    p.add_argument("--out", required=True, help="output model file")
    p.add_argument("--resume", help="checkpoint to continue training (its config wins)")
    p.add_argument("--config", help="TOML file with hyperparameters (flags override it)")
    p.add_argument("--quiet", action="store_true", help="suppress progress lines on stderr")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("disambiguate", help="posterior over senses for words in context")
    p.add_argument("--model", required=True)
    p.add_argument("--word", help="single target word")
    p.add_argument("--context", default="", help="space-separated context words")
    p.add_argument("--tsv", help="batch input: word <TAB> context words, one per line")
    p.set_defaults(func=cmd_disambiguate)

    p = sub.add_parser("wsi", help="score word-sense induction against gold clusters")
    p.add_argument("--model", required=True)
    p.add_argument("--tsv", required=True, help="target <TAB> gold <TAB> context words")
    p.add_argument("--aggregate", choices=["macro", "pooled"], default="macro")
    p.set_defaults(func=cmd_wsi)

    p = sub.add_parser("simeval", help="contextual-similarity correlation with human scores")
    p.add_argument("--model", required=True)
    p.add_argument("--tsv", required=True,
                   help="w1 <TAB> ctx1 <TAB> w2 <TAB> ctx2 <TAB> human_score")
    p.add_argument("--mode", choices=["avg", "max"], default="avg")
    p.set_defaults(func=cmd_simeval)

    p = sub.add_parser("neighbors", help="nearest sense/word vectors by cosine")
    p.add_argument("--model", required=True)
    p.add_argument("--word", required=True)
    p.add_argument("--sense", type=int, default=0)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--include-foreign", action="store_true")
    p.set_defaults(func=cmd_neighbors)

    p = sub.add_parser("export", help="write vectors as text")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-foreign", action="store_true", help="omit foreign word vectors")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("synth", help="generate a synthetic corpus with planted senses")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--lang", action="append", help="language tag; repeat for several languages")
    p.add_argument("--merge", action="append", metavar="LANG",
                   help="language in which all planted senses share one surface form")
    p.add_argument("--planted-word", default="poly0")
    p.add_argument("--senses", type=int, default=2)
    p.add_argument("--topic-words", type=int, default=40)
    p.add_argument("--pairs", type=int, default=20000)
    p.add_argument("--sentence-length", type=int, default=9)
    p.add_argument("--topic-rate", type=float, default=0.5)
    p.add_argument("--filler-words", type=int, default=60)
    p.add_argument("--instances", type=int, default=200)
    p.add_argument("--context-size", type=int, default=4)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (CorpusError, ModelFormatError, KeyError, ValueError, OSError) as exc:
        msg = exc.args[0] if exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
