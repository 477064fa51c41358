"""Command-line entry point.

Subcommands: learn-bpe, pretrain, finetune, rewrite, profile, evaluate,
aggregate. Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric
failure. Every run resolves one flat key=value configuration whose
sha256 hash is stamped into all output files.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import statistics
import sys

import numpy as np

from .bpe import learn_bpe, load_merges, save_merges
from .corpus import Corpus, load_corpus
from .errors import DataError, NumericError
from .lexstyle import (
    SeedLexicon,
    build_cooc,
    build_knn_graph,
    load_lexicon,
    propagate,
    raw_style_scores,
    save_lexicon,
)
from .metrics import style_profile, style_report
from .model import (
    EncDecParams,
    ModelConfig,
    ModelParams,
    StopConfig,
    cascade,
    finetune,
    load_checkpoint,
    pretrain,
    rewrite,
    save_checkpoint,
)
from .noise import MaskConfig, NoiseConfig
from .version import __version__

DEFAULTS: dict[str, object] = {
    "seed": 0,
    "bpe.n_merges": 2000,
    "model.n_layers": 2,
    "model.d_model": 64,
    "model.n_heads": 4,
    "model.d_ffn": 0,
    "model.dropout": 0.1,
    "model.stream_len": 64,
    "model.learning_rate": 1e-3,
    "model.batch_size": 8,
    "model.adam_beta1": 0.9,
    "model.adam_beta2": 0.999,
    "model.adam_eps": 1e-8,
    "stop.max_steps": 500,
    "stop.patience": 3,
    "stop.eval_every": 100,
    "mask.p_mask": 0.15,
    "mask.p_to_mask_token": 0.8,
    "mask.p_to_random": 0.1,
    "mask.p_unchanged": 0.1,
    "noise.p_drop": 0.1,
    "noise.p_blank": 0.1,
    "lexstyle.f_min": 5,
    "lexstyle.context_size": 2000,
    "lexstyle.k": 10,
    "lexstyle.tol": 1e-6,
    "lexstyle.max_iter": 200,
    "synstyle.caps": "5,1,1,20,60",
    "rewrite.max_len_factor": 2,
    "rewrite.max_len_bias": 10,
}

AGGREGATE_METRICS = (
    "content.bleu",
    "content.rouge1",
    "content.rouge2",
    "content.rouge3",
    "content.rougeL",
    "alignment.lexical_mse",
    "alignment.syntactic_jsd",
    "alignment.surface_mse",
)


class _Parser(argparse.ArgumentParser):
    """argparse defaults to exit code 2 on usage errors; we reserve 2
    for data errors, so force usage failures onto exit code 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def parse_config_file(path: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected key=value")
                key, value = line.split("=", 1)
                entries[key.strip()] = value.strip()
    except OSError as exc:
        raise DataError(f"cannot read config file {path}: {exc}") from exc
    return entries


def resolve_config(
    file_entries: dict[str, str], seed: int | None
) -> tuple[dict[str, object], set[str]]:
    """Type file entries against the defaults; reject unknown keys."""
    unknown = set(file_entries) - set(DEFAULTS)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    resolved = dict(DEFAULTS)
    for key, raw in file_entries.items():
        kind = type(DEFAULTS[key])
        try:
            resolved[key] = kind(raw)
        except ValueError as exc:
            raise ValueError(f"config key {key}: {exc}") from exc
    explicit = set(file_entries)
    if seed is not None:
        resolved["seed"] = seed
        explicit.add("seed")
    return resolved, explicit


def config_hash(resolved: dict[str, object]) -> str:
    canonical = "\n".join(f"{k}={resolved[k]}" for k in sorted(resolved))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _caps(resolved: dict[str, object]) -> tuple[float, ...]:
    parts = str(resolved["synstyle.caps"]).split(",")
    if len(parts) != 5:
        raise ValueError("synstyle.caps must list exactly 5 values")
    return tuple(float(p) for p in parts)


def _model_config(resolved: dict[str, object], vocab_size: int) -> ModelConfig:
    return ModelConfig(
        vocab_size=vocab_size,
        n_layers=resolved["model.n_layers"],
        d_model=resolved["model.d_model"],
        n_heads=resolved["model.n_heads"],
        d_ffn=resolved["model.d_ffn"],
        dropout=resolved["model.dropout"],
        stream_len=resolved["model.stream_len"],
        learning_rate=resolved["model.learning_rate"],
        batch_size=resolved["model.batch_size"],
        adam_beta1=resolved["model.adam_beta1"],
        adam_beta2=resolved["model.adam_beta2"],
        adam_eps=resolved["model.adam_eps"],
        seed=resolved["seed"],
    )


def _stop_config(resolved: dict[str, object]) -> StopConfig:
    return StopConfig(
        max_steps=resolved["stop.max_steps"],
        patience=resolved["stop.patience"],
        eval_every=resolved["stop.eval_every"],
    )


def _write_text(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _write_log(path: str, log: list[dict], h: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(
            json.dumps({"config_hash": h, "version": __version__}, sort_keys=True) + "\n"
        )
        for entry in log:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")


def _build_lexicon(corpus, resolved):
    seeds = SeedLexicon.default()
    cooc = build_cooc(
        corpus, resolved["lexstyle.f_min"], resolved["lexstyle.context_size"]
    )
    raw = raw_style_scores(cooc, seeds)
    graph = build_knn_graph(cooc, resolved["lexstyle.k"])
    return propagate(
        graph, seeds, raw, resolved["lexstyle.tol"], resolved["lexstyle.max_iter"]
    )


def _obtain_lexicon(args, resolved, fallback_corpus):
    if getattr(args, "lexicon", None):
        lexicon = load_lexicon(args.lexicon)
    else:
        source = (
            load_corpus(args.lexicon_corpus)
            if getattr(args, "lexicon_corpus", None)
            else fallback_corpus
        )
        lexicon = _build_lexicon(source, resolved)
    if getattr(args, "save_lexicon", None):
        save_lexicon(lexicon, args.save_lexicon)
    return lexicon


def _cmd_learn_bpe(args, resolved, h) -> int:
    corpus = load_corpus(args.corpus)
    table = learn_bpe(corpus, resolved["bpe.n_merges"])
    save_merges(
        table,
        args.out,
        provenance={
            "config_hash": h,
            "n_merges": str(resolved["bpe.n_merges"]),
            "version": __version__,
        },
    )
    return 0


def _cmd_pretrain(args, resolved, h) -> int:
    corpus = load_corpus(args.corpus)
    table = load_merges(args.merges)
    cfg = _model_config(resolved, table.vocab_size)
    mask_cfg = MaskConfig(
        p_mask=resolved["mask.p_mask"],
        p_to_mask_token=resolved["mask.p_to_mask_token"],
        p_to_random=resolved["mask.p_to_random"],
        p_unchanged=resolved["mask.p_unchanged"],
    )
    params, log = pretrain(corpus, table, cfg, _stop_config(resolved), mask_cfg)
    save_checkpoint(args.out, params, config_hash=h)
    _write_log(args.out + ".log.jsonl", log, h)
    return 0


def _cmd_finetune(args, resolved, explicit, h) -> int:
    corpus = load_corpus(args.corpus)
    table = load_merges(args.merges)
    loaded = load_checkpoint(args.checkpoint)
    if not isinstance(loaded, ModelParams):
        raise DataError(f"{args.checkpoint}: expected a pretrained LM checkpoint")
    # The checkpoint fixes the architecture; only training-time settings
    # may be overridden here.
    cfg = loaded.config
    overrides = {"seed": resolved["seed"]}
    if "model.learning_rate" in explicit:
        overrides["learning_rate"] = resolved["model.learning_rate"]
    if "model.batch_size" in explicit:
        overrides["batch_size"] = resolved["model.batch_size"]
    cfg = dataclasses.replace(cfg, **overrides)
    noise = NoiseConfig(resolved["noise.p_drop"], resolved["noise.p_blank"])
    # Seed offset decouples the cross-attention init from pretraining draws.
    encdec = cascade(loaded, np.random.default_rng(cfg.seed ^ 1))
    tuned, log = finetune(encdec, corpus, table, cfg, noise, _stop_config(resolved))
    save_checkpoint(args.out, tuned, config_hash=h)
    _write_log(args.out + ".log.jsonl", log, h)
    return 0


def _cmd_rewrite(args, resolved, h) -> int:
    table = load_merges(args.merges)
    loaded = load_checkpoint(args.checkpoint)
    if not isinstance(loaded, EncDecParams):
        raise DataError(f"{args.checkpoint}: expected an encoder-decoder checkpoint")
    try:
        with open(args.input, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read input file {args.input}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise DataError(f"{args.input}: not valid UTF-8: {exc}") from exc
    output = rewrite(
        loaded,
        text,
        table,
        max_len_factor=resolved["rewrite.max_len_factor"],
        max_len_bias=resolved["rewrite.max_len_bias"],
    )
    _write_text(args.out, output + "\n")
    if args.out is not None:
        meta = {"config_hash": h, "version": __version__}
        _write_text(args.out + ".meta.json", json.dumps(meta, sort_keys=True) + "\n")
    return 0


def _cmd_profile(args, resolved, h) -> int:
    corpus = load_corpus(args.corpus)
    lexicon = _obtain_lexicon(args, resolved, corpus)
    profile = style_profile(corpus, lexicon, _caps(resolved))
    payload = profile.as_dict()
    payload["meta"] = {
        "source_id": "+".join(doc.source_id for doc in corpus.documents),
        "config_hash": h,
        "version": __version__,
    }
    _write_text(args.out, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return 0


def _cmd_evaluate(args, resolved, h) -> int:
    generated = load_corpus([args.generated])
    source = load_corpus([args.source])
    target = load_corpus([args.target])
    # Default lexicon source: union of all three corpora, maximizing
    # coverage and treating both sides of the comparison symmetrically.
    union = Corpus(generated.documents + source.documents + target.documents)
    lexicon = _obtain_lexicon(args, resolved, union)
    report = style_report(
        generated, target, source, lexicon, _caps(resolved), config_hash=h
    )
    _write_text(args.out, report.to_json())
    return 0


def _cmd_aggregate(args, resolved, h) -> int:
    rows: dict[str, list[float]] = {m: [] for m in AGGREGATE_METRICS}
    for path in args.reports:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                report = json.load(fh)
        except OSError as exc:
            raise DataError(f"cannot read report {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: not valid JSON: {exc}") from exc
        for metric in AGGREGATE_METRICS:
            section, key = metric.split(".")
            try:
                rows[metric].append(float(report[section][key]))
            except (KeyError, TypeError) as exc:
                raise DataError(f"{path}: missing metric {metric}") from exc
    n = len(args.reports)
    stats = {
        m: {
            "mean": statistics.fmean(v),
            "std": statistics.stdev(v) if n > 1 else 0.0,
        }
        for m, v in rows.items()
    }
    if args.json:
        payload = {
            "meta": {"config_hash": h, "n": n, "version": __version__},
            "metrics": stats,
        }
        _write_text(args.out, json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return 0
    lines = [f"{'metric':<26}{'mean':>10} ± std"]
    for metric in AGGREGATE_METRICS:
        s = stats[metric]
        lines.append(f"{metric:<26}{s['mean']:>10.4f} ± {s['std']:.4f}")
    lines.append(f"# n={n} config_hash={h} version={__version__}")
    _write_text(args.out, "\n".join(lines) + "\n")
    return 0


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="flat key=value configuration file")
    sub.add_argument("--seed", type=int, help="global random seed (overrides config)")
    sub.add_argument("--out", help="output path (default: standard output where text)")


def _add_lexicon_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--lexicon", help="load a saved style lexicon")
    sub.add_argument(
        "--lexicon-corpus", nargs="+", help="build the lexicon from these paths"
    )
    sub.add_argument("--save-lexicon", help="write the lexicon used to this path")


def build_parser() -> _Parser:
    parser = _Parser(prog="styleforge", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("learn-bpe", help="learn a BPE merge table from a corpus")
    p.add_argument("corpus", nargs="+", help="corpus files or directories")
    _add_common(p)

    p = subs.add_parser("pretrain", help="masked-LM pretraining")
    p.add_argument("corpus", nargs="+")
    p.add_argument("--merges", required=True, help="merges file from learn-bpe")
    _add_common(p)

    p = subs.add_parser("finetune", help="cascade + denoising fine-tuning")
    p.add_argument("corpus", nargs="+", help="author corpus files or directories")
    p.add_argument("--checkpoint", required=True, help="pretrained LM checkpoint")
    p.add_argument("--merges", required=True)
    _add_common(p)

    p = subs.add_parser("rewrite", help="rewrite text in the tuned author style")
    p.add_argument("input", help="input text file")
    p.add_argument("--checkpoint", required=True, help="encoder-decoder checkpoint")
    p.add_argument("--merges", required=True)
    _add_common(p)

    p = subs.add_parser("profile", help="stylometric profile of a corpus")
    p.add_argument("corpus", nargs="+")
    _add_lexicon_flags(p)
    _add_common(p)

    p = subs.add_parser("evaluate", help="score generated text against source/target")
    p.add_argument("generated")
    p.add_argument("source")
    p.add_argument("target")
    _add_lexicon_flags(p)
    _add_common(p)

    p = subs.add_parser("aggregate", help="mean ± std over evaluation reports")
    p.add_argument("reports", nargs="+")
    p.add_argument("--json", action="store_true", help="emit JSON instead of a table")
    _add_common(p)

    return parser


def run(argv: list[str]) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    file_entries = parse_config_file(args.config) if args.config else {}
    resolved, explicit = resolve_config(file_entries, args.seed)
    h = config_hash(resolved)
    required_out = {"learn-bpe", "pretrain", "finetune"}
    if args.command in required_out and not args.out:
        parser.error(f"{args.command} requires --out")
    if args.command == "learn-bpe":
        return _cmd_learn_bpe(args, resolved, h)
    if args.command == "pretrain":
        return _cmd_pretrain(args, resolved, h)
    if args.command == "finetune":
        return _cmd_finetune(args, resolved, explicit, h)
    if args.command == "rewrite":
        return _cmd_rewrite(args, resolved, h)
    if args.command == "profile":
        return _cmd_profile(args, resolved, h)
    if args.command == "evaluate":
        return _cmd_evaluate(args, resolved, h)
    return _cmd_aggregate(args, resolved, h)


def main(argv: list[str] | None = None) -> int:
    try:
        return run(sys.argv[1:] if argv is None else argv)
    except DataError as exc:
        print(f"styleforge: data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"styleforge: numeric failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"styleforge: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"styleforge: i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
