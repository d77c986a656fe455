"""Command-line pipeline: preprocess, train, generate, evaluate, analyze,
gradcheck.

Every subcommand reads flat ``key=value`` settings (``--config`` file plus
``--set`` overrides), writes its outputs under ``--run-dir``, and drops the
fully resolved configuration beside them.  All randomness flows from seeds in
the configuration, so reruns with identical inputs are byte-identical.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import analysis, metrics
from .corpus import (
    RawPair,
    SplitSpec,
    Vocabulary,
    build_vocabulary,
    corpus_statistics,
    encode_pair,
    normalize,
    read_dataset,
    read_gazetteer,
    split_dataset,
    tokenize,
    write_dataset,
)
from .decoding import DecodeConfig, beam_search
from .model import FCRGModel, ModelConfig, train_model
from .params import TrainConfig, finite_diff_check, load_checkpoint, save_checkpoint


class CLIError(Exception):
    """User-facing failure; the message is printed and the exit code is 1."""


# ---------------------------------------------------------------- run config

# Flat setting table; the default's type decides how override text is parsed.
DEFAULTS: dict[str, object] = {
    # model
    "embed_dim": 300,
    "hidden_size": 300,
    "output_size": 256,
    "max_source_len": 89,
    "max_target_len": 64,
    "attention": "dot",
    "dropout": 0.2,
    "model_seed": 0,
    "dtype": "float32",
    # optimization
    "learning_rate": 0.001,
    "batch_size": 32,
    "clip_norm": 0.25,
    "adam_beta1": 0.9,
    "adam_beta2": 0.999,
    "adam_epsilon": 1e-8,
    "max_epochs": 20,
    "patience": 3,
    "shuffle_seed": 0,
    # data
    "train_ratio": 0.8,
    "validation_ratio": 0.1,
    "test_ratio": 0.1,
    "split_seed": 0,
    "min_count": 3,
    # decoding
    "beam_size": 15,
    "min_tokens": 0,
    "decode_max_len": 64,
    # topic model (lda_alpha < 0 means the 50/num_topics default)
    "num_topics": 5,
    "lda_alpha": -1.0,
    "lda_beta": 0.01,
    "lda_iterations": 1000,
    "lda_seed": 0,
}


def _coerce(key: str, text: str) -> object:
    default = DEFAULTS[key]
    try:
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        return text
    except ValueError:
        raise CLIError(f"config key {key!r}: cannot parse {text!r} as {type(default).__name__}") from None


def load_run_config(config_path: Optional[str], overrides: Sequence[str]) -> dict:
    """Defaults, then the config file, then --set overrides; unknown keys rejected."""
    settings = dict(DEFAULTS)
    if config_path is not None:
        path = Path(config_path)
        if not path.exists():
            raise CLIError(f"config file not found: {path}")
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise CLIError(f"{path}: line {lineno}: expected 'key=value'")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in settings:
                raise CLIError(f"{path}: line {lineno}: unknown config key {key!r}")
            settings[key] = _coerce(key, value)
    for item in overrides:
        if "=" not in item:
            raise CLIError(f"--set {item!r}: expected key=value")
        key, _, value = item.partition("=")
        if key not in settings:
            raise CLIError(f"--set: unknown config key {key!r}")
        settings[key] = _coerce(key, value)
    return settings


def _prepare_run_dir(run_dir: str, settings: dict) -> Path:
    out = Path(run_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"{k}={settings[k]}" for k in sorted(settings)]
    (out / "config.resolved").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out


def _model_config(settings: dict, vocab_size: int) -> ModelConfig:
    return ModelConfig(
        vocab_size=vocab_size,
        embed_dim=settings["embed_dim"],
        hidden_size=settings["hidden_size"],
        output_size=settings["output_size"],
        max_source_len=settings["max_source_len"],
        max_target_len=settings["max_target_len"],
        attention=settings["attention"],
        dropout=settings["dropout"],
        seed=settings["model_seed"],
        dtype=settings["dtype"],
    )


def _train_config(settings: dict) -> TrainConfig:
    return TrainConfig(
        learning_rate=settings["learning_rate"],
        batch_size=settings["batch_size"],
        clip_norm=settings["clip_norm"],
        beta1=settings["adam_beta1"],
        beta2=settings["adam_beta2"],
        epsilon=settings["adam_epsilon"],
        max_epochs=settings["max_epochs"],
        patience=settings["patience"],
    )


def _load_gazetteer(path: Optional[str]) -> frozenset[str]:
    return read_gazetteer(path) if path else frozenset()


def _model_from_checkpoint(path: str) -> tuple[FCRGModel, dict]:
    store, meta = load_checkpoint(path)
    config = ModelConfig(**meta["config"])
    return FCRGModel(config, params=store), meta


# ---------------------------------------------------------------- subcommands


def cmd_preprocess(args, settings: dict) -> int:
    out = _prepare_run_dir(args.run_dir, settings)
    gazetteer = _load_gazetteer(args.gazetteer)
    pairs = read_dataset(args.dataset)
    if not pairs:
        raise CLIError(f"{args.dataset}: dataset is empty")

    normalized = [
        RawPair(
            normalize(p.original_text, gazetteer),
            normalize(p.reply_text, gazetteer),
            p.share_count,
            p.label,
        )
        for p in pairs
    ]
    write_dataset(out / "normalized.tsv", normalized)

    spec = SplitSpec(
        train=settings["train_ratio"],
        validation=settings["validation_ratio"],
        test=settings["test_ratio"],
        seed=settings["split_seed"],
    )
    train, validation, test = split_dataset(normalized, spec)
    write_dataset(out / "train.tsv", train)
    write_dataset(out / "validation.tsv", validation)
    write_dataset(out / "test.tsv", test)

    token_lists = []
    for p in train:
        token_lists.append(tokenize(p.original_text))
        token_lists.append(tokenize(p.reply_text))
    vocab = build_vocabulary(token_lists, min_count=settings["min_count"])
    vocab.save(out / "vocab.tsv")

    stats = corpus_statistics(normalized, gazetteer, min_count=settings["min_count"])
    stats_lines = [f"{k}\t{stats[k]}" for k in sorted(stats)]
    stats_lines.append(f"pairs\t{len(pairs)}")
    stats_lines.append(f"train_pairs\t{len(train)}")
    stats_lines.append(f"validation_pairs\t{len(validation)}")
    stats_lines.append(f"test_pairs\t{len(test)}")
    (out / "stats.tsv").write_text("\n".join(stats_lines) + "\n", encoding="utf-8")
    print(f"preprocess: {len(pairs)} pairs, vocabulary {vocab.size}, outputs in {out}")
    return 0


def _encode_split(path, vocab: Vocabulary, settings: dict) -> list:
    pairs = read_dataset(path)
    if not pairs:
        raise CLIError(f"{path}: split is empty")
    return [
        encode_pair(
            p,
            vocab,
            max_source_len=settings["max_source_len"],
            max_target_len=settings["max_target_len"],
        )
        for p in pairs
    ]


def cmd_train(args, settings: dict) -> int:
    out = _prepare_run_dir(args.run_dir, settings)
    vocab = Vocabulary.load(args.vocab)
    train_pairs = _encode_split(args.train, vocab, settings)
    val_pairs = _encode_split(args.validation, vocab, settings)
    model = FCRGModel(_model_config(settings, vocab.size))

    log_lines = ["epoch\ttrain_nll\tvalidation_nll"]

    def log(record):
        log_lines.append(f"{record.epoch}\t{record.train_nll_per_token:.6f}\t{record.validation_nll_per_token:.6f}")
        print(log_lines[-1])

    result = train_model(
        model, train_pairs, val_pairs, _train_config(settings),
        shuffle_seed=settings["shuffle_seed"], log=log,
    )
    (out / "epochs.tsv").write_text("\n".join(log_lines) + "\n", encoding="utf-8")
    save_checkpoint(
        out / "model.ckpt", model.params, model.config.to_dict(),
        seed=settings["model_seed"], epoch=result.best_epoch,
    )
    print(f"train: best epoch {result.best_epoch}, validation nll {result.best_validation_nll:.6f}")
    return 0


def cmd_generate(args, settings: dict) -> int:
    out = _prepare_run_dir(args.run_dir, settings)
    model, _ = _model_from_checkpoint(args.checkpoint)
    vocab = Vocabulary.load(args.vocab)
    if vocab.size != model.config.vocab_size:
        raise CLIError(
            f"vocabulary size {vocab.size} does not match checkpoint vocab_size {model.config.vocab_size}"
        )
    gazetteer = _load_gazetteer(args.gazetteer)
    decode = DecodeConfig(
        beam_size=settings["beam_size"],
        min_tokens=settings["min_tokens"],
        max_len=settings["decode_max_len"],
    )
    with open(args.sources, encoding="utf-8") as fh:
        sources = [line.rstrip("\n") for line in fh]

    lines = []
    for index, text in enumerate(sources):
        tokens = tokenize(normalize(text, gazetteer))[: settings["max_source_len"]]
        if not tokens:
            raise CLIError(f"{args.sources}: line {index + 1}: source normalizes to zero tokens")
        responses = beam_search(vocab.encode(tokens), model, decode)
        for rank, response in enumerate(responses, 1):
            words = " ".join(vocab.decode(response.ids))
            lines.append(f"{index}\t{rank}\t{response.log_prob:.6f}\t{words}")
    (out / "generations.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"generate: {len(sources)} sources, beam {decode.beam_size}, outputs in {out}")
    return 0


def _read_generations(path) -> dict[int, list[list[str]]]:
    """``index <TAB> rank <TAB> log_prob <TAB> tokens`` per line."""
    result: dict[int, list[list[str]]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise CLIError(f"{path}: line {lineno}: expected 4 tab-separated fields")
            try:
                index = int(parts[0])
            except ValueError:
                raise CLIError(f"{path}: line {lineno}: bad source index {parts[0]!r}") from None
            result.setdefault(index, []).append(parts[3].split())
    if not result:
        raise CLIError(f"{path}: no generations")
    return result


def _read_references(path) -> dict[int, list[str]]:
    """``index <TAB> tokens`` per line."""
    result: dict[int, list[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise CLIError(f"{path}: line {lineno}: expected 2 tab-separated fields")
            try:
                index = int(parts[0])
            except ValueError:
                raise CLIError(f"{path}: line {lineno}: bad source index {parts[0]!r}") from None
            if index in result:
                raise CLIError(f"{path}: line {lineno}: duplicate source index {index}")
            result[index] = parts[1].split()
    if not result:
        raise CLIError(f"{path}: no references")
    return result


def cmd_evaluate(args, settings: dict) -> int:
    out = _prepare_run_dir(args.run_dir, settings)
    generations = _read_generations(args.generations)
    references = _read_references(args.references)
    table = None
    if args.embeddings:
        table = metrics.load_embedding_table(args.embeddings)
    elif args.checkpoint:
        if not args.vocab:
            raise CLIError("--checkpoint needs --vocab to name the embedding rows")
        model, _ = _model_from_checkpoint(args.checkpoint)
        table = metrics.embedding_table_from_model(model, Vocabulary.load(args.vocab))
    else:
        print("evaluate: no embeddings given; skipping greedy matching and vector extrema")
    try:
        report = metrics.evaluate(generations, references, table)
    except ValueError as exc:
        raise CLIError(str(exc)) from None
    (out / "metrics.tsv").write_text(report.to_tsv(), encoding="utf-8")
    detail = []
    for name in metrics.METRIC_NAMES:
        for index in sorted(report.per_source.get(name, ())):
            detail.append(f"{name}\t{index}\t{report.per_source[name][index] * 100.0:.3f}")
    (out / "per_source.tsv").write_text("\n".join(detail) + "\n", encoding="utf-8")
    print(report.to_tsv(), end="")
    for name, count in sorted(report.skipped.items()):
        if count:
            print(f"evaluate: {name}: skipped {count} pair(s) with no in-table tokens")
    return 0


def cmd_analyze(args, settings: dict) -> int:
    out = _prepare_run_dir(args.run_dir, settings)
    gazetteer = _load_gazetteer(args.gazetteer)
    pairs = read_dataset(args.dataset)
    if not pairs:
        raise CLIError(f"{args.dataset}: dataset is empty")
    reply_docs = [tokenize(normalize(p.reply_text, gazetteer)) for p in pairs]

    lines: list[str] = []

    lexicon_path = args.lexicon or Path(__file__).parent / "data" / "demo_lexicon.tsv"
    try:
        lexicon = analysis.Lexicon.load(lexicon_path)
    except ValueError as exc:
        raise CLIError(str(exc)) from None
    groups: dict[str, list[list[str]]] = {}
    for p, doc in zip(pairs, reply_docs):
        groups.setdefault(p.label or "all", []).append(doc)
    lines.append("section\tgroup\tcategory\tmean\tvariance\tn")
    for group in sorted(groups):
        docs = groups[group]
        if len(docs) < 2:
            continue
        stats = analysis.group_stats(docs, lexicon)
        for category in lexicon.categories:
            lines.append(
                f"lexicon\t{group}\t{category}\t{stats.means[category]:.6f}"
                f"\t{stats.variances[category]:.6f}\t{stats.sample_size}"
            )

    documents = [doc for doc in reply_docs if doc]
    if documents:
        alpha = settings["lda_alpha"] if settings["lda_alpha"] >= 0 else None
        topics = analysis.lda_fit(
            documents,
            num_topics=settings["num_topics"],
            alpha=alpha,
            beta=settings["lda_beta"],
            iterations=settings["lda_iterations"],
            seed=settings["lda_seed"],
        )
        for k, words in enumerate(analysis.lda_top_words(topics, 10)):
            lines.append(f"topic\t{k}\t{' '.join(words)}")

    if any(p.share_count is not None for p in pairs):
        try:
            statistic, p_value = analysis.length_share_test(pairs, gazetteer)
            lines.append(f"length_share_test\tU={statistic:.1f}\tp={p_value:.6f}")
        except ValueError as exc:
            lines.append(f"length_share_test\tskipped\t{exc}")

    (out / "analysis.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"analyze: {len(pairs)} pairs, outputs in {out}")
    return 0


# Pinned tiny configuration for the gradient check.
_GRADCHECK = dict(vocab_size=20, embed_dim=8, hidden_size=8, output_size=8, source_len=6, target_len=5)
_GRADCHECK_TOLERANCE = 1e-4


def gradcheck_report(samples_per_param: int = 25) -> dict[str, dict[str, float]]:
    """Max relative finite-difference error per parameter, per attention kind."""
    from .corpus import make_batch, EncodedPair

    g = _GRADCHECK
    rng = np.random.default_rng(7)
    pairs = []
    for _ in range(3):
        source = rng.integers(4, g["vocab_size"], size=g["source_len"]).tolist()
        body = rng.integers(4, g["vocab_size"], size=g["target_len"]).tolist()
        pairs.append(EncodedPair(source, [1] + body + [2]))
    batch = make_batch(pairs)

    report: dict[str, dict[str, float]] = {}
    for attention in ("dot", "bilinear"):
        config = ModelConfig(
            vocab_size=g["vocab_size"], embed_dim=g["embed_dim"], hidden_size=g["hidden_size"],
            output_size=g["output_size"], max_source_len=g["source_len"], max_target_len=g["target_len"] + 2,
            attention=attention, dropout=0.0, seed=11, dtype="float64",
        )
        model = FCRGModel(config)
        report[attention] = finite_diff_check(
            lambda: model.sequence_nll(batch, train=False)[0],
            model.params,
            samples_per_param=samples_per_param,
            seed=3,
        )
    return report


def cmd_gradcheck(args, settings: dict) -> int:
    report = gradcheck_report()
    lines = ["attention\tparameter\tmax_rel_error"]
    worst = 0.0
    for attention, errors in report.items():
        for name in sorted(errors):
            lines.append(f"{attention}\t{name}\t{errors[name]:.3e}")
            worst = max(worst, errors[name])
    text = "\n".join(lines) + f"\nworst\t-\t{worst:.3e}\n"
    if args.run_dir:
        out = _prepare_run_dir(args.run_dir, settings)
        (out / "gradcheck.tsv").write_text(text, encoding="utf-8")
    print(text, end="")
    if worst >= _GRADCHECK_TOLERANCE:
        print(f"gradcheck: FAILED (worst {worst:.3e} >= {_GRADCHECK_TOLERANCE})", file=sys.stderr)
        return 1
    print(f"gradcheck: ok (worst {worst:.3e} < {_GRADCHECK_TOLERANCE})")
    return 0


# ---------------------------------------------------------------- wiring


def _add_common(sub: argparse.ArgumentParser, run_dir_required: bool = True) -> None:
    sub.add_argument("--config", help="key=value settings file")
    sub.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one setting")
    sub.add_argument("--run-dir", required=run_dir_required, help="directory for all outputs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fcrg", description="Fact-checking response generation pipeline.")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("preprocess", help="normalize, split and build the vocabulary")
    p.add_argument("--dataset", required=True)
    p.add_argument("--gazetteer")
    _add_common(p)
    p.set_defaults(func=cmd_preprocess)

    p = subs.add_parser("train", help="train a model on preprocessed splits")
    p.add_argument("--train", required=True)
    p.add_argument("--validation", required=True)
    p.add_argument("--vocab", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = subs.add_parser("generate", help="beam-search responses for source texts")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sources", required=True, help="one source text per line")
    p.add_argument("--vocab", required=True)
    p.add_argument("--gazetteer")
    _add_common(p)
    p.set_defaults(func=cmd_generate)

    p = subs.add_parser("evaluate", help="score generations against references")
    p.add_argument("--generations", required=True)
    p.add_argument("--references", required=True)
    p.add_argument("--embeddings", help="token-vector file for the embedding metrics")
    p.add_argument("--checkpoint", help="use a checkpoint's embedding instead")
    p.add_argument("--vocab")
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = subs.add_parser("analyze", help="lexicon, topic and share-count analyses")
    p.add_argument("--dataset", required=True)
    p.add_argument("--lexicon", help="category lexicon (defaults to the bundled demo)")
    p.add_argument("--gazetteer")
    _add_common(p)
    p.set_defaults(func=cmd_analyze)

    p = subs.add_parser("gradcheck", help="finite-difference check on a pinned tiny model")
    _add_common(p, run_dir_required=False)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = load_run_config(args.config, args.set)
        return args.func(args, settings)
    except CLIError as exc:
        print(f"fcrg {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"fcrg {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
