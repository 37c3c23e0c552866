"""Command-line entry point.

Every option can also come from an INI file given with ``--config``. Keys
are option names with dashes or underscores, read from the ``[qmatch]``
section and then from a section named after the subcommand; command-line
flags override both.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import os
import sys
from typing import Callable

from . import __version__
from .corpus import (TOKENIZER_MODES, WHITESPACE_NORMALIZE, atomic_write_text, build_vocabulary,
                     load_gold, load_pairs, load_pool, load_queries, read_corpus, save_gold, save_pairs,
                     save_pool, save_queries)
from .embeddings import CbowConfig, load_word2vec_text, save_word2vec_text, train_cbow
from .evaluation import DEFAULT_KS, sweep, write_reports
from .pipeline import Pipeline, PipelineConfig, write_rankings
from .retrieval import METRICS, build_index, build_relation_matrix, fit_tfidf, load_index, save_index
from .reranker import RerankerConfig, RerankerModel, TrainConfig, load_model, save_model, train
from .reranker.training import write_history_csv

logger = logging.getLogger("qmatch")

_SPECS: dict[str, dict[str, tuple[Callable, object]]] = {}


class UsageError(Exception):
    pass


def _flag(value: str) -> bool:
    v = str(value).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _int_list(value: str) -> list[int]:
    return [int(x) for x in str(value).replace(" ", "").split(",") if x]


def _opt(sub: argparse.ArgumentParser, name: str, type_: Callable = str, default=None, help: str = "",
         **kw) -> None:
    """Register ``--name``; its default is applied only after the config file is merged."""
    _SPECS.setdefault(sub.prog.split()[-1], {})[name.replace("-", "_")] = (type_, default)
    extra = f" (default: {default})" if default not in (None, False) else ""
    if type_ is bool:
        sub.add_argument(f"--{name}", action="store_true", default=None, help=help + extra, **kw)
    else:
        sub.add_argument(f"--{name}", type=type_, default=None, help=help + extra, **kw)


def _shared(sub: argparse.ArgumentParser, out_help: str) -> None:
    sub.add_argument("--config", help="INI file with option values")
    _opt(sub, "seed", int, 0, "random seed")
    _opt(sub, "out", str, None, out_help)
    _opt(sub, "tokenizer", str, WHITESPACE_NORMALIZE, f"one of {', '.join(TOKENIZER_MODES)}")


class RunConfig:
    """Resolved options: flag, else config file, else built-in default."""

    def __init__(self, command: str, args: argparse.Namespace):
        self.command = command
        specs = _SPECS[command]
        file_values: dict[str, str] = {}
        if getattr(args, "config", None):
            if not os.path.isfile(args.config):
                raise UsageError(f"config file not found: {args.config}")
            parser = configparser.ConfigParser()
            parser.read(args.config, encoding="utf-8")
            for section in ("qmatch", command):
                if parser.has_section(section):
                    for key, raw in parser.items(section):
                        file_values[key.replace("-", "_")] = raw
        unknown = sorted(set(file_values) - set(specs))
        if unknown:
            raise UsageError(f"unknown config key(s) for {command}: {', '.join(unknown)}")
        self.values = {}
        for key, (type_, default) in specs.items():
            value = getattr(args, key, None)
            if value is None and key in file_values:
                conv = _flag if type_ is bool else type_
                try:
                    value = conv(file_values[key])
                except ValueError as exc:
                    raise UsageError(f"config key {key}: {exc}") from None
            self.values[key] = default if value is None else value

    def __getattr__(self, key):
        try:
            return self.__dict__["values"][key]
        except KeyError:
            raise AttributeError(key) from None

    def require(self, *keys: str) -> None:
        missing = [k for k in keys if self.values.get(k) is None]
        if missing:
            raise UsageError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))

    def require_files(self, *keys: str) -> None:
        self.require(*keys)
        for k in keys:
            if not os.path.isfile(self.values[k]):
                raise UsageError(f"--{k.replace('_', '-')}: file not found: {self.values[k]}")


def cmd_train_embeddings(cfg: RunConfig) -> None:
    cfg.require_files("corpus")
    cfg.require("out")
    corpus = read_corpus(cfg.corpus, cfg.tokenizer)
    config = CbowConfig(window=cfg.window, min_count=cfg.min_count, dimension=cfg.dim,
                        negative_samples=cfg.negative, epochs=cfg.epochs, learning_rate=cfg.lr,
                        batch_size=cfg.batch_size, seed=cfg.seed)
    table = train_cbow(corpus, config)
    save_word2vec_text(table, cfg.out)
    logger.info("wrote %d vectors of dim %d to %s", len(table.tokens), table.dim, cfg.out)


def cmd_build_index(cfg: RunConfig) -> None:
    cfg.require_files("pool")
    cfg.require("out")
    if not cfg.cosine_only:
        cfg.require_files("embeddings")
    pool = load_pool(cfg.pool, cfg.tokenizer)
    vocab = build_vocabulary(pool, 1)
    relation = None
    if not cfg.cosine_only:
        table = load_word2vec_text(cfg.embeddings, cfg.seed)
        vocab = vocab.extend(table.tokens)
        relation = build_relation_matrix(table, vocab, cfg.tau, cfg.top_r)
        logger.info("relation matrix: %d terms, %d edges", relation.n_terms, relation.n_edges)
    index = build_index(pool, fit_tfidf(pool, vocab), relation)
    save_index(index, cfg.out)
    logger.info("indexed %d questions to %s", len(pool), cfg.out)


def cmd_train_reranker(cfg: RunConfig) -> None:
    cfg.require_files("pool", "pairs", "embeddings", "index")
    cfg.require("out")
    pool = load_pool(cfg.pool, cfg.tokenizer)
    pairs = load_pairs(cfg.pairs, pool, cfg.tokenizer)
    if len({p.label for p in pairs}) < 2:
        raise UsageError("pair file must contain both positive and negative labels")
    table = load_word2vec_text(cfg.embeddings, cfg.seed)
    index = load_index(cfg.index)
    rc = RerankerConfig(d_hidden=cfg.hidden, dense_hidden=cfg.dense_hidden, dropout=cfg.dropout,
                        max_len=cfg.max_len)
    tc = TrainConfig(epochs=cfg.epochs, batch_size=cfg.batch_size, lr=cfg.lr, weight_decay=cfg.weight_decay,
                     validation_fraction=cfg.validation_fraction, seed=cfg.seed)
    model = RerankerModel.init(table, rc, cfg.seed)
    result = train(model, pairs, tc, index.model, index.relation)
    save_model(result.model, cfg.out)
    history = cfg.history or cfg.out + ".history.csv"
    write_history_csv(result.history, history)
    logger.info("best epoch %d; model written to %s, history to %s", result.best_epoch, cfg.out, history)


def _load_model(cfg: RunConfig) -> RerankerModel:
    cfg.require_files("model", "embeddings")
    return load_model(cfg.model, load_word2vec_text(cfg.embeddings, cfg.seed))


def cmd_query(cfg: RunConfig) -> None:
    cfg.require_files("index")
    if cfg.text is None and cfg.batch is None:
        raise UsageError("give --text or --batch")
    if cfg.text is not None and cfg.batch is not None:
        raise UsageError("--text and --batch are mutually exclusive")
    if cfg.batch is not None:
        cfg.require_files("batch")
    index = load_index(cfg.index)
    stage2 = not cfg.stage1_only
    model = _load_model(cfg) if stage2 else None
    pipe = Pipeline(index, PipelineConfig(cfg.metric, cfg.n, stage2, cfg.model, cfg.blend), model,
                    cfg.tokenizer)
    if cfg.text is not None:
        rankings = [pipe.query(cfg.text, cfg.query_id)]
    else:
        rankings = pipe.batch_query(load_queries(cfg.batch, cfg.tokenizer))
    if cfg.out:
        write_rankings(rankings, cfg.out)
    else:
        sys.stdout.write("".join(r.to_json() + "\n" for r in rankings))


def cmd_evaluate(cfg: RunConfig) -> None:
    cfg.require_files("index", "queries", "gold")
    cfg.require("out")
    index = load_index(cfg.index)
    queries = load_queries(cfg.queries, cfg.tokenizer)
    gold = load_gold(cfg.gold)
    missing = [q.id for q in queries if q.id not in gold]
    if missing:
        raise UsageError(f"queries without a gold answer: {', '.join(missing[:5])}")
    metrics = [m for m in METRICS if m in index.metrics]
    configs = [PipelineConfig(m) for m in metrics]
    model = None
    if cfg.model:
        model = _load_model(cfg)
        configs += [PipelineConfig(m, stage2=True) for m in metrics]
    reports = sweep(index, queries, gold, cfg.ks, configs, model, cfg.tokenizer)
    summary = cfg.summary or os.path.splitext(cfg.out)[0] + ".json"
    write_reports(reports, cfg.out, summary)
    for rep in reports:
        best = rep.best()
        logger.info("%s: best k=%d mrr=%.4f", rep.config, best.k, best.mrr)


def cmd_make_synthetic(cfg: RunConfig) -> None:
    from .synthetic import SyntheticConfig, generate

    cfg.require("out")
    bench = generate(SyntheticConfig(seed=cfg.seed, n_train_queries=cfg.train_queries,
                                     corpus_sentences=cfg.corpus_sentences))
    os.makedirs(cfg.out, exist_ok=True)
    join = lambda name: os.path.join(cfg.out, name)
    atomic_write_text(join("corpus.txt"), "".join(" ".join(s) + "\n" for s in bench.corpus))
    save_pool(bench.pool, join("pool.tsv"))
    save_queries(bench.queries, join("queries.tsv"))
    save_gold(bench.gold, join("gold.tsv"))
    save_pairs(bench.train_pairs, join("pairs.tsv"))
    logger.info("wrote synthetic benchmark to %s (%d pool, %d queries, %d pairs)", cfg.out,
                len(bench.pool), len(bench.queries), len(bench.train_pairs))


COMMANDS = {
    "train-embeddings": cmd_train_embeddings,
    "build-index": cmd_build_index,
    "train-reranker": cmd_train_reranker,
    "query": cmd_query,
    "evaluate": cmd_evaluate,
    "make-synthetic": cmd_make_synthetic,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qmatch", description="Two-stage FAQ question matching.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-q", "--quiet", action="store_true", help="only log warnings")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("train-embeddings", help="train CBOW vectors, write word2vec text")
    _shared(p, "output embedding file")
    _opt(p, "corpus", str, None, "one sentence per line")
    _opt(p, "dim", int, 200, "vector dimension")
    _opt(p, "window", int, 5, "context half-width")
    _opt(p, "min-count", int, 5, "drop rarer words")
    _opt(p, "negative", int, 5, "negative samples per target")
    _opt(p, "epochs", int, 5)
    _opt(p, "lr", float, 0.025, "initial learning rate")
    _opt(p, "batch-size", int, 32)

    p = subs.add_parser("build-index", help="TF-IDF + relation matrix + inverted index")
    _shared(p, "output index file")
    _opt(p, "pool", str, None, "standard questions: id<TAB>category<TAB>text")
    _opt(p, "embeddings", str, None, "word2vec text file")
    _opt(p, "tau", float, 0.4, "relation threshold")
    _opt(p, "top-r", int, 20, "neighbours kept per term")
    _opt(p, "cosine-only", bool, False, "skip the relation matrix")

    p = subs.add_parser("train-reranker", help="train the Siamese re-ranker")
    _shared(p, "output checkpoint")
    _opt(p, "pool", str, None)
    _opt(p, "pairs", str, None, "pair_id<TAB>user_text<TAB>std_id<TAB>label")
    _opt(p, "embeddings", str, None)
    _opt(p, "index", str, None, "index supplying TF-IDF and relation features")
    _opt(p, "history", str, None, "history CSV (default: <out>.history.csv)")
    _opt(p, "epochs", int, 30)
    _opt(p, "batch-size", int, 32)
    _opt(p, "lr", float, 0.002)
    _opt(p, "hidden", int, 50, "LSTM hidden size")
    _opt(p, "dense-hidden", int, 64)
    _opt(p, "dropout", float, 0.2)
    _opt(p, "max-len", int, 30, "pad/truncate length")
    _opt(p, "weight-decay", float, 0.0)
    _opt(p, "validation-fraction", float, 0.1)

    p = subs.add_parser("query", help="rank pool questions for one or many queries")
    _shared(p, "JSON-lines output (default: stdout)")
    _opt(p, "index", str, None)
    _opt(p, "model", str, None)
    _opt(p, "embeddings", str, None, "needed with --model")
    _opt(p, "text", str, None, "a single query")
    _opt(p, "query-id", str, "query", "id for --text")
    _opt(p, "batch", str, None, "queries file: qid<TAB>text")
    _opt(p, "metric", str, "soft-cosine", f"one of {', '.join(METRICS)}", choices=METRICS)
    _opt(p, "n", int, 50, "stage-1 candidates")
    _opt(p, "blend", float, 0.0, "weight of the stage-1 score in the final score")
    _opt(p, "stage1-only", bool, False, "skip re-ranking")

    p = subs.add_parser("evaluate", help="MRR / success@k sweep over candidate counts")
    _shared(p, "report CSV")
    _opt(p, "index", str, None)
    _opt(p, "queries", str, None)
    _opt(p, "gold", str, None, "qid<TAB>std_id")
    _opt(p, "model", str, None, "adds the two-stage configurations")
    _opt(p, "embeddings", str, None)
    _opt(p, "ks", _int_list, list(DEFAULT_KS), "comma-separated candidate counts")
    _opt(p, "summary", str, None, "JSON summary (default: <out>.json)")

    p = subs.add_parser("make-synthetic", help="write a synthetic benchmark directory")
    _shared(p, "output directory")
    _opt(p, "train-queries", int, 500, "training queries (1 positive + 3 negatives each)")
    _opt(p, "corpus-sentences", int, 20000)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = RunConfig(args.command, args)
        if cfg.tokenizer not in TOKENIZER_MODES:
            raise UsageError(f"--tokenizer must be one of {', '.join(TOKENIZER_MODES)}")
        COMMANDS[args.command](cfg)
    except (UsageError, OSError, ValueError, KeyError, FloatingPointError) as exc:
        msg = str(exc) if not isinstance(exc, KeyError) else f"missing key {exc}"
        print(f"qmatch {args.command}: error: {' '.join(msg.split())}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
