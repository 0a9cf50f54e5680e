"""Command-line front end.

Exit codes: 0 on success, 1 on a usage error, 2 when the input data is bad.
Every subcommand only wires module operations together.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import replace
from typing import Sequence

from . import __version__
from .analysis import (DEFAULT_BIN_EDGES, accuracy_by_frequency, align_qa, coverage_text,
                       dataset_frequency, emit_report, frequency_cdf, read_predictions,
                       read_qa_rows)
from .config import PipelineConfig, load_config, save_config
from .errors import ConfigError, RelqaError
from .graph import compute_stats, edges_tsv, load_graph, save_graph
from .model import load_checkpoint, save_checkpoint
from .pipeline import build_graph
from .qagen import export_dataset, generate_dataset, import_dataset
from .sampling import build_pool, iter_retrieval_batches
from .synth import generate_synthetic
from .training import pretrain, write_metrics
from .util import atomic_open

logger = logging.getLogger("relqa")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    def __init__(self, message: str, usage: str):
        super().__init__(message)
        self.usage = usage


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}", self.format_usage())


# flag name -> config field, per section
_SAMPLING_FLAGS = {"b": "b", "B": "B", "K": "K", "m": "m", "reader_batch": "reader_batch"}
_TRAIN_FLAGS = {"epochs": "epochs", "lr": "lr", "warmup": "warmup",
                "batches_per_epoch": "batches_per_epoch", "sim_scale": "sim_scale",
                "holdout": "holdout_fraction", "eval_batches": "eval_batches"}


def _global_flags(p: argparse.ArgumentParser) -> None:
    # SUPPRESS keeps a value given before the subcommand from being reset after it
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                   help="seed for all randomness")
    p.add_argument("--workers", type=int, default=argparse.SUPPRESS,
                   help="parallel workers for parsing and generation")
    p.add_argument("--config", default=argparse.SUPPRESS, help="TOML-shaped pipeline config file")
    p.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS)


def _common() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    _global_flags(p)
    return p


def _sampling_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--b", type=int, help="seed entities per batch")
    p.add_argument("--B", type=int, help="entities (questions) per retrieval batch")
    p.add_argument("--K", type=int, help="hard negatives per question")
    p.add_argument("--m", type=int, help="reader negatives per question")
    p.add_argument("--reader-batch", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="relqa", description="Relation-guided retrieval pre-training toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    common = [_common()]

    p = sub.add_parser("build-graph", parents=common, help="parse a corpus and ground triplets")
    p.add_argument("--corpus", required=True)
    p.add_argument("--triplets", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("stats", parents=common, help="print graph statistics")
    p.add_argument("--graph", required=True)
    p.add_argument("--edges-out", help="also write a readable edge table here")

    p = sub.add_parser("gen-qa", parents=common, help="generate the QA dataset")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--all-descriptions", action="store_true",
                   help="one datapoint per grounded description instead of the first only")

    p = sub.add_parser("sample-batches", parents=common, help="dump retrieval batches as JSONL")
    p.add_argument("--graph", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=1)
    _sampling_flags(p)

    p = sub.add_parser("pretrain-toy", parents=common, help="run the pre-training loop")
    p.add_argument("--graph", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--warmup", type=float)
    p.add_argument("--batches-per-epoch", type=int)
    p.add_argument("--sim-scale", type=float)
    p.add_argument("--holdout", type=float, help="held-out fraction for evaluation")
    p.add_argument("--eval-batches", type=int)
    p.add_argument("--distill-unlabeled-only", action="store_true", default=None)
    p.add_argument("--checkpoint", help="resume from this checkpoint")
    p.add_argument("--out-checkpoint")
    p.add_argument("--checkpoint-dir", help="write one checkpoint per epoch here")
    p.add_argument("--metrics-out")
    p.add_argument("--eval-out", help="write the evaluation as key=value lines")
    _sampling_flags(p)

    p = sub.add_parser("analyze-bias", parents=common, help="relation-frequency bias report")
    p.add_argument("--graph", required=True)
    p.add_argument("--qa", required=True, help="evaluation QA TSV")
    p.add_argument("--predictions", help="question_id<TAB>em_flag TSV for --qa")
    p.add_argument("--train-qa", help="training QA TSV for frequencies (default: --qa)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--bins", help="comma-separated bin edges, e.g. 1,5,20,100,inf")

    p = sub.add_parser("run-all", parents=common, help="graph, dataset, training and report")
    p.add_argument("--out-dir", default=".")

    p = sub.add_parser("synth", parents=common, help="write a synthetic corpus and triplets")
    p.add_argument("--out-corpus", required=True)
    p.add_argument("--out-triplets", required=True)
    p.add_argument("--entities", type=int, default=200)
    p.add_argument("--relations", type=int, default=20)
    return parser


# ---------------------------------------------------------------------------
# configuration plumbing


def _config(args) -> PipelineConfig:
    for name, default in (("seed", None), ("workers", None), ("config", None), ("verbose", 0)):
        if not hasattr(args, name):
            setattr(args, name, default)
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.workers is not None:
        cfg = replace(cfg, run=replace(cfg.run, workers=args.workers))
    if getattr(args, "verbose", 0):
        cfg = replace(cfg, run=replace(cfg.run, verbosity=args.verbose))
    overrides = {f: getattr(args, a) for a, f in _SAMPLING_FLAGS.items()
                 if getattr(args, a, None) is not None}
    if overrides:
        cfg = replace(cfg, sampling=replace(cfg.sampling, **overrides))
    overrides = {f: getattr(args, a) for a, f in _TRAIN_FLAGS.items()
                 if getattr(args, a, None) is not None}
    if getattr(args, "distill_unlabeled_only", None):
        overrides["distill_unlabeled_only"] = True
    if overrides:
        cfg = replace(cfg, train=replace(cfg.train, **overrides))
    return cfg


def _write_text(path: str, text: str) -> None:
    with atomic_open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _parse_bins(text: str | None) -> tuple[float, ...]:
    if not text:
        return DEFAULT_BIN_EDGES
    usage = "usage: relqa analyze-bias ... --bins 1,5,20,100,inf\n"
    try:
        edges = tuple(math.inf if t.strip() == "inf" else float(t) for t in text.split(","))
    except ValueError as exc:
        raise UsageError(f"relqa analyze-bias: error: bad --bins value: {text}", usage) from exc
    if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise UsageError("relqa analyze-bias: error: --bins must be at least two increasing "
                         "edges", usage)
    return edges


# ---------------------------------------------------------------------------
# subcommands


def cmd_build_graph(args, cfg: PipelineConfig) -> None:
    _, graph = build_graph(args.corpus, args.triplets, workers=cfg.run.workers)
    save_graph(graph, args.out)
    logger.info("graph: %d entities, %d edges, counters %s", graph.n_entities,
                len(graph.edges), graph.counters)


def cmd_stats(args, cfg: PipelineConfig) -> None:
    graph = load_graph(args.graph)
    sys.stdout.write(compute_stats(graph).as_text())
    if args.edges_out:
        _write_text(args.edges_out, edges_tsv(graph))


def cmd_gen_qa(args, cfg: PipelineConfig) -> None:
    graph = load_graph(args.graph)
    data, counters = generate_dataset(graph, all_descriptions=args.all_descriptions
                                      or cfg.run.all_descriptions, workers=cfg.run.workers)
    export_dataset(data, args.out)
    logger.info("dataset: %s", dict(counters))


def cmd_sample_batches(args, cfg: PipelineConfig) -> None:
    graph = load_graph(args.graph)
    pool = build_pool(import_dataset(args.dataset))
    with atomic_open(args.out, "w", encoding="utf-8") as fh:
        for batch in iter_retrieval_batches(pool, graph, cfg.sampling, args.n):
            fh.write(json.dumps(batch.to_json(), ensure_ascii=False) + "\n")


def cmd_pretrain_toy(args, cfg: PipelineConfig) -> None:
    graph = load_graph(args.graph)
    data = import_dataset(args.dataset)
    initial = None
    if args.checkpoint:
        models, _ = load_checkpoint(args.checkpoint)
        initial = (models["retriever"], models["reader"])
    if args.checkpoint_dir:
        os.makedirs(args.checkpoint_dir, exist_ok=True)
    result = pretrain(graph, data, cfg.sampling, cfg.train, checkpoint_dir=args.checkpoint_dir,
                      initial=initial)
    if args.out_checkpoint:
        save_checkpoint(args.out_checkpoint, {"retriever": result.retriever,
                                              "reader": result.reader},
                        {"epoch": cfg.train.epochs - 1})
    if args.metrics_out:
        write_metrics(args.metrics_out, result.reports)
    text = result.evaluation.as_text()
    if args.eval_out:
        _write_text(args.eval_out, text)
    sys.stdout.write(text)


def cmd_analyze_bias(args, cfg: PipelineConfig) -> None:
    bins = _parse_bins(args.bins)
    graph = load_graph(args.graph)
    aligned, coverage = align_qa(read_qa_rows(args.qa), graph)
    if args.train_qa:
        train_aligned, _ = align_qa(read_qa_rows(args.train_qa), graph)
    else:
        train_aligned = aligned
    table = frequency_cdf(train_aligned)
    buckets = None
    if args.predictions:
        buckets = accuracy_by_frequency(aligned, read_predictions(args.predictions), table, bins)
    os.makedirs(args.out_dir, exist_ok=True)
    emit_report(args.out_dir, table, buckets, coverage)
    sys.stdout.write(coverage_text(coverage))


def cmd_run_all(args, cfg: PipelineConfig) -> None:
    if not args.config:
        raise UsageError("relqa run-all: error: --config is required",
                         "usage: relqa run-all --config FILE [--out-dir DIR] [--seed N]\n")
    base = os.path.dirname(os.path.abspath(args.config))
    paths = cfg.resolve(base, args.out_dir)
    if not paths.corpus or not paths.triplets:
        raise RelqaError("config must set paths.corpus and paths.triplets")
    for d in (args.out_dir, paths.checkpoints, paths.reports):
        os.makedirs(d, exist_ok=True)
    save_config(os.path.join(args.out_dir, "config.toml"), cfg)

    _, graph = build_graph(paths.corpus, paths.triplets, workers=cfg.run.workers)
    save_graph(graph, paths.graph)
    _write_text(os.path.join(paths.reports, "graph_stats.txt"), compute_stats(graph).as_text())

    data, counters = generate_dataset(graph, all_descriptions=cfg.run.all_descriptions,
                                      workers=cfg.run.workers)
    export_dataset(data, paths.dataset)
    logger.info("dataset: %s", dict(counters))

    result = pretrain(graph, data, cfg.sampling, cfg.train, checkpoint_dir=paths.checkpoints)
    write_metrics(paths.metrics, result.reports)
    _write_text(os.path.join(paths.reports, "evaluation.txt"), result.evaluation.as_text())

    if paths.qa:
        aligned, coverage = align_qa(read_qa_rows(paths.qa), graph)
        table = frequency_cdf(aligned)
        buckets = (accuracy_by_frequency(aligned, read_predictions(paths.predictions), table)
                   if paths.predictions else None)
        emit_report(paths.reports, table, buckets, coverage)
    else:
        emit_report(paths.reports, dataset_frequency(data, graph))
    sys.stdout.write(result.evaluation.as_text())


def cmd_synth(args, cfg: PipelineConfig) -> None:
    syn = generate_synthetic(args.entities, args.relations, seed=cfg.run.seed)
    _write_text(args.out_corpus, syn.text)
    _write_text(args.out_triplets, syn.triplets)


COMMANDS = {
    "build-graph": cmd_build_graph,
    "stats": cmd_stats,
    "gen-qa": cmd_gen_qa,
    "sample-batches": cmd_sample_batches,
    "pretrain-toy": cmd_pretrain_toy,
    "analyze-bias": cmd_analyze_bias,
    "run-all": cmd_run_all,
    "synth": cmd_synth,
}


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        try:
            cfg = _config(args)
        except ConfigError as exc:  # bad flag or config value: the invocation is at fault
            raise UsageError(f"relqa {args.command}: error: {exc}", parser.format_usage()) from exc
        level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(cfg.run.verbosity, 2)]
        logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s",
                            stream=sys.stderr)
        logger.setLevel(level)
        COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        sys.stderr.write(exc.usage)
        sys.stderr.write(f"{exc}\n")
        return EXIT_USAGE
    except SystemExit as exc:  # --help and --version
        return exc.code if isinstance(exc.code, int) else EXIT_OK
    except RelqaError as exc:
        sys.stderr.write(f"relqa: error: {exc}\n")
        return EXIT_DATA
    except OSError as exc:
        sys.stderr.write(f"relqa: error: {exc}\n")
        return EXIT_DATA
    return EXIT_OK


def main() -> None:
    sys.exit(run())
