"""Pre-training loop: a retriever stream and a reader stream, plain SGD.

The retriever optimizes the combined relation loss plus the in-batch
retrieval loss; the reader optimizes the rank + span loss. Both follow a
linear warmup then linear decay to zero. The relation teacher is a frozen copy
of the retriever taken at the start of every epoch.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from collections import Counter
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, InsufficientEntitiesError, TrainingDivergedError
from .graph import UNLABELED, GroundedGraph
from .losses import combined_relation_loss, reader_loss, retrieval_loss
from .model import (ModelConfig, ModelParams, add_grads, encode_passages, encode_questions,
                    save_checkpoint, sgd_step)
from .qagen import QADatapoint
from .sampling import (SamplingConfig, assemble_reader_batch, assemble_retrieval_batch,
                       build_pool)
from .util import atomic_open

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    lr: float = 0.1
    warmup: float = 0.1  # fraction of all steps
    seed: int = 0
    batches_per_epoch: int = 0  # 0: ceil(training datapoints / B)
    sim_scale: float = 1.0
    distill_unlabeled_only: bool = False
    holdout_fraction: float = 0.1
    eval_batches: int = 4
    vocab_size: int = 2 ** 15
    d_emb: int = 64
    d: int = 32
    init_scale: float = 0.05

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not self.lr > 0:
            raise ConfigError("learning rate must be > 0")
        if not 0.0 <= self.warmup <= 1.0:
            raise ConfigError("warmup must be a fraction in [0, 1]")
        if not (self.sim_scale > 0 and math.isfinite(self.sim_scale)):
            raise ConfigError("sim_scale must be a positive finite number")
        if self.batches_per_epoch < 0 or self.eval_batches < 0:
            raise ConfigError("batch counts must be >= 0")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ConfigError("holdout_fraction must be in [0, 1)")


def lr_at(step: int, total: int, warmup_steps: int, base: float) -> float:
    """Linear warmup over ``warmup_steps`` then linear decay reaching 0 at ``total``."""
    if step < warmup_steps:
        return base * (step + 1) / warmup_steps
    return base * max(0.0, (total - step) / max(1, total - warmup_steps))


@dataclass(frozen=True)
class LossReport:
    epoch: int
    step: int
    rel: float
    distill: float
    weight: float
    rel_hat: float
    retr: float
    rank: float
    start: float
    end: float
    lr: float = 0.0
    retr_top1: float = 0.0

    @property
    def read(self) -> float:
        return self.rank + self.start + self.end


METRIC_COLUMNS = ("epoch", "step", "L_rel", "L_distill", "weight", "L_retr", "L_rank",
                  "L_start", "L_end")


def metrics_csv(reports: Sequence[LossReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for r in reports:
        w.writerow([r.epoch, r.step, repr(r.rel), repr(r.distill), repr(r.weight),
                    repr(r.retr), repr(r.rank), repr(r.start), repr(r.end)])
    return buf.getvalue()


@dataclass
class Evaluation:
    retrieval_top1: float
    retrieval_random_baseline: float
    relation_accuracy: float | None
    relation_majority_baseline: float | None
    n_heldout: int

    def as_dict(self) -> dict:
        return asdict(self)

    def as_text(self) -> str:
        return "".join(f"{k}={'none' if v is None else repr(v)}\n" for k, v in asdict(self).items())


@dataclass
class PretrainResult:
    retriever: ModelParams
    reader: ModelParams
    reports: list[LossReport]
    evaluation: Evaluation
    counters: Counter = field(default_factory=Counter)

    def epoch_means(self, name: str) -> list[float]:
        by_epoch: dict[int, list[float]] = {}
        for r in self.reports:
            by_epoch.setdefault(r.epoch, []).append(getattr(r, name))
        return [float(np.mean(v)) for _, v in sorted(by_epoch.items())]


def split_holdout(datapoints: Sequence[QADatapoint], fraction: float, rng: np.random.Generator
                  ) -> tuple[list[QADatapoint], list[QADatapoint]]:
    labeled = [i for i, d in enumerate(datapoints) if d.relation != UNLABELED]
    n_hold = int(math.floor(fraction * len(labeled)))
    held = set(labeled[i] for i in rng.permutation(len(labeled))[:n_hold])
    train = [d for i, d in enumerate(datapoints) if i not in held]
    return train, [datapoints[i] for i in sorted(held)]


def relation_accuracy(params: ModelParams, datapoints: Sequence[QADatapoint]) -> float:
    enc = encode_questions([d.question for d in datapoints], params)
    pred = (enc.hidden @ params.W_rel).argmax(axis=1)
    return float(np.mean(pred == np.array([d.relation for d in datapoints])))


def _check_finite(value: float, grads: dict, what: str, epoch: int, step: int, batch) -> None:
    if math.isfinite(value) and all(np.isfinite(g).all() for g in grads.values()):
        return
    dump = {"loss": what, "epoch": epoch, "step": step, "value": repr(value)}
    if batch is not None:
        dump["batch"] = batch.to_json()
    raise TrainingDivergedError(f"non-finite {what} at epoch {epoch} step {step}", dump)


def pretrain(graph: GroundedGraph, datapoints: Sequence[QADatapoint],
             sampling: SamplingConfig, config: TrainConfig,
             checkpoint_dir: str | os.PathLike | None = None,
             on_report: Callable[[LossReport], None] | None = None,
             initial: tuple[ModelParams, ModelParams] | None = None) -> PretrainResult:
    """Run both optimizer streams; ``initial`` resumes from (retriever, reader) params."""
    if not datapoints:
        raise InsufficientEntitiesError("empty dataset: nothing to train on")
    ss = np.random.SeedSequence(config.seed)
    split_ss, retr_init, read_init, retr_ss, read_ss, eval_ss = ss.spawn(6)

    train, heldout = split_holdout(datapoints, config.holdout_fraction,
                                   np.random.default_rng(split_ss))
    pool = build_pool(train)
    model_cfg = ModelConfig(n_relations=len(graph.relations), vocab_size=config.vocab_size,
                            d_emb=config.d_emb, d=config.d, init_scale=config.init_scale)
    if initial is None:
        retriever = ModelParams.init(model_cfg, retr_init)
        reader = ModelParams.init(model_cfg, read_init)
    else:
        retriever, reader = (p.copy() for p in initial)
        if retriever.config != model_cfg or reader.config != model_cfg:
            raise ConfigError("checkpoint model shape does not match the graph and config")
    retr_rng = np.random.default_rng(retr_ss)
    read_rng = np.random.default_rng(read_ss)

    per_epoch = config.batches_per_epoch or max(1, math.ceil(len(train) / sampling.B))
    total = config.epochs * per_epoch
    warmup_steps = int(round(config.warmup * total))
    counters: Counter = Counter()
    reports: list[LossReport] = []

    step = 0
    for epoch in range(config.epochs):
        teacher = retriever.copy()
        teacher_digest = teacher.digest()
        for _ in range(per_epoch):
            lr = lr_at(step, total, warmup_steps, config.lr)

            batch = assemble_retrieval_batch(pool, graph, sampling, retr_rng, counters)
            rel = combined_relation_loss(batch.questions, batch.relations, retriever, teacher,
                                         epoch, config.distill_unlabeled_only)
            retr = retrieval_loss(batch.questions, batch.passages, batch.positive_columns,
                                  retriever, config.sim_scale)
            grads = add_grads(rel.grads, retr.grads)
            _check_finite(rel.value + retr.value, grads, "retriever loss", epoch, step, batch)
            sgd_step(retriever, grads, lr)

            rbatch = assemble_reader_batch(pool, graph, sampling, read_rng, counters)
            read = reader_loss([d.question for d in rbatch.datapoints], rbatch.passages,
                               [d.answer_span for d in rbatch.datapoints], reader)
            _check_finite(read.value, read.grads, "reader loss", epoch, step, rbatch)
            sgd_step(reader, read.grads, lr)

            report = LossReport(epoch, step, rel.parts["rel"], rel.parts["distill"],
                                rel.parts["weight"], rel.value, retr.value,
                                read.parts["rank"], read.parts["start"], read.parts["end"],
                                lr, retr.parts["top1"])
            reports.append(report)
            if on_report is not None:
                on_report(report)
            step += 1
        if teacher.digest() != teacher_digest:
            raise AssertionError("teacher snapshot changed during the epoch")
        logger.info("epoch %d: L_rel=%.4f L_retr=%.4f L_read=%.4f", epoch,
                    np.mean([r.rel for r in reports[-per_epoch:]]),
                    np.mean([r.retr for r in reports[-per_epoch:]]),
                    np.mean([r.read for r in reports[-per_epoch:]]))
        if checkpoint_dir is not None:
            save_checkpoint(os.path.join(checkpoint_dir, f"epoch_{epoch:02d}.ckpt"),
                            {"retriever": retriever, "reader": reader}, {"epoch": epoch})

    evaluation = evaluate(retriever, graph, pool, train, heldout, sampling, config,
                          np.random.default_rng(eval_ss))
    return PretrainResult(retriever, reader, reports, evaluation, counters)


def evaluate(retriever: ModelParams, graph: GroundedGraph, pool, train: Sequence[QADatapoint],
             heldout: Sequence[QADatapoint], sampling: SamplingConfig, config: TrainConfig,
             rng: np.random.Generator) -> Evaluation:
    """Top-1 retrieval accuracy over fresh batches; relation accuracy on held-out questions."""
    hits = []
    for _ in range(config.eval_batches):
        batch = assemble_retrieval_batch(pool, graph, sampling, rng)
        S = encode_questions(batch.questions, retriever).z @ encode_passages(batch.passages, retriever).z.T
        hits.append(np.mean(S.argmax(axis=1) == np.array(batch.positive_columns)))
    top1 = float(np.mean(hits)) if hits else float("nan")
    baseline = 1.0 / ((1 + sampling.K) * sampling.B)

    acc = majority = None
    if heldout:
        acc = relation_accuracy(retriever, heldout)
        counts = Counter(d.relation for d in train if d.relation != UNLABELED)
        if counts:
            top = min(counts, key=lambda r: (-counts[r], r))
            majority = float(np.mean([d.relation == top for d in heldout]))
    return Evaluation(top1, baseline, acc, majority, len(heldout))


def train_config_fields() -> list[str]:
    return [f.name for f in fields(TrainConfig)]


def write_metrics(path: str | os.PathLike, reports: Sequence[LossReport]) -> None:
    with atomic_open(path, "w") as fh:
        fh.write(metrics_csv(reports))
