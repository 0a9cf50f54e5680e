"""Two-level negative sampling and batch assembly.

Entity level: a few random seed entities, a random walk from each over the
undirected graph, uniform fill if the walks fall short. Passage level: K other
passages from each entity's own page, borrowing from neighbor pages when the
page is too short.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .corpus import PassageRef
from .errors import ConfigError, InsufficientEntitiesError, InsufficientPassagesError
from .graph import GroundedGraph
from .qagen import QADatapoint, mask_entity

MAX_RESTARTS = 10

DatapointPool = Mapping[int, Sequence[QADatapoint]]


@dataclass(frozen=True)
class SamplingConfig:
    b: int = 12
    B: int = 128
    K: int = 2
    m: int = 2
    reader_batch: int = 64
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.b <= self.B:
            raise ConfigError(f"need 1 <= b <= B, got b={self.b}, B={self.B}")
        if self.K < 1 or self.m < 1:
            raise ConfigError(f"need K >= 1 and m >= 1, got K={self.K}, m={self.m}")
        if self.reader_batch < 1:
            raise ConfigError("reader_batch must be >= 1")


def build_pool(datapoints: Iterable[QADatapoint]) -> dict[int, list[QADatapoint]]:
    pool: dict[int, list[QADatapoint]] = {}
    for d in datapoints:
        pool.setdefault(d.source, []).append(d)
    return dict(sorted(pool.items()))


@dataclass(frozen=True)
class WalkSample:
    entities: tuple[int, ...]
    filled: tuple[bool, ...]  # True where the entity came from the uniform fill
    seeds: tuple[int, ...]


def random_walk_entities(graph: GroundedGraph, config: SamplingConfig, rng: np.random.Generator,
                         eligible: Iterable[int] | None = None) -> WalkSample:
    """Exactly ``config.B`` distinct entities gathered by walks from ``config.b`` seeds.

    Each seed walks (uniform neighbor steps on the undirected closure) until it
    has gathered ceil(B/b) new eligible entities. A walk that reaches a dead end
    or a fully visited neighborhood restarts at its seed, at most 10 times.
    Shortfall is filled uniformly without replacement.
    """
    pool = sorted(set(eligible)) if eligible is not None else list(range(graph.n_entities))
    B, b = config.B, config.b
    if len(pool) < B:
        raise InsufficientEntitiesError(f"need {B} eligible entities, graph has {len(pool)}")
    allowed = set(pool)
    quota = math.ceil(B / b)
    max_steps = 10 * quota + 10

    seeds = [pool[i] for i in rng.choice(len(pool), size=b, replace=False)]
    chosen: list[int] = []
    taken: set[int] = set()
    for seed in seeds:
        if len(chosen) >= B:
            break
        gathered = 0
        if seed not in taken:
            chosen.append(seed)
            taken.add(seed)
            gathered = 1
        visited = set(taken)
        current, restarts, steps = seed, 0, 0
        while gathered < quota and len(chosen) < B:
            nbrs = graph.neighbors(current)
            stalled = not nbrs or steps >= max_steps or all(n in visited for n in nbrs)
            if stalled:
                if current == seed and steps == 0:
                    break  # the seed itself has nowhere to go
                restarts += 1
                if restarts > MAX_RESTARTS:
                    break
                current, steps = seed, 0
                continue
            nxt = nbrs[int(rng.integers(len(nbrs)))]
            steps += 1
            visited.add(nxt)
            if nxt in allowed and nxt not in taken:
                chosen.append(nxt)
                taken.add(nxt)
                gathered += 1
            current = nxt

    n_walked = len(chosen)
    if n_walked < B:
        rest = [e for e in pool if e not in taken]
        chosen.extend(rest[i] for i in rng.choice(len(rest), size=B - n_walked, replace=False))
    filled = (False,) * n_walked + (True,) * (B - n_walked)
    return WalkSample(tuple(chosen), filled, tuple(seeds))


def sample_negative_passages(entity: int, positive_index: int, K: int, rng: np.random.Generator,
                             graph: GroundedGraph, counters: Counter | None = None
                             ) -> list[PassageRef]:
    """K passages of ``entity``'s page other than the positive, without replacement.

    Short pages borrow the shortfall from the pages of graph neighbors.
    """
    own = [i for i in range(len(graph.passages[entity])) if i != positive_index]
    if len(own) >= K:
        return [PassageRef(entity, own[i]) for i in rng.choice(len(own), size=K, replace=False)]
    refs = [PassageRef(entity, own[i]) for i in rng.permutation(len(own))]
    borrowed = [PassageRef(n, j) for n in graph.neighbors(entity)
                for j in range(len(graph.passages[n]))]
    short = K - len(own)
    if len(borrowed) < short:
        raise InsufficientPassagesError(
            f"{graph.titles[entity]!r} and its neighbors supply {len(own) + 1 + len(borrowed)} "
            f"passages, need {K + 1}")
    refs.extend(borrowed[i] for i in rng.choice(len(borrowed), size=short, replace=False))
    if counters is not None:
        counters["fallback"] += 1
    return refs


@dataclass(frozen=True)
class RetrievalBatch:
    """B questions against (1+K)*B passages.

    Row i's block of columns is ``[i*(1+K), (i+1)*(1+K))``; its first column
    holds the positive, the rest its K hard negatives.
    """
    entities: tuple[int, ...]
    datapoints: tuple[QADatapoint, ...]
    passages: tuple[tuple[str, ...], ...]
    passage_refs: tuple[PassageRef, ...]
    K: int
    filled: tuple[bool, ...] = ()

    @property
    def B(self) -> int:
        return len(self.datapoints)

    @property
    def questions(self) -> list[tuple[str, ...]]:
        return [d.question for d in self.datapoints]

    @property
    def relations(self) -> list[int]:
        return [d.relation for d in self.datapoints]

    @property
    def positive_columns(self) -> list[int]:
        return [i * (1 + self.K) for i in range(self.B)]

    def to_json(self) -> dict:
        return {
            "entities": list(self.entities),
            "filled": list(self.filled),
            "K": self.K,
            "questions": [list(q) for q in self.questions],
            "relations": [None if r < 0 else r for r in self.relations],
            "positive_columns": self.positive_columns,
            "passage_refs": [list(r) for r in self.passage_refs],
            "passages": [list(p) for p in self.passages],
        }


@dataclass(frozen=True)
class ReaderBatch:
    """Per datapoint: the unmasked positive (index 0) followed by m negatives."""
    datapoints: tuple[QADatapoint, ...]
    passages: tuple[tuple[tuple[str, ...], ...], ...]
    passage_refs: tuple[tuple[PassageRef, ...], ...]

    def to_json(self) -> dict:
        return {
            "questions": [list(d.question) for d in self.datapoints],
            "answer_spans": [list(d.answer_span) for d in self.datapoints],
            "passage_refs": [[list(r) for r in refs] for refs in self.passage_refs],
        }


def assemble_retrieval_batch(pool: DatapointPool, graph: GroundedGraph, config: SamplingConfig,
                             rng: np.random.Generator, counters: Counter | None = None
                             ) -> RetrievalBatch:
    walk = random_walk_entities(graph, config, rng, eligible=pool.keys())
    datapoints, passages, refs = [], [], []
    for entity in walk.entities:
        options = pool[entity]
        dp = options[int(rng.integers(len(options)))]
        datapoints.append(dp)
        passages.append(dp.masked_positive)
        refs.append(dp.positive)
        for ref in sample_negative_passages(entity, dp.positive.index, config.K, rng, graph, counters):
            passages.append(tuple(mask_entity(graph.passage_tokens(*ref), entity, graph.aliases)))
            refs.append(ref)
    return RetrievalBatch(walk.entities, tuple(datapoints), tuple(passages), tuple(refs),
                          config.K, walk.filled)


def assemble_reader_batch(pool: DatapointPool, graph: GroundedGraph, config: SamplingConfig,
                          rng: np.random.Generator, counters: Counter | None = None
                          ) -> ReaderBatch:
    entities = sorted(pool.keys())
    if len(entities) < config.reader_batch:
        raise InsufficientEntitiesError(
            f"need {config.reader_batch} source entities, pool has {len(entities)}")
    picked = [entities[i] for i in rng.choice(len(entities), size=config.reader_batch, replace=False)]
    datapoints, passages, refs = [], [], []
    for entity in picked:
        options = pool[entity]
        dp = options[int(rng.integers(len(options)))]
        negs = sample_negative_passages(entity, dp.positive.index, config.m, rng, graph, counters)
        row_refs = (dp.positive, *negs)
        datapoints.append(dp)
        refs.append(row_refs)
        passages.append(tuple(graph.passage_tokens(*r) for r in row_refs))
    return ReaderBatch(tuple(datapoints), tuple(passages), tuple(refs))


def iter_retrieval_batches(pool: DatapointPool, graph: GroundedGraph, config: SamplingConfig,
                           n: int, seed: int | None = None) -> Iterator[RetrievalBatch]:
    rng = np.random.default_rng(config.seed if seed is None else seed)
    for _ in range(n):
        yield assemble_retrieval_batch(pool, graph, config, rng)
