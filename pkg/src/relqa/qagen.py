"""Relational QA datapoints generated from mutual pairs of the grounded graph.

For a mutual pair (s, t) the question is built from the passage of t's page
that describes s, so question and positive passage come from different pages::

    <mask> of <title of s> which <desc(t, s)> ?

The target is masked out of the question; the source is masked out of the
retrieval view of the positive passage.
"""

from __future__ import annotations

import json
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

from .corpus import AliasTable, PassageRef
from .errors import DatasetFormatError, NotMutualError
from .graph import UNLABELED, GroundedGraph, mutual_pairs
from .text import MASK, mask_spans, tokenize
from .util import atomic_open


@dataclass(frozen=True)
class QADatapoint:
    source: int
    relation: int
    target: int
    question: tuple[str, ...]
    positive: PassageRef
    answer_span: tuple[int, int]  # inclusive token offsets in the unmasked positive
    masked_positive: tuple[str, ...]

    @property
    def labeled(self) -> bool:
        return self.relation != UNLABELED

    def to_json(self) -> dict:
        return {
            "source": self.source,
            "relation": None if self.relation == UNLABELED else self.relation,
            "target": self.target,
            "question": list(self.question),
            "positive": {"entity": self.positive.entity, "passage": self.positive.index},
            "answer_span": list(self.answer_span),
            "masked_positive": list(self.masked_positive),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "QADatapoint":
        rel = obj["relation"]
        start, end = obj["answer_span"]
        return cls(
            source=int(obj["source"]),
            relation=UNLABELED if rel is None else int(rel),
            target=int(obj["target"]),
            question=tuple(obj["question"]),
            positive=PassageRef(int(obj["positive"]["entity"]), int(obj["positive"]["passage"])),
            answer_span=(int(start), int(end)),
            masked_positive=tuple(obj["masked_positive"]),
        )


def mask_entity(tokens: Sequence[str], entity: int, aliases: AliasTable) -> list[str]:
    """Replace every alias occurrence of ``entity`` token-for-token by ``<mask>``."""
    spans = [(a, b) for a, b, _ in aliases.matcher(entity).finditer(tokens)]
    return mask_spans(tokens, spans)


def _check_mutual(graph: GroundedGraph, s: int, t: int) -> None:
    fwd, back = graph.primary_edge(s, t), graph.primary_edge(t, s)
    if fwd is None or back is None or not fwd.descriptions or not back.descriptions:
        raise NotMutualError(f"pair ({graph.titles[s]!r}, {graph.titles[t]!r}) is not mutual")


def generate_question(pair: tuple[int, int], graph: GroundedGraph) -> list[str]:
    """Template question before target masking."""
    s, t = pair
    _check_mutual(graph, s, t)
    desc_ts = graph.primary_edge(t, s).descriptions[0]
    return ([MASK, "of"] + tokenize(graph.titles[s]) + ["which"]
            + list(graph.passage_tokens(t, desc_ts)) + ["?"])


def build_datapoint(pair: tuple[int, int], graph: GroundedGraph, description: int = 0,
                    counters: Counter | None = None) -> QADatapoint | None:
    """Datapoint for ``pair`` using the given description of the s -> t edge.

    Returns None (and bumps ``counters["alias_overlap"]``) when the source and
    target share an alias, since masking one would erase the other.
    """
    s, t = pair
    _check_mutual(graph, s, t)
    aliases = graph.aliases
    if aliases.keys(s) & aliases.keys(t):
        if counters is not None:
            counters["alias_overlap"] += 1
        return None
    edge = graph.primary_edge(s, t)
    ref = PassageRef(s, edge.descriptions[description])
    positive = graph.passage_tokens(*ref)
    span = aliases.matcher(t).first(positive)
    if span is None:
        raise AssertionError(
            f"no alias of {graph.titles[t]!r} in description passage {ref} of {graph.titles[s]!r}")
    question = mask_entity(generate_question(pair, graph), t, aliases)
    return QADatapoint(
        source=s,
        relation=edge.relation,
        target=t,
        question=tuple(question),
        positive=ref,
        answer_span=(span[0], span[1] - 1),
        masked_positive=tuple(mask_entity(positive, s, aliases)),
    )


def generate_dataset(graph: GroundedGraph, all_descriptions: bool = False, workers: int = 1
                     ) -> tuple[list[QADatapoint], Counter]:
    """All datapoints of the graph ordered by (source, target, description)."""
    pairs = mutual_pairs(graph)

    def one(pair):
        local = Counter()
        n = len(graph.primary_edge(*pair).descriptions) if all_descriptions else 1
        out = [build_datapoint(pair, graph, i, local) for i in range(n)]
        return [d for d in out if d is not None], local

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, pairs))
    else:
        results = [one(p) for p in pairs]
    data, counters = [], Counter(mutual_pairs=len(pairs))
    for dps, local in results:
        data.extend(dps)
        counters.update(local)
    counters["datapoints"] = len(data)
    return data, counters


def export_dataset(datapoints: Iterable[QADatapoint], path: str | os.PathLike) -> None:
    with atomic_open(path, "w") as fh:
        for d in datapoints:
            fh.write(json.dumps(d.to_json(), ensure_ascii=False))
            fh.write("\n")


def import_dataset(path: str | os.PathLike) -> list[QADatapoint]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(QADatapoint.from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DatasetFormatError(f"bad datapoint: {exc}", lineno) from exc
    return out
