"""Relation-bias analysis of a QA set against the grounded graph.

Each QA row names the entity of its ground-truth passage and an answer string.
The answer is matched to an entity through the alias table; the pair is
aligned when the graph holds a labeled edge between the two (either
direction; reverse relations carry an ``_r`` suffix).
"""

from __future__ import annotations

import csv
import io
import math
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

from .errors import RelqaError
from .graph import GroundedGraph
from .text import nfc, normalize_title
from .util import atomic_open

ARTICLES = ("the", "a")
DEFAULT_BIN_EDGES = (1, 5, 20, 100, math.inf)


class RelKey(NamedTuple):
    relation: int
    reverse: bool

    def name(self, graph: GroundedGraph) -> str:
        label = graph.relations[self.relation]
        return f"{label}_r" if self.reverse else label


@dataclass(frozen=True)
class QARow:
    question: str
    entity: str
    answer: str


@dataclass(frozen=True)
class AlignedQA:
    question_id: int
    entity: int
    answer: str
    answer_entities: tuple[int, ...]
    relations: tuple[str, ...]  # ordered by (relation id, forward before reverse)

    @property
    def aligned(self) -> bool:
        return bool(self.relations)


@dataclass(frozen=True)
class Coverage:
    total: int
    aligned: int
    skipped: int  # rows whose passage entity is not in the graph
    relations_covered: int
    relation_vocabulary: int

    @property
    def coverage(self) -> float:
        return self.aligned / self.total if self.total else 0.0

    @property
    def relation_coverage(self) -> float:
        return self.relations_covered / self.relation_vocabulary if self.relation_vocabulary else 0.0


def read_qa_rows(path: str | os.PathLike) -> list[QARow]:
    """``question<TAB>entity_title<TAB>answer`` rows; row index is the question id."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise RelqaError(f"{path}: line {lineno}: expected 3 tab-separated fields")
            rows.append(QARow(*parts))
    return rows


def read_predictions(path: str | os.PathLike) -> dict[int, int]:
    """``question_id<TAB>em_flag`` rows."""
    flags = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                qid, flag = line.split("\t")
                flags[int(qid)] = int(flag)
            except ValueError as exc:
                raise RelqaError(f"{path}: line {lineno}: bad prediction row") from exc
            if flags[int(qid)] not in (0, 1):
                raise RelqaError(f"{path}: line {lineno}: EM flag must be 0 or 1")
    return flags


def normalize_answer(text: str) -> str:
    words = nfc(text).casefold().split()
    if words and words[0] in ARTICLES:
        words = words[1:]
    return " ".join(words)


def answer_index(graph: GroundedGraph) -> dict[str, set[int]]:
    index: dict[str, set[int]] = {}
    for entity in graph.aliases.entities():
        for surface in graph.aliases.surfaces(entity):
            index.setdefault(normalize_answer(surface), set()).add(entity)
    return index


def align_qa(rows: Sequence[QARow], graph: GroundedGraph) -> tuple[list[AlignedQA], Coverage]:
    titles = {normalize_title(t): i for i, t in enumerate(graph.titles)}
    answers = answer_index(graph)
    out, skipped = [], 0
    covered: set[int] = set()  # base relation ids, reverse direction folded in
    for qid, row in enumerate(rows):
        entity = titles.get(normalize_title(row.entity))
        if entity is None:
            skipped += 1
            continue
        matched = tuple(sorted(answers.get(normalize_answer(row.answer), ())))
        keys = set()
        for a in matched:
            keys.update(RelKey(e.relation, False) for e in graph.edges_between(entity, a) if e.labeled)
            keys.update(RelKey(e.relation, True) for e in graph.edges_between(a, entity) if e.labeled)
        ordered = sorted(keys)
        if ordered:
            covered.add(ordered[0].relation)
        out.append(AlignedQA(qid, entity, row.answer, matched,
                             tuple(k.name(graph) for k in ordered)))
    aligned = sum(1 for a in out if a.aligned)
    return out, Coverage(len(rows), aligned, skipped, len(covered), len(graph.relations))


@dataclass
class RelationFrequencyTable:
    counts: dict[str, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def cdf(self) -> list[tuple[int, float]]:
        """(frequency f, fraction of relations with count <= f) at each distinct count."""
        n = len(self.counts)
        by_freq = Counter(self.counts.values())
        points, running = [], 0
        for f in sorted(by_freq):
            running += by_freq[f]
            points.append((f, running / n))
        return points

    def rows(self) -> list[tuple[str, int]]:
        return sorted(self.counts.items(), key=lambda kv: (-kv[1], kv[0]))


def frequency_cdf(aligned: Iterable[AlignedQA]) -> RelationFrequencyTable:
    """Count each aligned QA once, under its first (lowest-id) matched relation."""
    counts = Counter(a.relations[0] for a in aligned if a.aligned)
    return RelationFrequencyTable(dict(counts))


def dataset_frequency(datapoints: Iterable, graph: GroundedGraph) -> RelationFrequencyTable:
    """Relation counts over the labeled datapoints of a generated QA set."""
    counts = Counter(graph.relations[d.relation] for d in datapoints if d.relation >= 0)
    return RelationFrequencyTable(dict(counts))


@dataclass(frozen=True)
class Bucket:
    low: float | None  # None for the "unseen" bucket
    high: float | None
    n: int
    em: float | None  # None for an empty bucket

    @property
    def unseen(self) -> bool:
        return self.low is None

    @property
    def label(self) -> str:
        return "unseen" if self.unseen else f"[{_fmt(self.low)},{_fmt(self.high)})"


def _fmt(x: float | None) -> str:
    if x is None:
        return "unseen"
    if math.isinf(x):
        return "inf"
    return str(int(x)) if float(x).is_integer() else repr(x)


def accuracy_by_frequency(aligned: Iterable[AlignedQA], em_flags: Mapping[int, int],
                          train_table: RelationFrequencyTable,
                          bin_edges: Sequence[float] = DEFAULT_BIN_EDGES) -> list[Bucket]:
    """Mean EM per bucket of training-set relation frequency, plus an "unseen" bucket."""
    edges = list(bin_edges)
    if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError("bin edges must be strictly increasing, at least two")
    members: list[list[int]] = [[] for _ in edges[:-1]]
    unseen: list[int] = []
    for a in aligned:
        if not a.aligned:
            continue
        if a.question_id not in em_flags:
            raise RelqaError(f"no EM flag for question {a.question_id}")
        flag = em_flags[a.question_id]
        freq = train_table.counts.get(a.relations[0])
        if freq is None:
            unseen.append(flag)
            continue
        for i, (lo, hi) in enumerate(zip(edges, edges[1:])):
            if lo <= freq < hi:
                members[i].append(flag)
                break
        else:
            unseen.append(flag)
    buckets = [Bucket(float(lo), float(hi), len(m), sum(m) / len(m) if m else None)
               for (lo, hi), m in zip(zip(edges, edges[1:]), members)]
    buckets.append(Bucket(None, None, len(unseen), sum(unseen) / len(unseen) if unseen else None))
    return buckets


# ---------------------------------------------------------------------------
# report files


def frequency_csv(table: RelationFrequencyTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["relation", "count"])
    w.writerows(table.rows())
    return buf.getvalue()


def parse_frequency_csv(text: str) -> RelationFrequencyTable:
    rows = list(csv.reader(io.StringIO(text)))
    return RelationFrequencyTable({r: int(c) for r, c in rows[1:]})


def accuracy_csv(buckets: Sequence[Bucket]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bucket_low", "bucket_high", "n", "em"])
    for b in buckets:
        w.writerow([_fmt(b.low), _fmt(b.high), b.n, "" if b.em is None else repr(b.em)])
    return buf.getvalue()


def parse_accuracy_csv(text: str) -> list[Bucket]:
    def num(s: str) -> float | None:
        if s == "unseen":
            return None
        return math.inf if s == "inf" else float(s)
    out = []
    for lo, hi, n, em in list(csv.reader(io.StringIO(text)))[1:]:
        out.append(Bucket(num(lo), num(hi), int(n), None if em == "" else float(em)))
    return out


def cdf_plot_data(table: RelationFrequencyTable) -> str:
    lines = ["# relation_frequency cdf"]
    lines += [f"{f} {repr(p)}" for f, p in table.cdf()]
    return "\n".join(lines) + "\n"


def accuracy_plot_data(buckets: Sequence[Bucket]) -> str:
    lines = ["# bucket_low em"]
    lines += [f"{_fmt(b.low)} {repr(b.em)}" for b in buckets if b.em is not None and not b.unseen]
    return "\n".join(lines) + "\n"


def coverage_text(cov: Coverage) -> str:
    return (f"total={cov.total}\naligned={cov.aligned}\nskipped={cov.skipped}\n"
            f"coverage={repr(cov.coverage)}\nrelations_covered={cov.relations_covered}\n"
            f"relation_vocabulary={cov.relation_vocabulary}\n"
            f"relation_coverage={repr(cov.relation_coverage)}\n")


def emit_report(out_dir: str | os.PathLike, table: RelationFrequencyTable,
                buckets: Sequence[Bucket] | None = None, coverage: Coverage | None = None
                ) -> list[str]:
    """Write CSV tables and gnuplot-style two-column files; return the paths written."""
    files = {
        "relation_frequency.csv": frequency_csv(table),
        "fig1_relation_cdf.dat": cdf_plot_data(table),
    }
    if buckets is not None:
        files["accuracy_by_frequency.csv"] = accuracy_csv(buckets)
        files["fig2_em_by_frequency.dat"] = accuracy_plot_data(buckets)
    if coverage is not None:
        files["coverage.txt"] = coverage_text(coverage)
    written = []
    for name, text in files.items():
        path = os.path.join(out_dir, name)
        with atomic_open(path, "w") as fh:
            fh.write(text)
        written.append(path)
    return written
