"""Grounded relational wiki-graph.

Knowledge-graph triplets are aligned with hyperlinks; triplets without a
matching hyperlink are grounded by searching the source page for mentions of
the target; leftover hyperlinks become unlabeled edges. Every edge carries the
passages of the source page that describe it.
"""

from __future__ import annotations

import io
import logging
import os
import struct
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, NamedTuple, Sequence

from .corpus import AliasTable, Corpus, Hyperlink
from .errors import GraphFormatError, GraphTruncatedError, TripletFormatError
from .util import atomic_open

logger = logging.getLogger(__name__)

UNLABELED = -1


class Triplet(NamedTuple):
    source: int
    relation: int
    target: int


@dataclass
class TripletSet:
    triplets: list[Triplet]
    relations: list[str]
    dropped: int = 0  # rows naming an entity without a page
    self_loops: int = 0


class GroundedEdge(NamedTuple):
    source: int
    relation: int  # UNLABELED for plain hyperlinks
    target: int
    descriptions: tuple[int, ...]  # passage indices in the source page

    @property
    def labeled(self) -> bool:
        return self.relation != UNLABELED


@dataclass(eq=False)
class GroundedGraph:
    titles: tuple[str, ...]
    passages: tuple[tuple[tuple[str, ...], ...], ...]
    aliases: AliasTable
    relations: tuple[str, ...]
    edges: tuple[GroundedEdge, ...]
    counters: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        self.by_source: dict[int, list[GroundedEdge]] = {}
        self.by_pair: dict[tuple[int, int], list[GroundedEdge]] = {}
        nbrs: dict[int, set[int]] = {}
        for e in self.edges:
            self.by_source.setdefault(e.source, []).append(e)
            self.by_pair.setdefault((e.source, e.target), []).append(e)
            nbrs.setdefault(e.source, set()).add(e.target)
            nbrs.setdefault(e.target, set()).add(e.source)
        self._neighbors = {k: tuple(sorted(v)) for k, v in nbrs.items()}

    def __eq__(self, other) -> bool:
        if not isinstance(other, GroundedGraph):
            return NotImplemented
        return (self.titles == other.titles and self.passages == other.passages
                and self.aliases == other.aliases and self.relations == other.relations
                and self.edges == other.edges and self.counters == other.counters)

    @property
    def n_entities(self) -> int:
        return len(self.titles)

    def neighbors(self, entity: int) -> tuple[int, ...]:
        """Neighbors in the undirected closure of the edge set."""
        return self._neighbors.get(entity, ())

    def edges_between(self, source: int, target: int) -> list[GroundedEdge]:
        return self.by_pair.get((source, target), [])

    def primary_edge(self, source: int, target: int) -> GroundedEdge | None:
        """The labeled edge with the lowest relation id, else the unlabeled one."""
        edges = self.by_pair.get((source, target))
        if not edges:
            return None
        labeled = [e for e in edges if e.labeled]
        return min(labeled or edges, key=lambda e: e.relation)

    def passage_tokens(self, entity: int, index: int) -> tuple[str, ...]:
        return self.passages[entity][index]

    def relation_name(self, relation: int) -> str | None:
        return None if relation == UNLABELED else self.relations[relation]


# ---------------------------------------------------------------------------
# building


def load_triplets(source: BinaryIO | bytes | str | os.PathLike, corpus: Corpus) -> TripletSet:
    """Read ``source<TAB>relation<TAB>target`` rows; entity fields are titles.

    Blank lines and lines starting with ``#`` are ignored. The relation
    vocabulary is built in first-seen order over the rows that are kept.
    """
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = source.read().decode("utf-8")

    vocab: dict[str, int] = {}
    seen: set[Triplet] = set()
    out = TripletSet([], [])
    for row, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise TripletFormatError(f"expected 3 tab-separated fields, got {len(fields)}", row)
        s_title, rel, t_title = (f.strip() for f in fields)
        if not rel:
            raise TripletFormatError("empty relation label", row)
        s, t = corpus.entity_id(s_title), corpus.entity_id(t_title)
        if s is None or t is None:
            out.dropped += 1
            continue
        if s == t:
            out.self_loops += 1
            continue
        r = vocab.setdefault(rel, len(vocab))
        trip = Triplet(s, r, t)
        if trip not in seen:
            seen.add(trip)
            out.triplets.append(trip)
    out.relations = list(vocab)
    if out.dropped:
        logger.info("dropped %d triplet row(s) naming unknown entities", out.dropped)
    return out


def _mentions(passages: Sequence[Sequence[str]], matcher) -> list[set[int]]:
    return [{e for _, _, labels in matcher.finditer(p) for e in labels} for p in passages]


def align_and_ground(triplets: TripletSet, hyperlinks: Iterable[Hyperlink], corpus: Corpus,
                     aliases: AliasTable, workers: int = 1) -> GroundedGraph:
    passages = tuple(tuple(p.tokens for p in page) for page in corpus.passages)

    link_passages: dict[tuple[int, int], set[int]] = {}
    for h in hyperlinks:
        link_passages.setdefault((h.source, h.target), set()).add(h.passage)

    # Anchors straddling a passage boundary may leave no full alias in the
    # assigned passage; keep only passages where the target is really present.
    verified: dict[tuple[int, int], tuple[int, ...]] = {}
    unverified = 0
    for (s, t), idx in link_passages.items():
        matcher = aliases.matcher(t)
        ok = tuple(i for i in sorted(idx) if matcher.contains(passages[s][i]))
        unverified += len(idx) - len(ok)
        if ok:
            verified[(s, t)] = ok

    to_search = sorted({tr.source for tr in triplets.triplets
                        if (tr.source, tr.target) not in link_passages})
    matcher = aliases.global_matcher()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            found = list(pool.map(lambda s: _mentions(passages[s], matcher), to_search))
    else:
        found = [_mentions(passages[s], matcher) for s in to_search]
    mentions = dict(zip(to_search, found))

    edges: list[GroundedEdge] = []
    aligned_pairs: set[tuple[int, int]] = set()
    counts = Counter()
    for tr in triplets.triplets:
        pair = (tr.source, tr.target)
        if pair in link_passages:
            if pair in verified:
                edges.append(GroundedEdge(tr.source, tr.relation, tr.target, verified[pair]))
                counts["aligned_triplets"] += 1
            else:
                counts["ungrounded_triplets"] += 1
            aligned_pairs.add(pair)
            continue
        desc = tuple(i for i, ents in enumerate(mentions[tr.source]) if tr.target in ents)
        if desc:
            edges.append(GroundedEdge(tr.source, tr.relation, tr.target, desc))
            counts["mention_grounded_triplets"] += 1
        else:
            counts["ungrounded_triplets"] += 1
    for pair, desc in verified.items():
        if pair not in aligned_pairs:
            edges.append(GroundedEdge(pair[0], UNLABELED, pair[1], desc))

    edges.sort(key=lambda e: (e.source, e.target, e.relation))
    counters = {
        "dropped_triplet_rows": triplets.dropped,
        "self_loop_triplet_rows": triplets.self_loops,
        "aligned_triplets": counts["aligned_triplets"],
        "mention_grounded_triplets": counts["mention_grounded_triplets"],
        "ungrounded_triplets": counts["ungrounded_triplets"],
        "unverified_link_passages": unverified,
        "dangling_links": corpus.dangling_links,
        "self_links": corpus.self_links,
    }
    return GroundedGraph(tuple(corpus.titles), passages, aliases,
                         tuple(triplets.relations), tuple(edges), counters)


def mutual_pairs(graph: GroundedGraph) -> list[tuple[int, int]]:
    """Ordered pairs (s, t) with grounded edges in both directions."""
    out = []
    for (s, t), edges in graph.by_pair.items():
        back = graph.by_pair.get((t, s))
        if back and any(e.descriptions for e in edges) and any(e.descriptions for e in back):
            out.append((s, t))
    return sorted(out)


# ---------------------------------------------------------------------------
# statistics


@dataclass(frozen=True)
class GraphStats:
    linked_entities: int
    relation_labels: int
    labeled_triplets: int
    unlabeled_triplets: int
    descriptions_per_triplet: float

    def as_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in (
            ("linked_entities", self.linked_entities),
            ("relation_labels", self.relation_labels),
            ("labeled_triplets", self.labeled_triplets),
            ("unlabeled_triplets", self.unlabeled_triplets),
            ("descriptions_per_triplet", f"{self.descriptions_per_triplet:.2f}"),
        ))


def compute_stats(graph: GroundedGraph) -> GraphStats:
    linked = set()
    labeled = unlabeled = n_desc = 0
    for e in graph.edges:
        linked.update((e.source, e.target))
        n_desc += len(e.descriptions)
        if e.labeled:
            labeled += 1
        else:
            unlabeled += 1
    total = labeled + unlabeled
    mean = round(n_desc / total, 2) if total else 0.0
    return GraphStats(len(linked), len(graph.relations), labeled, unlabeled, mean)


def edges_tsv(graph: GroundedGraph) -> str:
    """Readable dump: source, relation (empty if unlabeled), target, passage indices."""
    lines = ["source\trelation\ttarget\tdescriptions"]
    for e in graph.edges:
        rel = graph.relation_name(e.relation) or ""
        desc = ",".join(str(i) for i in e.descriptions)
        lines.append(f"{graph.titles[e.source]}\t{rel}\t{graph.titles[e.target]}\t{desc}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# binary format: magic, version byte, then (tag, u64 length, payload) sections

MAGIC = b"RGWG"
VERSION = 1
_SECTIONS = (b"ENTS", b"PASS", b"ALIA", b"RELS", b"EDGE", b"CNTR")
_END = b"END\x00"


class _Writer:
    def __init__(self):
        self.buf = io.BytesIO()

    def u32(self, v: int):
        self.buf.write(struct.pack("<I", v))

    def i32(self, v: int):
        self.buf.write(struct.pack("<i", v))

    def u64(self, v: int):
        self.buf.write(struct.pack("<Q", v))

    def str(self, s: str):
        b = s.encode("utf-8")
        self.u32(len(b))
        self.buf.write(b)

    def getvalue(self) -> bytes:
        return self.buf.getvalue()


class _Reader:
    def __init__(self, data: bytes, what: str):
        self.data, self.pos, self.what = data, 0, what

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise GraphTruncatedError(f"truncated {self.what} (needed {n} bytes at offset {self.pos})")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def i32(self) -> int:
        return struct.unpack("<i", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def str(self) -> str:
        return self.take(self.u32()).decode("utf-8")

    def done(self) -> bool:
        return self.pos == len(self.data)


def _encode_sections(graph: GroundedGraph) -> dict[bytes, bytes]:
    out = {}
    w = _Writer()
    w.u32(len(graph.titles))
    for t in graph.titles:
        w.str(t)
    out[b"ENTS"] = w.getvalue()

    w = _Writer()
    for page in graph.passages:
        w.u32(len(page))
        for passage in page:
            w.u32(len(passage))
            for tok in passage:
                w.str(tok)
    out[b"PASS"] = w.getvalue()

    w = _Writer()
    table = graph.aliases.as_dict()
    w.u32(len(table))
    for entity, names in table.items():
        w.u32(entity)
        w.u32(len(names))
        for n in names:
            w.str(n)
    out[b"ALIA"] = w.getvalue()

    w = _Writer()
    w.u32(len(graph.relations))
    for r in graph.relations:
        w.str(r)
    out[b"RELS"] = w.getvalue()

    w = _Writer()
    w.u64(len(graph.edges))
    for e in graph.edges:
        w.u32(e.source)
        w.i32(e.relation)
        w.u32(e.target)
        w.u32(len(e.descriptions))
        for d in e.descriptions:
            w.u32(d)
    out[b"EDGE"] = w.getvalue()

    w = _Writer()
    w.u32(len(graph.counters))
    for k in sorted(graph.counters):
        w.str(k)
        w.u64(graph.counters[k])
    out[b"CNTR"] = w.getvalue()
    return out


def graph_to_bytes(graph: GroundedGraph) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(bytes([VERSION]))
    sections = _encode_sections(graph)
    for tag in _SECTIONS:
        buf.write(tag)
        buf.write(struct.pack("<Q", len(sections[tag])))
        buf.write(sections[tag])
    buf.write(_END)
    buf.write(struct.pack("<Q", 0))
    return buf.getvalue()


def graph_from_bytes(data: bytes) -> GroundedGraph:
    if len(data) < 5:
        raise GraphFormatError("not a graph file (too short)")
    if data[:4] != MAGIC:
        raise GraphFormatError(f"bad magic bytes {data[:4]!r}")
    if data[4] != VERSION:
        raise GraphFormatError(f"unsupported graph format version {data[4]} (expected {VERSION})")
    top = _Reader(data[5:], "graph file")
    raw: dict[bytes, bytes] = {}
    while True:
        tag = top.take(4)
        length = top.u64()
        if tag == _END:
            break
        if tag not in _SECTIONS:
            raise GraphFormatError(f"unknown section {tag!r}")
        raw[tag] = top.take(length)
    missing = [t.decode() for t in _SECTIONS if t not in raw]
    if missing:
        raise GraphFormatError(f"missing section(s): {', '.join(missing)}")

    r = _Reader(raw[b"ENTS"], "entity section")
    titles = tuple(r.str() for _ in range(r.u32()))

    r = _Reader(raw[b"PASS"], "passage section")
    passages = []
    for _ in titles:
        passages.append(tuple(tuple(r.str() for _ in range(r.u32())) for _ in range(r.u32())))

    r = _Reader(raw[b"ALIA"], "alias section")
    table = {}
    for _ in range(r.u32()):
        entity = r.u32()
        table[entity] = [r.str() for _ in range(r.u32())]

    r = _Reader(raw[b"RELS"], "relation section")
    relations = tuple(r.str() for _ in range(r.u32()))

    r = _Reader(raw[b"EDGE"], "edge section")
    edges = []
    for _ in range(r.u64()):
        s, rel, t = r.u32(), r.i32(), r.u32()
        desc = tuple(r.u32() for _ in range(r.u32()))
        edges.append(GroundedEdge(s, rel, t, desc))

    r = _Reader(raw[b"CNTR"], "counter section")
    counters = {}
    for _ in range(r.u32()):
        k = r.str()
        counters[k] = r.u64()
    return GroundedGraph(titles, tuple(passages), AliasTable(table), relations,
                         tuple(edges), counters)


def save_graph(graph: GroundedGraph, path: str | os.PathLike) -> None:
    with atomic_open(path, "wb") as fh:
        fh.write(graph_to_bytes(graph))


def load_graph(path: str | os.PathLike) -> GroundedGraph:
    with open(path, "rb") as fh:
        return graph_from_bytes(fh.read())
