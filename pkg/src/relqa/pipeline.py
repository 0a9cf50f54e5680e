"""Convenience compositions of the module operations."""

from __future__ import annotations

from collections import Counter

from .corpus import Corpus, extract_hyperlinks, parse_corpus
from .graph import GroundedGraph, align_and_ground, load_triplets
from .qagen import QADatapoint, generate_dataset


def build_graph(corpus_source, triplet_source, workers: int = 1) -> tuple[Corpus, GroundedGraph]:
    corpus = parse_corpus(corpus_source, workers=workers)
    links, aliases = extract_hyperlinks(corpus)
    triplets = load_triplets(triplet_source, corpus)
    return corpus, align_and_ground(triplets, links, corpus, aliases, workers=workers)


def build_from_text(corpus_text: str, triplet_text: str, all_descriptions: bool = False
                    ) -> tuple[GroundedGraph, list[QADatapoint], Counter]:
    _, graph = build_graph(corpus_text.encode("utf-8"), triplet_text.encode("utf-8"))
    data, counters = generate_dataset(graph, all_descriptions=all_descriptions)
    return graph, data, counters
