"""
Building a grounded graph from a small wiki corpus
==================================================

"""
import os

from relqa.corpus import extract_hyperlinks, parse_corpus
from relqa.graph import align_and_ground, compute_stats, load_triplets

FIXTURES = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "fixtures")

# pages are "= Title =" headers followed by text with [[Target|anchor]] links
corpus = parse_corpus(os.path.join(FIXTURES, "mini_wiki.txt"))
print(len(corpus), "pages")

# hyperlinks resolve to entities; anchor texts become aliases
links, aliases = extract_hyperlinks(corpus)
curry = corpus.entity_id("Stephen Curry")
print("Stephen Curry links:", [corpus.pages[h.target].title for h in links if h.source == curry])
print("aliases of Splash Brothers:", sorted(aliases.surfaces(corpus.entity_id("Splash Brothers"))))

# triplets name their relation; they relabel hyperlinks or ground through mentions
triplets = load_triplets(os.path.join(FIXTURES, "mini_triplets.tsv"), corpus)
graph = align_and_ground(triplets, links, corpus, aliases)
print(graph.counters)

heath, cup = graph.titles.index("Edward Heath"), graph.titles.index("Admiral's Cup")
for edge in graph.edges_between(heath, cup):
    print(graph.relation_name(edge.relation), "described in passage", edge.descriptions)

print(compute_stats(graph).as_text())
