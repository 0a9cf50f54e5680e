"""
Masked relational questions from mutual links
=============================================

"""
import os

from relqa.graph import mutual_pairs
from relqa.pipeline import build_graph
from relqa.qagen import build_datapoint, generate_dataset

FIXTURES = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "fixtures")
_, graph = build_graph(os.path.join(FIXTURES, "mini_wiki.txt"),
                       os.path.join(FIXTURES, "mini_triplets.tsv"))

# a question needs the link both ways: s describes t, t describes s
pairs = mutual_pairs(graph)
print(len(pairs), "mutual pairs")

# template: <mask> of <title of s> which <t's passage about s, target masked> ?
s, t = graph.titles.index("Edward Heath"), graph.titles.index("Admiral's Cup")
d = build_datapoint((s, t), graph)
print(" ".join(d.question))
print("relation:", graph.relation_name(d.relation))

# the answer is a span in s's own passage about t; that passage is source-masked for retrieval
positive = graph.passage_tokens(*d.positive)
a, b = d.answer_span
print("answer span:", positive[a:b + 1])
print(" ".join(d.masked_positive[:30]), "...")

# pairs whose entities share an alias are skipped, masking one would erase the other
data, counters = generate_dataset(graph)
print(len(data), "datapoints;", dict(counters))
