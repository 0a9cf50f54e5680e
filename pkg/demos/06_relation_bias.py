"""
Relation frequency and accuracy by frequency
============================================

"""
import os

from relqa.analysis import (accuracy_by_frequency, align_qa, frequency_cdf, read_predictions,
                            read_qa_rows)
from relqa.pipeline import build_graph

FIXTURES = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "fixtures")
_, graph = build_graph(os.path.join(FIXTURES, "mini_wiki.txt"),
                       os.path.join(FIXTURES, "mini_triplets.tsv"))

# pair each question's passage entity with its answer and look for a labeled edge
aligned, coverage = align_qa(read_qa_rows(os.path.join(FIXTURES, "analysis_qa.tsv")), graph)
print(f"{coverage.aligned}/{coverage.total} aligned ({coverage.coverage:.1%}),",
      f"{coverage.skipped} skipped")
for a in aligned[:6]:
    print(f"  {a.answer!r:28} {a.relations}")

# how often each relation shows up in training questions
train, _ = align_qa(read_qa_rows(os.path.join(FIXTURES, "analysis_train_qa.tsv")), graph)
table = frequency_cdf(train)
for relation, count in table.rows():
    print(f"  {count:3d}  {relation}")
print("cdf:", table.cdf())

# exact match by training frequency of each question's relation
flags = read_predictions(os.path.join(FIXTURES, "analysis_predictions.tsv"))
for b in accuracy_by_frequency(aligned, flags, table):
    print(f"  {b.label:10} n={b.n:2d} em={b.em}")
