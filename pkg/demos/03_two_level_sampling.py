"""
Two-level negative sampling
===========================

"""
import numpy as np

from relqa.pipeline import build_from_text
from relqa.sampling import SamplingConfig, assemble_retrieval_batch, build_pool, \
    random_walk_entities
from relqa.synth import generate_synthetic

syn = generate_synthetic(80, 6, seed=1)
graph, data, _ = build_from_text(syn.text, syn.triplets)
pool = build_pool(data)
rng = np.random.default_rng(0)

# entity level: b seeds, a random walk from each, uniform fill for any shortfall
config = SamplingConfig(b=3, B=12, K=2)
walk = random_walk_entities(graph, config, rng, eligible=pool)
print("seeds:", walk.seeds)
print("entities:", walk.entities)
print("filled:", sum(walk.filled))

# passage level: K other passages of the same page, so negatives share the topic
batch = assemble_retrieval_batch(pool, graph, config, rng)
print(len(batch.questions), "questions x", len(batch.passages), "passages")
print("positives at columns", batch.positive_columns)
row = batch.passage_refs[:1 + config.K]
print("row 0 refs:", [tuple(r) for r in row])
