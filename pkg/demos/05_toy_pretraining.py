"""
Toy pre-training on a synthetic corpus
======================================

"""
from relqa.pipeline import build_from_text
from relqa.sampling import SamplingConfig
from relqa.synth import generate_synthetic
from relqa.training import TrainConfig, pretrain

# each relation has its own cue words, so questions carry a learnable relation signal
syn = generate_synthetic(120, 8, seed=0)
graph, data, _ = build_from_text(syn.text, syn.triplets)
print(len(graph.titles), "entities,", len(data), "datapoints")

sampling = SamplingConfig(b=4, B=32, K=2, reader_batch=16)
config = TrainConfig(epochs=6, lr=1.0, batches_per_epoch=10, holdout_fraction=0.2,
                     vocab_size=8192, d_emb=32, d=16)
result = pretrain(graph, data, sampling, config,
                  on_report=lambda r: r.step % 10 == 9 and print(
                      f"epoch {r.epoch}  L_rel {r.rel:.3f}  L_distill {r.distill:.3f}  "
                      f"L_retr {r.retr:.3f}  L_read {r.read:.3f}"))
print(result.evaluation.as_text())
