"""
The four losses and a finite-difference check
=============================================

"""
import math

import numpy as np

from relqa.losses import distill_loss, ramp_weight, reader_loss, relation_loss, retrieval_loss
from relqa.model import ModelConfig, ModelParams

config = ModelConfig(n_relations=4, vocab_size=211, d_emb=8, d=6, init_scale=0.5)
p = ModelParams.init(config, seed=0)
teacher = ModelParams.init(config, seed=1)

questions = [["<mask>", "of", "ada", "which", "wrote", "notes"], ["<mask>", "of", "bo", "?"]]
passages = [["ada", "wrote", "notes"], ["tea", "time"], ["bo", "sails"], ["rain"]]

print("L_rel     ", relation_loss(questions, [2, 0], p).value, "uniform would be", math.log(4))
print("L_distill ", distill_loss(questions, p, teacher).value)
print("L_retr    ", retrieval_loss(questions, passages, [0, 2], p).value)
read = reader_loss(questions, [passages[:2], passages[2:]], [(0, 0), (1, 1)], p)
print("L_read    ", read.value, read.parts)
print("ramp      ", [round(ramp_weight(e), 4) for e in range(4)])

# nudge one coordinate of W_q and compare with the analytic gradient
loss = retrieval_loss(questions, passages, [0, 2], p)
h = 1e-5
p.W_q[1, 2] += h
up = retrieval_loss(questions, passages, [0, 2], p).value
p.W_q[1, 2] -= 2 * h
down = retrieval_loss(questions, passages, [0, 2], p).value
p.W_q[1, 2] += h
print("dL/dW_q[1,2]", loss.grads["W_q"][1, 2], "finite difference", (up - down) / (2 * h))
