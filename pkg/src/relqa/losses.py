"""Training objectives with analytic gradients.

Every loss returns a :class:`LossValue` holding the scalar and a gradient
dict over the parameters it touches (zeros elsewhere).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .graph import UNLABELED
from .model import (ModelParams, encode_passages, encode_questions, encoder_backward,
                    log_softmax, normalize_backward, reader_backward, reader_forward, zero_grads)


@dataclass
class LossValue:
    value: float
    grads: dict[str, np.ndarray]
    empty: bool = False  # nothing contributed (e.g. no labeled questions)
    parts: dict[str, float] = field(default_factory=dict)


def ramp_weight(epoch: int) -> float:
    """Distillation weight 1 - exp(-epoch); zero in the first (0-based) epoch."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return 1.0 - math.exp(-epoch)


def _relation_forward(questions, params):
    enc = encode_questions(questions, params)
    return enc, enc.hidden @ params.W_rel


def _relation_backward(enc, g_logits, params, grads):
    grads["W_rel"] += enc.hidden.T @ g_logits
    encoder_backward(enc, g_logits @ params.W_rel.T, "W_q", params, grads)


def relation_loss(questions: Sequence[Sequence[str]], relations: Sequence[int],
                  params: ModelParams) -> LossValue:
    """Mean -log P(r | q) over the labeled questions; unlabeled ones are ignored."""
    grads = zero_grads(params)
    keep = [i for i, r in enumerate(relations) if r != UNLABELED]
    if not keep or params.config.n_relations == 0:
        return LossValue(0.0, grads, empty=True)
    qs = [questions[i] for i in keep]
    target = np.array([relations[i] for i in keep])
    enc, logits = _relation_forward(qs, params)
    logp = log_softmax(logits)
    n = len(keep)
    loss = -logp[np.arange(n), target].mean()
    g = np.exp(logp)
    g[np.arange(n), target] -= 1.0
    _relation_backward(enc, g / n, params, grads)
    return LossValue(float(loss), grads)


def distill_loss(questions: Sequence[Sequence[str]], params: ModelParams,
                 teacher: ModelParams) -> LossValue:
    """Mean over questions of sum_r -log P(r|q; student) * P(r|q; teacher).

    The teacher distribution is a constant: no gradient reaches ``teacher``.
    """
    grads = zero_grads(params)
    if not questions or params.config.n_relations == 0:
        return LossValue(0.0, grads, empty=True)
    _, t_logits = _relation_forward(questions, teacher)
    soft = np.exp(log_softmax(t_logits))
    enc, logits = _relation_forward(questions, params)
    logp = log_softmax(logits)
    n = len(questions)
    loss = -(soft * logp).sum(axis=1).mean()
    _relation_backward(enc, (np.exp(logp) - soft) / n, params, grads)
    return LossValue(float(loss), grads)


def combined_relation_loss(questions: Sequence[Sequence[str]], relations: Sequence[int],
                           params: ModelParams, teacher: ModelParams, epoch: int,
                           distill_unlabeled_only: bool = False) -> LossValue:
    """L_rel on labeled questions plus ramp_weight(epoch) * L_distill.

    Distillation runs over all questions unless ``distill_unlabeled_only``.
    """
    w = ramp_weight(epoch)
    rel = relation_loss(questions, relations, params)
    if distill_unlabeled_only:
        dq = [q for q, r in zip(questions, relations) if r == UNLABELED]
    else:
        dq = list(questions)
    dist = distill_loss(dq, params, teacher)
    grads = rel.grads
    if w > 0.0:
        for k, v in dist.grads.items():
            grads[k] += w * v
    return LossValue(rel.value + w * dist.value, grads,
                     parts={"rel": rel.value, "distill": dist.value, "weight": w})


def retrieval_probability(question: Sequence[str], positive: int,
                          candidates: Sequence[Sequence[str]], params: ModelParams,
                          sim_scale: float = 1.0) -> float:
    """exp(sim(q, p+)) / sum over candidates of exp(sim(q, p)), sim = cosine."""
    if not 0 <= positive < len(candidates):
        raise ValueError("positive must index into candidates")
    q = encode_questions([question], params).z[0]
    p = encode_passages(candidates, params).z
    return float(np.exp(log_softmax(sim_scale * (p @ q))[positive]))


def retrieval_loss(questions: Sequence[Sequence[str]], passages: Sequence[Sequence[str]],
                   positive_columns: Sequence[int], params: ModelParams,
                   sim_scale: float = 1.0) -> LossValue:
    """In-batch contrastive loss over S = Q P^T (rows: questions, columns: all passages)."""
    B = len(questions)
    if len(positive_columns) != B:
        raise ValueError("one positive column per question required")
    if any(not 0 <= c < len(passages) for c in positive_columns):
        raise ValueError("positive column out of range")
    grads = zero_grads(params)
    qe = encode_questions(questions, params)
    pe = encode_passages(passages, params)
    S = sim_scale * (qe.z @ pe.z.T)
    logp = log_softmax(S)
    rows = np.arange(B)
    cols = np.asarray(positive_columns)
    loss = -logp[rows, cols].mean()
    gS = np.exp(logp)
    gS[rows, cols] -= 1.0
    gS *= sim_scale / B
    encoder_backward(qe, normalize_backward(qe, gS @ pe.z), "W_q", params, grads)
    encoder_backward(pe, normalize_backward(pe, gS.T @ qe.z), "W_p", params, grads)
    return LossValue(float(loss), grads, parts={"top1": float(np.mean(S.argmax(axis=1) == cols))})


def reader_loss(questions: Sequence[Sequence[str]],
                passages: Sequence[Sequence[Sequence[str]]],
                spans: Sequence[tuple[int, int]], params: ModelParams) -> LossValue:
    """Mean of -log P_rank(positive) - log P_start(start) - log P_end(end).

    ``passages[i][0]`` is the positive of question i; the span indexes it.
    """
    grads = zero_grads(params)
    n = len(questions)
    totals = np.zeros(3)
    for q, cands, (a, b) in zip(questions, passages, spans):
        length = len(cands[0])
        if not 0 <= a <= b < length:
            raise ValueError(f"invalid answer span ({a}, {b}) for passage of length {length}")
        fw = reader_forward(q, cands, params)
        lr, ls, le = log_softmax(fw.rank), log_softmax(fw.start), log_softmax(fw.end)
        totals += (-lr[0], -ls[a], -le[b])
        g_rank, g_start, g_end = np.exp(lr), np.exp(ls), np.exp(le)
        g_rank[0] -= 1.0
        g_start[a] -= 1.0
        g_end[b] -= 1.0
        reader_backward(fw, g_rank / n, g_start / n, g_end / n, params, grads)
    rank, start, end = (totals / n) if n else totals
    return LossValue(float(rank + start + end), grads,
                     parts={"rank": float(rank), "start": float(start), "end": float(end)})
