"""Small differentiable encoders with hand-written backward passes.

A token is hashed (FNV-1a) into a bucket of the embedding table; sequences
are mean-pooled and projected. Retrieval embeddings are L2-normalized; the
relation head reads the projected question before normalization. The reader
combines question and passage through ``tanh(W_q' q + W_p' p)`` so its scores
depend jointly on both inputs.

All arrays are float64. Gradients are returned as dicts keyed like
:meth:`ModelParams.arrays`.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import asdict, dataclass, fields
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import CheckpointFormatError
from .text import match_key
from .util import atomic_open

PARAM_NAMES = ("emb", "W_q", "W_p", "W_rel", "w_rank", "w_start", "w_end")


@dataclass(frozen=True)
class ModelConfig:
    n_relations: int
    vocab_size: int = 2 ** 15
    d_emb: int = 64
    d: int = 32
    init_scale: float = 0.05


@lru_cache(maxsize=1 << 18)
def fnv1a(text: str) -> int:
    h = 0x811C9DC5
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x01000193) & 0xFFFFFFFF
    return h


@lru_cache(maxsize=1 << 20)
def bucket(token: str, vocab_size: int) -> int:
    return fnv1a(match_key(token)) % vocab_size


def token_ids(tokens: Sequence[str], vocab_size: int) -> np.ndarray:
    if len(tokens) == 0:
        raise ValueError("empty token sequence")
    return np.fromiter((bucket(t, vocab_size) for t in tokens), dtype=np.int64, count=len(tokens))


@dataclass(eq=False)
class ModelParams:
    config: ModelConfig
    emb: np.ndarray
    W_q: np.ndarray
    W_p: np.ndarray
    W_rel: np.ndarray
    w_rank: np.ndarray
    w_start: np.ndarray
    w_end: np.ndarray

    @classmethod
    def init(cls, config: ModelConfig, seed: int | np.random.SeedSequence = 0) -> "ModelParams":
        rng = np.random.default_rng(seed)
        a = config.init_scale
        shapes = param_shapes(config)
        return cls(config, **{k: rng.uniform(-a, a, size=shapes[k]) for k in PARAM_NAMES})

    @classmethod
    def zeros(cls, config: ModelConfig) -> "ModelParams":
        shapes = param_shapes(config)
        return cls(config, **{k: np.zeros(shapes[k]) for k in PARAM_NAMES})

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in PARAM_NAMES}

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, **{k: v.copy() for k, v in self.arrays().items()})

    def digest(self) -> str:
        h = hashlib.sha256()
        for k, v in self.arrays().items():
            h.update(k.encode())
            h.update(np.ascontiguousarray(v).tobytes())
        return h.hexdigest()

    def all_finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self.arrays().values())

    def equal(self, other: "ModelParams") -> bool:
        return self.config == other.config and all(
            np.array_equal(a, b) for a, b in zip(self.arrays().values(), other.arrays().values()))


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    return {
        "emb": (config.vocab_size, config.d_emb),
        "W_q": (config.d_emb, config.d),
        "W_p": (config.d_emb, config.d),
        "W_rel": (config.d, config.n_relations),
        "w_rank": (config.d,),
        "w_start": (config.d,),
        "w_end": (config.d,),
    }


def zero_grads(params: ModelParams) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.arrays().items()}


def add_grads(into: dict[str, np.ndarray], other: dict[str, np.ndarray], scale: float = 1.0):
    for k, v in other.items():
        if scale == 1.0:
            into[k] += v
        elif scale != 0.0:
            into[k] += scale * v
    return into


# ---------------------------------------------------------------------------
# pooling and projection


@dataclass
class Pooled:
    mean: np.ndarray  # (n, d_emb)
    ids: np.ndarray  # flat token ids
    lengths: np.ndarray

    def backward(self, g_mean: np.ndarray, g_emb: np.ndarray) -> None:
        rows = np.repeat(g_mean / self.lengths[:, None], self.lengths, axis=0)
        np.add.at(g_emb, self.ids, rows)


def pool(seqs: Sequence[Sequence[str]], params: ModelParams) -> Pooled:
    ids = [token_ids(s, params.config.vocab_size) for s in seqs]
    lengths = np.array([len(x) for x in ids], dtype=np.int64)
    flat = np.concatenate(ids)
    starts = np.concatenate(([0], np.cumsum(lengths)[:-1]))
    sums = np.add.reduceat(params.emb[flat], starts, axis=0)
    return Pooled(sums / lengths[:, None], flat, lengths)


@dataclass
class Encoded:
    pooled: Pooled
    hidden: np.ndarray  # (n, d) before normalization
    norm: np.ndarray  # (n,)
    z: np.ndarray  # (n, d) unit rows


def _encode(seqs, params: ModelParams, W: np.ndarray) -> Encoded:
    pooled = pool(seqs, params)
    hidden = pooled.mean @ W
    norm = np.linalg.norm(hidden, axis=1)
    return Encoded(pooled, hidden, norm, hidden / norm[:, None])


def encode_questions(questions: Sequence[Sequence[str]], params: ModelParams) -> Encoded:
    return _encode(questions, params, params.W_q)


def encode_passages(passages: Sequence[Sequence[str]], params: ModelParams) -> Encoded:
    return _encode(passages, params, params.W_p)


def encode_question(tokens: Sequence[str], params: ModelParams) -> np.ndarray:
    return encode_questions([tokens], params).z[0]


def encode_passage(tokens: Sequence[str], params: ModelParams) -> np.ndarray:
    return encode_passages([tokens], params).z[0]


def normalize_backward(enc: Encoded, g_z: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the hidden vector given the gradient w.r.t. its unit vector."""
    proj = np.sum(enc.z * g_z, axis=1, keepdims=True)
    return (g_z - enc.z * proj) / enc.norm[:, None]


def encoder_backward(enc: Encoded, g_hidden: np.ndarray, W_name: str, params: ModelParams,
                     grads: dict[str, np.ndarray]) -> None:
    grads[W_name] += enc.pooled.mean.T @ g_hidden
    enc.pooled.backward(g_hidden @ getattr(params, W_name).T, grads["emb"])


# ---------------------------------------------------------------------------
# heads


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    return np.exp(log_softmax(x, axis=axis))


def relation_logits(question: Sequence[str], params: ModelParams) -> np.ndarray:
    enc = encode_questions([question], params)
    return enc.hidden[0] @ params.W_rel


@dataclass
class ReaderForward:
    q_mean: np.ndarray  # (d_emb,)
    q_proj: np.ndarray  # (d,)
    q_pooled: Pooled
    p_pooled: Pooled  # all candidate passages
    rank_act: np.ndarray  # (n_passages, d) tanh activations
    rank: np.ndarray  # (n_passages,)
    tok_ids: np.ndarray  # token ids of the first passage
    tok_act: np.ndarray  # (L, d)
    start: np.ndarray  # (L,)
    end: np.ndarray  # (L,)


def reader_forward(question: Sequence[str], passages: Sequence[Sequence[str]],
                   params: ModelParams) -> ReaderForward:
    """Rank logits for every passage; start/end logits over the first passage."""
    q_pooled = pool([question], params)
    q_mean = q_pooled.mean[0]
    q_proj = q_mean @ params.W_q
    p_pooled = pool(passages, params)
    rank_act = np.tanh(q_proj[None, :] + p_pooled.mean @ params.W_p)
    rank = rank_act @ params.w_rank
    ids = token_ids(passages[0], params.config.vocab_size)
    tok_act = np.tanh(params.emb[ids] @ params.W_p + q_proj[None, :])
    return ReaderForward(q_mean, q_proj, q_pooled, p_pooled, rank_act, rank, ids, tok_act,
                         tok_act @ params.w_start, tok_act @ params.w_end)


def reader_scores(question: Sequence[str], passage: Sequence[str], params: ModelParams
                  ) -> tuple[float, np.ndarray, np.ndarray]:
    """(rank logit, per-token start logits, per-token end logits) for one pair."""
    fw = reader_forward(question, [passage], params)
    return float(fw.rank[0]), fw.start, fw.end


def reader_backward(fw: ReaderForward, g_rank: np.ndarray, g_start: np.ndarray,
                    g_end: np.ndarray, params: ModelParams, grads: dict[str, np.ndarray]) -> None:
    grads["w_rank"] += fw.rank_act.T @ g_rank
    grads["w_start"] += fw.tok_act.T @ g_start
    grads["w_end"] += fw.tok_act.T @ g_end

    g_rank_pre = np.outer(g_rank, params.w_rank) * (1.0 - fw.rank_act ** 2)  # (n, d)
    g_tok_pre = (np.outer(g_start, params.w_start) + np.outer(g_end, params.w_end)) \
        * (1.0 - fw.tok_act ** 2)  # (L, d)

    g_q_proj = g_rank_pre.sum(axis=0) + g_tok_pre.sum(axis=0)
    grads["W_q"] += np.outer(fw.q_mean, g_q_proj)
    fw.q_pooled.backward((params.W_q @ g_q_proj)[None, :], grads["emb"])

    grads["W_p"] += fw.p_pooled.mean.T @ g_rank_pre
    fw.p_pooled.backward(g_rank_pre @ params.W_p.T, grads["emb"])

    grads["W_p"] += params.emb[fw.tok_ids].T @ g_tok_pre
    np.add.at(grads["emb"], fw.tok_ids, g_tok_pre @ params.W_p.T)


# ---------------------------------------------------------------------------
# optimizer and checkpoints


def sgd_step(params: ModelParams, grads: dict[str, np.ndarray], lr: float) -> None:
    if lr == 0.0:
        return
    for k, g in grads.items():
        getattr(params, k).__isub__(lr * g)


CHECKPOINT_MAGIC = b"RQCK"
CHECKPOINT_VERSION = 1


def save_checkpoint(path: str | os.PathLike, models: dict[str, ModelParams],
                    extra: dict | None = None) -> None:
    """Header (JSON config + array layout) followed by flat little-endian float64 arrays."""
    layout, blobs = [], []
    configs = {}
    for name in sorted(models):
        p = models[name]
        configs[name] = asdict(p.config)
        for k, v in p.arrays().items():
            layout.append({"name": f"{name}.{k}", "shape": list(v.shape)})
            blobs.append(np.ascontiguousarray(v, dtype="<f8").tobytes())
    header = json.dumps({"models": configs, "arrays": layout, "extra": extra or {}},
                        sort_keys=True).encode("utf-8")
    with atomic_open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(bytes([CHECKPOINT_VERSION]))
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for b in blobs:
            fh.write(b)


def load_checkpoint(path: str | os.PathLike) -> tuple[dict[str, ModelParams], dict]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise CheckpointFormatError("bad checkpoint magic")
    if len(data) < 9 or data[4] != CHECKPOINT_VERSION:
        raise CheckpointFormatError("unsupported checkpoint version")
    (hlen,) = struct.unpack("<I", data[5:9])
    try:
        header = json.loads(data[9:9 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"corrupt checkpoint header: {exc}") from exc
    pos = 9 + hlen
    arrays = {}
    for spec in header["arrays"]:
        n = int(np.prod(spec["shape"], dtype=np.int64))
        if pos + 8 * n > len(data):
            raise CheckpointFormatError("truncated checkpoint")
        arrays[spec["name"]] = np.frombuffer(data, dtype="<f8", count=n, offset=pos) \
            .reshape(spec["shape"]).astype(np.float64)
        pos += 8 * n
    if pos != len(data):
        raise CheckpointFormatError("trailing bytes in checkpoint")
    config_fields = {f.name for f in fields(ModelConfig)}
    models = {}
    for name, cfg in header["models"].items():
        config = ModelConfig(**{k: v for k, v in cfg.items() if k in config_fields})
        models[name] = ModelParams(config, **{k: arrays[f"{name}.{k}"] for k in PARAM_NAMES})
    return models, header.get("extra", {})
