import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relqa.errors import CheckpointFormatError
from relqa.model import (ModelConfig, ModelParams, encode_passage, encode_question, fnv1a,
                         load_checkpoint, reader_scores, relation_logits, save_checkpoint,
                         sgd_step, token_ids)

from gradcheck import SMALL, WORDS, make_params


def test_fnv1a_reference_values():
    # published FNV-1a 32-bit test vectors
    assert fnv1a("") == 0x811C9DC5
    assert fnv1a("a") == 0xE40C292C
    assert fnv1a("foobar") == 0xBF9CF968


def test_token_ids_use_match_key():
    assert list(token_ids(["Heath,", "heath"], 1000)) == [token_ids(["HEATH"], 1000)[0]] * 2
    with pytest.raises(ValueError):
        token_ids([], 10)


def test_init_is_seeded():
    a, b, c = make_params(3), make_params(3), make_params(4)
    assert a.equal(b) and a.digest() == b.digest()
    assert not a.equal(c)
    assert all(np.abs(v).max() <= SMALL.init_scale for v in a.arrays().values())


def test_shapes():
    p = make_params()
    assert p.emb.shape == (97, 16) and p.W_q.shape == (16, 50)
    assert p.W_rel.shape == (50, 12) and p.w_start.shape == (50,)


def test_embeddings_are_unit_vectors():
    p = make_params()
    assert np.linalg.norm(encode_question(["alpha", "beta"], p)) == pytest.approx(1.0)
    assert np.linalg.norm(encode_passage(["gamma"], p)) == pytest.approx(1.0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.sampled_from(WORDS), min_size=1, max_size=12), st.randoms())
def test_bag_of_words_is_permutation_invariant(tokens, rnd):
    p = make_params()
    shuffled = list(tokens)
    rnd.shuffle(shuffled)
    assert np.allclose(encode_question(tokens, p), encode_question(shuffled, p), atol=1e-12)
    assert np.allclose(relation_logits(tokens, p), relation_logits(shuffled, p), atol=1e-12)


def test_zero_relation_head_is_uniform():
    p = make_params()
    p.W_rel[:] = 0
    assert not relation_logits(["alpha"], p).any()


def test_reader_scores_shapes():
    p = make_params()
    rank, start, end = reader_scores(["alpha"], ["beta", "gamma", "delta"], p)
    assert isinstance(rank, float) and start.shape == end.shape == (3,)


def test_reader_depends_on_question():
    p = make_params()
    _, s1, _ = reader_scores(["alpha"], ["beta", "gamma"], p)
    _, s2, _ = reader_scores(["omega"], ["beta", "gamma"], p)
    assert not np.allclose(s1, s2)


def test_sgd_step_zero_lr_is_noop():
    p = make_params()
    before = p.digest()
    sgd_step(p, {k: np.ones_like(v) for k, v in p.arrays().items()}, 0.0)
    assert p.digest() == before
    sgd_step(p, {"w_rank": np.ones(50)}, 0.5)
    assert np.allclose(p.w_rank, make_params().w_rank - 0.5)


def test_checkpoint_round_trip(tmp_path):
    path = tmp_path / "m.ckpt"
    models = {"retriever": make_params(1), "reader": make_params(2)}
    save_checkpoint(path, models, {"epoch": 4})
    loaded, extra = load_checkpoint(path)
    assert extra == {"epoch": 4}
    assert set(loaded) == {"retriever", "reader"}
    for k in models:
        assert loaded[k].equal(models[k])
    save_checkpoint(tmp_path / "again.ckpt", loaded, extra)
    assert (tmp_path / "again.ckpt").read_bytes() == path.read_bytes()


def test_checkpoint_corruption_is_reported(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, {"r": make_params()})
    data = path.read_bytes()
    for bad in (b"XXXX" + data[4:], data[:4] + b"\x09" + data[5:], data[:-8], data + b"\0" * 8):
        path.write_bytes(bad)
        with pytest.raises(CheckpointFormatError):
            load_checkpoint(path)


def test_zeros_params():
    p = ModelParams.zeros(ModelConfig(n_relations=3, vocab_size=11, d_emb=2, d=2))
    assert all(not v.any() for v in p.arrays().values())
