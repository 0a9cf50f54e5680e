import json
import math

import pytest
from hypothesis import given, strategies as st

from relqa.analysis import (AlignedQA, Bucket, RelationFrequencyTable, accuracy_by_frequency,
                            align_qa, emit_report, frequency_cdf, normalize_answer,
                            parse_accuracy_csv, parse_frequency_csv, read_predictions,
                            read_qa_rows)
from relqa.errors import RelqaError

import oracles
from conftest import fixture_path


@pytest.fixture(scope="module")
def analysis_expected():
    with open(fixture_path("analysis_expected.json"), encoding="utf-8") as fh:
        return json.load(fh)


@pytest.fixture(scope="module")
def eval_aligned(graph):
    return align_qa(read_qa_rows(fixture_path("analysis_qa.tsv")), graph)


@pytest.fixture(scope="module")
def train_table(graph):
    aligned, _ = align_qa(read_qa_rows(fixture_path("analysis_train_qa.tsv")), graph)
    return frequency_cdf(aligned)


@pytest.fixture(scope="module")
def flags():
    return read_predictions(fixture_path("analysis_predictions.tsv"))


def lines(name):
    with open(fixture_path(name), encoding="utf-8") as fh:
        return [l.rstrip("\n") for l in fh if l.strip()]


def aq(qid, *relations):
    return AlignedQA(qid, 0, "x", (1,) if relations else (), tuple(relations))


def test_direct_edge_aligns(graph):
    from relqa.analysis import QARow
    (a,), cov = align_qa([QARow("q", "Edward Heath", "Broadstairs")], graph)
    assert a.relations == ("P19 (place of birth)",)
    assert cov.coverage == 1.0


def test_non_entity_answer_is_unaligned(graph):
    from relqa.analysis import QARow
    (a,), cov = align_qa([QARow("q", "Stephen Curry", "402")], graph)
    assert not a.aligned and a.answer_entities == ()
    assert cov.aligned == 0 and cov.coverage == 0.0


def test_answer_normalization():
    assert normalize_answer("The  Conservative Party") == "conservative party"
    assert normalize_answer("A Tale") == "tale"
    assert normalize_answer("Theatre") == "theatre"


def test_fixture_alignment_matches_hand_count_and_tally(graph, eval_aligned, analysis_expected,
                                                        wiki_text, triplet_text):
    aligned, cov = eval_aligned
    exp = analysis_expected["coverage"]
    assert (cov.total, cov.aligned, cov.skipped, cov.relations_covered,
            cov.relation_vocabulary) == (exp["total"], exp["aligned"], exp["skipped"],
                                         exp["relations_covered"], exp["relation_vocabulary"])
    assert cov.coverage == 25 / 30
    ours = [a.relations[0] if a.aligned else None for a in aligned]
    assert ours == analysis_expected["first_relations"]
    built = oracles.build_edges(wiki_text, triplet_text)
    theirs, skipped = oracles.tally_qa(built, lines("analysis_qa.tsv"))
    assert ours == theirs and skipped == cov.skipped


def test_reverse_relation_tie_break(eval_aligned):
    aligned, _ = eval_aligned
    kerr = aligned[5]
    assert kerr.relations == ("P286 (head coach)_r", "P108 (employer)")
    curry = aligned[0]
    assert curry.relations == ("P69 (educated at)", "P54 (member of sports team)")


def test_frequency_cdf_matches_tally(eval_aligned, train_table, analysis_expected, wiki_text,
                                     triplet_text):
    aligned, cov = eval_aligned
    table = frequency_cdf(aligned)
    assert table.counts == analysis_expected["eval_counts"]
    assert table.total == cov.aligned
    assert [list(p) for p in table.cdf()] == analysis_expected["eval_cdf"]
    built = oracles.build_edges(wiki_text, triplet_text)
    firsts, _ = oracles.tally_qa(built, lines("analysis_train_qa.tsv"))
    assert train_table.counts == oracles.counts_of(firsts) == analysis_expected["train_counts"]
    assert [list(p) for p in train_table.cdf()] == oracles.cdf_points(train_table.counts) \
        == analysis_expected["train_cdf"]


def test_accuracy_by_frequency_matches_hand_computation(eval_aligned, train_table, flags,
                                                        analysis_expected):
    aligned, _ = eval_aligned
    buckets = accuracy_by_frequency(aligned, flags, train_table)
    got = [{"low": "unseen" if b.unseen else (int(b.low)),
            "high": "unseen" if b.unseen else ("inf" if math.isinf(b.high) else int(b.high)),
            "n": b.n, "em": b.em} for b in buckets]
    assert got == analysis_expected["buckets"]


def test_accuracy_by_frequency_independent_recount(eval_aligned, train_table, flags):
    aligned, _ = eval_aligned
    buckets = accuracy_by_frequency(aligned, flags, train_table, (1, 3, 10, math.inf))
    members = {b: [] for b in ("a", "b", "c", "u")}
    for a in aligned:
        if not a.aligned:
            continue
        f = train_table.counts.get(a.relations[0])
        slot = "u" if f is None else "a" if f < 3 else "b" if f < 10 else "c"
        members[slot].append(flags[a.question_id])
    means = [sum(v) / len(v) if v else None for v in members.values()]
    assert [b.em for b in buckets] == means
    assert sum(b.n for b in buckets) == 25


def test_all_correct_gives_one_everywhere():
    aligned = [aq(0, "A"), aq(1, "B"), aq(2, "C")]
    table = RelationFrequencyTable({"A": 1, "B": 30})
    buckets = accuracy_by_frequency(aligned, {0: 1, 1: 1, 2: 1}, table)
    assert all(b.em == 1.0 for b in buckets if b.n)


def test_missing_flag_is_an_error():
    with pytest.raises(RelqaError):
        accuracy_by_frequency([aq(0, "A")], {}, RelationFrequencyTable({"A": 1}))


def test_bad_bins_rejected():
    with pytest.raises(ValueError):
        accuracy_by_frequency([], {}, RelationFrequencyTable(), (5, 1))


def test_cdf_examples():
    assert RelationFrequencyTable({"A": 1, "B": 1, "C": 3}).cdf() == [(1, 2 / 3), (3, 1.0)]
    assert RelationFrequencyTable({"A": 7}).cdf() == [(7, 1.0)]


@given(st.dictionaries(st.text(min_size=1), st.integers(1, 50), min_size=1))
def test_cdf_is_monotone_and_ends_at_one(counts):
    cdf = RelationFrequencyTable(counts).cdf()
    assert all(a[1] <= b[1] and a[0] < b[0] for a, b in zip(cdf, cdf[1:]))
    assert cdf[-1][1] == 1.0


def test_empty_table_gives_header_only(tmp_path):
    emit_report(tmp_path, RelationFrequencyTable())
    assert (tmp_path / "relation_frequency.csv").read_text() == "relation,count\n"


def test_report_round_trip_and_determinism(tmp_path, eval_aligned, train_table, flags):
    aligned, cov = eval_aligned
    buckets = accuracy_by_frequency(aligned, flags, train_table)
    outs = []
    for d in ("a", "b"):
        (tmp_path / d).mkdir()
        emit_report(tmp_path / d, train_table, buckets, cov)
        outs.append({p.name: p.read_bytes() for p in sorted((tmp_path / d).iterdir())})
    assert outs[0] == outs[1]
    files = outs[0]
    assert parse_frequency_csv(files["relation_frequency.csv"].decode()) == train_table
    assert parse_accuracy_csv(files["accuracy_by_frequency.csv"].decode()) == buckets
    assert b"coverage=0.8333333333333334" in files["coverage.txt"]
    assert set(files) == {"relation_frequency.csv", "fig1_relation_cdf.dat",
                          "accuracy_by_frequency.csv", "fig2_em_by_frequency.dat",
                          "coverage.txt"}


def test_bad_prediction_rows(tmp_path):
    p = tmp_path / "p.tsv"
    p.write_text("0\t2\n")
    with pytest.raises(RelqaError):
        read_predictions(p)
    p.write_text("zero\t1\n")
    with pytest.raises(RelqaError):
        read_predictions(p)


def test_bad_qa_row(tmp_path):
    p = tmp_path / "q.tsv"
    p.write_text("only\ttwo\n")
    with pytest.raises(RelqaError):
        read_qa_rows(p)


def test_bucket_labels():
    assert Bucket(1.0, 5.0, 0, None).label == "[1,5)"
    assert Bucket(None, None, 0, None).label == "unseen"
