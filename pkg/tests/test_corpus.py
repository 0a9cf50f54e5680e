import io

import pytest
from hypothesis import given, settings, strategies as st

from relqa.corpus import (PASSAGE_LENGTH, AliasTable, extract_hyperlinks, parse_corpus,
                          split_passages)
from relqa.errors import CorpusParseError, DuplicatePageError

import oracles


def parse(text: str, **kw):
    return parse_corpus(text.encode("utf-8"), **kw)


def test_two_pages_one_link():
    c = parse("= A =\nabout a\n= B =\nsee [[A]] too\n")
    links, _ = extract_hyperlinks(c)
    assert len(c) == 2
    assert [(h.source, h.target, h.anchor, h.passage) for h in links] == [(1, 0, "A", 0)]


def test_self_link_is_dropped():
    c = parse("= X =\nthis is [[X]] itself\n")
    links, _ = extract_hyperlinks(c)
    assert links == []
    assert c.self_links == 1


def test_dangling_link_is_counted_and_dropped():
    c = parse("= X =\nsee [[Nowhere]] and [[Y|why]]\n= Y =\nplain\n")
    links, _ = extract_hyperlinks(c)
    assert c.dangling_links == 1
    assert [(h.target, h.anchor) for h in links] == [(1, "why")]
    # the anchor text stays in the page either way
    assert c.pages[0].tokens == ("see", "Nowhere", "and", "why")


@pytest.mark.parametrize("n,lengths", [(250, [100, 100, 50]), (100, [100]), (0, []),
                                       (101, [100, 1])])
def test_split_passages_boundaries(n, lengths):
    ps = split_passages([f"w{i}" for i in range(n)], owner=3)
    assert [len(p.tokens) for p in ps] == lengths
    assert [p.index for p in ps] == list(range(len(lengths)))
    assert all(p.owner == 3 for p in ps)


def test_link_assigned_to_passage_of_first_anchor_token():
    pad = " ".join(["x"] * 99)
    c = parse(f"= S =\n{pad} [[T|two words]] end\n= T =\nt\n")
    (h,), _ = extract_hyperlinks(c)
    assert h.start == 99
    assert h.passage == 0
    assert c.passages[0][1].tokens[0] == "words"


def test_steph_curry_links_davidson(corpus):
    links, _ = extract_hyperlinks(corpus)
    s, t = corpus.entity_id("Stephen Curry"), corpus.entity_id("Davidson College")
    found = [h for h in links if (h.source, h.target) == (s, t)]
    assert len(found) == 1
    assert found[0].passage == 0
    assert found[0].anchor == "Davidson Wildcats"


def test_anchor_text_becomes_alias(corpus):
    _, aliases = extract_hyperlinks(corpus)
    sb = corpus.entity_id("Splash Brothers")
    assert aliases.surfaces(sb) == {"Splash Brothers", "the splash bros"}
    assert sb in aliases.lookup("THE SPLASH BROS")


def test_same_target_twice_gives_two_hyperlinks():
    pad = " ".join(["x"] * 120)
    c = parse(f"= S =\n[[T]] {pad} [[T|tee]]\n= T =\nt\n")
    links, _ = extract_hyperlinks(c)
    assert [h.passage for h in links] == [0, 1]


def test_alias_table_always_has_title():
    c = parse("= Alone =\nno links\n= Other =\nnone\n")
    _, aliases = extract_hyperlinks(c)
    assert aliases.surfaces(0) == {"Alone"}
    assert aliases.lookup("alone") == {0}


@pytest.mark.parametrize("text,line", [
    ("= A =\nok\n== bad\n", 3),
    ("stray text\n= A =\n", 1),
    ("= A =\nhas <mask> in it\n", 2),
    ("= A =\nfine\nbroken [[link\n", 3),
    ("= A =\n[[]] empty\n", 2),
])
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(CorpusParseError) as exc:
        parse(text)
    assert exc.value.line == line


def test_duplicate_titles_rejected_case_insensitively():
    with pytest.raises(DuplicatePageError):
        parse("= Paris =\na\n= paris =\nb\n")


def test_accepts_file_objects_and_paths(tmp_path, wiki_text):
    p = tmp_path / "w.txt"
    p.write_text(wiki_text, encoding="utf-8")
    a = parse_corpus(str(p))
    b = parse_corpus(io.BytesIO(wiki_text.encode("utf-8")))
    assert a == b


def test_fixture_counts_match_hand_count(corpus, expected):
    links, _ = extract_hyperlinks(corpus)
    assert len(corpus) == expected["pages"]
    assert sum(len(ps) for ps in corpus.passages) == expected["passages"]
    assert len(links) == expected["hyperlinks"]
    assert corpus.dangling_links == expected["dangling_links"]
    assert corpus.self_links == expected["self_links"]


def test_fixture_links_match_oracle(corpus, wiki_text):
    facts = oracles.corpus_facts(wiki_text)
    links, aliases = extract_hyperlinks(corpus)
    assert [(h.source, h.target, h.anchor, h.passage) for h in links] == facts["links"]
    assert [[list(p.tokens) for p in ps] for ps in corpus.passages] == facts["passages"]
    assert {e: set(aliases.surfaces(e)) for e in range(len(corpus))} == facts["aliases"]


def test_workers_do_not_change_result(wiki_text):
    data = wiki_text.encode("utf-8")
    assert parse_corpus(data, workers=4) == parse_corpus(data)


# ---------------------------------------------------------------------------
# properties over generated corpora

word = st.text(alphabet="abcdefg,.", min_size=1, max_size=6)


@st.composite
def corpora(draw):
    n = draw(st.integers(1, 5))
    titles = [f"Page{i}" for i in range(n)]
    pages = []
    for title in titles:
        items = draw(st.lists(st.one_of(word, st.sampled_from(titles)), max_size=260))
        parts = [f"[[{w}]]" if w in titles else w for w in items]
        pages.append(f"= {title} =\n" + " ".join(parts))
    return "\n".join(pages) + "\n"


@settings(max_examples=60, deadline=None)
@given(corpora())
def test_passages_conserve_tokens(text):
    c = parse(text)
    for page, ps in zip(c.pages, c.passages):
        assert sum(len(p.tokens) for p in ps) == len(page.tokens)
        assert tuple(t for p in ps for t in p.tokens) == page.tokens
        assert all(len(p.tokens) == PASSAGE_LENGTH for p in ps[:-1])
        assert all(t and not any(ch.isspace() for ch in t) for t in page.tokens)


@settings(max_examples=60, deadline=None)
@given(corpora())
def test_hyperlink_passage_holds_anchor_start(text):
    c = parse(text)
    links, _ = extract_hyperlinks(c)
    for h in links:
        assert h.source != h.target
        passage = c.passages[h.source][h.passage].tokens
        first = h.anchor.split()[0]
        assert passage[h.start - h.passage * PASSAGE_LENGTH] == first


@settings(max_examples=30, deadline=None)
@given(corpora())
def test_parse_is_deterministic(text):
    assert parse(text) == parse(text)
