"""Wikitext-lite corpus: pages, 100-word passages, hyperlinks and aliases.

Input format (UTF-8)::

    = Stephen Curry =
    Curry played college basketball for [[Davidson College|Davidson]].

    A second paragraph linking [[Splash Brothers]].

A page starts at a ``= Title =`` line; links are ``[[Target]]`` or
``[[Target|anchor text]]``; there is no nesting and no templates.
"""

from __future__ import annotations

import io
import logging
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Iterator, NamedTuple

from .errors import CorpusParseError, DuplicatePageError
from .text import MASK, AliasMatcher, Key, alias_key, nfc, normalize_title

logger = logging.getLogger(__name__)

PASSAGE_LENGTH = 100

_HEADER = re.compile(r"^=\s+(.*\S)\s+=$")
_LINK = re.compile(r"\[\[([^\[\]|]*)(?:\|([^\[\]]*))?\]\]")
_WORD = re.compile(r"\S+")


class LinkSpan(NamedTuple):
    target: str
    anchor: str
    start: int  # token offset in the page
    stop: int
    line: int


@dataclass(frozen=True)
class RawPage:
    title: str
    text: str
    tokens: tuple[str, ...]
    links: tuple[LinkSpan, ...]
    line: int


class Passage(NamedTuple):
    owner: int
    index: int
    tokens: tuple[str, ...]


class PassageRef(NamedTuple):
    entity: int
    index: int


class Hyperlink(NamedTuple):
    source: int
    target: int
    anchor: str
    passage: int
    start: int  # token offset of the anchor within the source page


@dataclass(frozen=True)
class Page:
    id: int
    title: str
    text: str
    tokens: tuple[str, ...]
    links: tuple[tuple[int, str, int, int], ...]  # (target id, anchor, start, stop)


@dataclass(frozen=True, eq=False)
class Corpus:
    pages: tuple[Page, ...]
    passages: tuple[tuple[Passage, ...], ...]
    dangling_links: int = 0
    self_links: int = 0
    _index: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self._index:
            self._index.update({normalize_title(p.title): p.id for p in self.pages})

    def __len__(self) -> int:
        return len(self.pages)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Corpus):
            return NotImplemented
        return (self.pages, self.passages, self.dangling_links, self.self_links) == (
            other.pages, other.passages, other.dangling_links, other.self_links)

    @property
    def titles(self) -> list[str]:
        return [p.title for p in self.pages]

    def entity_id(self, title: str) -> int | None:
        return self._index.get(normalize_title(title))

    def passage(self, ref: PassageRef | tuple[int, int]) -> Passage:
        entity, index = ref
        return self.passages[entity][index]

    @property
    def n_tokens(self) -> int:
        return sum(len(p.tokens) for p in self.pages)


# ---------------------------------------------------------------------------
# parsing


def _line_tokens(line: str, lineno: int, offset: int
                 ) -> tuple[list[str], list[LinkSpan], str]:
    """Replace links by anchors in one line; return tokens and link spans."""
    pieces: list[str] = []
    anchors: list[tuple[int, int, str, str]] = []  # char start, char stop, target, anchor
    pos = 0
    plain_len = 0
    for m in _LINK.finditer(line):
        pieces.append(line[pos:m.start()])
        plain_len += m.start() - pos
        target = m.group(1).strip()
        anchor = m.group(2)
        if anchor is None or not anchor.strip():
            anchor = target
        anchor = " ".join(anchor.split())
        if not target:
            raise CorpusParseError("empty link target", lineno)
        anchors.append((plain_len, plain_len + len(anchor), target, anchor))
        pieces.append(anchor)
        plain_len += len(anchor)
        pos = m.end()
    pieces.append(line[pos:])
    text = "".join(pieces)
    if "[[" in text or "]]" in text:
        raise CorpusParseError("unbalanced link brackets", lineno)

    words = [(m.start(), m.end(), m.group()) for m in _WORD.finditer(text)]
    tokens = [w for _, _, w in words]
    spans = []
    for cstart, cstop, target, anchor in anchors:
        covered = [i for i, (ws, we, _) in enumerate(words) if ws < cstop and we > cstart]
        if covered:
            spans.append(LinkSpan(target, anchor, offset + covered[0],
                                  offset + covered[-1] + 1, lineno))
    return tokens, spans, text


def _finish_page(title: str, body: list[tuple[int, str]], header_line: int) -> RawPage:
    tokens: list[str] = []
    links: list[LinkSpan] = []
    paragraphs: list[list[str]] = [[]]
    for lineno, line in body:
        if not line.strip():
            if paragraphs[-1]:
                paragraphs.append([])
            continue
        toks, spans, text = _line_tokens(line, lineno, len(tokens))
        tokens.extend(toks)
        links.extend(spans)
        paragraphs[-1].append(text.strip())
    text = "\n\n".join(" ".join(p) for p in paragraphs if p)
    return RawPage(title, text, tuple(tokens), tuple(links), header_line)


def iter_pages(lines: Iterable[str]) -> Iterator[RawPage]:
    """Stream pages from wikitext-lite lines, holding one page in memory."""
    title: str | None = None
    header_line = 0
    body: list[tuple[int, str]] = []
    for lineno, line in enumerate(lines, start=1):
        line = nfc(line.rstrip("\r\n"))
        if MASK in line:
            raise CorpusParseError(f"reserved token {MASK!r} in corpus text", lineno)
        if line.startswith("="):
            m = _HEADER.match(line.strip())
            if m is None:
                raise CorpusParseError(f"malformed header {line!r}", lineno)
            if title is not None:
                yield _finish_page(title, body, header_line)
            title, header_line, body = m.group(1), lineno, []
            continue
        if title is None:
            if line.strip():
                raise CorpusParseError("text before first page header", lineno)
            continue
        body.append((lineno, line))
    if title is not None:
        yield _finish_page(title, body, header_line)


def _decode_lines(source: BinaryIO | bytes | str | os.PathLike) -> Iterator[str]:
    if isinstance(source, bytes):
        source = io.BytesIO(source)
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            yield from fh
        return
    yield from io.TextIOWrapper(source, encoding="utf-8")


def split_passages(tokens: Iterable[str], owner: int = 0,
                   length: int = PASSAGE_LENGTH) -> list[Passage]:
    """Chop a page's tokens into consecutive disjoint passages of ``length``."""
    tokens = tuple(tokens)
    return [Passage(owner, i, tokens[start:start + length])
            for i, start in enumerate(range(0, len(tokens), length))]


def parse_corpus(source: BinaryIO | bytes | str | os.PathLike, workers: int = 1,
                 passage_length: int = PASSAGE_LENGTH) -> Corpus:
    """Parse a wikitext-lite stream (bytes, binary file object or path).

    Links to missing pages are dropped and counted; self-links are dropped.
    """
    raw: list[RawPage] = []
    seen: dict[str, int] = {}
    for page in iter_pages(_decode_lines(source)):
        key = normalize_title(page.title)
        if key in seen:
            raise DuplicatePageError(
                f"duplicate page title {page.title!r} (line {page.line}, "
                f"first defined on line {seen[key]})")
        seen[key] = page.line
        raw.append(page)

    index = {normalize_title(p.title): i for i, p in enumerate(raw)}
    dangling = self_links = 0
    pages = []
    for pid, rp in enumerate(raw):
        links = []
        for span in rp.links:
            target = index.get(normalize_title(span.target))
            if target is None:
                dangling += 1
            elif target == pid:
                self_links += 1
            else:
                links.append((target, span.anchor, span.start, span.stop))
        pages.append(Page(pid, rp.title, rp.text, rp.tokens, tuple(links)))
    if dangling:
        logger.warning("dropped %d dangling link(s)", dangling)

    def split(page: Page) -> tuple[Passage, ...]:
        return tuple(split_passages(page.tokens, page.id, passage_length))

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            passages = tuple(pool.map(split, pages))
    else:
        passages = tuple(split(p) for p in pages)
    return Corpus(tuple(pages), passages, dangling, self_links, dict(index))


# ---------------------------------------------------------------------------
# hyperlinks and aliases


class AliasTable:
    """Surface strings per entity: canonical title plus every observed anchor.

    Lookups are case-insensitive. Matchers are built lazily and cached.
    """

    def __init__(self, surfaces: dict[int, Iterable[str]] | None = None):
        self._surfaces: dict[int, set[str]] = {}
        self._matchers: dict[int, AliasMatcher] = {}
        self._global: AliasMatcher | None = None
        for entity, names in (surfaces or {}).items():
            for name in names:
                self.add(entity, name)

    @classmethod
    def from_titles(cls, titles: Iterable[str]) -> "AliasTable":
        return cls({i: [t] for i, t in enumerate(titles)})

    def add(self, entity: int, surface: str) -> None:
        surface = " ".join(nfc(surface).split())
        if not surface:
            return
        self._surfaces.setdefault(entity, set()).add(surface)
        self._matchers.pop(entity, None)
        self._global = None

    def __contains__(self, entity: int) -> bool:
        return entity in self._surfaces

    def __eq__(self, other) -> bool:
        if not isinstance(other, AliasTable):
            return NotImplemented
        return self._surfaces == other._surfaces

    def entities(self) -> list[int]:
        return sorted(self._surfaces)

    def surfaces(self, entity: int) -> frozenset[str]:
        return frozenset(self._surfaces.get(entity, ()))

    def keys(self, entity: int) -> set[Key]:
        keys = (alias_key(s) for s in self._surfaces.get(entity, ()))
        return {k for k in keys if k is not None}

    def lookup(self, surface: str) -> set[int]:
        key = " ".join(nfc(surface).casefold().split())
        return {e for e, names in self._surfaces.items()
                if any(" ".join(n.casefold().split()) == key for n in names)}

    def matcher(self, entity: int) -> AliasMatcher:
        m = self._matchers.get(entity)
        if m is None:
            m = self._matchers[entity] = AliasMatcher({k: (entity,) for k in self.keys(entity)})
        return m

    def global_matcher(self) -> AliasMatcher:
        """Matcher over every entity's aliases (longest match across entities)."""
        if self._global is None:
            lexicon: dict[Key, set[int]] = {}
            for entity in self._surfaces:
                for key in self.keys(entity):
                    lexicon.setdefault(key, set()).add(entity)
            self._global = AliasMatcher(lexicon)
        return self._global

    def as_dict(self) -> dict[int, list[str]]:
        return {e: sorted(self._surfaces[e]) for e in sorted(self._surfaces)}


def extract_hyperlinks(corpus: Corpus, passage_length: int = PASSAGE_LENGTH
                       ) -> tuple[list[Hyperlink], AliasTable]:
    """One hyperlink per link occurrence, plus the alias table built from anchors.

    A link is assigned to the passage holding its anchor's first token.
    """
    aliases = AliasTable.from_titles(corpus.titles)
    links = []
    for page in corpus.pages:
        for target, anchor, start, _stop in page.links:
            links.append(Hyperlink(page.id, target, anchor, start // passage_length, start))
            aliases.add(target, anchor)
    return links, aliases
