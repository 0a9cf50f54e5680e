"""Tokenization, title normalization and alias matching.

Tokens are whitespace-delimited words after NFC normalization. Matching is
done on a *key* per token: case-folded, with leading and trailing punctuation
removed, so that ``"Heath,"`` matches the alias word ``"heath"``. Display
tokens keep their original case.
"""

from __future__ import annotations

import unicodedata
from functools import lru_cache
from typing import Iterable, Iterator, Mapping, Sequence

MASK = "<mask>"

Key = tuple[str, ...]


def nfc(text: str) -> str:
    return unicodedata.normalize("NFC", text)


def tokenize(text: str) -> list[str]:
    return nfc(text).split()


def normalize_title(title: str) -> str:
    """Canonical lookup form of a page title (case-folded, single spaces)."""
    return " ".join(nfc(title).casefold().split())


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


@lru_cache(maxsize=1 << 20)
def match_key(token: str) -> str:
    token = nfc(token).casefold()
    start, end = 0, len(token)
    while start < end and _is_punct(token[start]):
        start += 1
    while end > start and _is_punct(token[end - 1]):
        end -= 1
    return token[start:end]


def alias_key(surface: str) -> Key | None:
    """Key sequence for an alias surface string; None if it cannot match."""
    key = tuple(match_key(t) for t in tokenize(surface))
    if not key or not any(key):
        return None
    return key


class AliasMatcher:
    """Greedy leftmost-longest matcher over a lexicon of token-key sequences.

    ``lexicon`` maps each key sequence to the set of labels it denotes (entity
    ids, usually). A match never overlaps a previous one; at each position the
    longest lexicon entry wins.
    """

    def __init__(self, lexicon: Mapping[Key, Iterable[int]]):
        self._entries: dict[Key, frozenset[int]] = {}
        self._lengths: dict[str, list[int]] = {}
        for key, labels in lexicon.items():
            if not key:
                continue
            labels = frozenset(labels)
            prev = self._entries.get(key)
            self._entries[key] = labels if prev is None else prev | labels
        by_first: dict[str, set[int]] = {}
        for key in self._entries:
            by_first.setdefault(key[0], set()).add(len(key))
        self._lengths = {k: sorted(v, reverse=True) for k, v in by_first.items()}

    def __bool__(self) -> bool:
        return bool(self._entries)

    def finditer(self, tokens: Sequence[str], keys: Sequence[str] | None = None
                 ) -> Iterator[tuple[int, int, frozenset[int]]]:
        """Yield ``(start, stop, labels)`` for each match; ``stop`` is exclusive."""
        if keys is None:
            keys = [match_key(t) for t in tokens]
        i, n = 0, len(keys)
        while i < n:
            for length in self._lengths.get(keys[i], ()):
                if i + length > n:
                    continue
                labels = self._entries.get(tuple(keys[i:i + length]))
                if labels is not None:
                    yield i, i + length, labels
                    i += length
                    break
            else:
                i += 1

    def first(self, tokens: Sequence[str]) -> tuple[int, int] | None:
        for start, stop, _ in self.finditer(tokens):
            return start, stop
        return None

    def contains(self, tokens: Sequence[str]) -> bool:
        return self.first(tokens) is not None


def mask_spans(tokens: Sequence[str], spans: Iterable[tuple[int, int]]) -> list[str]:
    out = list(tokens)
    for start, stop in spans:
        out[start:stop] = [MASK] * (stop - start)
    return out
