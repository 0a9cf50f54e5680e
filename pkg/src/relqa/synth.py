"""Seeded synthetic wiki corpus and triplet file for desk-scale training runs.

Entities are grouped into communities and linked mostly within them. Every
linked pair is mutual: each page carries one 100-word passage about each
partner, holding the partner's name as a link, cue words of the pair's
relation and signature words of both entities, padded with filler. A few
extra triplets exercise mention grounding, ungrounded triplets and rows
naming missing pages.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import PASSAGE_LENGTH

_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z",
           "br", "dr", "gl", "kr", "pl", "st", "th", "tr", "sh", "ch"]
_VOWELS = ["a", "e", "i", "o", "u", "ai", "ou", "ea"]
_CODAS = ["", "n", "r", "s", "l", "x", "th", "nd"]

FILLER = ("the and of in to was a for on with as by at from its an which this that also "
          "were has had been after first later during into over under between known "
          "several many new old early late main large small part around near").split()


@dataclass
class SyntheticCorpus:
    text: str
    triplets: str
    titles: list[str]
    relations: list[str]
    pairs: list[tuple[int, int, int, bool]] = field(default_factory=list)  # s, r, t, labeled


def _words(rng: np.random.Generator, n: int, taken: set[str], syllables=(2, 3)) -> list[str]:
    out = []
    while len(out) < n:
        k = int(rng.integers(syllables[0], syllables[1] + 1))
        w = "".join(_ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))]
                    for _ in range(k)) + _CODAS[rng.integers(len(_CODAS))]
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


def _passage(units: list[str], rng: np.random.Generator, length: int) -> str:
    """Shuffle content units among filler words so the passage has ``length`` words."""
    n_content = sum(len(u.replace("[[", "").replace("]]", "").split()) for u in units)
    if n_content > length:
        raise ValueError("too much content for one passage")
    filler = [FILLER[i] for i in rng.integers(len(FILLER), size=length - n_content)]
    items = units + filler
    order = rng.permutation(len(items))
    return " ".join(items[i] for i in order)


def generate_synthetic(n_entities: int = 200, n_relations: int = 20, seed: int = 0,
                       degree: int = 5, community_size: int = 10, labeled_fraction: float = 0.8,
                       cue_words: int = 3, signature_words: int = 8,
                       cue_repeat: int = 4) -> SyntheticCorpus:
    rng = np.random.default_rng(seed)
    taken: set[str] = set(FILLER)
    names = []
    while len(names) < n_entities:
        first, last = _words(rng, 2, taken)
        names.append(f"{first.capitalize()} {last.capitalize()}")
    rel_names = _words(rng, n_relations, taken, syllables=(2, 2))
    relations = [f"P{100 + i} ({w})" for i, w in enumerate(rel_names)]
    cues = [_words(rng, cue_words, taken) for _ in range(n_relations)]
    signature = [_words(rng, signature_words, taken) for _ in range(n_entities)]

    # mildly skewed relation frequencies
    rel_p = 1.0 / np.sqrt(np.arange(1, n_relations + 1))
    rel_p /= rel_p.sum()

    community = np.arange(n_entities) // community_size
    partners: dict[int, set[int]] = {i: set() for i in range(n_entities)}
    pairs: list[tuple[int, int, int, bool]] = []
    for s in range(n_entities):
        tries = 0
        while len(partners[s]) < degree and tries < 50:
            tries += 1
            if rng.random() < 0.8:
                same = np.flatnonzero(community == community[s])
                t = int(same[rng.integers(len(same))])
            else:
                t = int(rng.integers(n_entities))
            if t == s or t in partners[s] or len(partners[t]) >= degree + 2:
                continue
            partners[s].add(t)
            partners[t].add(s)
            r = int(rng.choice(n_relations, p=rel_p))
            pairs.append((s, r, t, bool(rng.random() < labeled_fraction)))

    about: dict[int, list[tuple[int, int]]] = {i: [] for i in range(n_entities)}
    for s, r, t, _ in pairs:
        about[s].append((t, r))
        about[t].append((s, r))

    # extra triplets: mention-grounded (name in intro, no link) and ungrounded
    extra_mentions: dict[int, list[int]] = {}
    extra_rows = []
    for _ in range(max(1, n_entities // 20)):
        s, t = (int(x) for x in rng.choice(n_entities, size=2, replace=False))
        if t in partners[s]:
            continue
        r = int(rng.choice(n_relations, p=rel_p))
        extra_mentions.setdefault(s, []).append(t)
        extra_rows.append((names[s], relations[r], names[t]))
    for _ in range(max(1, n_entities // 40)):
        s, t = (int(x) for x in rng.choice(n_entities, size=2, replace=False))
        if t in partners[s] or t in extra_mentions.get(s, ()):
            continue
        extra_rows.append((names[s], relations[int(rng.integers(n_relations))], names[t]))
    extra_rows.append((names[0], relations[0], "Nowhere Entity"))

    pages = []
    for e in range(n_entities):
        sig = signature[e]
        intro_units = [names[e]] + sig[:4] + [names[t] for t in extra_mentions.get(e, [])]
        chunks = [_passage(intro_units, rng, PASSAGE_LENGTH)]
        for t, r in sorted(about[e]):
            own = [sig[i] for i in rng.choice(len(sig), size=3, replace=False)]
            other = [signature[t][i] for i in rng.choice(len(signature[t]), size=4, replace=False)]
            units = [f"[[{names[t]}]]", names[e]] + cues[r] * cue_repeat + own + other
            chunks.append(_passage(units, rng, PASSAGE_LENGTH))
        pages.append(f"= {names[e]} =\n" + "\n\n".join(chunks) + "\n")

    rows = [(names[s], relations[r], names[t]) for s, r, t, lab in pairs if lab] + extra_rows
    triplets = "".join(f"{a}\t{b}\t{c}\n" for a, b, c in rows)
    return SyntheticCorpus("\n".join(pages), triplets, names, relations, pairs)
