"""Dictionary-based entity linking with popularity disambiguation."""
from __future__ import annotations

import re
from collections import defaultdict
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Iterable, Protocol, TextIO

_WORD_RE = re.compile(r"\w+(?:['.\-]\w+)*")


class LexiconError(ValueError):
    pass


@lru_cache(maxsize=1)
def stopwords() -> frozenset:
    text = resources.files("kbqa").joinpath("data/stopwords.txt").read_text(encoding="utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip())


def words(text: str) -> list[tuple[str, int, int]]:
    """Lower-cased word tokens with their ``[start, end)`` character spans."""
    return [(m.group().lower(), m.start(), m.end()) for m in _WORD_RE.finditer(text)]


def normalize_surface(text: str) -> str:
    return " ".join(w for w, _, _ in words(text))


@dataclass(frozen=True)
class SurfaceLexicon:
    """surface form -> ``((entity, frequency), ...)`` by descending frequency."""

    entries: dict = field(default_factory=dict)

    @property
    def max_words(self) -> int:
        return max((s.count(" ") + 1 for s in self.entries), default=0)

    def __contains__(self, surface: str) -> bool:
        return surface in self.entries

    def __len__(self):
        return len(self.entries)

    def surfaces_of(self, entity: str) -> list[tuple[str, int]]:
        """Surface forms of ``entity`` by descending frequency."""
        found = [(s, f) for s, ents in self.entries.items() for e, f in ents if e == entity]
        return sorted(found, key=lambda t: (-t[1], t[0]))


def build_lexicon(source: TextIO | Iterable[str]) -> SurfaceLexicon:
    """Read ``surface<TAB>entity<TAB>frequency`` rows; duplicate rows add up."""
    counts: dict = defaultdict(lambda: defaultdict(int))
    for lineno, raw in enumerate(source, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise LexiconError(f"line {lineno}: expected surface<TAB>entity<TAB>frequency")
        surface, entity, freq = parts
        surface = normalize_surface(surface)
        if not surface or not entity:
            raise LexiconError(f"line {lineno}: empty surface or entity")
        try:
            n = int(freq)
        except ValueError:
            raise LexiconError(f"line {lineno}: frequency {freq!r} is not an integer") from None
        if n < 0:
            raise LexiconError(f"line {lineno}: negative frequency")
        counts[surface][entity] += n
    entries = {
        s: tuple(sorted(ents.items(), key=lambda t: (-t[1], t[0])))
        for s, ents in sorted(counts.items())
    }
    return SurfaceLexicon(entries)


def load_lexicon(path) -> SurfaceLexicon:
    with open(path, encoding="utf-8") as f:
        return build_lexicon(f)


@dataclass(frozen=True)
class Mention:
    start: int
    end: int
    surface: str

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)


@dataclass(frozen=True)
class LinkResult:
    mentions: tuple
    bindings: tuple  # per mention: ((entity, frequency), ...)

    def entities(self) -> set:
        return {e for binding in self.bindings for e, _ in binding}


class MentionDetector(Protocol):
    def __call__(self, question: str, lex: SurfaceLexicon) -> list[Mention]: ...


def detect_mentions(question: str, lex: SurfaceLexicon) -> list[Mention]:
    """Greedy left-to-right longest match of lexicon surfaces on word boundaries.

    A match consisting of a single stopword is skipped.
    """
    toks = words(question)
    stop = stopwords()
    longest = lex.max_words
    mentions = []
    i = 0
    while i < len(toks):
        match = None
        for j in range(min(len(toks), i + longest), i, -1):
            surface = " ".join(t for t, _, _ in toks[i:j])
            if surface in lex.entries and not (j - i == 1 and surface in stop):
                match = j, surface
                break
        if match is None:
            i += 1
            continue
        j, surface = match
        mentions.append(Mention(toks[i][1], toks[j - 1][2], surface))
        i = j
    return mentions


def disambiguate(m: Mention, lex: SurfaceLexicon, top_k: int = 1) -> list[tuple[str, int]]:
    """Most popular ``top_k`` entities for the mention's surface form."""
    if m.surface not in lex.entries:
        raise LexiconError(f"surface {m.surface!r} is not in the lexicon")
    return list(lex.entries[m.surface][:top_k])


def link(question: str, lex: SurfaceLexicon, top_k: int = 1,
         detector: MentionDetector = detect_mentions) -> LinkResult:
    mentions = tuple(detector(question, lex))
    bindings = tuple(tuple(disambiguate(m, lex, top_k)) for m in mentions)
    return LinkResult(mentions, bindings)


def strip_mentions(question: str, mentions: Iterable[Mention]) -> str:
    out = []
    pos = 0
    for m in sorted(mentions, key=lambda m: m.start):
        out.append(question[pos:m.start])
        out.append(" ")
        pos = m.end
    out.append(question[pos:])
    return "".join(out)


def linking_metrics(predicted: list, gold: list) -> tuple[float, float, float]:
    """Micro-averaged (recall, precision, F1) of linked entity sets.

    ``predicted`` holds :class:`LinkResult` objects or plain entity sets.
    """
    if len(predicted) != len(gold):
        raise ValueError(f"{len(predicted)} predictions for {len(gold)} gold sets")
    hits = n_pred = n_gold = 0
    for p, g in zip(predicted, gold):
        p = p.entities() if isinstance(p, LinkResult) else set(p)
        g = set(g)
        hits += len(p & g)
        n_pred += len(p)
        n_gold += len(g)
    precision = hits / n_pred if n_pred else 0.0
    recall = hits / n_gold if n_gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return recall, precision, f1
