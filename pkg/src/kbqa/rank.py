"""Static word-embedding ranker for candidate logical forms."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, TextIO

import numpy as np

from .enumeration import DEFAULT_LIMIT, CandidateSet, enumerate_candidates
from .kbstore import KnowledgeBase
from .linker import SurfaceLexicon, detect_mentions, disambiguate, stopwords, strip_mentions
from .sexpr import SExpr, evaluate, schema_items, to_string

_TOKEN_RE = re.compile(r"[^\W_]+")


class EmbeddingTable:
    """token -> vector; unknown tokens map to the zero vector."""

    def __init__(self, vectors: dict, dimension: int | None = None):
        if dimension is None:
            dimension = len(next(iter(vectors.values()))) if vectors else 0
        self.dimension = dimension
        self.vectors = {}
        for token, vec in vectors.items():
            arr = np.asarray(vec, dtype=float)
            if arr.shape != (dimension,):
                raise ValueError(f"vector for {token!r} has shape {arr.shape}, expected ({dimension},)")
            self.vectors[token.lower()] = arr
        self._zero = np.zeros(dimension)

    def __getitem__(self, token: str) -> np.ndarray:
        return self.vectors.get(token.lower(), self._zero)

    def __contains__(self, token: str) -> bool:
        return token.lower() in self.vectors

    def __len__(self):
        return len(self.vectors)

    def scaled(self, factor: float) -> "EmbeddingTable":
        return EmbeddingTable({t: v * factor for t, v in self.vectors.items()}, self.dimension)

    def mean(self, tokens: list[str]) -> np.ndarray:
        if not tokens:
            return self._zero.copy()
        return np.mean([self[t] for t in tokens], axis=0)


def read_embeddings(stream: TextIO) -> EmbeddingTable:
    """Parse ``token v1 ... vd`` lines; ``d`` comes from the first line."""
    vectors = {}
    dim = None
    for lineno, line in enumerate(stream, start=1):
        parts = line.split()
        if not parts:
            continue
        if dim is None:
            dim = len(parts) - 1
        if len(parts) - 1 != dim:
            raise ValueError(f"line {lineno}: expected {dim} components, got {len(parts) - 1}")
        try:
            vectors[parts[0]] = [float(x) for x in parts[1:]]
        except ValueError:
            raise ValueError(f"line {lineno}: non-numeric vector component") from None
    return EmbeddingTable(vectors, dim or 0)


def load_embeddings(path) -> EmbeddingTable:
    with open(path, encoding="utf-8") as f:
        return read_embeddings(f)


def item_words(item: str) -> list[str]:
    return [w.lower() for w in re.split(r"[._]", item) if w]


def embed_schema_item(item: str, table: EmbeddingTable) -> np.ndarray:
    """Average of the item's dot/underscore-separated words."""
    return table.mean(item_words(item))


def text_tokens(text: str) -> list[str]:
    stop = stopwords()
    return [t for t in (m.group().lower() for m in _TOKEN_RE.finditer(text)) if t not in stop]


def embed_text(text: str, table: EmbeddingTable) -> np.ndarray:
    return table.mean(text_tokens(text))


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    value = float(np.dot(a, b) / (na * nb))
    return min(1.0, max(-1.0, value))


def candidate_items(candidate: SExpr) -> list[str]:
    items = schema_items(candidate)
    return sorted(items.relations) + sorted(items.classes) + sorted(f.lower() for f in items.functions)


def score(question: str, candidate: SExpr, table: EmbeddingTable) -> float:
    """Cosine between the question's mean word vector and the mean of the
    candidate's schema-item vectors."""
    q = embed_text(question, table)
    items = candidate_items(candidate)
    if not items:
        return 0.0
    c = np.mean([embed_schema_item(i, table) for i in items], axis=0)
    value = _cosine(q, c)
    return value if math.isfinite(value) else 0.0


Scorer = Callable[[str, SExpr], float]


def static_scorer(table: EmbeddingTable) -> Scorer:
    return lambda question, candidate: score(question, candidate, table)


@dataclass(frozen=True)
class ScoredCandidate:
    candidate: SExpr
    score: float

    @property
    def text(self) -> str:
        return to_string(self.candidate)


def rank_candidates(question: str, cs: CandidateSet | Iterable[SExpr],
                    table: EmbeddingTable | None = None,
                    scorer: Optional[Scorer] = None) -> list[ScoredCandidate]:
    """Candidates by descending score, ties by ascending printed form."""
    if scorer is None:
        if table is None:
            raise ValueError("need an embedding table or a scorer")
        scorer = static_scorer(table)
    scored = [ScoredCandidate(c, float(scorer(question, c))) for c in cs]
    return sorted(scored, key=lambda s: (-s.score, s.text))


@dataclass(frozen=True)
class Answer:
    question: str
    anchors: tuple
    ranked: tuple
    logical_form: Optional[SExpr]
    denotation: Optional[frozenset]


def answer_question(question: str, kb: KnowledgeBase, lex: SurfaceLexicon,
                    table: EmbeddingTable, limit: int = DEFAULT_LIMIT, top_k: int = 1,
                    scorer: Optional[Scorer] = None) -> Answer:
    """Link, enumerate, rank and execute; the full ranking pipeline."""
    mentions = detect_mentions(question, lex)
    anchors = sorted({e for m in mentions for e, _ in disambiguate(m, lex, top_k)})
    if not anchors:
        return Answer(question, (), (), None, None)
    cs = enumerate_candidates(kb, anchors, limit)
    stripped = strip_mentions(question, mentions)
    ranked = rank_candidates(stripped, cs, table, scorer)
    if not ranked:
        return Answer(question, tuple(anchors), (), None, None)
    best = ranked[0].candidate
    return Answer(question, tuple(anchors), tuple(ranked), best, evaluate(best, kb))


def answer(question: str, kb: KnowledgeBase, lex: SurfaceLexicon, table: EmbeddingTable,
           limit: int = DEFAULT_LIMIT, top_k: int = 1):
    """``(top-1 logical form, denotation)`` or ``(None, None)``."""
    result = answer_question(question, kb, lex, table, limit, top_k)
    return result.logical_form, result.denotation
