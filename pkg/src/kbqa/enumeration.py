"""Anchor-based candidate logical forms and decoder vocabulary pruning."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Iterable

from .graphquery import canonical_string
from .kbstore import KnowledgeBase, SchemaItems, schema_within_hops
from .sexpr import (
    FUNCTIONS,
    And,
    ClassRef,
    Count,
    EntityRef,
    JoinUnary,
    RelationRef,
    Rev,
    SExpr,
    evaluate,
    to_string,
)

DEFAULT_LIMIT = 2000
HOPS = 2


def prune_vocabulary(kb: KnowledgeBase, anchors: Iterable[str]) -> SchemaItems:
    """Schema items within two hops of any anchor, plus every function symbol."""
    anchors = set(anchors)
    if not anchors:
        raise ValueError("vocabulary pruning needs at least one anchor entity")
    reach = schema_within_hops(kb, anchors, HOPS)
    return SchemaItems(reach.relations, reach.classes, frozenset(FUNCTIONS))


@dataclass(frozen=True)
class CandidateSet:
    anchors: frozenset
    candidates: tuple
    truncated: bool = False

    def __len__(self):
        return len(self.candidates)

    def __iter__(self):
        return iter(self.candidates)

    def strings(self) -> list[str]:
        return [to_string(c) for c in self.candidates]


def _one_hop_arms(kb: KnowledgeBase, anchor: SExpr, members) -> dict:
    """``{arm: denotation}`` for every relation leaving or entering ``members``."""
    arms = {}
    for y in members:
        if not isinstance(y, str):
            continue
        for rel, _ in kb.out_edges(y):
            arm = JoinUnary(Rev(RelationRef(rel)), anchor)
            if arm not in arms:
                arms[arm] = evaluate(arm, kb, check=False)
        for rel, _ in kb.in_edges(y):
            arm = JoinUnary(RelationRef(rel), anchor)
            if arm not in arms:
                arms[arm] = evaluate(arm, kb, check=False)
    return {a: d for a, d in arms.items() if d}


def _classed(kb: KnowledgeBase, arm: SExpr, denotation) -> list[SExpr]:
    classes = set()
    untyped = False
    for x in denotation:
        types = kb.types_of(x) if isinstance(x, str) else ()
        if not types:
            untyped = True
        classes.update(types)
    forms = [And(ClassRef(c), arm) for c in sorted(classes)]
    if untyped:
        forms.append(arm)
    return forms


def enumerate_candidates(kb: KnowledgeBase, anchors: Iterable[str],
                         limit: int | None = DEFAULT_LIMIT) -> CandidateSet:
    """All class-conjoined logical forms within two hops of the anchors.

    Per anchor: 1-hop and 2-hop relation chains in both directions; per pair
    of anchors: intersections of their 1-hop arms. Every form also appears
    wrapped in COUNT. Forms with empty denotation and isomorphic duplicates
    are dropped; the result is sorted by printed form and cut at ``limit``
    (``None`` for no limit).
    """
    anchors = frozenset(anchors)
    if not anchors:
        raise ValueError("candidate enumeration needs at least one anchor entity")
    if limit is not None and limit <= 0:
        raise ValueError("limit must be positive")

    forms: list[SExpr] = []
    one_hop: dict = {}
    for e in sorted(anchors):
        ref = EntityRef(e)
        arms1 = _one_hop_arms(kb, ref, {e})
        one_hop[e] = arms1
        for arm, den in arms1.items():
            forms.extend(_classed(kb, arm, den))
            for arm2, den2 in _one_hop_arms(kb, arm, den).items():
                forms.extend(_classed(kb, arm2, den2))

    for e1, e2 in combinations(sorted(anchors), 2):
        for a1, d1 in one_hop[e1].items():
            for a2, d2 in one_hop[e2].items():
                both = d1 & d2
                if both:
                    forms.extend(_classed(kb, And(a1, a2), both))

    forms.extend([Count(f) for f in forms])

    unique: dict = {}
    for f in forms:
        key = canonical_string(f)
        text = to_string(f)
        if key not in unique or text < to_string(unique[key]):
            unique[key] = f
    ordered = sorted(unique.values(), key=to_string)
    truncated = limit is not None and len(ordered) > limit
    if truncated:
        ordered = ordered[:limit]
    return CandidateSet(anchors, tuple(ordered), truncated)
