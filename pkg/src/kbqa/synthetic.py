"""Random knowledge bases, logical forms and question corpora for testing
and benchmarking."""
from __future__ import annotations

import datetime as _dt
import random
from typing import Optional

from .kbstore import ORDERABLE_KINDS, Fact, KnowledgeBase, Literal, RelationSignature, TYPE_RELATION
from .sexpr import (
    COMPARATIVES,
    SUPERLATIVES,
    And,
    ClassRef,
    Comparison,
    Count,
    EntityRef,
    JoinBinary,
    JoinUnary,
    LiteralRef,
    RelationRef,
    Rev,
    SExpr,
    Superlative,
)

MAX_DEPTH = 5


def random_kb(seed: int, n_domains: int = 3, classes_per_domain: int = 2,
              max_entities: int = 200, fact_density: float = 0.6,
              schema_seed: Optional[int] = None) -> KnowledgeBase:
    """A small well-typed KB with dotted ``dK.cJ`` classes and ``dK.cJ.name`` relations.

    Roughly one relation in six crosses domains; a few entities carry two
    types and a few are untyped, so type-dependent code sees the awkward cases.
    With ``schema_seed`` the ontology comes from that seed and only the
    entities and facts from ``seed``, giving many KBs over one schema.
    """
    rng = random.Random(seed if schema_seed is None else schema_seed)
    classes = [f"d{i}.c{j}" for i in range(n_domains) for j in range(classes_per_domain)]
    sigs = []
    for cls in classes:
        dom = cls.split(".")[0]
        same = [c for c in classes if c.startswith(dom + ".")]
        for k in range(rng.randint(1, 2)):
            target = rng.choice(classes if rng.random() < 0.15 else same)
            sigs.append(RelationSignature(f"{cls}.r{k}", cls, target, False))
        sigs.append(RelationSignature(f"{cls}.size", cls, "int", True))
        if rng.random() < 0.5:
            sigs.append(RelationSignature(f"{cls}.founded", cls, "datetime", True))
        if rng.random() < 0.3:
            sigs.append(RelationSignature(f"{cls}.score", cls, "float", True))
        if rng.random() < 0.3:
            sigs.append(RelationSignature(f"{cls}.label", cls, "string", True))

    if schema_seed is not None:
        rng = random.Random(seed)
    per_class = max(2, max_entities // max(1, len(classes)))
    members: dict[str, list[str]] = {c: [] for c in classes}
    facts = []
    n = 0
    for cls in classes:
        for _ in range(rng.randint(2, per_class)):
            if n >= max_entities:
                break
            e = f"m.e{n}"
            n += 1
            members[cls].append(e)
            if rng.random() < 0.95:
                facts.append(Fact(e, TYPE_RELATION, cls))
            if rng.random() < 0.1:
                other = rng.choice(classes)
                facts.append(Fact(e, TYPE_RELATION, other))

    for sig in sigs:
        for subj in members[sig.domain]:
            if rng.random() > fact_density:
                continue
            for _ in range(rng.randint(1, 2)):
                obj = _random_object(sig, members, rng)
                if obj is not None:
                    facts.append(Fact(subj, sig.relation, obj))
    return KnowledgeBase(sigs, facts)


def _random_object(sig: RelationSignature, members, rng: random.Random):
    if not sig.literal_range:
        pool = members[sig.range]
        return rng.choice(pool) if pool else None
    if sig.range == "int":
        return Literal("int", rng.randint(0, 12))
    if sig.range == "float":
        return Literal("float", rng.randint(0, 20) / 4)
    if sig.range == "datetime":
        return Literal("datetime", _dt.datetime(rng.randint(1990, 1999), 1, 1))
    return Literal("string", rng.choice(["red", "green", "blue"]))


# Random well-typed logical forms


class _FormGen:
    def __init__(self, kb: KnowledgeBase, rng: random.Random):
        self.kb = kb
        self.rng = rng
        self.sigs = sorted(kb.signatures.values(), key=lambda s: s.relation)
        self.classes = sorted(kb.classes)
        self.entities = sorted(kb.entities)

    def _literal(self, kind: str) -> Optional[Literal]:
        pool = self.kb.literals(kind)
        if pool and self.rng.random() < 0.8:
            return self.rng.choice(pool)
        if kind == "int":
            return Literal("int", self.rng.randint(-1, 13))
        if kind == "float":
            return Literal("float", self.rng.randint(0, 20) / 4)
        if kind == "datetime":
            return Literal("datetime", _dt.datetime(self.rng.randint(1989, 2000), 1, 1))
        return Literal("string", self.rng.choice(["red", "green", "blue", "gray"]))

    def pairs(self, domain: str, budget: int, want_orderable: bool = False):
        """``(expr, range_kind)`` of a binary form whose first position has ``domain``."""
        prims = []
        for s in self.sigs:
            if domain == "entity":
                prims.append((RelationRef(s.relation), s.range_kind))
            if budget < 2:
                continue
            if s.range_kind == domain or (
                domain in ("int", "float") and s.range_kind in ("int", "float") and s.literal_range
            ):
                prims.append((Rev(RelationRef(s.relation)), "entity"))
        if not prims:
            return None
        if budget >= 2 and self.rng.random() < 0.3:
            first = self.pairs(domain, budget - 1)
            if first is not None:
                second = self.pairs(first[1], budget - 1, want_orderable)
                if second is not None:
                    return JoinBinary(first[0], second[0]), second[1]
        if want_orderable:
            prims = [p for p in prims if p[1] in ORDERABLE_KINDS]
            if not prims:
                return None
        return self.rng.choice(prims)

    def unary(self, kind: str, budget: int) -> Optional[SExpr]:
        rng = self.rng
        leaves = []
        if kind == "entity":
            leaves = [lambda: ClassRef(rng.choice(self.classes))]
            if self.entities:
                leaves.append(lambda: EntityRef(rng.choice(self.entities)))
        else:
            leaves = [lambda: LiteralRef(self._literal(kind))]
        if budget <= 1:
            return rng.choice(leaves)()
        shape = rng.choice(["leaf", "and", "join", "join", "sup", "cmp"])
        if shape == "and":
            a = self.unary(kind, budget - 1)
            b = self.unary(kind, budget - 1)
            if a is not None and b is not None:
                return And(a, b)
        elif shape == "join":
            rel = self.pairs(kind, budget - 1)
            if rel is not None:
                arg = self.unary(rel[1], budget - 1)
                if arg is not None:
                    return JoinUnary(rel[0], arg)
        elif shape == "sup":
            rel = self.pairs(kind, budget - 1, want_orderable=True)
            arg = self.unary(kind, budget - 1)
            if rel is not None and arg is not None:
                return Superlative(rng.choice(SUPERLATIVES), arg, rel[0])
        elif shape == "cmp":
            rel = self.pairs(kind, budget - 1, want_orderable=True)
            if rel is not None:
                return Comparison(rng.choice(COMPARATIVES), rel[0], self._literal(rel[1]))
        return rng.choice(leaves)()


def random_sexpr(kb: KnowledgeBase, rng: random.Random, max_depth: int = MAX_DEPTH) -> SExpr:
    """A random well-typed logical form with at most ``max_depth`` nested
    function nodes (atoms included, so the function nesting stays below it)."""
    if max_depth < 1:
        raise ValueError("max_depth must be at least 1")
    gen = _FormGen(kb, rng)
    kinds = ["entity"] * 4 + sorted({s.range for s in kb.signatures.values() if s.literal_range})
    if rng.random() < 0.15 and max_depth >= 2:
        return Count(gen.unary(rng.choice(kinds), max_depth - 1))
    return gen.unary(rng.choice(kinds), max_depth)


# Gold forms inside the enumerator's coverage class


def _hop(kb: KnowledgeBase, anchor_expr: SExpr, node: str, rng: random.Random):
    """One random edge from ``node``: returns ``(arm, next_node)``."""
    edges = [("out", r, o) for r, o in sorted(kb.out_edges(node), key=str)]
    edges += [("in", r, s) for r, s in sorted(kb.in_edges(node), key=str)]
    if not edges:
        return None
    direction, rel, other = rng.choice(edges)
    if direction == "out":
        return JoinUnary(Rev(RelationRef(rel)), anchor_expr), other
    return JoinUnary(RelationRef(rel), anchor_expr), other


def _with_class(kb: KnowledgeBase, arm: SExpr, node, rng: random.Random) -> SExpr:
    types = sorted(kb.types_of(node)) if isinstance(node, str) else []
    if types:
        return And(ClassRef(rng.choice(types)), arm)
    return arm


def random_gold_form(kb: KnowledgeBase, rng: random.Random, tries: int = 100):
    """A gold logical form with at most two relations, no comparative or
    superlative, anchored at one or two topic entities.

    The answer carries a class conjunct whenever the answer node is typed.
    Intermediate nodes are entities (chains do not pass through literal
    values). Returns ``(expr, anchors)``; ``None`` if the KB has no edges.
    """
    entities = sorted(kb.entities)
    for _ in range(tries):
        anchor = rng.choice(entities)
        step = _hop(kb, EntityRef(anchor), anchor, rng)
        if step is None:
            continue
        arm, node = step
        anchors = {anchor}
        shape = rng.random()
        if shape < 0.4 and isinstance(node, str):
            nxt = _hop(kb, arm, node, rng)
            if nxt is not None and isinstance(nxt[1], str):
                arm, node = nxt
        elif shape < 0.6 and isinstance(node, str):
            # a second anchor joined at the same answer node
            back = _hop(kb, None, node, rng)
            if back is not None and isinstance(back[1], str) and back[1] != anchor:
                other = back[1]
                j = back[0]
                second = JoinUnary(_flip(j.rel), EntityRef(other))
                arm = And(arm, second)
                anchors.add(other)
        form = _with_class(kb, arm, node, rng)
        if rng.random() < 0.2:
            form = Count(form)
        return form, frozenset(anchors)
    return None


def _flip(rel: SExpr) -> SExpr:
    return rel.rel if isinstance(rel, Rev) else Rev(rel)


# Question corpora


def synthetic_corpus(seed: int, n_domains: int = 8, n_templates: int = 40,
                     records_per_template: int = 6, max_relations: int = 2):
    """``(kb, records)``: sampled questions over ``n_templates`` templates spread
    round-robin across the domains of a random KB."""
    from .genpipe import SamplerState, build_pools, generate_templates, sample_records

    kb = random_kb(seed, n_domains=n_domains)
    rng = random.Random(seed)
    pools = build_pools(kb, generate_templates(kb, max_relations), max_groundings=10)
    by_domain: dict = {}
    for p in pools:
        by_domain.setdefault(p.domain, []).append(p)
    queues = []
    for dom in sorted(by_domain):
        group = by_domain[dom]
        rng.shuffle(group)
        queues.append(group)
    chosen = []
    while len(chosen) < n_templates and any(queues):
        for q in queues:
            if q and len(chosen) < n_templates:
                chosen.append(q.pop())
    state = SamplerState(seed=seed)
    records = sample_records(chosen, state, len(chosen) * records_per_template)
    return kb, records
