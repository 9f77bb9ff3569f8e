"""Graph-query form of logical forms and isomorphism-based equivalence.

A graph query is a small tree of nodes (class variables, entities, literals)
joined by relation edges, with one answer node and at most one function
annotation (COUNT, a superlative or a comparative). Two S-expressions are
considered equivalent when their graph queries are isomorphic.
"""
from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Optional

from .kbstore import Literal
from .sexpr import (
    And,
    ClassRef,
    Comparison,
    Count,
    EntityRef,
    JoinBinary,
    JoinUnary,
    LiteralRef,
    Placeholder,
    RelationRef,
    Rev,
    SExpr,
    SExprError,
    Superlative,
    to_string,
)


class UnsupportedShape(SExprError):
    """The logical form or graph cannot be converted."""


@dataclass(frozen=True)
class Node:
    kind: str  # "class" (a variable, possibly class-constrained), "entity" or "literal"
    label: object = None  # entity id, Literal or Placeholder for constants
    classes: frozenset = frozenset()
    is_answer: bool = False


@dataclass(frozen=True)
class Edge:
    source: int
    target: int
    relation: str


@dataclass(frozen=True)
class GraphFunction:
    """Function annotation.

    ``node`` is the answer node for ``count``, the bound literal node for
    comparatives and the ranked-value node for superlatives; ``focus`` is the
    node whose set a superlative ranks.
    """

    name: str
    node: int
    focus: Optional[int] = None
    operand: object = None


@dataclass(frozen=True)
class GraphQuery:
    nodes: tuple
    edges: tuple = ()
    function: Optional[GraphFunction] = None
    _adj: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.nodes)
        answers = [i for i, node in enumerate(self.nodes) if node.is_answer]
        if len(answers) != 1:
            raise UnsupportedShape(f"graph query needs exactly one answer node, found {len(answers)}")
        for e in self.edges:
            if not (0 <= e.source < n and 0 <= e.target < n):
                raise UnsupportedShape(f"edge {e} references a missing node")
        if self.function is not None:
            for idx in (self.function.node, self.function.focus):
                if idx is not None and not 0 <= idx < n:
                    raise UnsupportedShape("function annotation references a missing node")
        adj = {i: [] for i in range(n)}
        for k, e in enumerate(self.edges):
            adj[e.source].append((k, e.target, "out"))
            adj[e.target].append((k, e.source, "in"))
        object.__setattr__(self, "_adj", adj)
        seen = {answers[0]}
        todo = [answers[0]]
        while todo:
            cur = todo.pop()
            for _, other, _ in adj[cur]:
                if other not in seen:
                    seen.add(other)
                    todo.append(other)
        if len(seen) != n:
            raise UnsupportedShape("graph query is disconnected")

    @property
    def answer(self) -> int:
        return next(i for i, node in enumerate(self.nodes) if node.is_answer)

    def incident(self, i: int) -> list:
        """``(edge index, neighbour, direction)`` triples for node ``i``."""
        return self._adj[i]

    @property
    def function_name(self) -> str:
        return self.function.name if self.function else "none"

    def relation_multiset(self) -> Counter:
        return Counter(e.relation for e in self.edges)


# S-expression -> graph


class _Builder:
    def __init__(self):
        self.kinds: list[str] = []
        self.labels: list = []
        self.classes: list[set] = []
        self.parent: list[int] = []
        self.sealed: set[int] = set()
        self.edges: list[tuple] = []
        self.function: Optional[dict] = None

    def new(self, kind="class", label=None) -> int:
        self.kinds.append(kind)
        self.labels.append(label)
        self.classes.append(set())
        self.parent.append(len(self.parent))
        return len(self.parent) - 1

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def set_function(self, **kwargs):
        if self.function is not None:
            raise UnsupportedShape("more than one function in logical form")
        self.function = kwargs

    def merge(self, a: int, b: int) -> int:
        a, b = self.find(a), self.find(b)
        if a == b:
            return a
        if a in self.sealed or b in self.sealed:
            raise UnsupportedShape("a superlative result cannot be intersected with another set")
        ka, kb_ = self.kinds[a], self.kinds[b]
        if ka != "class" and kb_ != "class":
            if ka != kb_ or self.labels[a] != self.labels[b]:
                raise UnsupportedShape("AND of two different constants")
        elif ka == "class" and kb_ != "class":
            self.kinds[a], self.labels[a] = kb_, self.labels[b]
        self.classes[a] |= self.classes[b]
        self.parent[b] = a
        return a

    def unary(self, e: SExpr) -> int:
        if isinstance(e, ClassRef):
            i = self.new()
            self.classes[i].add(e.id)
            return i
        if isinstance(e, EntityRef):
            return self.new("entity", e.id)
        if isinstance(e, LiteralRef):
            return self.new("literal", e.value)
        if isinstance(e, Placeholder):
            return self.new("entity" if e.kind == "e" else "literal", e)
        if isinstance(e, And):
            return self.merge(self.unary(e.left), self.unary(e.right))
        if isinstance(e, JoinUnary):
            target = self.unary(e.arg)
            x = self.new()
            self.binary(e.rel, x, target)
            return x
        if isinstance(e, Comparison):
            x = self.new()
            bound = self.new("literal", e.value)
            self.binary(e.rel, x, bound)
            self.set_function(name=e.op.lower(), node=bound, operand=e.value)
            return x
        if isinstance(e, Superlative):
            focus = self.unary(e.arg)
            value = self.new("literal", None)
            self.binary(e.rel, focus, value)
            self.set_function(name=e.op.lower(), node=value, focus=focus)
            self.sealed.add(self.find(focus))
            return focus
        if isinstance(e, Count):
            raise UnsupportedShape("COUNT is only supported at the root")
        raise UnsupportedShape(f"{to_string(e)} does not denote a set of entities")

    def binary(self, e: SExpr, source: int, target: int):
        if isinstance(e, RelationRef):
            self.edges.append((source, target, e.id))
        elif isinstance(e, Rev):
            self.binary(e.rel, target, source)
        elif isinstance(e, JoinBinary):
            mid = self.new()
            self.binary(e.left, source, mid)
            self.binary(e.right, mid, target)
        else:
            raise UnsupportedShape(f"{to_string(e)} is not a relation expression")

    def build(self, root: int) -> GraphQuery:
        roots = sorted({self.find(i) for i in range(len(self.parent))})
        index = {r: k for k, r in enumerate(roots)}
        answer = self.find(root)
        nodes = tuple(
            Node(self.kinds[r], self.labels[r], frozenset(self.classes[r]), r == answer)
            for r in roots
        )
        edges = tuple(Edge(index[self.find(s)], index[self.find(t)], rel) for s, t, rel in self.edges)
        fn = None
        if self.function is not None:
            f = self.function
            focus = f.get("focus")
            fn = GraphFunction(
                f["name"],
                index[self.find(f["node"])],
                index[self.find(focus)] if focus is not None else None,
                f.get("operand"),
            )
        return GraphQuery(nodes, edges, fn)


def from_sexpr(e: SExpr) -> GraphQuery:
    """Convert a set-valued S-expression to its graph query."""
    b = _Builder()
    if isinstance(e, Count):
        root = b.unary(e.arg)
        b.set_function(name="count", node=root)
    else:
        if isinstance(e, (RelationRef, Rev, JoinBinary)):
            raise UnsupportedShape("a relation expression at the root has no answer node")
        root = b.unary(e)
    if b.function and b.function["name"] == "count":
        b.function["node"] = b.find(root)
    return b.build(root)


# graph -> S-expression


def _conjoin(parts: list) -> SExpr:
    out = parts[-1]
    for p in reversed(parts[:-1]):
        out = And(p, out)
    return out


def _constant_expr(node: Node) -> Optional[SExpr]:
    if node.label is None:
        return None
    if isinstance(node.label, Placeholder):
        return node.label
    if node.kind == "entity":
        return EntityRef(node.label)
    if node.kind == "literal":
        return LiteralRef(node.label)
    return None


def _tree_path(g: GraphQuery, start: int, goal: int) -> list:
    """Edges ``(edge index, direction)`` on the path from ``start`` to ``goal``."""
    prev = {start: None}
    todo = deque([start])
    while todo:
        cur = todo.popleft()
        if cur == goal:
            break
        for k, other, direction in g.incident(cur):
            if other not in prev:
                prev[other] = (cur, k, direction)
                todo.append(other)
    if goal not in prev:
        raise UnsupportedShape("superlative value node is unreachable")
    path = []
    cur = goal
    while prev[cur] is not None:
        before, k, direction = prev[cur]
        path.append((k, direction, cur))
        cur = before
    return list(reversed(path))


def _rel_expr(g: GraphQuery, k: int, direction: str) -> SExpr:
    rel = RelationRef(g.edges[k].relation)
    return rel if direction == "out" else Rev(rel)


def to_sexpr(g: GraphQuery) -> SExpr:
    """Convert a graph query back to an S-expression.

    Traversal starts at the answer node; sibling constraints are ordered by
    relation id (ties by direction and printed form), so isomorphic trees
    give identical output.
    """
    fn = g.function
    sup_path_edges: set = set()
    sup_path: list = []
    if fn is not None and fn.name in ("argmax", "argmin"):
        sup_path = _tree_path(g, fn.focus, fn.node)
        sup_path_edges = {k for k, _, _ in sup_path}
        for _, _, mid in sup_path[:-1]:
            node = g.nodes[mid]
            if len(g.incident(mid)) != 2 or node.classes or node.label is not None or node.is_answer:
                raise UnsupportedShape("superlative path carries extra constraints")

    def expr(n: int, via: Optional[int]) -> SExpr:
        node = g.nodes[n]
        if fn is not None and n == fn.node and fn.name not in ("count",):
            raise UnsupportedShape("function value node cannot be expanded as a constraint")
        parts: list = [ClassRef(c) for c in sorted(node.classes)]
        const = _constant_expr(node)
        if const is not None:
            parts.append(const)
        branches = []
        for k, other, direction in g.incident(n):
            if k == via or k in sup_path_edges:
                continue
            edge = g.edges[k]
            rel = _rel_expr(g, k, direction)
            if fn is not None and other == fn.node and fn.name in ("lt", "le", "gt", "ge"):
                if len(g.incident(other)) != 1:
                    raise UnsupportedShape("comparative literal must be a leaf")
                branch = Comparison(fn.name.upper(), rel, fn.operand)
            else:
                branch = JoinUnary(rel, expr(other, k))
            branches.append(((edge.relation, direction, to_string(branch)), branch))
        parts.extend(b for _, b in sorted(branches, key=lambda t: t[0]))
        if not parts:
            raise UnsupportedShape("unconstrained variable node")
        body = _conjoin(parts)
        if fn is not None and fn.name in ("argmax", "argmin") and n == fn.focus:
            rels = [_rel_expr(g, k, d) for k, d, _ in sup_path]
            chain = rels[-1]
            for r in reversed(rels[:-1]):
                chain = JoinBinary(r, chain)
            body = Superlative(fn.name.upper(), body, chain)
        return body

    root = g.answer
    out = expr(root, None)
    if fn is not None and fn.name == "count":
        out = Count(out)
    return out


def canonical_string(e: SExpr) -> str:
    """Isomorphism-invariant text of ``e`` (round trip through the graph form)."""
    return to_string(to_sexpr(from_sexpr(e)))


# Isomorphism


def _label_key(label) -> str:
    if label is None:
        return ""
    if isinstance(label, Literal):
        return f"l:{label.family}:{label.value!r}" if label.family != "number" else f"l:number:{float(label.value)!r}"
    if isinstance(label, Placeholder):
        return f"p:{label.kind}:{label.type}"
    return f"e:{label}"


def _initial_colors(g: GraphQuery) -> list:
    roles = [""] * len(g.nodes)
    if g.function is not None:
        f = g.function
        roles[f.node] += f"fn:{f.name}:{_label_key(f.operand)};"
        if f.focus is not None:
            roles[f.focus] += f"focus:{f.name};"
    return [
        (node.kind, _label_key(node.label), tuple(sorted(node.classes)), node.is_answer, roles[i])
        for i, node in enumerate(g.nodes)
    ]


def _refine(a: GraphQuery, b: GraphQuery):
    """Colour refinement run jointly over both graphs so colours are comparable."""
    graphs = (a, b)
    colors = [_initial_colors(a), _initial_colors(b)]
    palette: dict = {}
    colors = [[palette.setdefault(c, len(palette)) for c in cs] for cs in colors]
    n_classes = len(palette)
    while True:
        palette = {}
        new = []
        for g, cs in zip(graphs, colors):
            row = []
            for i in range(len(g.nodes)):
                sig = (
                    cs[i],
                    tuple(sorted((d, g.edges[k].relation, cs[o]) for k, o, d in g.incident(i))),
                )
                row.append(palette.setdefault(sig, len(palette)))
            new.append(row)
        colors = new
        if len(palette) == n_classes:
            return colors
        n_classes = len(palette)


def _edge_table(g: GraphQuery) -> dict:
    table: dict = {}
    for e in g.edges:
        table.setdefault((e.source, e.target), []).append(e.relation)
    return {k: tuple(sorted(v)) for k, v in table.items()}


def is_isomorphic(a: GraphQuery, b: GraphQuery) -> bool:
    """True iff a label-, direction-, answer- and function-preserving node
    bijection exists between ``a`` and ``b``."""
    if len(a.nodes) != len(b.nodes) or len(a.edges) != len(b.edges):
        return False
    fa, fb = a.function, b.function
    if (fa is None) != (fb is None):
        return False
    if fa is not None and (fa.name != fb.name or _label_key(fa.operand) != _label_key(fb.operand)):
        return False
    if a.relation_multiset() != b.relation_multiset():
        return False
    ca, cb = _refine(a, b)
    if Counter(ca) != Counter(cb):
        return False

    ea, eb = _edge_table(a), _edge_table(b)
    # BFS order from the answer keeps every new node adjacent to a mapped one
    order = []
    seen = {a.answer}
    todo = deque([a.answer])
    while todo:
        cur = todo.popleft()
        order.append(cur)
        for _, o, _ in sorted(a.incident(cur), key=lambda t: t[1]):
            if o not in seen:
                seen.add(o)
                todo.append(o)
    by_color: dict = {}
    for j, c in enumerate(cb):
        by_color.setdefault(c, []).append(j)

    mapping: dict = {}
    used: set = set()

    def consistent(u: int, v: int) -> bool:
        if ea.get((u, u)) != eb.get((v, v)):
            return False
        for w, x in mapping.items():
            if ea.get((u, w)) != eb.get((v, x)) or ea.get((w, u)) != eb.get((x, v)):
                return False
        return True

    def extend(pos: int) -> bool:
        if pos == len(order):
            return True
        u = order[pos]
        for v in by_color.get(ca[u], ()):
            if v in used or not consistent(u, v):
                continue
            mapping[u] = v
            used.add(v)
            if extend(pos + 1):
                return True
            del mapping[u]
            used.discard(v)
        return False

    if not extend(0):
        return False
    if fa is not None:
        if mapping[fa.node] != fb.node:
            return False
        if fa.focus is not None and mapping[fa.focus] != fb.focus:
            return False
    return True


def equivalent(a: SExpr, b: SExpr) -> bool:
    return is_isomorphic(from_sexpr(a), from_sexpr(b))
