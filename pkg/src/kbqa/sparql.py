"""SPARQL SELECT generation from S-expressions (via the graph-query form)."""
from __future__ import annotations

from collections import deque

from .graphquery import GraphQuery, UnsupportedShape, from_sexpr
from .kbstore import TYPE_RELATION, Literal
from .sexpr import Placeholder, SExpr

XSD = "http://www.w3.org/2001/XMLSchema#"


def sparql_literal(lit: Literal) -> str:
    if lit.kind == "int":
        return str(lit.value)
    if lit.kind == "float":
        return repr(float(lit.value))
    if lit.kind == "datetime":
        return f'"{lit.value.isoformat()}"^^<{XSD}dateTime>'
    escaped = str(lit.value).replace("\\", "\\\\").replace('"', '\\"')
    return f'"{escaped}"'


_OPS = {"lt": "<", "le": "<=", "gt": ">", "ge": ">="}


class _Writer:
    def __init__(self, g: GraphQuery, prefix: str, type_relation: str):
        self.g = g
        self.prefix = prefix
        self.type_relation = type_relation
        self.names = self._name_variables()

    def _neighbours(self, n: int):
        g = self.g
        return sorted(g.incident(n), key=lambda t: (g.edges[t[0]].relation, t[2], t[1]))

    def _name_variables(self) -> dict:
        # breadth-first from the answer; entity constants stay inline
        g = self.g
        names = {}
        seen = {g.answer}
        todo = deque([g.answer])
        while todo:
            n = todo.popleft()
            node = g.nodes[n]
            if n == g.answer or node.kind != "entity":
                names[n] = f"?x{len(names)}"
            for _, other, _ in self._neighbours(n):
                if other not in seen:
                    seen.add(other)
                    todo.append(other)
        return names

    def term(self, n: int) -> str:
        if n in self.names:
            return self.names[n]
        return f"{self.prefix}{self.g.nodes[n].label}"

    def patterns(self, root: int, skip_edge=None) -> list[str]:
        """Triple patterns and filters for the subtree under ``root``."""
        g = self.g
        fn = g.function
        lines: list[str] = []
        seen = {root}
        todo = deque([root])
        while todo:
            n = todo.popleft()
            node = g.nodes[n]
            if isinstance(node.label, Placeholder):
                raise UnsupportedShape("cannot emit SPARQL for an ungrounded template")
            for c in sorted(node.classes):
                lines.append(f"{self.term(n)} {self.prefix}{self.type_relation} {self.prefix}{c} .")
            if node.label is not None and n in self.names:
                value = (
                    sparql_literal(node.label)
                    if isinstance(node.label, Literal)
                    else f"{self.prefix}{node.label}"
                )
                if fn is not None and n == fn.node and fn.name in _OPS:
                    lines.append(f"FILTER ({self.term(n)} {_OPS[fn.name]} {value})")
                elif n == g.answer:
                    lines.append(f"VALUES {self.term(n)} {{ {value} }}")
                else:
                    lines.append(f"FILTER ({self.term(n)} = {value})")
            for k, other, _ in self._neighbours(n):
                if k == skip_edge or other in seen:
                    continue
                e = g.edges[k]
                lines.append(f"{self.term(e.source)} {self.prefix}{e.relation} {self.term(e.target)} .")
                seen.add(other)
                todo.append(other)
        return lines

    def superlative_block(self) -> str:
        g = self.g
        fn = g.function
        focus = fn.focus
        parent_edge = self._edge_towards_answer(focus)
        inner = " ".join(self.patterns(focus, skip_edge=parent_edge))
        order = "DESC" if fn.name == "argmax" else "ASC"
        value = self.names[fn.node]
        return f"{{ SELECT {value} WHERE {{ {inner} }} ORDER BY {order}({value}) LIMIT 1 }}"

    def _edge_towards_answer(self, n: int):
        g = self.g
        if n == g.answer:
            return None
        prev = {g.answer: None}
        todo = deque([g.answer])
        while todo:
            cur = todo.popleft()
            for k, other, _ in g.incident(cur):
                if other not in prev:
                    prev[other] = k
                    todo.append(other)
        return prev[n]


def to_sparql(e: SExpr, prefix: str = "ns:", type_relation: str = TYPE_RELATION) -> str:
    """Emit a single-line ``SELECT`` query for ``e``.

    Variables are named ``?x0, ?x1, ...`` breadth-first from the answer node.
    COUNT becomes ``COUNT(DISTINCT ...)``, comparatives become ``FILTER`` and
    superlatives an ``ORDER BY ... LIMIT 1`` sub-select that keeps ties.
    """
    g = from_sexpr(e)
    w = _Writer(g, prefix, type_relation)
    body = w.patterns(g.answer)
    if g.function is not None and g.function.name in ("argmax", "argmin"):
        body.append(w.superlative_block())
    answer = w.names[g.answer]
    if g.function is not None and g.function.name == "count":
        select = f"SELECT (COUNT(DISTINCT {answer}) AS ?count)"
    else:
        select = f"SELECT DISTINCT {answer}"
    return f"{select} WHERE {{ {' '.join(body)} }}"
