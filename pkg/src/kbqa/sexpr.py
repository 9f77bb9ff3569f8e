"""S-expression logical forms: syntax tree, parser, printer, type checker and
set-based evaluator.

The ten functions are ``AND COUNT R JOIN ARGMAX ARGMIN LT LE GT GE``. Atoms are
classes, relations, entities (ids starting with ``m.`` or ``g.``), literals
(bare numbers, ISO dates, or ``"lexical"^^kind``) and, in templates, typed
placeholders such as ``<e:Person>`` or ``<v:int>``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator, Union

from .kbstore import (
    NUMERIC_KINDS,
    ORDERABLE_KINDS,
    KnowledgeBase,
    Literal,
    SchemaItems,
)

FUNCTIONS = ("AND", "COUNT", "R", "JOIN", "ARGMAX", "ARGMIN", "LT", "LE", "GT", "GE")
COMPARATIVES = ("LT", "LE", "GT", "GE")
SUPERLATIVES = ("ARGMAX", "ARGMIN")


class SExprError(ValueError):
    pass


class SExprSyntaxError(SExprError):
    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (at byte offset {offset})")


class SExprTypeError(SExprError):
    def __init__(self, message: str, subtree: "SExpr | None" = None, expected=None, found=None):
        self.subtree = subtree
        self.expected = expected
        self.found = found
        detail = message
        if subtree is not None:
            detail += f" in {to_string(subtree)}"
        if expected is not None or found is not None:
            detail += f": expected {expected}, found {found}"
        super().__init__(detail)


# Syntax tree


@dataclass(frozen=True)
class ClassRef:
    id: str


@dataclass(frozen=True)
class EntityRef:
    id: str


@dataclass(frozen=True)
class LiteralRef:
    value: Literal


@dataclass(frozen=True)
class RelationRef:
    id: str


@dataclass(frozen=True)
class Placeholder:
    """Typed hole in a template: ``kind`` is ``"e"`` (entity) or ``"v"`` (literal)."""

    kind: str
    type: str


@dataclass(frozen=True)
class And:
    left: "SExpr"
    right: "SExpr"


@dataclass(frozen=True)
class Count:
    arg: "SExpr"


@dataclass(frozen=True)
class Rev:
    rel: "SExpr"


@dataclass(frozen=True)
class JoinUnary:
    rel: "SExpr"
    arg: "SExpr"


@dataclass(frozen=True)
class JoinBinary:
    left: "SExpr"
    right: "SExpr"


@dataclass(frozen=True)
class Superlative:
    op: str  # ARGMAX | ARGMIN
    arg: "SExpr"
    rel: "SExpr"


@dataclass(frozen=True)
class Comparison:
    op: str  # LT | LE | GT | GE
    rel: "SExpr"
    value: Union[Literal, Placeholder]


SExpr = Union[
    ClassRef, EntityRef, LiteralRef, RelationRef, Placeholder,
    And, Count, Rev, JoinUnary, JoinBinary, Superlative, Comparison,
]
ATOMS = (ClassRef, EntityRef, LiteralRef, RelationRef, Placeholder)


def children(e: SExpr) -> tuple:
    if isinstance(e, (And, JoinBinary)):
        return (e.left, e.right)
    if isinstance(e, Count):
        return (e.arg,)
    if isinstance(e, Rev):
        return (e.rel,)
    if isinstance(e, JoinUnary):
        return (e.rel, e.arg)
    if isinstance(e, Superlative):
        return (e.arg, e.rel)
    if isinstance(e, Comparison):
        return (e.rel,)
    return ()


def walk(e: SExpr) -> Iterator[SExpr]:
    """Pre-order traversal."""
    stack = [e]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(children(node)))


def head(e: SExpr) -> str | None:
    if isinstance(e, And):
        return "AND"
    if isinstance(e, Count):
        return "COUNT"
    if isinstance(e, Rev):
        return "R"
    if isinstance(e, (JoinUnary, JoinBinary)):
        return "JOIN"
    if isinstance(e, (Superlative, Comparison)):
        return e.op
    return None


def schema_items(e: SExpr) -> SchemaItems:
    """Relations, classes and function symbols used by ``e``."""
    relations, classes, functions = set(), set(), set()
    for node in walk(e):
        if isinstance(node, RelationRef):
            relations.add(node.id)
        elif isinstance(node, ClassRef):
            classes.add(node.id)
        h = head(node)
        if h:
            functions.add(h)
    return SchemaItems(frozenset(relations), frozenset(classes), frozenset(functions))


def relation_count(e: SExpr) -> int:
    return sum(isinstance(n, RelationRef) for n in walk(e))


def function_of(e: SExpr) -> str | None:
    """The non-structural function (COUNT, a superlative or a comparative), if any."""
    for node in walk(e):
        if isinstance(node, Count):
            return "COUNT"
        if isinstance(node, (Superlative, Comparison)):
            return node.op
    return None


def placeholders(e: SExpr) -> list[Placeholder]:
    out = []
    for node in walk(e):
        if isinstance(node, Placeholder):
            out.append(node)
        elif isinstance(node, Comparison) and isinstance(node.value, Placeholder):
            out.append(node.value)
    return out


# Tokenizer and parser

_TOKEN_RE = re.compile(
    r"""\s*(?:
        (?P<open>\()
      | (?P<close>\))
      | (?P<quoted>"(?:[^"\\]|\\.)*"(?:\^\^[\w:#/.-]+)?)
      | (?P<hole><[^<>\s()]*>)
      | (?P<atom>[^\s()"]+)
    )""",
    re.VERBOSE,
)
_INT_RE = re.compile(r"^[+-]?\d+$")
_FLOAT_RE = re.compile(r"^[+-]?(?:\d+\.\d*|\.\d+|\d+(?:\.\d*)?[eE][+-]?\d+)$")
_DATE_RE = re.compile(r"^\d{4}-\d{2}-\d{2}(?:T[\d:.]+)?$")
_XSD_KINDS = {
    "int": "int", "integer": "int", "float": "float", "double": "float", "decimal": "float",
    "datetime": "datetime", "date": "datetime", "dateTime": "datetime", "gYear": "datetime",
    "gYearMonth": "datetime", "string": "string",
}


@dataclass
class _Atom:
    text: str
    offset: int
    quoted: bool = False


@dataclass
class _List:
    items: list
    offset: int


def _tokenize(text: str):
    pos = 0
    tokens = []
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            if text[pos:].strip() == "":
                break
            raise SExprSyntaxError(f"unexpected character {text[pos]!r}", _byte_offset(text, pos))
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), _byte_offset(text, start)))
        pos = m.end()
    return tokens


def _byte_offset(text: str, index: int) -> int:
    return len(text[:index].encode("utf-8"))


def _read(text: str):
    tokens = _tokenize(text)
    if not tokens:
        raise SExprSyntaxError("empty expression", 0)
    stack: list[_List] = []
    result = None
    for kind, value, offset in tokens:
        if result is not None:
            raise SExprSyntaxError("trailing input after expression", offset)
        if kind == "open":
            stack.append(_List([], offset))
            continue
        if kind == "close":
            if not stack:
                raise SExprSyntaxError("unbalanced ')'", offset)
            done = stack.pop()
            if stack:
                stack[-1].items.append(done)
            else:
                result = done
            continue
        atom = _Atom(value, offset, quoted=kind == "quoted")
        if stack:
            stack[-1].items.append(atom)
        else:
            result = atom
    if stack:
        raise SExprSyntaxError("unbalanced '(': missing ')'", stack[-1].offset)
    return result


def _literal_atom(atom: _Atom) -> Literal | None:
    text = atom.text
    if atom.quoted:
        m = re.match(r'^"((?:[^"\\]|\\.)*)"(?:\^\^(.+))?$', text)
        lexical = re.sub(r"\\(.)", r"\1", m.group(1))
        kind = m.group(2) or "string"
        kind = kind.rsplit("#", 1)[-1]
        if kind not in _XSD_KINDS:
            raise SExprSyntaxError(f"unknown literal kind {kind!r}", atom.offset)
        try:
            return Literal.parse(lexical, _XSD_KINDS[kind])
        except ValueError as exc:
            raise SExprSyntaxError(str(exc), atom.offset) from None
    if _INT_RE.match(text):
        return Literal.parse(text, "int")
    if _FLOAT_RE.match(text):
        return Literal.parse(text, "float")
    if _DATE_RE.match(text):
        try:
            return Literal.parse(text, "datetime")
        except ValueError as exc:
            raise SExprSyntaxError(str(exc), atom.offset) from None
    return None


def _is_entity(text: str) -> bool:
    return text.startswith(("m.", "g."))


def looks_like_relation(symbol: str) -> bool:
    """Lexical guess used when a JOIN argument could be a class or a relation.

    Dotted ids follow the Freebase convention (``domain.type`` classes,
    ``domain.type.property`` relations); undotted ids are relations when
    they start lower-case.
    """
    if "." in symbol:
        return symbol.count(".") >= 2
    return symbol[:1].islower()


def _placeholder(atom: _Atom) -> Placeholder:
    body = atom.text[1:-1]
    kind, sep, typ = body.partition(":")
    if not sep or kind not in ("e", "v") or not typ:
        raise SExprSyntaxError(f"malformed placeholder {atom.text!r}", atom.offset)
    return Placeholder(kind, typ)


class _Builder:
    def __init__(self, schema=None):
        self.relations = getattr(schema, "relations", None)

    def unary(self, node) -> SExpr:
        if isinstance(node, _List):
            return self.compound(node)
        if node.text.startswith("<") and not node.quoted:
            return _placeholder(node)
        lit = _literal_atom(node)
        if lit is not None:
            return LiteralRef(lit)
        if _is_entity(node.text):
            return EntityRef(node.text)
        return ClassRef(node.text)

    def binary(self, node) -> SExpr:
        if isinstance(node, _List):
            return self.compound(node)
        if node.quoted or node.text.startswith("<") or _literal_atom(node) is not None or _is_entity(node.text):
            raise SExprSyntaxError(f"expected a relation, found {node.text!r}", node.offset)
        return RelationRef(node.text)

    def join_target(self, node) -> SExpr:
        if isinstance(node, _Atom) and not node.quoted and not node.text.startswith("<"):
            text = node.text
            if _literal_atom(node) is None and not _is_entity(text):
                if self.relations is not None:
                    is_rel = text in self.relations
                else:
                    is_rel = looks_like_relation(text)
                return RelationRef(text) if is_rel else ClassRef(text)
        return self.unary(node)

    def compound(self, node: _List) -> SExpr:
        if not node.items:
            raise SExprSyntaxError("empty list", node.offset)
        first = node.items[0]
        if isinstance(first, _List):
            raise SExprSyntaxError("expected a function symbol", first.offset)
        name = first.text.upper()
        args = node.items[1:]
        arity = {"AND": 2, "COUNT": 1, "R": 1, "JOIN": 2, "ARGMAX": 2, "ARGMIN": 2,
                 "LT": 2, "LE": 2, "GT": 2, "GE": 2}.get(name)
        if arity is None:
            raise SExprSyntaxError(f"unknown function {first.text!r}", first.offset)
        if len(args) != arity:
            raise SExprSyntaxError(
                f"{name} takes {arity} argument(s), got {len(args)}", node.offset
            )
        if name == "AND":
            return And(self.unary(args[0]), self.unary(args[1]))
        if name == "COUNT":
            return Count(self.unary(args[0]))
        if name == "R":
            return Rev(self.binary(args[0]))
        if name == "JOIN":
            rel = self.binary(args[0])
            target = self.join_target(args[1])
            if _is_binary_syntax(target):
                return JoinBinary(rel, target)
            return JoinUnary(rel, target)
        if name in SUPERLATIVES:
            return Superlative(name, self.unary(args[0]), self.binary(args[1]))
        value = args[1]
        if isinstance(value, _List):
            raise SExprSyntaxError(f"{name} expects a literal bound", value.offset)
        if value.text.startswith("<") and not value.quoted:
            bound = _placeholder(value)
        else:
            bound = _literal_atom(value)
            if bound is None:
                raise SExprSyntaxError(f"{name} expects a literal bound, found {value.text!r}", value.offset)
        return Comparison(name, self.binary(args[0]), bound)


def _is_binary_syntax(e: SExpr) -> bool:
    return isinstance(e, (RelationRef, Rev, JoinBinary))


def parse(text: str, schema: KnowledgeBase | None = None) -> SExpr:
    """Parse the textual form into a tree.

    ``schema`` (anything with a ``relations`` collection) resolves whether a
    bare symbol in the second JOIN position is a relation or a class; without
    it a lexical rule is used (see :func:`looks_like_relation`).
    """
    tree = _read(text)
    builder = _Builder(schema)
    if isinstance(tree, _Atom):
        return builder.join_target(tree)
    return builder.compound(tree)


# Printer


def _format_literal(lit: Literal) -> str:
    if lit.kind == "int":
        return str(lit.value)
    if lit.kind == "float":
        return repr(float(lit.value))
    return lit.to_tsv()


def to_string(e: SExpr) -> str:
    """Canonical single-space-separated text of ``e``."""
    if isinstance(e, (ClassRef, EntityRef, RelationRef)):
        return e.id
    if isinstance(e, LiteralRef):
        return _format_literal(e.value)
    if isinstance(e, Placeholder):
        return f"<{e.kind}:{e.type}>"
    if isinstance(e, Comparison):
        bound = e.value
        bound_text = _format_literal(bound) if isinstance(bound, Literal) else to_string(bound)
        return f"({e.op} {to_string(e.rel)} {bound_text})"
    parts = " ".join(to_string(c) for c in children(e))
    return f"({head(e)} {parts})"


# Types


@dataclass(frozen=True)
class SemType:
    """``kind`` is ``entities``, ``integer`` or ``pairs``.

    For ``entities``, ``range`` is the element kind (``entity`` or a literal
    kind); for ``pairs`` ``domain``/``range`` are the kinds of the two tuple
    positions.
    """

    kind: str
    range: str = "entity"
    domain: str = "entity"

    def __str__(self):
        if self.kind == "pairs":
            return f"PairSet({self.domain}->{self.range})"
        if self.kind == "integer":
            return "IntegerSet"
        return "EntitySet" if self.range == "entity" else f"ValueSet({self.range})"


ENTITY_SET = SemType("entities")
INTEGER_SET = SemType("integer")


def _compatible(a: str, b: str) -> bool:
    return a == b or (a in NUMERIC_KINDS and b in NUMERIC_KINDS)


def typecheck(e: SExpr, kb: KnowledgeBase) -> SemType:
    """Infer the semantic type of ``e`` against the KB ontology."""
    if isinstance(e, ClassRef):
        if e.id not in kb.classes:
            raise SExprTypeError(f"unknown class {e.id!r}", e)
        return ENTITY_SET
    if isinstance(e, EntityRef):
        return ENTITY_SET
    if isinstance(e, LiteralRef):
        return SemType("entities", e.value.kind)
    if isinstance(e, Placeholder):
        if e.kind == "e":
            return ENTITY_SET
        return SemType("entities", e.type)
    if isinstance(e, RelationRef):
        sig = kb.signature(e.id)
        if sig is None:
            raise SExprTypeError(f"unknown relation {e.id!r}", e)
        return SemType("pairs", sig.range_kind, "entity")
    if isinstance(e, Rev):
        t = _expect_pairs(e.rel, kb)
        return SemType("pairs", t.domain, t.range)
    if isinstance(e, And):
        a = _expect_set(e.left, kb)
        b = _expect_set(e.right, kb)
        if not _compatible(a.range, b.range):
            raise SExprTypeError("AND of incompatible sets", e, a, b)
        return a
    if isinstance(e, Count):
        _expect_set(e.arg, kb)
        return INTEGER_SET
    if isinstance(e, JoinUnary):
        b = _expect_pairs(e.rel, kb)
        u = _expect_set(e.arg, kb)
        if not _compatible(b.range, u.range):
            raise SExprTypeError("JOIN argument does not match relation range", e, b.range, u.range)
        return SemType("entities", b.domain)
    if isinstance(e, JoinBinary):
        b1 = _expect_pairs(e.left, kb)
        b2 = _expect_pairs(e.right, kb)
        if not _compatible(b1.range, b2.domain):
            raise SExprTypeError("JOIN of non-composable relations", e, b1.range, b2.domain)
        return SemType("pairs", b2.range, b1.domain)
    if isinstance(e, Superlative):
        u = _expect_set(e.arg, kb)
        b = _expect_pairs(e.rel, kb)
        if b.range not in ORDERABLE_KINDS:
            raise SExprTypeError(f"{e.op} needs an orderable relation range", e, "int/float/datetime", b.range)
        if not _compatible(u.range, b.domain):
            raise SExprTypeError(f"{e.op} set does not match relation domain", e, b.domain, u.range)
        return u
    if isinstance(e, Comparison):
        b = _expect_pairs(e.rel, kb)
        if b.range not in ORDERABLE_KINDS:
            raise SExprTypeError(f"{e.op} needs an orderable relation range", e, "int/float/datetime", b.range)
        bound_kind = e.value.kind if isinstance(e.value, Literal) else e.value.type
        if isinstance(e.value, Placeholder) and e.value.kind != "v":
            raise SExprTypeError(f"{e.op} bound must be a literal placeholder", e)
        if not _compatible(b.range, bound_kind):
            raise SExprTypeError(f"{e.op} bound has the wrong kind", e, b.range, bound_kind)
        return SemType("entities", b.domain)
    raise SExprTypeError(f"not an S-expression node: {e!r}")


def _expect_set(e, kb) -> SemType:
    t = typecheck(e, kb)
    if t.kind != "entities":
        raise SExprTypeError("expected a set of entities", e, "EntitySet", t)
    return t


def _expect_pairs(e, kb) -> SemType:
    t = typecheck(e, kb)
    if t.kind != "pairs":
        raise SExprTypeError("expected a set of tuples", e, "PairSet", t)
    return t


# Evaluation

_CMP = {
    "LT": lambda a, b: a < b,
    "LE": lambda a, b: a <= b,
    "GT": lambda a, b: a > b,
    "GE": lambda a, b: a >= b,
}


def evaluate(e: SExpr, kb: KnowledgeBase, check: bool = True) -> frozenset:
    """Denotation of ``e`` on ``kb``.

    Unary forms give a frozenset of entity ids and :class:`Literal` values,
    binary forms a frozenset of pairs, and COUNT a singleton ``{n}``.
    """
    if check:
        typecheck(e, kb)
    return _eval(e, kb)


def _eval(e: SExpr, kb: KnowledgeBase) -> frozenset:
    if isinstance(e, ClassRef):
        return kb.class_members(e.id)
    if isinstance(e, EntityRef):
        return frozenset((e.id,))
    if isinstance(e, LiteralRef):
        return frozenset((e.value,))
    if isinstance(e, RelationRef):
        return kb.extension(e.id)
    if isinstance(e, Rev):
        return frozenset((y, x) for x, y in _eval(e.rel, kb))
    if isinstance(e, And):
        left = _eval(e.left, kb)
        if not left:
            return left
        return left & _eval(e.right, kb)
    if isinstance(e, Count):
        return frozenset((len(_eval(e.arg, kb)),))
    if isinstance(e, JoinUnary):
        targets = _eval(e.arg, kb)
        rel = e.rel
        # walk the index from the (usually small) argument side
        if isinstance(rel, RelationRef):
            out = set()
            for y in targets:
                out |= kb.subjects(rel.id, y)
            return frozenset(out)
        if isinstance(rel, Rev) and isinstance(rel.rel, RelationRef):
            out = set()
            for y in targets:
                if isinstance(y, str):
                    out |= kb.objects(y, rel.rel.id)
            return frozenset(out)
        return frozenset(x for x, y in _eval(rel, kb) if y in targets)
    if isinstance(e, JoinBinary):
        by_first: dict = {}
        for y, z in _eval(e.right, kb):
            by_first.setdefault(y, []).append(z)
        return frozenset(
            (x, z) for x, y in _eval(e.left, kb) for z in by_first.get(y, ())
        )
    if isinstance(e, Superlative):
        members = _eval(e.arg, kb)
        pairs = _pairs_from(e.rel, members, kb)
        best = None
        winners = set()
        for x, v in pairs:
            if not isinstance(v, Literal) or v.kind not in ORDERABLE_KINDS:
                continue
            if best is None:
                best, winners = v, {x}
                continue
            if e.op == "ARGMAX":
                better = v.value > best.value
            else:
                better = v.value < best.value
            if better:
                best, winners = v, {x}
            elif v.value == best.value:
                winners.add(x)
        return frozenset(winners)
    if isinstance(e, Comparison):
        if isinstance(e.value, Placeholder):
            raise SExprError("cannot evaluate an ungrounded template")
        bound = e.value
        op = _CMP[e.op]
        return frozenset(
            x
            for x, v in _eval(e.rel, kb)
            if isinstance(v, Literal) and v.comparable_with(bound) and op(v.value, bound.value)
        )
    if isinstance(e, Placeholder):
        raise SExprError("cannot evaluate an ungrounded template")
    raise SExprError(f"not an S-expression node: {e!r}")


def _pairs_from(rel: SExpr, members: frozenset, kb: KnowledgeBase):
    if isinstance(rel, RelationRef):
        for x in members:
            if isinstance(x, str):
                for v in kb.objects(x, rel.id):
                    yield x, v
        return
    for x, v in _eval(rel, kb):
        if x in members:
            yield x, v
