"""In-memory knowledge base: a typed ontology plus an indexed fact set.

Facts are ``(subject, relation, object)`` triples whose object is either an
entity id (a plain ``str``) or a :class:`Literal`. Class membership is stored
as ordinary facts over the reserved relation ``type`` whose object is the
class id.
"""
from __future__ import annotations

import datetime as _dt
import re
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Iterator, TextIO, Union

TYPE_RELATION = "type"
LITERAL_KINDS = ("int", "float", "datetime", "string")
ORDERABLE_KINDS = frozenset({"int", "float", "datetime"})
NUMERIC_KINDS = frozenset({"int", "float"})

_LITERAL_RE = re.compile(r'^"((?:[^"\\]|\\.)*)"\^\^(\w+)$')
_YEAR_RE = re.compile(r"^-?\d{4}$")
_YEAR_MONTH_RE = re.compile(r"^-?\d{4}-\d{2}$")


class KBError(ValueError):
    """Raised for malformed or inconsistent knowledge-base input."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def parse_datetime(text: str) -> _dt.datetime:
    """Parse an ISO-8601 date or date-time; dates are padded to midnight."""
    text = text.strip()
    if _YEAR_RE.match(text):
        return _dt.datetime(int(text), 1, 1)
    if _YEAR_MONTH_RE.match(text):
        year, month = text.split("-")
        return _dt.datetime(int(year), int(month), 1)
    try:
        if "T" in text or " " in text:
            value = _dt.datetime.fromisoformat(text)
        else:
            value = _dt.datetime.combine(_dt.date.fromisoformat(text), _dt.time())
    except ValueError as exc:
        raise ValueError(f"invalid ISO-8601 datetime {text!r}") from exc
    # tz-aware values would not compare with naive ones
    if value.tzinfo is not None:
        value = value.astimezone(_dt.timezone.utc).replace(tzinfo=None)
    return value


@dataclass(frozen=True, eq=False)
class Literal:
    """A typed literal value.

    Integers and floats compare (and hash) numerically across kinds, so
    ``Literal("int", 3) == Literal("float", 3.0)``.
    """

    kind: str
    value: Union[int, float, str, _dt.datetime]
    text: str = field(default="", compare=False)

    def __post_init__(self):
        if self.kind not in LITERAL_KINDS:
            raise ValueError(f"unknown literal kind {self.kind!r}")
        if not self.text:
            object.__setattr__(self, "text", self._default_text())

    @classmethod
    def parse(cls, lexical: str, kind: str) -> "Literal":
        if kind == "int":
            try:
                return cls("int", int(lexical), lexical)
            except ValueError:
                raise ValueError(f"invalid integer literal {lexical!r}") from None
        if kind == "float":
            try:
                return cls("float", float(lexical), lexical)
            except ValueError:
                raise ValueError(f"invalid float literal {lexical!r}") from None
        if kind == "datetime":
            return cls("datetime", parse_datetime(lexical), lexical)
        if kind == "string":
            return cls("string", lexical, lexical)
        raise ValueError(f"unknown literal kind {kind!r}")

    def _default_text(self) -> str:
        if self.kind == "datetime":
            return self.value.isoformat()
        if self.kind == "float":
            return repr(float(self.value))
        return str(self.value)

    @property
    def family(self) -> str:
        return "number" if self.kind in NUMERIC_KINDS else self.kind

    def _key(self):
        return (self.family, self.value)

    def __eq__(self, other):
        if not isinstance(other, Literal):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def comparable_with(self, other: "Literal") -> bool:
        return self.family == other.family and self.kind in ORDERABLE_KINDS

    def sort_key(self):
        return (self.family, self.value)

    def to_tsv(self) -> str:
        escaped = self.text.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"^^{self.kind}'

    def __repr__(self):
        return f"Literal({self.kind}, {self.text})"


Value = Union[str, Literal]


def value_sort_key(value) -> tuple:
    """Total order over entity ids, literals and integers for stable output."""
    if isinstance(value, Literal):
        family_rank = {"number": 1, "datetime": 2, "string": 3}[value.family]
        return (family_rank, value.value)
    if isinstance(value, int):
        return (1, value)
    return (0, value)


@dataclass(frozen=True)
class RelationSignature:
    relation: str
    domain: str
    range: str  # a class id, or a literal kind when ``literal_range`` is set
    literal_range: bool = False

    @property
    def range_kind(self) -> str:
        return self.range if self.literal_range else "entity"


@dataclass(frozen=True)
class Fact:
    subject: str
    relation: str
    object: Value


def domain_of(item: str) -> str:
    """Domain label of a schema item: its first dot-separated segment."""
    return item.split(".", 1)[0]


class KnowledgeBase:
    """Immutable, fully indexed knowledge base.

    Build one with :func:`load` or :meth:`from_facts`; the indexes are never
    mutated afterwards, so instances are safe to share between threads.
    """

    def __init__(self, signatures: Iterable[RelationSignature], facts: Iterable[Fact]):
        self.signatures: dict[str, RelationSignature] = {}
        for sig in signatures:
            if sig.relation == TYPE_RELATION:
                raise KBError(f"relation id {TYPE_RELATION!r} is reserved")
            old = self.signatures.get(sig.relation)
            if old is not None and old != sig:
                raise KBError(f"conflicting signatures for relation {sig.relation!r}")
            self.signatures[sig.relation] = sig

        classes = set()
        for sig in self.signatures.values():
            classes.add(sig.domain)
            if not sig.literal_range:
                classes.add(sig.range)

        fact_set = set()
        forward = defaultdict(set)
        backward = defaultdict(set)
        extension = defaultdict(set)
        class_index = defaultdict(set)
        types_of = defaultdict(set)
        out_edges = defaultdict(set)
        in_edges = defaultdict(set)
        entities = set()
        for f in facts:
            self._check(f)
            if f in fact_set:
                continue
            fact_set.add(f)
            entities.add(f.subject)
            forward[f.subject, f.relation].add(f.object)
            backward[f.object, f.relation].add(f.subject)
            if f.relation == TYPE_RELATION:
                class_index[f.object].add(f.subject)
                types_of[f.subject].add(f.object)
                classes.add(f.object)
                continue
            extension[f.relation].add((f.subject, f.object))
            out_edges[f.subject].add((f.relation, f.object))
            if not isinstance(f.object, Literal):
                entities.add(f.object)
                in_edges[f.object].add((f.relation, f.subject))

        self.facts = frozenset(fact_set)
        self.entities = frozenset(entities)
        self.classes = frozenset(classes)
        self.relations = frozenset(self.signatures)
        self._forward = {k: frozenset(v) for k, v in forward.items()}
        self._backward = {k: frozenset(v) for k, v in backward.items()}
        self._extension = {k: frozenset(v) for k, v in extension.items()}
        self._class_index = {k: frozenset(v) for k, v in class_index.items()}
        self._types_of = {k: frozenset(v) for k, v in types_of.items()}
        self._out = {k: frozenset(v) for k, v in out_edges.items()}
        self._in = {k: frozenset(v) for k, v in in_edges.items()}

    def _check(self, f: Fact, line: int | None = None):
        if not f.subject or not f.relation:
            raise KBError("empty subject or relation", line)
        if f.relation == TYPE_RELATION:
            if not isinstance(f.object, str) or not f.object:
                raise KBError("type facts need a class id object", line)
            return
        sig = self.signatures.get(f.relation)
        if sig is None:
            raise KBError(f"fact uses undeclared relation {f.relation!r}", line)
        if sig.literal_range:
            if not isinstance(f.object, Literal) or (
                f.object.kind != sig.range
                and not (f.object.kind in NUMERIC_KINDS and sig.range == "float")
            ):
                raise KBError(
                    f"relation {f.relation!r} expects a {sig.range} literal, got {f.object!r}",
                    line,
                )
        elif isinstance(f.object, Literal):
            raise KBError(f"relation {f.relation!r} expects an entity object, got {f.object!r}", line)

    @classmethod
    def from_facts(cls, signatures, facts) -> "KnowledgeBase":
        return cls(signatures, facts)

    # adjacency primitives

    def objects(self, subject: str, relation: str) -> frozenset:
        return self._forward.get((subject, relation), frozenset())

    def subjects(self, relation: str, obj: Value) -> frozenset:
        return self._backward.get((obj, relation), frozenset())

    def class_members(self, class_id: str) -> frozenset:
        return self._class_index.get(class_id, frozenset())

    def types_of(self, entity: str) -> frozenset:
        return self._types_of.get(entity, frozenset())

    def extension(self, relation: str) -> frozenset:
        """All ``(subject, object)`` pairs of a non-type relation."""
        return self._extension.get(relation, frozenset())

    def out_edges(self, entity: str) -> frozenset:
        """``(relation, object)`` pairs leaving ``entity``, excluding type facts."""
        return self._out.get(entity, frozenset())

    def in_edges(self, entity: str) -> frozenset:
        """``(relation, subject)`` pairs entering ``entity``, excluding type facts."""
        return self._in.get(entity, frozenset())

    def literals(self, kind: str | None = None) -> list[Literal]:
        # 3 and 3.0 compare equal; keep one representative regardless of set order
        seen: dict = {}
        for f in self.facts:
            v = f.object
            if isinstance(v, Literal) and (v not in seen or v.kind < seen[v].kind):
                seen[v] = v
        values = seen.values()
        if kind is not None:
            family = "number" if kind in NUMERIC_KINDS else kind
            values = [v for v in values if v.family == family]
        return sorted(values, key=value_sort_key)

    def domain(self, item: str) -> str:
        return domain_of(item)

    def signature(self, relation: str) -> RelationSignature | None:
        return self.signatures.get(relation)

    def schema_within_hops(self, anchors: Iterable[str], k: int) -> "SchemaItems":
        return schema_within_hops(self, anchors, k)

    def __iter__(self) -> Iterator[Fact]:
        return iter(sorted(self.facts, key=_fact_key))

    def __len__(self):
        return len(self.facts)

    def __eq__(self, other):
        if not isinstance(other, KnowledgeBase):
            return NotImplemented
        return self.facts == other.facts and self.signatures == other.signatures

    def __hash__(self):
        return hash(self.facts)

    def __repr__(self):
        return (
            f"KnowledgeBase({len(self.entities)} entities, {len(self.relations)} relations, "
            f"{len(self.facts)} facts)"
        )


def _fact_key(f: Fact):
    return (f.subject, f.relation, value_sort_key(f.object))


@dataclass(frozen=True)
class SchemaItems:
    relations: frozenset = frozenset()
    classes: frozenset = frozenset()
    functions: frozenset = frozenset()

    def all(self) -> frozenset:
        return self.relations | self.classes | self.functions

    def __iter__(self):
        return iter(sorted(self.all()))

    def __contains__(self, item):
        return item in self.relations or item in self.classes or item in self.functions

    def __len__(self):
        return len(self.all())

    def __le__(self, other: "SchemaItems") -> bool:
        return (
            self.relations <= other.relations
            and self.classes <= other.classes
            and self.functions <= other.functions
        )


def schema_within_hops(kb: KnowledgeBase, anchors: Iterable[str], k: int) -> SchemaItems:
    """Relations and classes reachable from ``anchors`` within ``k`` hops.

    Hops follow facts in either direction. Type facts do not count as hops;
    the classes of every visited entity are collected instead, and ``type``
    itself is reported once ``k >= 1`` and some visited entity is typed.
    Literal values terminate a path.
    """
    if k < 0:
        raise ValueError("hop count must be non-negative")
    frontier = set(anchors)
    visited = set(frontier)
    relations = set()
    for _ in range(k):
        nxt = set()
        for node in frontier:
            for rel, obj in kb.out_edges(node):
                relations.add(rel)
                if not isinstance(obj, Literal) and obj not in visited:
                    nxt.add(obj)
            for rel, subj in kb.in_edges(node):
                relations.add(rel)
                if subj not in visited:
                    nxt.add(subj)
        visited |= nxt
        frontier = nxt
    classes = set()
    for node in visited:
        classes |= kb.types_of(node)
    if k >= 1 and classes:
        relations.add(TYPE_RELATION)
    return SchemaItems(frozenset(relations), frozenset(classes))


# TSV loading


def parse_object(text: str) -> Value:
    m = _LITERAL_RE.match(text)
    if m:
        lexical = re.sub(r"\\(.)", r"\1", m.group(1))
        return Literal.parse(lexical, m.group(2))
    if text.startswith('"'):
        raise ValueError(f"malformed literal {text!r}")
    return text


def _data_lines(stream: TextIO):
    for lineno, raw in enumerate(stream, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        yield lineno, line


def read_ontology(stream: TextIO) -> list[RelationSignature]:
    signatures = []
    for lineno, line in _data_lines(stream):
        parts = line.split("\t")
        if len(parts) != 3 or not all(p.strip() for p in parts):
            raise KBError("expected relation<TAB>domain<TAB>range", lineno)
        relation, domain, rng = (p.strip() for p in parts)
        if rng.startswith("#"):
            kind = rng[1:]
            if kind not in LITERAL_KINDS:
                raise KBError(f"unknown literal range {rng!r}", lineno)
            signatures.append(RelationSignature(relation, domain, kind, literal_range=True))
        else:
            signatures.append(RelationSignature(relation, domain, rng))
    return signatures


def read_facts(stream: TextIO) -> Iterator[tuple[int, Fact]]:
    for lineno, line in _data_lines(stream):
        parts = line.split("\t")
        if len(parts) != 3 or not parts[0] or not parts[1] or not parts[2]:
            raise KBError("expected subject<TAB>relation<TAB>object", lineno)
        try:
            obj = parse_object(parts[2])
        except ValueError as exc:
            raise KBError(str(exc), lineno) from None
        yield lineno, Fact(parts[0], parts[1], obj)


def load(ontology_source: TextIO, facts_source: TextIO) -> KnowledgeBase:
    """Load a KB from the ontology and facts TSV streams."""
    signatures = read_ontology(ontology_source)
    kb = KnowledgeBase(signatures, [])
    facts = []
    for lineno, f in read_facts(facts_source):
        kb._check(f, lineno)
        facts.append(f)
    return KnowledgeBase(signatures, facts)


def load_paths(ontology_path, facts_path) -> KnowledgeBase:
    with open(ontology_path, encoding="utf-8") as onto, open(facts_path, encoding="utf-8") as facts:
        return load(onto, facts)


def dump_ontology(kb: KnowledgeBase, stream: TextIO):
    for rel in sorted(kb.signatures):
        sig = kb.signatures[rel]
        rng = f"#{sig.range}" if sig.literal_range else sig.range
        stream.write(f"{sig.relation}\t{sig.domain}\t{rng}\n")


def dump_facts(kb: KnowledgeBase, stream: TextIO):
    for f in kb:
        obj = f.object.to_tsv() if isinstance(f.object, Literal) else f.object
        stream.write(f"{f.subject}\t{f.relation}\t{obj}\n")
