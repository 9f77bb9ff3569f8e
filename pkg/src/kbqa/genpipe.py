"""Dataset generation: ontology templates, compatible grounding, controlled
sampling, generalization levels and train/dev/test splits."""
from __future__ import annotations

import hashlib
import json
import logging
import math
import random
import re
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field, replace
from itertools import product
from typing import Iterable, NamedTuple, Optional, TextIO

from .graphquery import canonical_string
from .kbstore import ORDERABLE_KINDS, KnowledgeBase, Literal, domain_of, value_sort_key
from .linker import SurfaceLexicon
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
    Placeholder,
    RelationRef,
    Rev,
    SExpr,
    SExprError,
    Superlative,
    evaluate,
    function_of,
    parse,
    placeholders,
    relation_count,
    schema_items,
    to_string,
    typecheck,
)

log = logging.getLogger(__name__)

LEVELS = ("iid", "compositional", "zero_shot")
MAX_TEMPLATE_RELATIONS = 4


class SplitError(ValueError):
    pass


# Templates


@dataclass(frozen=True)
class Template:
    """A logical form whose entities and literals are typed placeholders.

    Equality goes through ``key``, the isomorphism-invariant printed form.
    """

    key: str
    skeleton: SExpr = field(compare=False)

    @classmethod
    def from_expr(cls, skeleton: SExpr) -> "Template":
        return cls(canonical_string(skeleton), skeleton)

    @property
    def id(self) -> str:
        return "t" + hashlib.sha1(self.key.encode("utf-8")).hexdigest()[:10]

    @property
    def relation_count(self) -> int:
        return relation_count(self.skeleton)

    @property
    def function(self) -> str:
        fn = function_of(self.skeleton)
        return fn.lower() if fn else "none"

    @property
    def placeholders(self) -> list[Placeholder]:
        return placeholders(self.skeleton)

    def __str__(self):
        return to_string(self.skeleton)


def _step_expr(relation: str, direction: str) -> SExpr:
    rel = RelationRef(relation)
    return rel if direction == "out" else Rev(rel)


def _chain(steps, end: SExpr) -> SExpr:
    out = end
    for rel, direction in reversed(steps):
        out = JoinUnary(_step_expr(rel, direction), out)
    return out


def _path_relation(steps) -> SExpr:
    out = _step_expr(*steps[-1])
    for rel, direction in reversed(steps[:-1]):
        out = JoinBinary(_step_expr(rel, direction), out)
    return out


def _chains_from(kb: KnowledgeBase, start: str, max_relations: int):
    """Relation paths from ``start``: yields ``(steps, end_type, end_is_literal)``."""
    by_domain = defaultdict(list)
    by_range = defaultdict(list)
    for sig in kb.signatures.values():
        by_domain[sig.domain].append(sig)
        if not sig.literal_range:
            by_range[sig.range].append(sig)
    start_is_literal = start not in kb.classes
    frontier = [((), start, start_is_literal)]
    for _ in range(max_relations):
        nxt = []
        for steps, typ, is_lit in frontier:
            moves = []
            if is_lit:
                # literal-valued answers can only be reached backwards
                if not steps:
                    moves = [(s.relation, "in", s.domain, False)
                             for s in kb.signatures.values() if s.literal_range and s.range == typ]
            else:
                moves = [(s.relation, "out", s.range, s.literal_range) for s in by_domain[typ]]
                moves += [(s.relation, "in", s.domain, False) for s in by_range[typ]]
            for rel, direction, end, end_lit in sorted(moves):
                path = steps + ((rel, direction),)
                yield path, end, end_lit
                if not end_lit:
                    nxt.append((path, end, end_lit))
        frontier = nxt


def generate_templates(kb: KnowledgeBase, max_relations: int = 2,
                       limit: Optional[int] = None) -> list[Template]:
    """Graph-shaped templates composed from the ontology signatures.

    Each template answers with a class (or a literal kind), follows a relation
    chain of at most ``max_relations`` hops to a typed placeholder and carries
    at most one function: COUNT at the root, a comparative on a terminal
    literal relation, or a superlative over a literal-valued chain.
    """
    if not 1 <= max_relations <= MAX_TEMPLATE_RELATIONS:
        raise ValueError(f"max_relations must be in 1..{MAX_TEMPLATE_RELATIONS}")
    if limit is not None and limit <= 0:
        raise ValueError("limit must be positive")
    literal_roots = sorted({s.range for s in kb.signatures.values() if s.literal_range})
    found: dict = {}

    def add(expr: SExpr):
        try:
            typecheck(expr, kb)
        except SExprError:
            return
        t = Template.from_expr(expr)
        found.setdefault(t.key, t)

    for root in sorted(kb.classes) + literal_roots:
        root_is_class = root in kb.classes
        for steps, end, end_lit in _chains_from(kb, root, max_relations):
            hole = Placeholder("v" if end_lit else "e", end)
            arm = _chain(steps, hole)
            base = And(ClassRef(root), arm) if root_is_class else arm
            add(base)
            add(Count(base))
            if end_lit and end in ORDERABLE_KINDS and steps[-1][1] == "out":
                for op in COMPARATIVES:
                    cmp_arm = _chain(steps[:-1], Comparison(op, RelationRef(steps[-1][0]), hole))
                    add(And(ClassRef(root), cmp_arm) if root_is_class else cmp_arm)
                if root_is_class:
                    for op in SUPERLATIVES:
                        add(Superlative(op, ClassRef(root), _path_relation(steps)))
    ordered = sorted(found.values(), key=lambda t: (t.relation_count, t.key))
    return ordered[:limit] if limit is not None else ordered


# Grounding


@dataclass(frozen=True)
class Grounding:
    """Values for a template's placeholders, in pre-order."""

    values: tuple = ()

    def assignment(self, template: Template) -> list[tuple[Placeholder, object]]:
        return list(zip(template.placeholders, self.values))


def substitute(skeleton: SExpr, values: Iterable) -> SExpr:
    """Replace placeholders (pre-order, left to right) with entity ids or literals."""
    it = iter(values)

    def fill(hole: Placeholder):
        value = next(it)
        if isinstance(value, Literal):
            return LiteralRef(value)
        return EntityRef(value)

    def go(e: SExpr) -> SExpr:
        if isinstance(e, Placeholder):
            return fill(e)
        if isinstance(e, And):
            return And(go(e.left), go(e.right))
        if isinstance(e, Count):
            return Count(go(e.arg))
        if isinstance(e, Rev):
            return Rev(go(e.rel))
        if isinstance(e, JoinUnary):
            return JoinUnary(go(e.rel), go(e.arg))
        if isinstance(e, JoinBinary):
            return JoinBinary(go(e.left), go(e.right))
        if isinstance(e, Superlative):
            return Superlative(e.op, go(e.arg), go(e.rel))
        if isinstance(e, Comparison):
            value = e.value
            if isinstance(value, Placeholder):
                filled = fill(value)
                if not isinstance(filled, LiteralRef):
                    raise SExprError("comparative placeholder needs a literal value")
                value = filled.value
            return Comparison(e.op, go(e.rel), value)
        return e

    out = go(skeleton)
    if next(it, None) is not None:
        raise ValueError("more values than placeholders")
    return out


def _placeholder_domain(hole: Placeholder, kb: KnowledgeBase) -> list:
    if hole.kind == "e":
        members = kb.entities if hole.type == "any" else kb.class_members(hole.type)
        return sorted(members)
    return kb.literals(hole.type)


def ground_template(t: Template, kb: KnowledgeBase, max_groundings: int = 100) -> list[Grounding]:
    """Compatible groundings: placeholder values whose logical form has a
    non-empty denotation, in deterministic order."""
    if max_groundings <= 0:
        raise ValueError("max_groundings must be positive")
    holes = t.placeholders
    out = []
    for values in product(*(_placeholder_domain(h, kb) for h in holes)):
        try:
            den = evaluate(substitute(t.skeleton, values), kb, check=False)
        except SExprError:
            continue
        if den and den != frozenset((0,)):
            out.append(Grounding(tuple(values)))
            if len(out) >= max_groundings:
                break
    return out


def ground(t: Template, g: Grounding) -> SExpr:
    return substitute(t.skeleton, g.values)


# Abstraction and levels


def most_specific_class(entity: str, kb: KnowledgeBase) -> Optional[str]:
    types = kb.types_of(entity)
    if not types:
        return None
    return min(types, key=lambda c: (len(kb.class_members(c)), c))


def abstract_template(e: SExpr, kb: KnowledgeBase) -> Template:
    """Replace entities and literals by typed placeholders."""

    def go(node: SExpr) -> SExpr:
        if isinstance(node, EntityRef):
            cls = most_specific_class(node.id, kb)
            if cls is None:
                log.warning("entity %s has no type fact; using <e:any>", node.id)
                cls = "any"
            return Placeholder("e", cls)
        if isinstance(node, LiteralRef):
            return Placeholder("v", node.value.kind)
        if isinstance(node, And):
            return And(go(node.left), go(node.right))
        if isinstance(node, Count):
            return Count(go(node.arg))
        if isinstance(node, Rev):
            return Rev(go(node.rel))
        if isinstance(node, JoinUnary):
            return JoinUnary(go(node.rel), go(node.arg))
        if isinstance(node, JoinBinary):
            return JoinBinary(go(node.left), go(node.right))
        if isinstance(node, Superlative):
            return Superlative(node.op, go(node.arg), go(node.rel))
        if isinstance(node, Comparison):
            value = node.value
            if isinstance(value, Literal):
                value = Placeholder("v", value.kind)
            return Comparison(node.op, go(node.rel), value)
        return node

    return Template.from_expr(go(e))


def _template_keys(templates: Iterable) -> set:
    return {t.key if isinstance(t, Template) else t for t in templates}


def classify_level(record: "DatasetRecord", train_schema: Iterable[str], train_templates: Iterable,
                   kb: KnowledgeBase) -> str:
    """``zero_shot`` if any relation, class or function is unseen in training,
    else ``compositional`` if the template is unseen, else ``iid``."""
    e = parse(record.s_expression, kb)
    items = schema_items(e).all()
    if not items <= set(train_schema):
        return "zero_shot"
    if abstract_template(e, kb).key not in _template_keys(train_templates):
        return "compositional"
    return "iid"


# Records


@dataclass(frozen=True)
class DatasetRecord:
    qid: str
    question: str
    s_expression: str
    answers: tuple = ()
    template_id: str = ""
    paraphrase_id: str = ""
    domain: str = ""
    level: str = "unset"

    def to_json(self) -> str:
        d = asdict(self)
        d["answers"] = list(self.answers)
        return json.dumps(d, ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "DatasetRecord":
        d = json.loads(line)
        d["answers"] = tuple(d.get("answers", ()))
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


def read_records(stream: TextIO) -> list[DatasetRecord]:
    out = []
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            out.append(DatasetRecord.from_json(line))
        except (ValueError, TypeError) as exc:
            raise ValueError(f"line {lineno}: bad record ({exc})") from None
    return out


def write_records(records: Iterable[DatasetRecord], stream: TextIO):
    for r in records:
        stream.write(r.to_json() + "\n")


def format_value(v) -> str:
    if isinstance(v, Literal):
        return to_string(LiteralRef(v))
    return str(v)


def format_answers(denotation) -> tuple:
    return tuple(format_value(v) for v in sorted(denotation, key=value_sort_key))


# Controlled sampling


@dataclass(frozen=True)
class Paraphrase:
    id: str
    text: str


@dataclass(frozen=True)
class GroundedForm:
    values: tuple
    expr: SExpr
    answers: tuple


@dataclass
class Pool:
    template_id: str
    forms: list
    paraphrases: list
    domain: str = ""


@dataclass
class SamplerState:
    """Per-item sampling weights; a drawn item's weight is divided by its rho.

    Weights are kept as logarithms so long runs do not underflow to zero.
    """

    rho_l: float = 2.0
    rho_p: float = 10.0
    seed: int = 0
    log_weights: dict = field(default_factory=dict)
    drawn: int = 0

    def __post_init__(self):
        if self.rho_l <= 0 or self.rho_p <= 0:
            raise ValueError("decay divisors must be positive")
        self.rng = random.Random(self.seed)

    def weight(self, key) -> float:
        return math.exp(self.log_weights.get(key, 0.0))

    def probabilities(self, keys: list) -> list[float]:
        logs = [self.log_weights.get(k, 0.0) for k in keys]
        top = max(logs)
        w = [math.exp(x - top) for x in logs]
        total = sum(w)
        return [x / total for x in w]

    def draw(self, keys: list, rho: float) -> int:
        probs = self.probabilities(keys)
        r = self.rng.random()
        acc = 0.0
        pick = len(keys) - 1
        for i, x in enumerate(probs):
            acc += x
            if r < acc:
                pick = i
                break
        key = keys[pick]
        self.log_weights[key] = self.log_weights.get(key, 0.0) - math.log(rho)
        return pick


_SLOT_RE = re.compile(r"\[[^\[\]]*\]")


def fill_slots(text: str, surfaces: list[str]) -> str:
    """Replace bracketed slots, in order, with surface forms."""
    it = iter(surfaces)

    def sub(m):
        try:
            return next(it)
        except StopIteration:
            raise ValueError(f"paraphrase {text!r} has more slots than grounded values") from None

    return _SLOT_RE.sub(sub, text)


def sample_records(pools: list[Pool], state: SamplerState, n: int,
                   lexicon: Optional[SurfaceLexicon] = None, prefix: str = "q") -> list[DatasetRecord]:
    """Draw ``n`` question/logical-form pairs.

    Each draw picks a template uniformly, then a grounded form and a
    paraphrase from that template's pools with probability proportional to
    their weights, dividing the chosen weights by ``rho_l`` and ``rho_p``.
    With a lexicon, entity slots get a randomly chosen mined surface form.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    for p in pools:
        if not p.forms or not p.paraphrases:
            raise ValueError(f"empty pool for template {p.template_id}")
    if n and not pools:
        raise ValueError("no pools to sample from")
    rng = state.rng
    out = []
    for _ in range(n):
        pool = pools[rng.randrange(len(pools))]
        fi = state.draw([("l", pool.template_id, i) for i in range(len(pool.forms))], state.rho_l)
        pi = state.draw([("p", pool.template_id, i) for i in range(len(pool.paraphrases))], state.rho_p)
        form = pool.forms[fi]
        para = pool.paraphrases[pi]
        surfaces = []
        for v in form.values:
            if isinstance(v, Literal):
                surfaces.append(v.text)
                continue
            choices = lexicon.surfaces_of(v) if lexicon is not None else []
            surfaces.append(rng.choice(choices)[0] if choices else v)
        out.append(DatasetRecord(
            qid=f"{prefix}{state.drawn:06d}",
            question=fill_slots(para.text, surfaces),
            s_expression=to_string(form.expr),
            answers=form.answers,
            template_id=pool.template_id,
            paraphrase_id=para.id,
            domain=pool.domain,
        ))
        state.drawn += 1
    return out


def read_paraphrases(stream: TextIO) -> dict:
    """``template_id<TAB>text`` rows -> ``{template_id: [Paraphrase, ...]}``."""
    pools = defaultdict(list)
    for lineno, line in enumerate(stream, start=1):
        line = line.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue
        tid, sep, text = line.partition("\t")
        if not sep or not tid or not text.strip():
            raise ValueError(f"line {lineno}: expected template_id<TAB>paraphrase")
        pools[tid].append(Paraphrase(f"{tid}-p{len(pools[tid])}", text.strip()))
    return dict(pools)


def _words(item: str) -> str:
    return " ".join(w for w in re.split(r"[._]", item.rsplit(".", 1)[-1]) if w)


def canonical_question(t: Template) -> str:
    """A mechanical canonical question with bracketed slots, used when no
    human paraphrases are supplied."""

    def rel(e: SExpr) -> str:
        if isinstance(e, RelationRef):
            return _words(e.id)
        if isinstance(e, Rev):
            return rel(e.rel) + " of"
        if isinstance(e, JoinBinary):
            return f"{rel(e.left)} {rel(e.right)}"
        return "?"

    def say(e: SExpr) -> str:
        if isinstance(e, ClassRef):
            return _words(e.id)
        if isinstance(e, Placeholder):
            return f"[{e.type}]"
        if isinstance(e, And):
            return f"{say(e.left)} {say(e.right)}"
        if isinstance(e, JoinUnary):
            return f"with {rel(e.rel)} {say(e.arg)}"
        if isinstance(e, Comparison):
            words = {"LT": "less than", "LE": "at most", "GT": "more than", "GE": "at least"}[e.op]
            return f"with {rel(e.rel)} {words} [{e.value.type}]"
        if isinstance(e, Superlative):
            return f"{say(e.arg)} with the {'largest' if e.op == 'ARGMAX' else 'smallest'} {rel(e.rel)}"
        if isinstance(e, Count):
            return say(e.arg)
        return to_string(e)

    if isinstance(t.skeleton, Count):
        return f"how many {say(t.skeleton)}?"
    return f"what {say(t.skeleton)}?"


def template_domain(t: Template) -> str:
    items = schema_items(t.skeleton)
    e = t.skeleton.arg if isinstance(t.skeleton, Count) else t.skeleton
    while isinstance(e, (And, Superlative)):
        e = e.left if isinstance(e, And) else e.arg
    if isinstance(e, ClassRef):
        return domain_of(e.id)
    if items.relations:
        return domain_of(sorted(items.relations)[0])
    return ""


def build_pools(kb: KnowledgeBase, templates: list[Template], paraphrases: Optional[dict] = None,
                max_groundings: int = 20) -> list[Pool]:
    """Ground every template and attach its paraphrase pool.

    ``paraphrases`` maps template ids to lists of :class:`Paraphrase`; templates
    without one get a single mechanical canonical question.
    """
    pools = []
    for t in templates:
        groundings = ground_template(t, kb, max_groundings)
        if not groundings:
            continue
        forms = []
        for g in groundings:
            expr = ground(t, g)
            forms.append(GroundedForm(g.values, expr, format_answers(evaluate(expr, kb))))
        paras = (paraphrases or {}).get(t.id) or [Paraphrase(f"{t.id}-p0", canonical_question(t))]
        pools.append(Pool(t.id, forms, list(paras), template_domain(t)))
    return pools


# Splitting


class Split(NamedTuple):
    train: list
    dev: list
    test: list


def _record_items(r: DatasetRecord, kb: KnowledgeBase):
    e = parse(r.s_expression, kb)
    return schema_items(e).all(), abstract_template(e, kb).key


def split_dataset(records: list[DatasetRecord], seed: int, kb: KnowledgeBase,
                  train_frac: float = 0.7, dev_frac: float = 0.1) -> Split:
    """Train/dev/test split with zero-shot, compositional and i.i.d. buckets.

    Half of dev and test come from whole held-out domains (disjoint between
    dev and test), a quarter from held-out templates whose schema items all
    stay in training, and a quarter sampled from training-distribution
    templates. Records that would leak held-out schema into training, or
    straddle the dev and test domains, are dropped.
    """
    rng = random.Random(seed)
    n = len(records)
    test_frac = 1.0 - train_frac - dev_frac
    if test_frac <= 0 or dev_frac <= 0:
        raise SplitError("dev and test fractions must be positive")
    items, keys = [], []
    for r in records:
        it, key = _record_items(r, kb)
        items.append(it)
        keys.append(key)
    item_domains = [{domain_of(i) for i in it if i not in _FUNCTION_SET} for it in items]

    domains = sorted({r.domain for r in records})
    if len(domains) < 3:
        raise SplitError(
            f"need at least 3 domains to hold out dev and test domains, found {len(domains)}; "
            "achievable: train/test split without zero-shot questions"
        )
    rng.shuffle(domains)
    per_domain = Counter(r.domain for r in records)

    def take(pool: list, target: float, keep: int) -> list:
        # first domain (in shuffled order) that still fits; the smallest if none fits yet
        chosen, total = [], 0
        while len(pool) > keep:
            need = target - total
            if chosen and need <= 0:
                break
            fits = [d for d in pool if per_domain[d] <= need]
            if fits:
                d = fits[0]
            elif not chosen:
                d = min(pool, key=lambda d: per_domain[d])
            else:
                break
            pool.remove(d)
            chosen.append(d)
            total += per_domain[d]
        return chosen

    remaining = list(domains)
    test_held = set(take(remaining, 0.5 * test_frac * n, keep=2))
    dev_held = set(take(remaining, 0.5 * dev_frac * n, keep=1))
    held = test_held | dev_held

    buckets = {("dev", lvl): [] for lvl in LEVELS} | {("test", lvl): [] for lvl in LEVELS}
    pool_idx = []
    dropped = 0
    for i, r in enumerate(records):
        touched = item_domains[i] | {r.domain}
        if r.domain in test_held and not touched & dev_held and item_domains[i] & test_held:
            buckets["test", "zero_shot"].append(i)
        elif r.domain in dev_held and not touched & test_held and item_domains[i] & dev_held:
            buckets["dev", "zero_shot"].append(i)
        elif touched & held:
            dropped += 1
        else:
            pool_idx.append(i)

    item_count = Counter(it for i in pool_idx for it in items[i])
    by_key = defaultdict(list)
    for i in pool_idx:
        by_key[keys[i]].append(i)

    # compositional: whole templates leave training, their schema must not
    targets = {"test": 0.25 * test_frac * n, "dev": 0.25 * dev_frac * n}
    template_order = sorted(by_key)
    rng.shuffle(template_order)
    held_templates = set()
    for key in template_order:
        split = next((s for s in ("test", "dev") if len(buckets[s, "compositional"]) < targets[s]), None)
        if split is None:
            break
        members = by_key[key]
        if len(held_templates) + 1 >= len(by_key):
            break
        need = Counter(it for i in members for it in items[i])
        if any(item_count[it] <= c for it, c in need.items()):
            continue
        item_count.subtract(need)
        buckets[split, "compositional"].extend(members)
        held_templates.add(key)

    train_idx = [i for i in pool_idx if keys[i] not in held_templates]
    key_count = Counter(keys[i] for i in train_idx)
    order = list(train_idx)
    rng.shuffle(order)
    iid = set()
    for i in order:
        split = next((s for s in ("test", "dev") if len(buckets[s, "iid"]) < targets[s]), None)
        if split is None:
            break
        if key_count[keys[i]] <= 1 or any(item_count[it] <= 1 for it in items[i]):
            continue
        key_count[keys[i]] -= 1
        item_count.subtract(items[i])
        buckets[split, "iid"].append(i)
        iid.add(i)

    train = [records[i] for i in train_idx if i not in iid]
    dev, test = [], []
    for (split, lvl), idx in buckets.items():
        target = dev if split == "dev" else test
        target.extend(replace(records[i], level=lvl) for i in sorted(idx))
    dev.sort(key=lambda r: r.qid)
    test.sort(key=lambda r: r.qid)
    if dropped:
        log.info("split dropped %d records touching held-out domains", dropped)
    if not buckets["test", "compositional"] or not buckets["test", "iid"]:
        log.warning(
            "split could not fill every bucket: test has %d compositional and %d iid records",
            len(buckets["test", "compositional"]), len(buckets["test", "iid"]),
        )
    return Split(train, dev, test)


_FUNCTION_SET = frozenset(("AND", "COUNT", "R", "JOIN", "ARGMAX", "ARGMIN", "LT", "LE", "GT", "GE"))


def train_vocabulary(train: Iterable[DatasetRecord], kb: KnowledgeBase) -> tuple[set, set]:
    """Schema items and template keys seen in training records."""
    schema, templates = set(), set()
    for r in train:
        it, key = _record_items(r, kb)
        schema |= it
        templates.add(key)
    return schema, templates
