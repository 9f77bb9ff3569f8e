import random

import pytest
from hypothesis import given, settings, strategies as st

from oracle import kb_facts, naive_eval
from kbqa.kbstore import Literal
from kbqa.sexpr import (
    And,
    ClassRef,
    Comparison,
    Count,
    EntityRef,
    JoinUnary,
    RelationRef,
    Rev,
    SExprSyntaxError,
    SExprTypeError,
    SemType,
    children,
    evaluate,
    parse,
    schema_items,
    to_string,
    typecheck,
    walk,
)
from kbqa.synthetic import random_kb, random_sexpr

FIG2 = "(AND Theater (AND (GE capacity 10000) (JOIN staged_here (JOIN producer m.boyett))))"


def depth(e):
    """Nesting depth of function nodes; atoms have depth 0."""
    kids = [c for c in children(e) if not isinstance(c, Literal)]
    if not kids:
        return 0
    return 1 + max(depth(c) for c in kids)


def test_parse_count():
    e = parse("(COUNT (JOIN producer m.boyett))")
    assert e == Count(JoinUnary(RelationRef("producer"), EntityRef("m.boyett")))


def test_parse_fig2_shape():
    e = parse(FIG2)
    heads = [type(n).__name__ for n in walk(e) if not isinstance(n, (ClassRef, EntityRef, RelationRef))]
    assert heads == ["And", "And", "Comparison", "JoinUnary", "JoinUnary"]
    assert depth(e) == 4


def test_parse_errors():
    with pytest.raises(SExprSyntaxError) as err:
        parse("(JOIN producer")
    assert err.value.offset == 0
    with pytest.raises(SExprSyntaxError) as err:
        parse("(FOO a b)")
    assert err.value.offset == 1
    with pytest.raises(SExprSyntaxError):
        parse("(COUNT a b)")
    with pytest.raises(SExprSyntaxError):
        parse("(AND a)")
    with pytest.raises(SExprSyntaxError):
        parse("(JOIN a b))")


def test_head_case_insensitive():
    assert parse("(count (join producer m.boyett))") == parse("(COUNT (JOIN producer m.boyett))")


def test_print():
    assert to_string(Count(JoinUnary(RelationRef("producer"), EntityRef("m.boyett")))) == (
        "(COUNT (JOIN producer m.boyett))"
    )
    assert to_string(ClassRef("Theater")) == "Theater"
    assert to_string(Comparison("GE", RelationRef("capacity"), Literal("int", 10000))) == "(GE capacity 10000)"


def test_literal_printing_round_trip():
    for text in ['(JOIN capacity 10500)', '(JOIN capacity 2.5)', '(JOIN label "red"^^string)',
                 '(LT founded "1995-01-01T00:00:00"^^datetime)']:
        assert to_string(parse(text)) == text
    assert parse('(JOIN label "red")') == parse('(JOIN label "red"^^string)')


def test_typecheck_examples(f1):
    assert typecheck(parse("(GE capacity 10000)"), f1) == SemType("entities")
    assert typecheck(parse("(COUNT Theater)"), f1).kind == "integer"
    with pytest.raises(SExprTypeError) as err:
        typecheck(parse("(ARGMAX Theater producer)"), f1)
    assert "orderable" in str(err.value)


def test_typecheck_errors(f1):
    with pytest.raises(SExprTypeError):
        typecheck(parse("(JOIN producer 10)"), f1)
    with pytest.raises(SExprTypeError):
        typecheck(parse("(GE capacity \"big\")"), f1)
    with pytest.raises(SExprTypeError):
        typecheck(parse("(AND Nowhere Theater)"), f1)
    with pytest.raises(SExprTypeError):
        typecheck(parse("(JOIN Theater m.boyett)", f1), f1)


@pytest.mark.parametrize("text,expected", [
    (FIG2, {"m.lyric"}),
    ("(COUNT (JOIN producer m.boyett))", {2}),
    ("(AND Person Theater)", set()),
    ("(ARGMAX Theater capacity)", {"m.lyric"}),
    ("(ARGMIN Theater capacity)", {"m.gershwin"}),
    ("(JOIN (R producer) m.prodA)", {"m.boyett"}),
    ("(JOIN (R capacity) m.lyric)", {Literal("int", 10500)}),
    ("(LT capacity 1900)", set()),
    ("(LE capacity 1900)", {"m.gershwin"}),
])
def test_evaluate_examples(f1, text, expected):
    assert evaluate(parse(text, f1), f1) == expected
    assert naive_eval(parse(text, f1), kb_facts(f1)) == expected


def test_join_binary_composition(f1):
    e = parse("(JOIN (JOIN staged_here producer) m.boyett)", f1)
    assert evaluate(e, f1) == {"m.lyric", "m.gershwin"}


def test_superlative_ties_return_all():
    kb = random_kb(1)
    rel = next(r for r in sorted(kb.relations) if r.endswith(".size"))
    dom = kb.signature(rel).domain
    pairs = [(x, v.value) for x, v in kb.extension(rel) if x in kb.class_members(dom)]
    best = max(v for _, v in pairs)
    expected = {x for x, v in pairs if v == best}
    assert evaluate(parse(f"(ARGMAX {dom} {rel})", kb), kb) == expected


def test_float_int_comparison():
    kb = random_kb(5)
    rel = next(r for r in sorted(kb.relations) if r.endswith(".size"))
    a = evaluate(parse(f"(GE {rel} 4)", kb), kb)
    b = evaluate(parse(f"(GE {rel} 4.0)", kb), kb)
    assert a == b


def test_schema_items_of_fig2():
    items = schema_items(parse(FIG2))
    assert items.relations == {"capacity", "staged_here", "producer"}
    assert items.classes == {"Theater"}
    assert items.functions == {"AND", "GE", "JOIN"}


def _random_forms(seed, n):
    kb = random_kb(seed, max_entities=120)
    rng = random.Random(seed)
    return kb, [random_sexpr(kb, rng) for _ in range(n)]


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 100_000))
def test_oracle_equivalence_sample(seed):
    kb, forms = _random_forms(seed, 15)
    facts = kb_facts(kb)
    for e in forms:
        assert depth(e) <= 5
        assert evaluate(e, kb) == naive_eval(e, facts), to_string(e)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_parse_print_identity(seed):
    kb, forms = _random_forms(seed, 30)
    for e in forms:
        assert parse(to_string(e), kb) == e
        assert parse(to_string(e)) == e


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_algebraic_laws(seed):
    kb, forms = _random_forms(seed, 10)
    units = [e for e in forms if typecheck(e, kb).kind == "entities"]
    for a, b in zip(units, units[1:]):
        if typecheck(a, kb).range != typecheck(b, kb).range:
            continue
        assert evaluate(And(a, b), kb) == evaluate(And(b, a), kb)
    for a in units:
        assert evaluate(And(a, a), kb) == evaluate(a, kb)
        (n,) = evaluate(Count(a), kb)
        assert n == len(evaluate(a, kb))
        if typecheck(a, kb).range == "entity":
            assert n <= len(kb.entities)
    for rel in sorted(kb.relations):
        b = RelationRef(rel)
        assert evaluate(Rev(Rev(b)), kb) == evaluate(b, kb)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000), st.integers(-1, 13))
def test_comparative_partition(seed, bound):
    kb = random_kb(seed, max_entities=80)
    for rel in sorted(r for r in kb.relations if r.endswith(".size")):
        b = RelationRef(rel)
        n = Literal("int", bound)
        lt = evaluate(Comparison("LT", b, n), kb)
        ge = evaluate(Comparison("GE", b, n), kb)
        assert lt | ge == {x for x, _ in kb.extension(rel)}
        single = {x for x in lt | ge if len(kb.objects(x, rel)) == 1}
        assert not (lt & ge & single)
