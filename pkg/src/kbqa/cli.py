"""Command-line entry point: ``kbqa <subcommand> [flags]``.

Exit status is 0 on success, 1 on bad input (missing flags, unreadable or
malformed files, ill-typed expressions) and 2 on internal errors.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from contextlib import contextmanager
from importlib import resources
from pathlib import Path

from . import genpipe, metrics
from .enumeration import DEFAULT_LIMIT, enumerate_candidates
from .genpipe import SamplerState, SplitError
from .kbstore import KBError, KnowledgeBase, load_paths
from .linker import LexiconError, link, load_lexicon
from .rank import answer_question, load_embeddings
from .sexpr import SExprError, evaluate, parse, to_string
from .sparql import to_sparql

log = logging.getLogger("kbqa")

BUILTIN_KBS = {"F1": ("data/f1_ontology.tsv", "data/f1_facts.tsv")}
BUILTIN_LEXICONS = {"L1": "data/l1_lexicon.tsv"}
BUILTIN_EMBEDDINGS = {"fixture": "data/emb_fixture_50d.txt"}


class InputError(Exception):
    """Bad flags or unusable input; exit status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise InputError(f"{self.prog}: {message}")


@contextmanager
def _builtin(rel: str):
    with resources.as_file(resources.files("kbqa").joinpath(rel)) as path:
        yield path


def _need(args, name: str, flag: str):
    if getattr(args, name, None) is None:
        raise InputError(f"{flag} is required for '{args.command}'")


def load_kb(args) -> KnowledgeBase:
    onto, facts = args.kb_ontology, args.kb_facts
    if args.kb is not None:
        if args.kb in BUILTIN_KBS:
            o, f = BUILTIN_KBS[args.kb]
            with _builtin(o) as op, _builtin(f) as fp:
                return load_paths(op, fp)
        base = Path(args.kb)
        if not base.is_dir():
            raise InputError(f"--kb: {args.kb!r} is neither a built-in KB nor a directory")
        onto, facts = base / "ontology.tsv", base / "facts.tsv"
    if onto is None or facts is None:
        raise InputError(f"'{args.command}' needs --kb or both --kb-ontology and --kb-facts")
    return load_paths(onto, facts)


def load_lex(args):
    _need(args, "lexicon", "--lexicon")
    if args.lexicon in BUILTIN_LEXICONS:
        with _builtin(BUILTIN_LEXICONS[args.lexicon]) as p:
            return load_lexicon(p)
    return load_lexicon(args.lexicon)


def load_emb(args):
    _need(args, "embeddings", "--embeddings")
    if args.embeddings in BUILTIN_EMBEDDINGS:
        with _builtin(BUILTIN_EMBEDDINGS[args.embeddings]) as p:
            return load_embeddings(p)
    return load_embeddings(args.embeddings)


def _fmt_set(values) -> str:
    return "{" + ", ".join(genpipe.format_answers(values)) + "}"


@contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            yield f


# Subcommands


def cmd_load_check(args):
    kb = load_kb(args)
    type_facts = sum(1 for f in kb if f.relation == "type")
    print(f"entities\t{len(kb.entities)}")
    print(f"classes\t{len(kb.classes)}")
    print(f"relations\t{len(kb.relations)}")
    print(f"facts\t{len(kb)}")
    print(f"type_facts\t{type_facts}")


def _ask_one(question, kb, lex, emb, args, out):
    result = answer_question(question, kb, lex, emb, args.limit, args.topk)
    if result.logical_form is None:
        if not result.anchors:
            out.write("no entity linked\n")
        else:
            out.write(f"no candidate for anchors {', '.join(result.anchors)}\n")
        return
    out.write(to_string(result.logical_form) + "\n")
    out.write(_fmt_set(result.denotation) + "\n")


def cmd_ask(args):
    kb, lex, emb = load_kb(args), load_lex(args), load_emb(args)
    if args.q is not None:
        _ask_one(args.q, kb, lex, emb, args, sys.stdout)
        return
    interactive = sys.stdin.isatty()
    while True:
        if interactive:
            sys.stdout.write("? ")
            sys.stdout.flush()
        line = sys.stdin.readline()
        if not line:
            break
        if line.strip():
            _ask_one(line.strip(), kb, lex, emb, args, sys.stdout)


def cmd_link(args):
    _need(args, "q", "--q")
    lex = load_lex(args)
    result = link(args.q, lex, args.topk)
    for m, binding in zip(result.mentions, result.bindings):
        for entity, freq in binding:
            print(f"{m.start}\t{m.end}\t{m.surface}\t{entity}\t{freq}")


def _anchors(args, kb):
    if args.anchors:
        return [a.strip() for a in args.anchors.split(",") if a.strip()]
    if args.q is None:
        raise InputError(f"'{args.command}' needs --anchors or --q")
    lex = load_lex(args)
    return sorted(link(args.q, lex, args.topk).entities())


def cmd_enumerate(args):
    kb = load_kb(args)
    anchors = _anchors(args, kb)
    if not anchors:
        raise InputError("no anchor entities")
    unknown = [a for a in anchors if a not in kb.entities]
    if unknown:
        raise InputError(f"unknown anchor entities: {', '.join(unknown)}")
    cs = enumerate_candidates(kb, anchors, args.limit)
    with _output(args.out) as out:
        for s in cs.strings():
            out.write(s + "\n")
    if cs.truncated:
        log.warning("candidate list truncated at %d", args.limit)


def cmd_rank(args):
    _need(args, "q", "--q")
    kb, lex, emb = load_kb(args), load_lex(args), load_emb(args)
    result = answer_question(args.q, kb, lex, emb, args.limit, args.topk)
    with _output(args.out) as out:
        for sc in result.ranked:
            out.write(f"{sc.score:.6f}\t{sc.text}\n")


def read_predictions(stream) -> dict:
    preds = {}
    for lineno, line in enumerate(stream, start=1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        qid, _, expr = line.partition("\t")
        if not qid:
            raise InputError(f"predictions line {lineno}: missing qid")
        preds[qid] = expr.strip()
    return preds


def evaluate_predictions(kb, gold: list, preds: dict) -> list:
    outcomes = []
    for r in gold:
        gold_expr = parse(r.s_expression, kb)
        gold_answers = set(r.answers)
        text = preds.get(r.qid, "")
        pred_expr, pred_answers = None, set()
        if text:
            try:
                pred_expr = parse(text, kb)
                pred_answers = set(genpipe.format_answers(evaluate(pred_expr, kb)))
            except SExprError as exc:
                log.warning("%s: prediction not executable (%s)", r.qid, exc)
                pred_expr = None
        em = metrics.exact_match(pred_expr, gold_expr)
        outcomes.append(metrics.EvalOutcome(
            r.qid, em, metrics.answer_f1(pred_answers, gold_answers),
            r.level,
            r.template_id or None, r.paraphrase_id or None,
        ))
    return outcomes


def cmd_eval(args):
    _need(args, "pred", "--pred")
    _need(args, "gold", "--gold")
    kb = load_kb(args)
    with open(args.gold, encoding="utf-8") as f:
        gold = genpipe.read_records(f)
    with open(args.pred, encoding="utf-8") as f:
        preds = read_predictions(f)
    outcomes = evaluate_predictions(kb, gold, preds)
    report = metrics.aggregate(outcomes)
    print(report.table())
    if args.out is None:
        return
    lines = report.lines()
    bounds = {}
    for grouping in ("template", "paraphrase"):
        attr = "template_id" if grouping == "template" else "paraphrase_id"
        if outcomes and all(getattr(o, attr) for o in outcomes):
            bounds[grouping] = metrics.robustness_bounds(outcomes, grouping)
            lower, acc, upper = bounds[grouping]
            lines += [f"{grouping}\tlower\t{lower:.2f}", f"{grouping}\taccuracy\t{acc:.2f}",
                      f"{grouping}\tupper\t{upper:.2f}"]
    with open(args.out, "w", encoding="utf-8", newline="\n") as f:
        f.write("split\tmetric\tvalue\n")
        f.write("\n".join(lines) + "\n")
    from . import plotting

    stem = os.path.splitext(args.out)[0]
    figures = [plotting.plot_levels(report, stem + "_levels.png")]
    if bounds:
        figures.append(plotting.plot_bounds(bounds, stem + "_bounds.png"))
    for path in [args.out] + figures:
        print(f"wrote {path}", file=sys.stderr)


def cmd_split(args):
    _need(args, "records", "--records")
    _need(args, "out", "--out")
    kb = load_kb(args)
    with open(args.records, encoding="utf-8") as f:
        records = genpipe.read_records(f)
    split = genpipe.split_dataset(records, args.seed, kb)
    os.makedirs(args.out, exist_ok=True)
    for name, part in zip(split._fields, split):
        with open(os.path.join(args.out, f"{name}.jsonl"), "w", encoding="utf-8", newline="\n") as f:
            genpipe.write_records(part, f)
        levels = {lvl: sum(r.level == lvl for r in part) for lvl in genpipe.LEVELS}
        detail = "\t".join(f"{k}={v}" for k, v in levels.items())
        print(f"{name}\t{len(part)}\t{detail}")


def cmd_generate(args):
    kb = load_kb(args)
    templates = genpipe.generate_templates(kb, args.max_relations, args.max_templates)
    if args.templates:
        with _output(args.out) as out:
            for t in templates:
                out.write(f"{t.id}\t{t}\t{genpipe.canonical_question(t)}\n")
        return
    paraphrases = None
    if args.paraphrases:
        with open(args.paraphrases, encoding="utf-8") as f:
            paraphrases = genpipe.read_paraphrases(f)
        templates = [t for t in templates if t.id in paraphrases]
        if not templates:
            raise InputError("no paraphrase pool matches a generated template id")
    lex = load_lex(args) if args.lexicon else None
    pools = genpipe.build_pools(kb, templates, paraphrases, args.max_groundings)
    state = SamplerState(args.rho_l, args.rho_p, args.seed)
    records = genpipe.sample_records(pools, state, args.n, lex)
    with _output(args.out) as out:
        genpipe.write_records(records, out)


def cmd_sparql(args):
    _need(args, "expr", "--expr")
    kb = load_kb(args) if (args.kb or args.kb_ontology) else None
    e = parse(args.expr, kb)
    print(to_sparql(e))


COMMANDS = {
    "load-check": (cmd_load_check, "load a KB and print its size"),
    "ask": (cmd_ask, "answer a question (reads questions from stdin without --q)"),
    "link": (cmd_link, "detect and link entity mentions"),
    "enumerate": (cmd_enumerate, "list candidate logical forms around anchor entities"),
    "rank": (cmd_rank, "score all candidates for a question"),
    "eval": (cmd_eval, "score predictions against gold records"),
    "split": (cmd_split, "split records into train/dev/test"),
    "generate": (cmd_generate, "generate templates and sample question records"),
    "sparql": (cmd_sparql, "translate an S-expression to SPARQL"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--kb", help="built-in KB name (F1) or a directory with ontology.tsv and facts.tsv")
    common.add_argument("--kb-ontology", help="ontology TSV: relation, domain, range")
    common.add_argument("--kb-facts", help="facts TSV: subject, relation, object")
    common.add_argument("--lexicon", "--lex", help="surface-form lexicon TSV or built-in name (L1)")
    common.add_argument("--embeddings", "--emb", help="word vectors file or built-in name (fixture)")
    common.add_argument("--limit", type=int, default=DEFAULT_LIMIT, help="candidate limit (default %(default)s)")
    common.add_argument("--topk", type=int, default=1, help="entities kept per mention (default %(default)s)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output path (stdout when omitted)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="kbqa", description="Question answering over small typed knowledge bases.")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    subs = {}
    for name, (_, help_text) in COMMANDS.items():
        subs[name] = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
    for name in ("ask", "link", "enumerate", "rank"):
        subs[name].add_argument("--q", help="question text")
    subs["enumerate"].add_argument("--anchors", help="comma-separated anchor entity ids")
    subs["eval"].add_argument("--pred", help="predictions: qid<TAB>s-expression per line")
    subs["eval"].add_argument("--gold", help="gold records, one JSON object per line")
    subs["split"].add_argument("--records", help="records, one JSON object per line")
    g = subs["generate"]
    g.add_argument("--max-relations", type=int, default=2)
    g.add_argument("--max-templates", type=int, default=None)
    g.add_argument("--max-groundings", type=int, default=20)
    g.add_argument("--n", type=int, default=100, help="records to sample")
    g.add_argument("--rho-l", type=float, default=2.0)
    g.add_argument("--rho-p", type=float, default=10.0)
    g.add_argument("--paraphrases", help="template_id<TAB>paraphrase pool file")
    g.add_argument("--templates", action="store_true", help="list templates instead of sampling")
    subs["sparql"].add_argument("--expr", help="S-expression")
    parser.subcommands = subs
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = None
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s: %(message)s")
        if args.limit <= 0:
            raise InputError("--limit must be positive")
        if args.topk <= 0:
            raise InputError("--topk must be positive")
        COMMANDS[args.command][0](args)
    except InputError as exc:
        if args is not None:
            parser.subcommands[args.command].print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except BrokenPipeError:
        return 0
    except (KBError, SExprError, LexiconError, SplitError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
