"""Exact match, answer F1, per-level aggregation and robustness bounds."""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Optional

from .graphquery import from_sexpr, is_isomorphic
from .sexpr import SExpr, SExprError

log = logging.getLogger(__name__)

LEVELS = ("iid", "compositional", "zero_shot")
LEVEL_TITLES = {"overall": "Overall", "iid": "I.I.D.", "compositional": "Compositional", "zero_shot": "Zero-shot"}


@dataclass(frozen=True)
class EvalOutcome:
    qid: str
    em: bool
    f1: float
    level: str = "iid"
    template_id: Optional[str] = None
    paraphrase_id: Optional[str] = None


def exact_match(pred: Optional[SExpr], gold: SExpr) -> bool:
    """Graph-isomorphism equivalence of two logical forms."""
    if pred is None:
        return False
    try:
        return is_isomorphic(from_sexpr(pred), from_sexpr(gold))
    except SExprError as exc:
        log.warning("exact match: conversion failed (%s)", exc)
        return False


def answer_f1(pred: Iterable, gold: Iterable) -> float:
    pred, gold = set(pred), set(gold)
    if not pred and not gold:
        return 1.0
    if not pred or not gold:
        return 0.0
    hits = len(pred & gold)
    if hits == 0:
        return 0.0
    precision = hits / len(pred)
    recall = hits / len(gold)
    return 2 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class SplitScore:
    split: str
    count: int
    em: float  # percentage
    f1: float  # fraction


@dataclass(frozen=True)
class Report:
    rows: tuple

    def row(self, split: str) -> SplitScore:
        return next(r for r in self.rows if r.split == split)

    def lines(self) -> list[str]:
        """Machine-readable ``split<TAB>metric<TAB>value`` lines."""
        out = []
        for r in self.rows:
            out.append(f"{r.split}\tcount\t{r.count}")
            out.append(f"{r.split}\tEM\t{r.em:.2f}")
            out.append(f"{r.split}\tF1\t{r.f1:.4f}")
        return out

    def table(self) -> str:
        header = f"{'Split':<14}{'N':>7}{'EM':>9}{'F1':>9}"
        body = [
            f"{LEVEL_TITLES[r.split]:<14}{r.count:>7}{r.em:>9.2f}{r.f1 * 100:>9.2f}"
            for r in self.rows
        ]
        return "\n".join([header, "-" * len(header), *body])


def aggregate(outcomes: Iterable[EvalOutcome]) -> Report:
    """Mean EM (percent) and macro F1 overall and per generalization level."""
    groups = defaultdict(list)
    outcomes = list(outcomes)
    for o in outcomes:
        groups[o.level].append(o)
    rows = []
    for split, items in [("overall", outcomes)] + [(lvl, groups.get(lvl, [])) for lvl in LEVELS]:
        n = len(items)
        em = 100.0 * sum(o.em for o in items) / n if n else 0.0
        f1 = sum(o.f1 for o in items) / n if n else 0.0
        rows.append(SplitScore(split, n, em, f1))
    return Report(tuple(rows))


def robustness_bounds(outcomes: Iterable[EvalOutcome], grouping: str = "template") -> tuple[float, float, float]:
    """``(lower, accuracy, upper)`` in percent for template or paraphrase groups.

    Upper treats a whole group as correct when any member is; lower treats it
    as wrong when any member is.
    """
    if grouping not in ("template", "paraphrase"):
        raise ValueError(f"unknown grouping {grouping!r}")
    attr = "template_id" if grouping == "template" else "paraphrase_id"
    outcomes = list(outcomes)
    if not outcomes:
        return 0.0, 0.0, 0.0
    groups = defaultdict(list)
    for o in outcomes:
        key = getattr(o, attr)
        if key is None:
            raise ValueError(f"outcome {o.qid} has no {attr}")
        groups[key].append(bool(o.em))
    n = len(outcomes)
    upper = sum(len(g) for g in groups.values() if any(g))
    lower = sum(len(g) for g in groups.values() if all(g))
    correct = sum(o.em for o in outcomes)
    return 100.0 * lower / n, 100.0 * correct / n, 100.0 * upper / n
