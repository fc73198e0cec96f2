"""Unlabeled PARSEVAL.

Both trees are stripped of punctuation first; scores are micro-averaged over
the corpus. Constituents covering two or more words count, including the whole
sentence unless ``include_root=False``.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

from .exceptions import DataError
from .trees import Tree, is_punctuation, strip_punctuation

logger = logging.getLogger(__name__)


class Scores(NamedTuple):
    recall: float
    precision: float
    f1: float


@dataclass
class SentenceScore:
    index: int
    matched: int
    gold: int
    predicted: int
    skipped: bool = False


def extract_spans(tree: Tree | None, include_root: bool = True) -> Counter:
    """Multiset of ``(start, end)`` spans of constituents with width >= 2."""
    spans = Counter()
    if tree is None:
        return spans
    n = len(tree.leaves())
    for _node, i, j in tree.spans():
        if j - i >= 2 and (include_root or (i, j) != (0, n)):
            spans[(i, j)] += 1
    return spans


def f_measure(recall: float, precision: float) -> float:
    if recall + precision == 0:
        return 0.0
    return 2 * recall * precision / (recall + precision)


def sentence_scores(gold: Sequence[Tree], pred: Sequence[Tree],
                    is_punct: Callable[[str], bool] = is_punctuation,
                    include_root: bool = True) -> list[SentenceScore]:
    if len(gold) != len(pred):
        raise DataError(f"{len(gold)} gold trees but {len(pred)} predicted trees")
    out = []
    for n, (g, p) in enumerate(zip(gold, pred)):
        gs = strip_punctuation(g, is_punct)
        ps = strip_punctuation(p, is_punct)
        if gs is None:
            logger.warning("sentence %d is all punctuation; skipped", n)
            out.append(SentenceScore(n, 0, 0, 0, skipped=True))
            continue
        if ps is None or gs.leaves() != ps.leaves():
            raise DataError(f"sentence {n}: gold and predicted yields differ after punctuation removal")
        gspans = extract_spans(gs, include_root)
        pspans = extract_spans(ps, include_root)
        matched = sum((gspans & pspans).values())
        out.append(SentenceScore(n, matched, sum(gspans.values()), sum(pspans.values())))
    return out


def unlabeled_parseval(gold: Sequence[Tree], pred: Sequence[Tree],
                       is_punct: Callable[[str], bool] = is_punctuation,
                       include_root: bool = True) -> Scores:
    """Corpus-level unlabeled recall, precision and F1."""
    per = sentence_scores(gold, pred, is_punct, include_root)
    matched = sum(s.matched for s in per)
    n_gold = sum(s.gold for s in per)
    n_pred = sum(s.predicted for s in per)
    recall = matched / n_gold if n_gold else 0.0
    precision = matched / n_pred if n_pred else 0.0
    return Scores(recall, precision, f_measure(recall, precision))
