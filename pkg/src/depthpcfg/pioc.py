"""Posterior inference on constituents.

Tree samples for a sentence (from any number of iterations and runs) are
reduced to unlabeled span and split-point counts. Decoding starts from the
whole sentence and repeatedly picks the split with the highest estimated
posterior given the current span, so the result may be a tree that appears in
no individual sample. Optionally, decoded 3- and 4-word constituents whose
best two splits are close in posterior are flattened.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .exceptions import DataError
from .trees import UNLABELED, Tree

DEFAULT_MERGE_THRESHOLD = 0.3
MERGE_WIDTHS = (3, 4)


@dataclass
class SpanStats:
    """Monte Carlo counts for one sentence of ``length`` words.

    ``span_count[(i, j)]`` counts samples containing constituent ``(i, j)``
    (width >= 2); ``split_count[(i, j, k)]`` counts samples in which it is
    split at ``k``.
    """

    length: int
    total: int = 0
    span_count: Counter = field(default_factory=Counter)
    split_count: Counter = field(default_factory=Counter)

    def span(self, i: int, j: int) -> int:
        """Count for ``(i, j)``; single words occur in every sample."""
        if j - i == 1:
            return self.total
        return self.span_count.get((i, j), 0)

    def split_posteriors(self, i: int, j: int) -> list[float]:
        """Estimated ``P(split at k | span (i, j))`` for ``k = i+1 .. j-1``."""
        n = self.span_count.get((i, j), 0)
        if n == 0:
            return [0.0] * (j - i - 1)
        return [self.split_count.get((i, j, k), 0) / n for k in range(i + 1, j)]

    def add(self, tree: Tree) -> None:
        length = len(tree.leaves())
        if length != self.length:
            raise DataError(f"sample yield has {length} words, expected {self.length}")
        for node, i, j in tree.spans():
            if j - i < 2:
                continue
            if len(node.children) != 2:
                raise DataError(f"sample node over ({i}, {j}) is not binary")
            k = i + len(node.children[0].leaves())
            self.span_count[(i, j)] += 1
            self.split_count[(i, j, k)] += 1
        self.total += 1

    def __add__(self, other: "SpanStats") -> "SpanStats":
        if self.length != other.length:
            raise DataError("cannot combine statistics for sentences of different length")
        return SpanStats(self.length, self.total + other.total,
                         self.span_count + other.span_count, self.split_count + other.split_count)


def span_stats(trees: Iterable[Tree]) -> SpanStats:
    """Statistics for a single sentence from its tree samples."""
    trees = list(trees)
    if not trees:
        raise DataError("no samples for sentence")
    stats = SpanStats(len(trees[0].leaves()))
    for t in trees:
        stats.add(t)
    return stats


def collect_span_stats(samples: Sequence[Sequence[Tree]]) -> list[SpanStats]:
    """Per-sentence statistics from per-sentence lists of samples."""
    out = []
    for n, trees in enumerate(samples):
        try:
            out.append(span_stats(trees))
        except DataError as e:
            raise DataError(f"sentence {n}: {e}") from None
    return out


def samples_by_sentence(sample_sets: Iterable[Sequence[Tree]]) -> list[list[Tree]]:
    """Transpose tree sets (each in corpus order) into per-sentence sample lists."""
    per_sentence: list[list[Tree]] | None = None
    for set_index, trees in enumerate(sample_sets):
        trees = list(trees)
        if per_sentence is None:
            per_sentence = [[] for _ in trees]
        if len(trees) != len(per_sentence):
            raise DataError(f"sample set {set_index} has {len(trees)} trees, expected {len(per_sentence)}")
        for bucket, t in zip(per_sentence, trees):
            bucket.append(t)
    if per_sentence is None:
        raise DataError("no sample sets given")
    return per_sentence


def _best_split(stats: SpanStats, i: int, j: int) -> int:
    n = stats.span_count.get((i, j), 0)
    best_k, best = i + 1, -1.0
    for k in range(i + 1, j):
        if n > 0:
            score = stats.split_count.get((i, j, k), 0)
        else:
            # never observed: prefer the split whose children were seen most
            score = stats.span(i, k) + stats.span(k, j)
        if score > best:
            best_k, best = k, score
    return best_k


def map_decode(stats: SpanStats, words: Sequence[str] | None = None) -> Tree:
    """Top-down MAP decoding of an unlabeled binary tree (labels ``X``).

    Ties go to the smallest split point. Leaves are ``words`` or ``w<i>``.
    """
    L = stats.length
    if words is None:
        words = [f"w{i}" for i in range(L)]
    if len(words) != L:
        raise DataError(f"{len(words)} words given for statistics over {L}")
    leaves = [Tree(w) for w in words]
    if L == 1:
        return Tree(UNLABELED, (leaves[0],))

    def decode(i, j):
        if j - i == 1:
            return leaves[i]
        k = _best_split(stats, i, j)
        return Tree(UNLABELED, (decode(i, k), decode(k, j)))

    return decode(0, L)


def merge_uncertain_spans(tree: Tree, stats: SpanStats, threshold: float = DEFAULT_MERGE_THRESHOLD) -> Tree:
    """Flatten decoded 3- and 4-word constituents with uncertain splits.

    A constituent is flattened when its highest split posterior exceeds the
    second highest by less than ``threshold``. Wider constituents are kept.
    """

    def walk(node, start):
        if node.is_leaf:
            return node, start + 1
        width = len(node.leaves())
        end = start + width
        if width in MERGE_WIDTHS:
            post = sorted(stats.split_posteriors(start, end), reverse=True)
            if post[0] - post[1] < threshold:
                return Tree(node.label, tuple(Tree(w) for w in node.leaves())), end
        kids = []
        pos = start
        for child in node.children:
            new, pos = walk(child, pos)
            kids.append(new)
        return Tree(node.label, tuple(kids)), end

    return walk(tree, 0)[0]


def pioc_decode(samples: Sequence[Sequence[Tree]], threshold: float | None = DEFAULT_MERGE_THRESHOLD,
                words: Sequence[Sequence[str]] | None = None) -> list[Tree]:
    """Decode every sentence from its samples; ``threshold=None`` skips merging."""
    stats = collect_span_stats(samples)
    out = []
    for n, st in enumerate(stats):
        w = words[n] if words is not None else samples[n][0].leaves()
        tree = map_decode(st, w)
        if threshold is not None:
            tree = merge_uncertain_spans(tree, st, threshold)
        out.append(tree)
    return out
