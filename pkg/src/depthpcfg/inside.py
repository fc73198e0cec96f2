"""Inside charts and exact posterior tree sampling.

Both grammar kinds are compiled into a :class:`ChartGrammar`: a set of chart
categories ("slots") with a lexical table and a list of dense binary blocks.
Each block maps a contiguous range of parent slots to a contiguous range of
left-child slots times a contiguous range of right-child slots. An unbounded
grammar is a single ``C x C*C`` block; a bounded grammar has one block per
position, because children of a position always sit at two fixed positions.

Cells hold inside likelihoods up to a per-cell scale factor ``exp(scale_log)``.
A cell is rescaled to max 1 when its largest entry drops below ``1e-100`` or
exceeds 1. The threshold is the square root of the smallest magnitude we want
to handle, so the product of two unrescaled cells cannot underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bounding import ROOT, BoundedGrammar, Position, child_positions, positions
from .exceptions import DataError, DegenerateGrammarError, ParameterError, SamplingError
from .grammar import Grammar
from .trees import Tree

RESCALE_BELOW = 1e-100

PATHS = ("naive", "batched")


@dataclass(frozen=True)
class Block:
    parents: slice
    left: slice
    right: slice
    #: (n_parents, n_left * n_right), row-major over (left, right)
    table: np.ndarray


class ChartGrammar:
    """Dense chart-level view of a :class:`Grammar` or :class:`BoundedGrammar`.

    Slot 0 is always the root (``T``, or ``T`` at ``(R, 0)``).
    """

    def __init__(self, lexical: np.ndarray, blocks: list[Block], labels: list[str],
                 slot_positions: list | None = None):
        self.lexical = np.ascontiguousarray(lexical)
        self.blocks = blocks
        self.labels = labels
        self.slot_positions = slot_positions
        self.n_slots, self.n_words = self.lexical.shape
        # slot -> (block index, row within block); lexical-only slots map to None
        self.slot_block: list = [None] * self.n_slots
        for bi, blk in enumerate(blocks):
            for r, s in enumerate(range(blk.parents.start, blk.parents.stop)):
                self.slot_block[s] = (bi, r)
        self.root_usable = bool(self.lexical[0].any() or (
            self.slot_block[0] is not None and blocks[self.slot_block[0][0]].table[self.slot_block[0][1]].any()))

    @classmethod
    def from_grammar(cls, g) -> "ChartGrammar":
        if isinstance(g, ChartGrammar):
            return g
        if isinstance(g, BoundedGrammar):
            return cls._from_bounded(g)
        if isinstance(g, Grammar):
            C = g.n_categories
            blk = Block(slice(0, C), slice(0, C), slice(0, C),
                        np.ascontiguousarray(g.probs[:, : C * C]))
            return cls(g.lexical, [blk], [f"c{c}" for c in range(C)])
        raise ParameterError(f"not a grammar: {type(g).__name__}")

    @classmethod
    def _from_bounded(cls, bg: BoundedGrammar) -> "ChartGrammar":
        C, D, top = bg.n_categories, bg.max_depth, bg.top
        B = bg.n_slots
        lexical = np.zeros((B, bg.n_words))
        labels = [f"c{top}"] + [f"c{c}" for _ in range(2 * D + 1) for c in range(C)]
        slot_positions = [bg.slot_info(s)[0] for s in range(B)]

        def block_of(pos):
            start = bg.block_start(pos)
            return slice(start, start + (1 if pos == ROOT else C))

        lexical[0] = bg.lexical[ROOT][top]
        blocks = []
        for pos in positions(D):
            pl, pr = child_positions(pos)
            if pos != ROOT:
                lexical[block_of(pos)] = bg.lexical[pos]
            if pr.depth > D:
                continue  # (L, D+1): words only
            if pos == ROOT:
                table = bg.binary[ROOT][top, :, top].reshape(1, C)
            else:
                table = bg.binary[pos].reshape(C, C * C)
            blocks.append(Block(block_of(pos), block_of(pl), block_of(pr), np.ascontiguousarray(table)))
        return cls(lexical, blocks, labels, slot_positions)


@dataclass
class InsideChart:
    """Inside likelihoods for one sentence.

    ``values[i, j, k] * exp(scale_log[i, j])`` is the likelihood that chart
    category ``k`` generates words ``i..j-1``; only ``i < j`` is meaningful.
    """

    values: np.ndarray
    scale_log: np.ndarray
    sentence: np.ndarray
    grammar: ChartGrammar

    @property
    def length(self) -> int:
        return len(self.sentence)

    @property
    def chart_size(self) -> int:
        return self.values.shape[-1]

    def likelihood(self, i: int, j: int) -> np.ndarray:
        """Unscaled likelihood vector of span ``(i, j)`` (may underflow)."""
        return self.values[i, j] * math.exp(self.scale_log[i, j])


@dataclass
class SampledTree:
    tree: Tree
    log_prob: float


def _validate(cg: ChartGrammar, sentences):
    for s in sentences:
        if len(s) == 0:
            raise ParameterError("cannot parse an empty sentence")
        if np.min(s) < 0 or np.max(s) >= cg.n_words:
            raise DataError("token id outside the grammar's vocabulary")
    if not cg.root_usable:
        raise DegenerateGrammarError("root row of the grammar is unusable")


def _rescale(out: np.ndarray, base: np.ndarray):
    """Normalize rows of ``out`` whose max is tiny or above one; return new scale logs."""
    mx = out.max(axis=-1)
    need = (mx > 0) & ((mx < RESCALE_BELOW) | (mx > 1.0))
    if np.any(need):
        out[need] /= mx[need][:, None]
        base = base + np.where(need, np.log(np.where(need, mx, 1.0)), 0.0)
    return base


def _fill_width_one(cg, words, V, S):
    L = words.shape[1]
    for i in range(L):
        out = cg.lexical[:, words[:, i]].T.copy()
        S[:, i, i + 1] = _rescale(out, S[:, i, i + 1])
        V[:, i, i + 1] = out


def _batched(cg: ChartGrammar, words: np.ndarray):
    """Charts for ``N`` equal-length sentences; ``words`` has shape ``(N, L)``.

    A reversed copy ``Vr[:, j, i] = V[:, i, j]`` makes both operands of the
    split-point sum contiguous slices, so the sum over ``k`` becomes one
    matrix product per block.
    """
    N, L = words.shape
    B = cg.n_slots
    V = np.zeros((N, L + 1, L + 1, B))
    Vr = np.zeros((N, L + 1, L + 1, B))
    S = np.zeros((N, L + 1, L + 1))
    _fill_width_one(cg, words, V, S)
    for i in range(L):
        Vr[:, i + 1, i] = V[:, i, i + 1]
    for w in range(2, L + 1):
        for i in range(L - w + 1):
            j = i + w
            left = V[:, i, i + 1 : j]
            right = Vr[:, j, i + 1 : j]
            offs = S[:, i, i + 1 : j] + S[:, i + 1 : j, j]
            base = np.zeros(N)
            if offs.any():
                base = offs.max(axis=1)
                left = left * np.exp(offs - base[:, None])[:, :, None]
            out = np.zeros((N, B))
            for blk in cg.blocks:
                M = np.matmul(left[:, :, blk.left].transpose(0, 2, 1), right[:, :, blk.right])
                out[:, blk.parents] = M.reshape(N, -1) @ blk.table.T
            S[:, i, j] = _rescale(out, base)
            V[:, i, j] = out
            Vr[:, j, i] = out
    return V, S


def _naive(cg: ChartGrammar, words: np.ndarray):
    """Reference triple loop over spans, split points and blocks."""
    N, L = words.shape
    B = cg.n_slots
    V = np.zeros((N, L + 1, L + 1, B))
    S = np.zeros((N, L + 1, L + 1))
    _fill_width_one(cg, words, V, S)
    for n in range(N):
        for w in range(2, L + 1):
            for i in range(L - w + 1):
                j = i + w
                offs = np.array([S[n, i, k] + S[n, k, j] for k in range(i + 1, j)])
                base = offs.max()
                out = np.zeros(B)
                for k in range(i + 1, j):
                    weight = math.exp(offs[k - i - 1] - base)
                    for blk in cg.blocks:
                        pair = np.outer(V[n, i, k, blk.left] * weight, V[n, k, j, blk.right]).ravel()
                        out[blk.parents] += blk.table @ pair
                out = out[None]
                S[n, i, j] = _rescale(out, np.array([base]))[0]
                V[n, i, j] = out[0]
    return V, S


def build_inside_chart(grammar, sentence: Sequence[int], path: str = "batched") -> InsideChart:
    """Inside chart of one sentence (token ids) under a plain or bounded grammar."""
    return build_inside_charts(grammar, [sentence], path=path)[0]


def build_inside_charts(grammar, sentences: Sequence[Sequence[int]], path: str = "batched") -> list[InsideChart]:
    """Charts for many sentences; the batched path groups sentences by length."""
    if path not in PATHS:
        raise ParameterError(f"unknown inside path {path!r}; expected one of {PATHS}")
    cg = ChartGrammar.from_grammar(grammar)
    sentences = [np.asarray(s, dtype=np.int64) for s in sentences]
    _validate(cg, sentences)
    compute = _batched if path == "batched" else _naive
    charts: list = [None] * len(sentences)
    by_length: dict[int, list[int]] = {}
    for n, s in enumerate(sentences):
        by_length.setdefault(len(s), []).append(n)
    for idx in by_length.values():
        words = np.stack([sentences[n] for n in idx])
        V, S = compute(cg, words)
        for row, n in enumerate(idx):
            charts[n] = InsideChart(V[row], S[row], sentences[n], cg)
    return charts


def sentence_log_likelihood(chart: InsideChart) -> float:
    """Log probability of the sentence; ``-inf`` when the root cannot derive it."""
    L = chart.length
    v = chart.values[0, L, 0]
    if v <= 0:
        return -math.inf
    return math.log(v) + float(chart.scale_log[0, L])


def sample_tree(chart: InsideChart, grammar=None, rng=None, words: Sequence[str] | None = None) -> SampledTree:
    """Draw a tree from the exact posterior given the chart's grammar and sentence.

    Each constituent draws its split point and child pair jointly, with one
    uniform against the cumulative weights ordered by (split, left, right).
    Leaves are the surface ``words`` when given, otherwise ``w<id>`` tokens.
    """
    cg = chart.grammar if grammar is None else ChartGrammar.from_grammar(grammar)
    rng = np.random.default_rng(rng)
    V, S = chart.values, chart.scale_log
    L = chart.length
    if words is None:
        words = [f"w{t}" for t in chart.sentence]
    if not V[0, L, 0] > 0:
        raise SamplingError("sentence is unparsable under the grammar")
    log_prob = 0.0

    def draw(slot, i, j):
        nonlocal log_prob
        label = cg.labels[slot]
        if j - i == 1:
            return Tree(label, (Tree(words[i]),))
        where = cg.slot_block[slot]
        if where is None:
            raise SamplingError(f"slot {slot} cannot expand a span of width {j - i}")
        blk = cg.blocks[where[0]]
        row = blk.table[where[1]]
        left = V[i, i + 1 : j, blk.left]
        right = V[i + 1 : j, j, blk.right]
        offs = S[i, i + 1 : j] + S[i + 1 : j, j]
        nl, nr = left.shape[1], right.shape[1]
        joint = (row.reshape(1, nl, nr) * left[:, :, None] * right[:, None, :]
                 * np.exp(offs - offs.max())[:, None, None]).ravel()
        cum = np.cumsum(joint)
        total = cum[-1]
        if not total > 0:
            raise SamplingError(f"no derivation for span ({i}, {j})")
        idx = int(np.searchsorted(cum, rng.random() * total, side="right"))
        idx = min(idx, len(cum) - 1)
        while joint[idx] <= 0:
            idx -= 1
        log_prob += math.log(joint[idx] / total)
        k_off, pair = divmod(idx, nl * nr)
        a, b = divmod(pair, nr)
        k = i + 1 + k_off
        return Tree(label, (draw(blk.left.start + a, i, k), draw(blk.right.start + b, k, j)))

    tree = draw(0, 0, L)
    return SampledTree(tree, log_prob)
