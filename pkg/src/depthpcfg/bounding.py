"""Left-corner depth bounding of an unbounded grammar.

Every node of a tree sits at a position ``(side, depth)``. The root is at
``(R, 0)``; a left-side parent at ``(L, d)`` puts its children at ``(L, d)`` and
``(R, d)``, a right-side parent at ``(R, d)`` puts them at ``(L, d + 1)`` and
``(R, d)``. A bound ``D`` allows right positions up to depth ``D`` and left
positions up to ``D + 1``; left nodes at ``D + 1`` may only emit words.

Containment likelihoods give, per position and category, the probability of
producing a complete yield without leaving the allowed positions. Reweighting
the grammar by them yields the bounded grammar: the unbounded grammar
conditioned on staying within the bound.
"""

from __future__ import annotations

import io
import logging
import re
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .exceptions import DataError, InternalInvariantError, ParameterError, ParseError
from .grammar import CategorySet, CountMatrix, Grammar, Vocabulary, _format_prob

logger = logging.getLogger(__name__)

#: rows whose containment falls below this are unusable
CONTAINMENT_FLOOR = 1e-12
CONVERGENCE_WARNING = 1e-8
DEFAULT_ITERATIONS = 20


class Position(NamedTuple):
    side: str
    depth: int

    def __str__(self):
        return f"{self.side}{self.depth}"


ROOT = Position("R", 0)


def child_positions(parent: Position) -> tuple[Position, Position]:
    """Positions of the left and right child of a node at ``parent``."""
    side, d = parent
    if side == "L":
        return Position("L", d), Position("R", d)
    return Position("L", d + 1), Position("R", d)


def is_valid_position(pos: Position, max_depth: int) -> bool:
    side, d = pos
    if side == "R":
        return 0 <= d <= max_depth
    return 1 <= d <= max_depth + 1


def positions(max_depth: int) -> list[Position]:
    """All valid positions in chart-slot order: R0, L1, R1, ..., LD, RD, L(D+1)."""
    out = [ROOT]
    for d in range(1, max_depth + 1):
        out.append(Position("L", d))
        out.append(Position("R", d))
    out.append(Position("L", max_depth + 1))
    return out


@dataclass
class Containment:
    """Containment likelihood vectors for every valid position."""

    h: dict
    max_depth: int
    iterations: int
    top: int = 0
    #: largest entrywise change between the last two iterates
    final_change: float = 0.0

    def __getitem__(self, pos) -> np.ndarray:
        pos = Position(*pos)
        if pos in self.h:
            return self.h[pos]
        C = len(next(iter(self.h.values())))
        return np.zeros(C)

    @property
    def n_categories(self) -> int:
        return len(self.h[ROOT])


def compute_containment(g: Grammar, max_depth: int, iterations: int = DEFAULT_ITERATIONS,
                        top: int = 0, warn: bool = True) -> Containment:
    """Iterate the containment recursion ``iterations`` times from zero.

    Left positions: ``h[L,d] = G (terminal + h[L,d] (x) h[R,d])`` for ``d <= D+1``.
    Right positions: ``h[R,0]`` is the indicator of the top category and
    ``h[R,d] = G (terminal + h[L,d+1] (x) h[R,d])`` for ``0 < d <= D``.
    Positions outside the bound have zero containment. A warning is logged
    when the last iterate still moved by more than 1e-8 (``final_change``
    carries the value either way).
    """
    if max_depth < 1:
        raise ParameterError(f"maximum depth must be >= 1, got {max_depth}")
    if iterations < 1:
        raise ParameterError(f"containment iterations must be >= 1, got {iterations}")
    C = g.n_categories
    D = max_depth
    binary = g.binary
    term = g.terminal_mass
    zero = np.zeros(C)
    top_vec = np.zeros(C)
    top_vec[top] = 1.0
    h = {pos: zero.copy() for pos in positions(D)}

    def expand(left, right):
        return term + np.einsum("cab,a,b->c", binary, left, right)

    change = np.inf
    for _ in range(iterations):
        new = {ROOT: top_vec}
        for d in range(1, D + 2):
            right = h[Position("R", d)] if d <= D else zero
            new[Position("L", d)] = expand(h[Position("L", d)], right)
        for d in range(1, D + 1):
            new[Position("R", d)] = expand(h[Position("L", d + 1)], h[Position("R", d)])
        change = 0.0
        for pos, vec in new.items():
            np.clip(vec, 0.0, 1.0, out=vec)
            diff = vec - h[pos]
            if np.any(diff < 0):
                raise InternalInvariantError(f"containment decreased at {pos}")
            change = max(change, float(diff.max(initial=0.0)))
        h = new
    if warn and change > CONVERGENCE_WARNING:
        logger.warning("containment not converged after %d iterations (last change %.3g)",
                       iterations, change)
    return Containment(h=h, max_depth=D, iterations=iterations, top=top, final_change=change)


class BoundedGrammar:
    """Side- and depth-specific grammar derived from an unbounded one.

    For each position ``p`` the binary table ``binary[p][c, a, b]`` is the
    probability that category ``c`` at ``p`` expands to ``a`` and ``b`` placed
    at ``child_positions(p)``; ``lexical[p][c, w]`` is the probability of
    emitting word ``w``. Rows whose containment is below the floor are zero and
    flagged in ``usable[p]``.
    """

    def __init__(self, binary: dict, lexical: dict, usable: dict, max_depth: int,
                 n_categories: int, n_words: int, top: int = 0, containment: Containment | None = None):
        self.binary = binary
        self.lexical = lexical
        self.usable = usable
        self.max_depth = max_depth
        self.n_categories = n_categories
        self.n_words = n_words
        self.top = top
        self.containment = containment
        self._slots = self._build_slots()
        self._slot_index = {s: i for i, s in enumerate(self._slots)}

    def _build_slots(self):
        slots = [(ROOT, self.top)]
        for pos in positions(self.max_depth)[1:]:
            slots.extend((pos, c) for c in range(self.n_categories))
        return slots

    @property
    def positions(self) -> list[Position]:
        return positions(self.max_depth)

    @property
    def n_slots(self) -> int:
        """Number of chart categories, ``2*D*C + C + 1``."""
        return len(self._slots)

    def slot(self, pos: Position, category: int) -> int:
        try:
            return self._slot_index[(Position(*pos), category)]
        except KeyError:
            raise DataError(f"no chart slot for category {category} at {pos}") from None

    def slot_info(self, index: int) -> tuple[Position, int]:
        return self._slots[index]

    def block_start(self, pos: Position) -> int:
        """First chart slot of the category block at ``pos``."""
        pos = Position(*pos)
        if pos == ROOT:
            return 0
        return self._slot_index[(pos, 0)]

    def row(self, pos: Position, category: int) -> np.ndarray:
        """Bounded distribution of ``category`` at ``pos`` in the plain column layout."""
        pos = Position(*pos)
        return np.concatenate([self.binary[pos][category].ravel(), self.lexical[pos][category]])

    def rule_prob(self, pos, parent, left=None, right=None, word=None) -> float:
        pos = Position(*pos)
        if word is not None:
            return float(self.lexical[pos][parent, word])
        return float(self.binary[pos][parent, left, right])

    def __repr__(self):
        return f"BoundedGrammar(C={self.n_categories}, W={self.n_words}, D={self.max_depth})"


def _floored(vec):
    return np.where(vec >= CONTAINMENT_FLOOR, vec, 0.0)


def bound_grammar(g: Grammar, h: Containment, max_depth: int | None = None) -> BoundedGrammar:
    """Reweight ``g`` by containment ``h`` into a depth-bounded grammar.

    ``P(p, c -> a b) = G(c -> a b) h[p_L][a] h[p_R][b] / h[p][c]`` and
    ``P(p, c -> w) = G(c -> w) / h[p][c]``; rows are then renormalized to
    absorb the residual of the finite fixed-point iteration.

    The root row at ``(R, 0)`` uses the exact containment of the top category
    along the right spine, ``x = term(T) / (1 - sum_a G(T -> a T) h[L1][a])``,
    so that it is properly normalized.
    """
    if max_depth is not None and max_depth != h.max_depth:
        raise ParameterError(f"containment computed for D={h.max_depth}, requested D={max_depth}")
    if h.n_categories != g.n_categories:
        raise ParameterError("containment and grammar disagree on the number of categories")
    D = h.max_depth
    C = g.n_categories
    top = h.top
    G_bin = g.binary
    G_lex = g.lexical
    binary, lexical, usable = {}, {}, {}
    for pos in positions(D):
        pl, pr = child_positions(pos)
        hl = _floored(h[pl]) if is_valid_position(pl, D) else np.zeros(C)
        hr = _floored(h[pr]) if is_valid_position(pr, D) else np.zeros(C)
        if pos == ROOT:
            term_top = G_lex[top].sum()
            a_mass = float(G_bin[top, :, top] @ hl)
            x = term_top / (1.0 - a_mass) if a_mass < 1.0 else 0.0
            hr = np.zeros(C)
            hr[top] = min(x, 1.0)
            ok = np.zeros(C, dtype=bool)
            ok[top] = x >= CONTAINMENT_FLOOR
        else:
            ok = h[pos] >= CONTAINMENT_FLOOR
        denom = np.where(ok, h[pos], 1.0) if pos != ROOT else np.ones(C)
        b = G_bin * hl[None, :, None] * hr[None, None, :] / denom[:, None, None]
        lx = G_lex / denom[:, None]
        sums = b.reshape(C, -1).sum(axis=1) + lx.sum(axis=1)
        ok &= sums > 0
        scale = np.where(ok, 1.0 / np.where(sums > 0, sums, 1.0), 0.0)
        b *= scale[:, None, None]
        lx = lx * scale[:, None]
        b.flags.writeable = False
        lx.flags.writeable = False
        binary[pos], lexical[pos], usable[pos] = b, lx, ok
    return BoundedGrammar(binary, lexical, usable, D, C, g.n_words, top=top, containment=h)


def project_counts(bounded_counts: dict, n_categories: int | None = None,
                   n_words: int | None = None) -> CountMatrix:
    """Sum per-position counts back into a plain :class:`CountMatrix`.

    ``bounded_counts`` maps each position to a ``(C, C*C + W)`` table whose
    child columns refer to categories at ``child_positions(position)``;
    dropping the annotation is a plain sum over positions.
    """
    total = None
    for pos, counts in bounded_counts.items():
        table = counts.counts if isinstance(counts, CountMatrix) else np.asarray(counts, dtype=np.float64)
        total = table.copy() if total is None else total + table
    if total is None:
        if n_categories is None or n_words is None:
            raise ParameterError("shape required to project an empty count collection")
        return CountMatrix.zeros(n_categories, n_words)
    return CountMatrix(total, total.shape[0])


# --------------------------------------------------------------------------
# text format

_SLOT_RE = re.compile(r"^c(\d+)@([LR])(\d+)$")


def write_bounded_grammar(bg: BoundedGrammar, vocab: Vocabulary | None = None, out=None) -> str:
    """Serialize in the grammar file format with ``c<i>@<L|R><d>`` tokens."""
    if vocab is None:
        vocab = Vocabulary(f"w{i}" for i in range(bg.n_words))
    buf = io.StringIO()
    buf.write(f"categories\t{bg.n_categories}\n")
    buf.write(f"depth\t{bg.max_depth}\n")
    buf.write("vocab\t" + " ".join(vocab.words) + "\n")
    D = bg.max_depth
    for pos in bg.positions:
        pl, pr = child_positions(pos)
        bin_ = bg.binary[pos]
        lex = bg.lexical[pos]
        for c in np.flatnonzero(bg.usable[pos]):
            ptok = f"c{c}@{pos}"
            if is_valid_position(pr, D):
                for a, b in zip(*np.nonzero(bin_[c])):
                    buf.write(f"{ptok}\tc{a}@{pl}\tc{b}@{pr}\t{_format_prob(bin_[c, a, b])}\n")
            for w in np.flatnonzero(lex[c]):
                buf.write(f"{ptok}\t{vocab.words[w]}\t-\t{_format_prob(lex[c, w])}\n")
    text = buf.getvalue()
    if out is not None:
        if hasattr(out, "write"):
            out.write(text)
        else:
            with open(out, "w", encoding="utf-8") as fh:
                fh.write(text)
    return text


def read_bounded_grammar(text) -> tuple[BoundedGrammar, CategorySet, Vocabulary]:
    """Parse the output of :func:`write_bounded_grammar`.

    Containment vectors are not stored in the file; the result has
    ``containment=None``.
    """
    if hasattr(text, "read"):
        text = text.read()
    lines = text.splitlines()
    header = {}
    start = 0
    for i, line in enumerate(lines):
        key, _, value = line.partition("\t")
        if key in ("categories", "depth", "vocab"):
            header[key] = value
            start = i + 1
        else:
            break
    try:
        C = int(header["categories"])
        D = int(header["depth"])
        vocab = Vocabulary(header["vocab"].split())
    except (KeyError, ValueError) as e:
        raise ParseError(f"bad bounded grammar header: {e}") from None
    W = len(vocab)
    binary = {pos: np.zeros((C, C, C)) for pos in positions(D)}
    lexical = {pos: np.zeros((C, W)) for pos in positions(D)}
    usable = {pos: np.zeros(C, dtype=bool) for pos in positions(D)}

    def slot(tok, lineno):
        m = _SLOT_RE.match(tok)
        if m is None:
            raise ParseError(f"bad bounded category token {tok!r}", line=lineno)
        c, pos = int(m.group(1)), Position(m.group(2), int(m.group(3)))
        if c >= C or not is_valid_position(pos, D):
            raise ParseError(f"unknown category {tok!r}", line=lineno)
        return pos, c

    for lineno, line in enumerate(lines[start:], start + 1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise ParseError("malformed rule line", line=lineno)
        pos, c = slot(fields[0], lineno)
        p = float(fields[3])
        usable[pos][c] = True
        if fields[2] == "-":
            if fields[1] not in vocab:
                raise ParseError(f"unknown word {fields[1]!r}", line=lineno)
            lexical[pos][c, vocab.lookup(fields[1])] = p
        else:
            lpos, a = slot(fields[1], lineno)
            rpos, b = slot(fields[2], lineno)
            if (lpos, rpos) != child_positions(pos):
                raise ParseError(f"child positions {lpos},{rpos} inconsistent with parent {pos}", line=lineno)
            binary[pos][c, a, b] = p
    for pos in positions(D):
        sums = binary[pos].reshape(C, -1).sum(axis=1) + lexical[pos].sum(axis=1)
        bad = np.flatnonzero(usable[pos] & (np.abs(sums - 1.0) > 1e-6))
        if bad.size:
            raise ParseError(f"row sum of c{bad[0]}@{pos} is {sums[bad[0]]:.12g}, expected 1")
    return BoundedGrammar(binary, lexical, usable, D, C, W), CategorySet(C), vocab
