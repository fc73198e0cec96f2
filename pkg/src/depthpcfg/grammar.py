"""Category and vocabulary spaces, the unbounded CNF grammar, and its Dirichlet draws.

A grammar over ``C`` categories and ``W`` words is a ``C x (C*C + W)`` row-stochastic
table. Column ``a * C + b`` holds the binary rule ``c -> a b``; column ``C*C + w``
holds the lexical rule ``c -> w``. Category 0 is the top category ``T``.
"""

from __future__ import annotations

import io
import math
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .exceptions import DataError, ParameterError, ParseError

ROW_TOLERANCE = 1e-9
FILE_ROW_TOLERANCE = 1e-6

_CATEGORY_RE = re.compile(r"^c(\d+)$")


class Vocabulary:
    """Closed, ordered vocabulary with dense integer ids."""

    def __init__(self, words: Iterable[str]):
        words = tuple(words)
        index = {}
        for i, w in enumerate(words):
            if w in index:
                raise ParameterError(f"duplicate token in vocabulary: {w!r}")
            index[w] = i
        self.words = words
        self._index = index

    @classmethod
    def from_sentences(cls, sentences: Iterable[Sequence[str]]) -> "Vocabulary":
        """Build a vocabulary ordered by first occurrence."""
        seen = {}
        for sent in sentences:
            for tok in sent:
                if tok not in seen:
                    seen[tok] = len(seen)
        return cls(seen)

    def __len__(self):
        return len(self.words)

    def __contains__(self, word):
        return word in self._index

    def __iter__(self):
        return iter(self.words)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.words == other.words

    def __repr__(self):
        return f"Vocabulary({len(self.words)} words)"

    def lookup(self, word: str) -> int:
        try:
            return self._index[word]
        except KeyError:
            raise DataError(f"token not in vocabulary: {word!r}") from None

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        return np.array([self.lookup(t) for t in tokens], dtype=np.int64)

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.words[i] for i in ids]


@dataclass(frozen=True)
class CategorySet:
    """``count`` syntactic categories; index ``top`` is the root category T."""

    count: int
    top: int = 0

    def __post_init__(self):
        if self.count < 1:
            raise ParameterError("need at least one category")
        if not 0 <= self.top < self.count:
            raise ParameterError("top category index out of range")

    def token(self, index: int) -> str:
        return f"c{index}"

    def parse_token(self, token: str) -> int:
        m = _CATEGORY_RE.match(token)
        if m is None:
            raise DataError(f"not a category token: {token!r}")
        index = int(m.group(1))
        if index >= self.count:
            raise DataError(f"unknown category {token!r} (C={self.count})")
        return index


class Grammar:
    """Unbounded CNF PCFG stored as a dense row-stochastic table.

    Parameters
    ----------
    probs : (C, C*C + W) array_like
        Rule probabilities. Rows must sum to one.
    n_categories : int
        ``C``; the number of words is inferred from the column count.
    check : bool
        Validate non-negativity and row sums (tolerance 1e-9).

    The table is copied and made read-only so instances can be shared freely.
    """

    def __init__(self, probs, n_categories: int, *, check: bool = True):
        probs = np.array(probs, dtype=np.float64)
        C = int(n_categories)
        if probs.ndim != 2 or probs.shape[0] != C or probs.shape[1] <= C * C:
            raise ParameterError(
                f"grammar table must have shape (C, C*C + W) with W >= 1; got {probs.shape} for C={C}"
            )
        if check:
            if np.any(probs < 0) or not np.all(np.isfinite(probs)):
                raise DataError("grammar probabilities must be finite and non-negative")
            sums = probs.sum(axis=1)
            bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_TOLERANCE)
            if bad.size:
                raise DataError(f"grammar row {bad[0]} sums to {sums[bad[0]]!r}, not 1")
        probs.flags.writeable = False
        self.probs = probs
        self.n_categories = C
        self.n_words = probs.shape[1] - C * C

    @property
    def binary(self) -> np.ndarray:
        """View of binary rules as a ``(parent, left, right)`` array."""
        C = self.n_categories
        return self.probs[:, : C * C].reshape(C, C, C)

    @property
    def lexical(self) -> np.ndarray:
        """View of lexical rules as a ``(parent, word)`` array."""
        return self.probs[:, self.n_categories ** 2 :]

    @property
    def terminal_mass(self) -> np.ndarray:
        return self.lexical.sum(axis=1)

    @property
    def shape(self):
        return self.probs.shape

    def pair_column(self, left: int, right: int) -> int:
        return left * self.n_categories + right

    def word_column(self, word_id: int) -> int:
        return self.n_categories ** 2 + word_id

    def __repr__(self):
        return f"Grammar(C={self.n_categories}, W={self.n_words})"


class CountMatrix:
    """Non-negative rule counts with the same layout as :class:`Grammar`."""

    def __init__(self, counts, n_categories: int):
        counts = np.array(counts, dtype=np.float64)
        C = int(n_categories)
        if counts.ndim != 2 or counts.shape[0] != C or counts.shape[1] <= C * C:
            raise ParameterError(f"count table has shape {counts.shape}, incompatible with C={C}")
        if np.any(counts < 0):
            raise DataError("rule counts must be non-negative")
        counts.flags.writeable = False
        self.counts = counts
        self.n_categories = C
        self.n_words = counts.shape[1] - C * C

    @classmethod
    def zeros(cls, n_categories: int, n_words: int) -> "CountMatrix":
        return cls(np.zeros((n_categories, n_categories ** 2 + n_words)), n_categories)

    @property
    def shape(self):
        return self.counts.shape

    def total(self) -> float:
        return float(self.counts.sum())

    def __add__(self, other):
        if not isinstance(other, CountMatrix) or other.shape != self.shape:
            return NotImplemented
        return CountMatrix(self.counts + other.counts, self.n_categories)

    def __repr__(self):
        return f"CountMatrix(C={self.n_categories}, W={self.n_words}, total={self.total():g})"


def _dirichlet_rows(alpha: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    # numpy's gamma sampler is exact for shape < 1, which beta=0.2 needs
    draws = rng.gamma(alpha, 1.0)
    sums = draws.sum(axis=1, keepdims=True)
    if np.any(sums <= 0):
        raise DataError("Dirichlet draw underflowed to an all-zero row")
    probs = draws / sums
    return probs / probs.sum(axis=1, keepdims=True)


def sample_prior_grammar(categories: CategorySet | int, vocab: Vocabulary | int, beta: float,
                         seed=None) -> Grammar:
    """Draw every grammar row from a symmetric Dirichlet(``beta``).

    ``seed`` may be an int, a :class:`numpy.random.SeedSequence` or a
    :class:`numpy.random.Generator`.
    """
    C = categories.count if isinstance(categories, CategorySet) else int(categories)
    W = len(vocab) if isinstance(vocab, Vocabulary) else int(vocab)
    if not beta > 0:
        raise ParameterError(f"beta must be positive, got {beta}")
    if C < 1:
        raise ParameterError("need at least one category")
    if W < 1:
        raise ParameterError("vocabulary is empty")
    rng = np.random.default_rng(seed)
    alpha = np.full((C, C * C + W), float(beta))
    return Grammar(_dirichlet_rows(alpha, rng), C, check=False)


def sample_posterior_grammar(counts: CountMatrix, beta: float, seed=None) -> Grammar:
    """Draw every row from Dirichlet(``beta + counts[row]``).

    With all-zero counts this consumes the random stream exactly like
    :func:`sample_prior_grammar`, so both return the same table for the same seed.
    """
    if not beta > 0:
        raise ParameterError(f"beta must be positive, got {beta}")
    table = counts.counts if isinstance(counts, CountMatrix) else np.asarray(counts, dtype=np.float64)
    if np.any(table < 0):
        raise DataError("negative rule count")
    C = table.shape[0]
    rng = np.random.default_rng(seed)
    return Grammar(_dirichlet_rows(beta + table, rng), C, check=False)


# --------------------------------------------------------------------------
# text format

def _format_prob(p: float) -> str:
    return f"{p:.17g}"


def write_grammar(g: Grammar, categories: CategorySet | None = None, vocab: Vocabulary | None = None,
                  out=None) -> str:
    """Serialize ``g`` to the tab-separated grammar format.

    Zero-probability rules are omitted. Returns the text; also writes it to
    ``out`` (a path or text handle) when given.
    """
    C = g.n_categories
    categories = categories or CategorySet(C)
    if vocab is None:
        vocab = Vocabulary(f"w{i}" for i in range(g.n_words))
    if categories.count != C or len(vocab) != g.n_words:
        raise ParameterError("category set / vocabulary do not match grammar shape")
    buf = io.StringIO()
    buf.write(f"categories\t{C}\n")
    buf.write("vocab\t" + " ".join(vocab.words) + "\n")
    binary = g.binary
    lexical = g.lexical
    for c in range(C):
        ptok = categories.token(c)
        for a, b in zip(*np.nonzero(binary[c])):
            buf.write(f"{ptok}\t{categories.token(a)}\t{categories.token(b)}\t{_format_prob(binary[c, a, b])}\n")
        for w in np.flatnonzero(lexical[c]):
            buf.write(f"{ptok}\t{vocab.words[w]}\t-\t{_format_prob(lexical[c, w])}\n")
    text = buf.getvalue()
    if out is not None:
        if hasattr(out, "write"):
            out.write(text)
        else:
            with open(out, "w", encoding="utf-8") as fh:
                fh.write(text)
    return text


def read_grammar(text) -> tuple[Grammar, CategorySet, Vocabulary]:
    """Parse the grammar format produced by :func:`write_grammar`.

    ``text`` is the file content or an open text handle.
    """
    if hasattr(text, "read"):
        text = text.read()
    lines = text.splitlines()
    C = None
    vocab = None
    body_start = 0
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        key, _, value = line.partition("\t")
        if key == "categories":
            try:
                C = int(value)
            except ValueError:
                raise ParseError(f"bad category count {value!r}", line=lineno) from None
            if C < 1:
                raise ParseError("category count must be positive", line=lineno)
        elif key == "vocab":
            try:
                vocab = Vocabulary(value.split())
            except ParameterError as e:
                raise ParseError(str(e), line=lineno) from None
        else:
            body_start = lineno - 1
            break
        body_start = lineno
    if C is None or vocab is None:
        raise ParseError("missing 'categories' or 'vocab' header")
    if len(vocab) == 0:
        raise ParseError("empty vocabulary")
    categories = CategorySet(C)
    W = len(vocab)
    probs = np.zeros((C, C * C + W))
    first_line = [None] * C

    def category(tok, lineno):
        try:
            return categories.parse_token(tok)
        except DataError:
            raise ParseError(f"unknown category {tok!r}", line=lineno) from None

    for lineno, line in enumerate(lines[body_start:], body_start + 1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise ParseError(f"malformed rule line: expected 4 tab-separated fields, got {len(fields)}",
                             line=lineno)
        parent, left, right, prob = fields
        c = category(parent, lineno)
        try:
            p = float(prob)
        except ValueError:
            raise ParseError(f"bad probability {prob!r}", line=lineno) from None
        if not (p >= 0 and math.isfinite(p)):
            raise ParseError(f"probability out of range: {prob}", line=lineno)
        if right == "-":
            if left not in vocab:
                raise ParseError(f"unknown word {left!r}", line=lineno)
            col = C * C + vocab.lookup(left)
        else:
            col = category(left, lineno) * C + category(right, lineno)
        probs[c, col] = p
        if first_line[c] is None:
            first_line[c] = lineno
    sums = probs.sum(axis=1)
    for c in range(C):
        if abs(sums[c] - 1.0) > FILE_ROW_TOLERANCE:
            raise ParseError(f"row sum of {categories.token(c)} is {sums[c]:.12g}, expected 1",
                             line=first_line[c])
    return Grammar(probs, C, check=False), categories, vocab
