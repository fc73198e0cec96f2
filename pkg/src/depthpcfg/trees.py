"""Trees, bracketed I/O, corpora, punctuation handling and left-corner depth."""

from __future__ import annotations

import logging
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .bounding import ROOT, Position, child_positions
from .exceptions import DataError, ParameterError, ParseError
from .grammar import Vocabulary

logger = logging.getLogger(__name__)

UNLABELED = "X"


@dataclass(frozen=True)
class Tree:
    """Immutable ordered tree. Leaves are trees without children; their label is the word."""

    label: str
    children: tuple = ()

    def __post_init__(self):
        if not isinstance(self.children, tuple):
            object.__setattr__(self, "children", tuple(self.children))

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def is_preterminal(self) -> bool:
        return len(self.children) == 1 and self.children[0].is_leaf

    def leaves(self) -> list[str]:
        if self.is_leaf:
            return [self.label]
        out = []
        stack = [self]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node.label)
            else:
                stack.extend(reversed(node.children))
        return out

    def __len__(self):
        return len(self.leaves())

    def iter_addressed(self) -> Iterator[tuple[tuple, "Tree"]]:
        """Yield ``(address, node)`` pairs in preorder.

        Addresses are tuples of child indices from the root; for binary nodes
        index 0 is the left branch and 1 the right.
        """
        stack = [((), self)]
        while stack:
            addr, node = stack.pop()
            yield addr, node
            for i in range(len(node.children) - 1, -1, -1):
                stack.append((addr + (i,), node.children[i]))

    def node_at(self, address: Sequence[int]) -> "Tree":
        node = self
        for i in address:
            node = node.children[i]
        return node

    def spans(self) -> Iterator[tuple["Tree", int, int]]:
        """Yield ``(node, start, end)`` for every non-leaf node, preorder."""
        out = []

        def walk(node, start):
            if node.is_leaf:
                return start + 1
            idx = len(out)
            out.append(None)
            end = start
            for child in node.children:
                end = walk(child, end)
            out[idx] = (node, start, end)
            return end

        walk(self, 0)
        return iter(out)

    def __str__(self):
        return emit_bracketed(self)


def gorn(address: Sequence[int]) -> str:
    """Render a binary address with ``l``/``r`` letters (the root is empty)."""
    return "".join("lr"[i] if i < 2 else f".{i}" for i in address)


def leaf(word: str) -> Tree:
    return Tree(word)


# --------------------------------------------------------------------------
# bracketed format

def _tokenize(line: str):
    i, n = 0, len(line)
    while i < n:
        ch = line[i]
        if ch.isspace():
            i += 1
        elif ch in "()":
            yield ch, i
            i += 1
        else:
            j = i
            while j < n and not line[j].isspace() and line[j] not in "()":
                j += 1
            yield line[i:j], i
            i = j


def parse_bracketed(line: str) -> Tree:
    """Parse one ``(LABEL child child ...)`` expression; a bare token is a leaf.

    An opening bracket directly followed by another one gives an empty label,
    as in the outer bracket of Penn Treebank files.
    """
    tokens = list(_tokenize(line))
    if not tokens:
        raise ParseError("empty tree", offset=0)
    if tokens[0][0] not in "()":
        if len(tokens) > 1:
            raise ParseError("trailing material after leaf", offset=tokens[1][1])
        return Tree(tokens[0][0])
    stack: list[tuple[str, list, int]] = []
    result = None
    i = 0
    while i < len(tokens):
        tok, off = tokens[i]
        if result is not None:
            if tok == ")":
                raise ParseError("unbalanced ')'", offset=off)
            raise ParseError("trailing material after tree", offset=off)
        if tok == "(":
            label = ""
            if i + 1 < len(tokens) and tokens[i + 1][0] not in "()":
                label = tokens[i + 1][0]
                i += 1
            stack.append((label, [], off))
        elif tok == ")":
            if not stack:
                raise ParseError("unbalanced ')'", offset=off)
            label, children, start = stack.pop()
            if not children:
                raise ParseError("empty constituent", offset=start)
            node = Tree(label, tuple(children))
            if stack:
                stack[-1][1].append(node)
            else:
                result = node
        else:
            if not stack:
                raise ParseError("token outside brackets", offset=off)
            stack[-1][1].append(Tree(tok))
        i += 1
    if stack:
        raise ParseError("unbalanced '(': missing closing bracket", offset=stack[-1][2])
    return result


def emit_bracketed(tree: Tree) -> str:
    if tree.is_leaf:
        return tree.label
    parts = []

    def walk(node):
        if node.is_leaf:
            parts.append(node.label)
            return
        parts.append("(" + node.label)
        for child in node.children:
            parts.append(" ")
            walk(child)
        parts.append(")")

    walk(tree)
    return "".join(parts)


def read_trees(source) -> list[Tree]:
    """Read one bracketed tree per non-blank line from a path or text handle."""
    if hasattr(source, "read"):
        lines = source.read().splitlines()
    else:
        with open(source, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    trees = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            trees.append(parse_bracketed(line))
        except ParseError as e:
            raise ParseError(str(e), line=lineno) from None
    return trees


def write_trees(trees: Iterable[Tree], dest, wrap_leaves: bool = True) -> None:
    """Write trees one per line; a bare-leaf tree is written as ``(X w)``."""
    lines = []
    for t in trees:
        if t.is_leaf and wrap_leaves:
            t = Tree(UNLABELED, (t,))
        lines.append(emit_bracketed(t) + "\n")
    if hasattr(dest, "write"):
        dest.writelines(lines)
    else:
        with open(dest, "w", encoding="utf-8") as fh:
            fh.writelines(lines)


# --------------------------------------------------------------------------
# corpus

@dataclass
class Corpus:
    """Tokenized sentences with their integer encoding."""

    sentences: list
    vocabulary: Vocabulary
    raw: list = field(default_factory=list)

    def __post_init__(self):
        W = len(self.vocabulary)
        for n, s in enumerate(self.sentences):
            if len(s) and (np.min(s) < 0 or np.max(s) >= W):
                raise DataError(f"sentence {n} has a token id outside the vocabulary")

    @classmethod
    def from_tokens(cls, token_lists: Sequence[Sequence[str]], vocabulary: Vocabulary | None = None) -> "Corpus":
        token_lists = [list(t) for t in token_lists]
        for n, toks in enumerate(token_lists):
            if not toks:
                raise DataError(f"sentence {n} is empty")
        vocab = vocabulary or Vocabulary.from_sentences(token_lists)
        return cls([vocab.encode(t) for t in token_lists], vocab, token_lists)

    def __len__(self):
        return len(self.sentences)

    def tokens(self, index: int) -> list[str]:
        if self.raw:
            return list(self.raw[index])
        return self.vocabulary.decode(self.sentences[index])


def read_corpus(source, vocabulary: Vocabulary | None = None) -> Corpus:
    """Read one whitespace-tokenized sentence per line; blank lines are skipped."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    token_lists = [line.split() for line in text.splitlines() if line.strip()]
    if not token_lists:
        raise DataError("corpus is empty")
    return Corpus.from_tokens(token_lists, vocabulary)


# --------------------------------------------------------------------------
# punctuation

def is_punctuation(token: str) -> bool:
    """True iff every character is Unicode punctuation (P*) or a symbol (S*)."""
    return bool(token) and all(unicodedata.category(ch)[0] in "PS" for ch in token)


def punctuation_from_list(source) -> Callable[[str], bool]:
    """Predicate from a file (or iterable) listing one punctuation token per line."""
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, encoding="utf-8") as fh:
            items = fh.read().splitlines()
    elif hasattr(source, "read"):
        items = source.read().splitlines()
    else:
        items = list(source)
    punct = frozenset(t.strip() for t in items if t.strip())
    return punct.__contains__


def strip_punctuation(tree: Tree, is_punct: Callable[[str], bool] = is_punctuation) -> Tree | None:
    """Delete punctuation leaves, prune emptied nodes and collapse unary chains.

    Preterminals (a node over a single word) are kept. Returns ``None`` when
    nothing but punctuation remains.
    """

    def walk(node):
        if node.is_leaf:
            return None if is_punct(node.label) else node
        kids = [k for k in (walk(c) for c in node.children) if k is not None]
        if not kids:
            return None
        if len(kids) == 1 and not kids[0].is_leaf:
            return kids[0]
        if len(kids) == len(node.children) and all(a is b for a, b in zip(kids, node.children)):
            return node
        return Tree(node.label, tuple(kids))

    return walk(tree)


# --------------------------------------------------------------------------
# baselines and depth

def right_branching_tree(tokens: Sequence[str]) -> Tree:
    """``(X w1 (X w2 (X w3 w4)))``; a single token gives a bare leaf."""
    if len(tokens) == 0:
        raise ParameterError("cannot build a tree for an empty sentence")
    node = Tree(tokens[-1])
    for tok in reversed(tokens[:-1]):
        node = Tree(UNLABELED, (Tree(tok), node))
    return node


def node_positions(tree: Tree) -> Iterator[tuple[Tree, Position]]:
    """Yield every non-leaf node with its left-corner position, root at (R, 0).

    Raises :class:`DataError` on nodes that are neither binary nor preterminal.
    """
    stack = [(tree, ROOT)]
    while stack:
        node, pos = stack.pop()
        if node.is_leaf:
            continue
        yield node, pos
        n = len(node.children)
        if n == 2:
            pl, pr = child_positions(pos)
            stack.append((node.children[1], pr))
            stack.append((node.children[0], pl))
        elif n != 1 or not node.children[0].is_leaf:
            raise DataError(f"node {node.label!r} with {n} children is not binary")


def left_corner_depth(tree: Tree) -> int:
    """Number of left-corner stack elements the tree needs.

    The deepest position of a binary-branching node, with a floor of one for
    any tree with two or more words; lexical nodes do not count. A single word
    has depth 0.
    """
    deepest = None
    for node, pos in node_positions(tree):
        if len(node.children) == 2:
            deepest = pos.depth if deepest is None else max(deepest, pos.depth)
    if deepest is None:
        return 0
    return max(1, deepest)


def depth_histogram(trees: Iterable[Tree]) -> dict[int, float]:
    """Fraction of trees at each left-corner depth."""
    counts = Counter(left_corner_depth(t) for t in trees)
    n = sum(counts.values())
    if n == 0:
        raise ParameterError("depth histogram of an empty tree collection")
    return {d: counts[d] / n for d in sorted(counts)}
