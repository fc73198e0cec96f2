"""Forward sampling from a grammar and a small hand-built English-like grammar.

Used to make corpora with known trees for recovery experiments.
"""

from __future__ import annotations

import numpy as np

from .exceptions import ParameterError
from .grammar import Grammar, Vocabulary
from .trees import Tree

NOUNS = ["dog", "cat", "bird", "man", "woman", "child", "car", "tree", "house", "river"]
ADJECTIVES = ["old", "big", "red", "small", "happy", "quiet"]
TRANSITIVE = ["sees", "likes", "finds", "chases", "helps", "knows"]
INTRANSITIVE = ["sleeps", "runs", "sings", "waits", "falls"]
ADVERBS = ["very", "rather", "quite", "too"]


def generate_tree(g: Grammar, vocab: Vocabulary, rng, root: int = 0, max_nodes: int = 200) -> Tree:
    """Sample one tree top-down from ``g``; raises if it grows past ``max_nodes``."""
    C = g.n_categories
    cum = np.cumsum(g.probs, axis=1)
    budget = [max_nodes]

    def expand(c):
        budget[0] -= 1
        if budget[0] < 0:
            raise ParameterError("generated tree exceeded max_nodes")
        col = int(np.searchsorted(cum[c], rng.random() * cum[c, -1], side="right"))
        col = min(col, cum.shape[1] - 1)
        if col >= C * C:
            return Tree(f"c{c}", (Tree(vocab.words[col - C * C]),))
        a, b = divmod(col, C)
        return Tree(f"c{c}", (expand(a), expand(b)))

    return expand(root)


def english_like_grammar(subject_rate: float = 0.45, verb_rate: float = 0.25, modifier_rate: float = 0.4,
                         adverb_rate: float = 0.3) -> tuple[Grammar, Vocabulary]:
    """Five categories T, NP, AP, ADV, V.

    Every right-spine node is T, so the grammar lies inside the depth-bounded
    model family; adverb-modified modifiers inside the right part of a
    subject reach left-corner depth 2, nothing goes deeper. ::

        T   -> NP T | V T | noun | intransitive verb
        NP  -> AP NP | noun
        AP  -> ADV AP | adjective
        ADV -> adverb
        V   -> transitive verb
    """
    T, NP, AP, ADV, V = range(5)
    C = 5
    words = NOUNS + ADJECTIVES + ADVERBS + TRANSITIVE + INTRANSITIVE
    vocab = Vocabulary(words)
    probs = np.zeros((C, C * C + len(words)))

    def spread(row, items, mass):
        for w in items:
            probs[row, C * C + vocab.lookup(w)] = mass / len(items)

    lexical_t = 1 - subject_rate - verb_rate
    if lexical_t <= 0:
        raise ParameterError("subject_rate + verb_rate must be below 1")
    probs[T, NP * C + T] = subject_rate
    probs[T, V * C + T] = verb_rate
    spread(T, NOUNS, lexical_t / 2)
    spread(T, INTRANSITIVE, lexical_t / 2)
    probs[NP, AP * C + NP] = modifier_rate
    spread(NP, NOUNS, 1 - modifier_rate)
    probs[AP, ADV * C + AP] = adverb_rate
    spread(AP, ADJECTIVES, 1 - adverb_rate)
    spread(ADV, ADVERBS, 1.0)
    spread(V, TRANSITIVE, 1.0)
    return Grammar(probs, C), vocab


def synthetic_treebank(n_sentences: int, seed: int = 0, **grammar_kw) -> tuple[list[Tree], Grammar, Vocabulary]:
    g, vocab = english_like_grammar(**grammar_kw)
    rng = np.random.default_rng(seed)
    return [generate_tree(g, vocab, rng) for _ in range(n_sentences)], g, vocab
