import io
import math
import re

import pytest
from hypothesis import given, settings, strategies as st

from depthpcfg.exceptions import DataError, ParameterError, ParseError
from depthpcfg.trees import (Corpus, Tree, depth_histogram, emit_bracketed, gorn, is_punctuation,
                             left_corner_depth, parse_bracketed, punctuation_from_list, read_corpus, read_trees,
                             right_branching_tree, strip_punctuation, write_trees)

import oracles

FIG1 = ("(S (S' (C For) (S (NP (NP parts) (RC (NP (D the) (N plant)) (VP built))) (VP (V to) (V fail))))"
        " (VP (V was) (A awful)))")


def words(n):
    return [f"w{i}" for i in range(n)]


def left_branching(tokens):
    node = Tree(tokens[0])
    for tok in tokens[1:]:
        node = Tree("X", (node, Tree(tok)))
    return node


@st.composite
def binary_trees(draw, max_leaves=9):
    n = draw(st.integers(1, max_leaves))
    counter = iter(range(n))

    def build(size):
        if size == 1:
            return Tree("P", (Tree(f"w{next(counter)}"),))
        k = draw(st.integers(1, size - 1))
        return Tree(draw(st.sampled_from(["A", "B"])), (build(k), build(size - k)))

    return build(n)


def to_tuple(tree):
    if tree.is_preterminal:
        return (0, tree.children[0].label)
    return (0, to_tuple(tree.children[0]), to_tuple(tree.children[1]))


class TestBracketed:
    def test_parse(self):
        t = parse_bracketed("(S (NP (D the) (N dog)) (VP barks))")
        assert t.label == "S"
        assert t.leaves() == ["the", "dog", "barks"]
        assert t.children[0].children[1].is_preterminal

    def test_empty_outer_label(self):
        t = parse_bracketed("( (S (A a) (B b)))")
        assert t.label == "" and t.children[0].label == "S"

    def test_bare_leaf(self):
        assert parse_bracketed("word") == Tree("word")

    @pytest.mark.parametrize("text,message", [
        ("(S (A a)", "unbalanced '('"),
        ("(S (A a)))", "unbalanced ')'"),
        ("(S ())", "empty constituent"),
        ("   ", "empty tree"),
        ("(S a) (T b)", "trailing"),
    ])
    def test_errors(self, text, message):
        with pytest.raises(ParseError, match=re.escape(message)):
            parse_bracketed(text)

    def test_error_offset(self):
        with pytest.raises(ParseError) as info:
            parse_bracketed("(S (A a)))")
        assert info.value.offset == 9

    def test_read_reports_line(self):
        with pytest.raises(ParseError) as info:
            read_trees(io.StringIO("(S a)\n\n(S (b)\n"))
        assert info.value.line == 3

    @settings(max_examples=100, deadline=None)
    @given(binary_trees())
    def test_round_trip(self, tree):
        text = emit_bracketed(tree)
        assert parse_bracketed(text) == tree
        assert emit_bracketed(parse_bracketed(text)) == text

    def test_write_wraps_bare_leaf(self):
        buf = io.StringIO()
        write_trees([Tree("solo"), parse_bracketed("(X a b)")], buf)
        assert buf.getvalue() == "(X solo)\n(X a b)\n"


class TestTree:
    def test_spans_and_addresses(self):
        t = parse_bracketed("(X (X a b) c)")
        assert [(i, j) for _, i, j in t.spans()] == [(0, 3), (0, 2)]
        addrs = [a for a, n in t.iter_addressed() if not n.is_leaf]
        assert addrs == [(), (0,)]
        assert gorn((0, 1)) == "lr"
        assert t.node_at((0, 1)) == Tree("b")


class TestPunctuation:
    def test_default_predicate(self):
        assert is_punctuation(",") and is_punctuation("--") and is_punctuation("$")
        assert not is_punctuation("a,") and not is_punctuation("")

    def test_collapse(self):
        t = parse_bracketed("(X (a w1) (b ,))")
        assert strip_punctuation(t) == parse_bracketed("(a w1)")

    def test_no_punctuation_unchanged(self):
        t = parse_bracketed("(S (A a) (B (C b) (D c)))")
        assert strip_punctuation(t) is t

    def test_all_punctuation(self):
        assert strip_punctuation(parse_bracketed("(X (a .) (b .))")) is None

    def test_list_predicate(self):
        p = punctuation_from_list(io.StringIO("``\n''\n"))
        t = parse_bracketed("(S (Q ``) (X (A a) (B b)) (Q ''))")
        assert strip_punctuation(t, p) == parse_bracketed("(X (A a) (B b))")

    @settings(max_examples=60, deadline=None)
    @given(binary_trees(), st.sets(st.integers(0, 8)))
    def test_idempotent_and_yield(self, tree, punct_ids):
        marks = {f"w{i}" for i in punct_ids}
        pred = marks.__contains__
        once = strip_punctuation(tree, pred)
        expected = [w for w in tree.leaves() if w not in marks]
        if once is None:
            assert expected == []
        else:
            assert once.leaves() == expected
            assert strip_punctuation(once, pred) == once


class TestRightBranching:
    def test_shape(self):
        t = right_branching_tree(words(4))
        assert emit_bracketed(t) == "(X w0 (X w1 (X w2 w3)))"
        assert {(i, j) for _, i, j in t.spans()} == {(0, 4), (1, 4), (2, 4)}

    def test_edges(self):
        assert right_branching_tree(["a"]) == Tree("a")
        assert emit_bracketed(right_branching_tree(["a", "b"])) == "(X a b)"
        with pytest.raises(ParameterError):
            right_branching_tree([])


class TestDepth:
    def test_figure_tree(self):
        assert left_corner_depth(parse_bracketed(FIG1)) == 3

    @pytest.mark.parametrize("n", [2, 3, 7, 15])
    def test_branching_extremes(self, n):
        assert left_corner_depth(right_branching_tree(words(n))) == 1
        assert left_corner_depth(left_branching(words(n))) == 1

    def test_single_word(self):
        assert left_corner_depth(parse_bracketed("(X a)")) == 0

    def test_center_embedding(self):
        # the right spine is depth 0, so the embedding needs a left constituent around it
        assert left_corner_depth(parse_bracketed("(X a (X (X b c) d))")) == 1
        assert left_corner_depth(parse_bracketed("(X (X a (X (X b c) d)) e)")) == 2

    def test_non_binary(self):
        with pytest.raises(DataError):
            left_corner_depth(parse_bracketed("(X a b c)"))

    @settings(max_examples=150, deadline=None)
    @given(binary_trees(max_leaves=12))
    def test_matches_manual_propagation(self, tree):
        d = left_corner_depth(tree)
        assert d == oracles.manual_depth(to_tuple(tree))
        assert d <= math.ceil(len(tree.leaves()) / 2)

    def test_histogram(self):
        trees = [right_branching_tree(words(3)), parse_bracketed("(X (X a (X (X b c) d)) e)")]
        assert depth_histogram(trees) == {1: 0.5, 2: 0.5}
        assert depth_histogram([right_branching_tree(words(5))] * 3) == {1: 1.0}
        with pytest.raises(ParameterError):
            depth_histogram([])


class TestCorpus:
    def test_read(self):
        c = read_corpus(io.StringIO("a b\n\nb c a\n"))
        assert len(c) == 2
        assert c.tokens(1) == ["b", "c", "a"]
        assert list(c.sentences[1]) == [1, 2, 0]

    def test_empty(self):
        with pytest.raises(DataError):
            read_corpus(io.StringIO("\n\n"))
        with pytest.raises(DataError):
            Corpus.from_tokens([["a"], []])
