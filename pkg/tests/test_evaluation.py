import io
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from depthpcfg.evaluation import extract_spans, f_measure, sentence_scores, unlabeled_parseval
from depthpcfg.exceptions import DataError
from depthpcfg.trees import Tree, parse_bracketed, punctuation_from_list, right_branching_tree


def t(text):
    return parse_bracketed(text)


def f1(matched, gold, pred):
    r, p = Fraction(matched, gold), Fraction(matched, pred)
    return float(r), float(p), float(2 * r * p / (r + p)) if matched else 0.0


# (gold, pred, matched, |gold|, |pred|), counted by hand
PAIRS = [
    ("(X (X a b) (X c d))", "(X a (X b (X c d)))", 2, 3, 3),
    ("(X (X a b) (X c d))", "(X (X a b) (X c d))", 3, 3, 3),
    ("(X a b)", "(X a b)", 1, 1, 1),
    ("(X (X a b) c)", "(X a (X b c))", 1, 2, 2),
    ("(X a b c d)", "(X a (X b (X c d)))", 1, 1, 3),
    ("(X a (X b (X c d)))", "(X a b c d)", 1, 3, 1),
    ("(X (X (X a b) c) (X d e))", "(X (X a b) (X c (X d e)))", 3, 4, 4),
    ("(X (X a b c) (X d e))", "(X (X a (X b c)) (X d e))", 3, 3, 4),
    ("(X (X a (X b c)) d)", "(X a (X (X b c) d))", 2, 3, 3),
    ("(X (X a b) (X (X c d) (X e f)))", "(X a (X b (X c (X d (X e f)))))", 3, 5, 5),
    ("(X (X a b) (X c d) (X e f))", "(X (X (X a b) (X c d)) (X e f))", 4, 4, 5),
    ("(S (NP (D the) (N dog)) (VP barks))", "(X the (X dog barks))", 1, 2, 2),
]


class TestHandComputed:
    @pytest.mark.parametrize("gold,pred,m,ng,np_", PAIRS)
    def test_pair(self, gold, pred, m, ng, np_):
        got = unlabeled_parseval([t(gold)], [t(pred)])
        r, p, f = f1(m, ng, np_)
        assert got.recall == r and got.precision == p
        assert got.f1 == pytest.approx(f, rel=1e-15)

    def test_two_thirds(self):
        got = unlabeled_parseval([t("(X (X a b) (X c d))")], [t("(X a (X b (X c d)))")])
        assert got == pytest.approx((2 / 3, 2 / 3, 2 / 3))

    def test_micro_average(self):
        # pooled counts 3 + 1 of 3 + 1 and 3 + 3 predicted, not a mean of per-sentence scores
        gold = [t(PAIRS[0][0]), t(PAIRS[4][0])]
        pred = [t(PAIRS[0][1]), t(PAIRS[4][1])]
        got = unlabeled_parseval(gold, pred)
        assert got.recall == 3 / 4 and got.precision == 3 / 6

    def test_negra_style_precision_ceiling(self):
        # ternary gold with 25 constituents over 50 words vs a binary prediction with 49
        words = [f"w{i}" for i in range(50)]
        node = Tree("X", (Tree(words[48]), Tree(words[49])))
        for m in range(23, -1, -1):
            node = Tree("X", (Tree(words[2 * m]), Tree(words[2 * m + 1]), node))
        gold = node
        assert sum(extract_spans(gold).values()) == 25
        got = unlabeled_parseval([gold], [right_branching_tree(words)])
        assert got.recall == 1.0
        assert got.precision == 25 / 49
        assert got.precision == pytest.approx(0.51, abs=0.005)


class TestSpans:
    @settings(max_examples=80, deadline=None)
    @given(st.integers(2, 30))
    def test_binary_tree_has_n_minus_one_spans(self, n):
        words = [f"w{i}" for i in range(n)]
        assert sum(extract_spans(right_branching_tree(words)).values()) == n - 1
        assert sum(extract_spans(right_branching_tree(words), include_root=False).values()) == n - 2

    def test_unary_chain_duplicates_counted_once_after_stripping(self):
        spans = extract_spans(t("(S (VP (V a) (N b)))"))
        assert spans[(0, 2)] == 2  # raw trees keep the multiset
        got = unlabeled_parseval([t("(S (VP (V a) (N b)))")], [t("(X a b)")])
        assert got == (1.0, 1.0, 1.0)

    def test_single_word(self):
        assert extract_spans(t("(X a)")) == {}


class TestOptions:
    def test_exclude_root(self):
        got = unlabeled_parseval([t("(X (X a b) (X c d))")], [t("(X a (X b (X c d)))")], include_root=False)
        assert got == (0.5, 0.5, 0.5)

    def test_punctuation_removed(self):
        gold = t("(S (NP (D the) (N dog)) (VP barks) (P .))")
        pred = t("(X the (X (X dog barks) .))")
        got = unlabeled_parseval([gold], [pred])
        # without the period: gold {(0,3), (0,2)}, pred {(0,3), (1,3)}
        assert got == (0.5, 0.5, 0.5)

    def test_custom_punctuation_list(self):
        pred_is = punctuation_from_list(io.StringIO("--\n"))
        got = unlabeled_parseval([t("(X (X a b) --)")], [t("(X a (X b --))")], pred_is)
        assert got == (1.0, 1.0, 1.0)

    def test_all_punctuation_sentence_skipped(self, caplog):
        gold = [t("(X . ,)"), t("(X a b)")]
        pred = [t("(X . ,)"), t("(X a b)")]
        per = sentence_scores(gold, pred)
        assert per[0].skipped and not per[1].skipped
        assert unlabeled_parseval(gold, pred) == (1.0, 1.0, 1.0)
        assert "all punctuation" in caplog.text


class TestErrors:
    def test_length_mismatch(self):
        with pytest.raises(DataError):
            unlabeled_parseval([t("(X a b)")], [])

    def test_yield_mismatch_names_sentence(self):
        with pytest.raises(DataError, match="sentence 1"):
            unlabeled_parseval([t("(X a b)"), t("(X a b)")], [t("(X a b)"), t("(X a c)")])


class TestProperties:
    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.integers(1, 9), min_size=2, max_size=12), st.randoms())
    def test_symmetry_and_bounds(self, sizes, rnd):
        words = [f"w{i}" for i in range(len(sizes))]

        def random_tree(i, j):
            if j - i == 1:
                return Tree(words[i])
            k = rnd.randint(i + 1, j - 1)
            return Tree("X", (random_tree(i, k), random_tree(k, j)))

        a, b = random_tree(0, len(words)), random_tree(0, len(words))
        ab, ba = unlabeled_parseval([a], [b]), unlabeled_parseval([b], [a])
        assert ab.recall == ba.precision and ab.precision == ba.recall
        assert ab.f1 == pytest.approx(ba.f1)
        assert 0 < ab.f1 <= 1  # the root span always matches
        assert unlabeled_parseval([a], [a]) == (1.0, 1.0, 1.0)

    def test_f_measure_zero(self):
        assert f_measure(0.0, 0.0) == 0.0
