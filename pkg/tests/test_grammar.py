import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from depthpcfg.exceptions import DataError, ParameterError, ParseError
from depthpcfg.grammar import (CategorySet, CountMatrix, Grammar, Vocabulary, read_grammar, sample_posterior_grammar,
                               sample_prior_grammar, write_grammar)


def toy_grammar():
    # one category, one word: c -> c c 0.4, c -> w 0.6
    return Grammar([[0.4, 0.6]], 1)


class TestVocabulary:
    def test_first_occurrence_order(self):
        v = Vocabulary.from_sentences([["b", "a"], ["a", "c"]])
        assert v.words == ("b", "a", "c")
        assert list(v.encode(["c", "b"])) == [2, 0]
        assert v.decode([1, 2]) == ["a", "c"]

    def test_unknown_token(self):
        with pytest.raises(DataError, match="zz"):
            Vocabulary(["a"]).lookup("zz")

    def test_duplicates_rejected(self):
        with pytest.raises(ParameterError):
            Vocabulary(["a", "a"])


def test_category_tokens():
    cats = CategorySet(3)
    assert cats.token(2) == "c2"
    assert cats.parse_token("c1") == 1
    with pytest.raises(DataError):
        cats.parse_token("c3")
    with pytest.raises(ParameterError):
        CategorySet(2, top=2)


class TestGrammar:
    def test_views(self):
        g = toy_grammar()
        assert g.binary.shape == (1, 1, 1)
        assert g.binary[0, 0, 0] == 0.4
        assert g.terminal_mass[0] == pytest.approx(0.6)
        assert g.n_words == 1

    def test_read_only(self):
        g = toy_grammar()
        with pytest.raises(ValueError):
            g.probs[0, 0] = 1.0

    def test_bad_rows(self):
        with pytest.raises(DataError, match="row 0"):
            Grammar([[0.5, 0.6]], 1)
        with pytest.raises(DataError):
            Grammar([[1.5, -0.5]], 1)
        with pytest.raises(ParameterError):
            Grammar(np.ones((2, 4)) / 4, 2)  # no word columns


class TestDirichlet:
    def test_prior_mean(self):
        # E[p] = 1/K for a symmetric Dirichlet over K outcomes
        C, W, beta = 2, 2, 0.5
        K = C * C + W
        draws = np.array([sample_prior_grammar(C, W, beta, seed=s).probs for s in range(20000)])
        mean = draws.mean(axis=0)
        se = np.sqrt((1 / K) * (1 - 1 / K) / (K * beta + 1) / len(draws))
        assert np.all(np.abs(mean - 1 / K) < 5 * se)

    def test_prior_marginal_is_beta(self):
        # one Dirichlet component is Beta(beta, (K - 1) * beta)
        C, W, beta = 1, 3, 0.2
        K = C * C + W
        x = np.array([sample_prior_grammar(C, W, beta, seed=s).probs[0, 1] for s in range(5000)])
        assert stats.kstest(x, stats.beta(beta, (K - 1) * beta).cdf).pvalue > 1e-3

    def test_posterior_mean(self):
        counts = CountMatrix([[3.0, 0.0, 1.0, 6.0, 0.0]], 1)
        beta = 0.2
        expected = (counts.counts + beta) / (counts.counts + beta).sum(axis=1, keepdims=True)
        draws = np.array([sample_posterior_grammar(counts, beta, seed=s).probs for s in range(20000)])
        alpha0 = counts.total() + 5 * beta
        se = np.sqrt(expected * (1 - expected) / (alpha0 + 1) / len(draws))
        assert np.all(np.abs(draws.mean(axis=0) - expected) < 5 * se + 1e-12)

    def test_zero_counts_match_prior(self):
        zero = CountMatrix.zeros(3, 4)
        a = sample_posterior_grammar(zero, 0.2, seed=7).probs
        b = sample_prior_grammar(3, 4, 0.2, seed=7).probs
        np.testing.assert_array_equal(a, b)

    def test_reproducible(self):
        a = sample_prior_grammar(4, 5, 0.2, seed=np.random.SeedSequence([1, 2]))
        b = sample_prior_grammar(4, 5, 0.2, seed=np.random.SeedSequence([1, 2]))
        np.testing.assert_array_equal(a.probs, b.probs)

    def test_bad_beta(self):
        with pytest.raises(ParameterError):
            sample_prior_grammar(2, 2, 0.0)
        with pytest.raises(ParameterError):
            sample_posterior_grammar(CountMatrix.zeros(1, 1), -1.0)

    def test_negative_counts(self):
        with pytest.raises(DataError):
            CountMatrix([[-1.0, 2.0]], 1)

    @settings(max_examples=40, deadline=None)
    @given(C=st.integers(1, 4), W=st.integers(1, 5), beta=st.floats(0.05, 3.0), seed=st.integers(0, 2**32 - 1))
    def test_rows_stochastic(self, C, W, beta, seed):
        g = sample_prior_grammar(C, W, beta, seed=seed)
        assert g.probs.shape == (C, C * C + W)
        assert np.all(g.probs >= 0)
        np.testing.assert_allclose(g.probs.sum(axis=1), 1.0, atol=1e-12)


class TestGrammarFile:
    def test_round_trip(self):
        g = sample_prior_grammar(3, 4, 0.3, seed=3)
        vocab = Vocabulary(["a", "b", "c", "d"])
        text = write_grammar(g, CategorySet(3), vocab)
        g2, cats, vocab2 = read_grammar(text)
        np.testing.assert_array_equal(g.probs, g2.probs)
        assert cats.count == 3 and vocab2 == vocab

    def test_handle_output(self):
        buf = io.StringIO()
        write_grammar(toy_grammar(), out=buf)
        assert "c0\tc0\tc0\t0.4" in buf.getvalue()

    def test_unknown_category(self):
        text = "categories\t1\nvocab\tw\nc0\tc1\tc0\t1.0\n"
        with pytest.raises(ParseError, match="unknown category"):
            read_grammar(text)

    def test_unknown_word(self):
        text = "categories\t1\nvocab\tw\nc0\tq\t-\t1.0\n"
        with pytest.raises(ParseError, match="unknown word"):
            read_grammar(text)

    def test_row_sum_reports_line(self):
        text = "categories\t1\nvocab\tw\nc0\tc0\tc0\t0.4\nc0\tw\t-\t0.5\n"
        with pytest.raises(ParseError, match="row sum") as info:
            read_grammar(text)
        assert info.value.line == 3

    def test_malformed(self):
        with pytest.raises(ParseError, match="malformed"):
            read_grammar("categories\t1\nvocab\tw\nc0 w\n")
