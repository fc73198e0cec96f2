import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from depthpcfg.bounding import bound_grammar, compute_containment
from depthpcfg.exceptions import DataError, DegenerateGrammarError, ParameterError, SamplingError
from depthpcfg.grammar import Grammar, sample_prior_grammar
from depthpcfg.inside import (ChartGrammar, build_inside_chart, build_inside_charts, sample_tree,
                              sentence_log_likelihood)
from depthpcfg.trees import emit_bracketed

import oracles


def toy(binary=0.4):
    return Grammar([[binary, 1 - binary]], 1)


def bounded(g, D):
    return bound_grammar(g, compute_containment(g, D, warn=False))


class TestChartGrammar:
    def test_unbounded_layout(self):
        cg = ChartGrammar.from_grammar(sample_prior_grammar(3, 2, 1.0, seed=0))
        assert cg.n_slots == 3 and len(cg.blocks) == 1
        assert cg.blocks[0].table.shape == (3, 9)

    def test_bounded_layout(self):
        g = sample_prior_grammar(3, 2, 1.0, seed=0)
        cg = ChartGrammar.from_grammar(bounded(g, 2))
        assert cg.n_slots == 2 * 2 * 3 + 3 + 1
        # every position except (L, D+1) has a block
        assert len(cg.blocks) == 5
        assert cg.labels[0] == "c0"

    def test_rejects_other_types(self):
        with pytest.raises(ParameterError):
            ChartGrammar.from_grammar("grammar")


class TestInside:
    def test_toy_two_words(self):
        chart = build_inside_chart(toy(), [0, 0])
        assert chart.likelihood(0, 2)[0] == pytest.approx(0.144, abs=1e-15)
        assert sentence_log_likelihood(chart) == pytest.approx(math.log(0.144), abs=1e-12)

    @pytest.mark.parametrize("path", ["naive", "batched"])
    def test_matches_enumeration(self, path):
        rng = np.random.default_rng(5)
        probs = oracles.random_grammar(rng, 2, 3)
        g = Grammar(probs, 2)
        words = [2, 0, 1, 1, 0]
        _, z = oracles.exact_posterior(words, 2, lambda t: oracles.unbounded_prob(probs, 2, t))
        assert sentence_log_likelihood(build_inside_chart(g, words, path)) == pytest.approx(math.log(z), rel=1e-12)

    @pytest.mark.parametrize("D", [1, 2])
    def test_bounded_matches_enumeration(self, D):
        rng = np.random.default_rng(6)
        probs = oracles.random_grammar(rng, 2, 2)
        bg = bounded(Grammar(probs, 2), D)
        words = [0, 1, 1, 0, 0]
        _, z = oracles.exact_posterior(words, 2, lambda t: oracles.bounded_prob(bg, t))
        assert sentence_log_likelihood(build_inside_chart(bg, words)) == pytest.approx(math.log(z), rel=1e-12)

    def test_rescaling_long_sentence(self):
        # one category, one word: P(w^n) = Catalan(n-1) b^(n-1) (1-b)^n
        b, n = 0.001, 200
        chart = build_inside_chart(toy(b), [0] * n)
        log_catalan = math.lgamma(2 * n - 1) - math.lgamma(n + 1) - math.lgamma(n)
        expected = log_catalan + (n - 1) * math.log(b) + n * math.log(1 - b)
        assert expected < -700  # would underflow without rescaling
        assert sentence_log_likelihood(chart) == pytest.approx(expected, rel=1e-12)
        assert np.all(chart.values <= 1.0)

    def test_batched_groups_lengths(self):
        g = sample_prior_grammar(3, 4, 0.5, seed=1)
        sents = [[0, 1], [2, 3, 1], [1, 0], [3], [0, 0, 0]]
        many = build_inside_charts(g, sents)
        for s, chart in zip(sents, many):
            single = build_inside_chart(g, s, "naive")
            np.testing.assert_allclose(chart.values, single.values, rtol=1e-12, atol=0)
            np.testing.assert_array_equal(chart.scale_log, single.scale_log)

    @settings(max_examples=40, deadline=None)
    @given(C=st.integers(1, 3), W=st.integers(1, 3), D=st.sampled_from([None, 1, 2, 3]),
           L=st.integers(1, 8), seed=st.integers(0, 2**31))
    def test_paths_agree(self, C, W, D, L, seed):
        g = sample_prior_grammar(C, W, 0.5, seed=seed)
        grammar = g if D is None else bounded(g, D)
        words = np.random.default_rng(seed).integers(0, W, size=L)
        a = build_inside_chart(grammar, words, "naive")
        b = build_inside_chart(grammar, words, "batched")
        np.testing.assert_array_equal(a.scale_log, b.scale_log)
        np.testing.assert_allclose(a.values, b.values, rtol=1e-12, atol=0)

    def test_unparsable_sentence(self):
        probs = np.array([[0.5, 0.5, 0.0]])  # word 1 is never emitted
        chart = build_inside_chart(Grammar(probs, 1), [0, 1])
        assert sentence_log_likelihood(chart) == -math.inf
        with pytest.raises(SamplingError):
            sample_tree(chart, rng=0)

    def test_errors(self):
        with pytest.raises(DataError):
            build_inside_chart(toy(), [0, 3])
        with pytest.raises(ParameterError):
            build_inside_chart(toy(), [])
        with pytest.raises(ParameterError):
            build_inside_chart(toy(), [0], path="fast")

    def test_unusable_root(self):
        # T only rewrites to a category that never terminates
        probs = np.zeros((2, 5))
        probs[0, 1 * 2 + 0] = 1.0  # T -> c1 T
        probs[1, 1 * 2 + 1] = 1.0  # c1 -> c1 c1
        bg = bounded(Grammar(probs, 2), 1)
        with pytest.raises(DegenerateGrammarError):
            build_inside_chart(bg, [0])


class TestSampling:
    def test_log_prob_is_posterior(self):
        rng = np.random.default_rng(8)
        probs = oracles.random_grammar(rng, 2, 2)
        g = Grammar(probs, 2)
        words = [0, 1, 1, 0]
        post, _ = oracles.exact_posterior(words, 2, lambda t: oracles.unbounded_prob(probs, 2, t))
        chart = build_inside_chart(g, words)
        for s in range(30):
            draw = sample_tree(chart, rng=s)
            assert draw.log_prob == pytest.approx(math.log(post[emit_bracketed(draw.tree)]), abs=1e-10)

    def test_distribution_small_case(self):
        probs = oracles.random_grammar(np.random.default_rng(2), 2, 2)
        bg = bounded(Grammar(probs, 2), 1)
        words = [1, 0, 1]
        post, _ = oracles.exact_posterior(words, 2, lambda t: oracles.bounded_prob(bg, t))
        chart = build_inside_chart(bg, words)
        rng = np.random.default_rng(0)
        n = 20000
        counts = Counter(emit_bracketed(sample_tree(chart, rng=rng).tree) for _ in range(n))
        assert set(counts) <= set(post)
        tv = 0.5 * sum(abs(counts.get(k, 0) / n - p) for k, p in post.items())
        assert tv < 0.02

    def test_words_and_depth(self):
        g = sample_prior_grammar(3, 3, 0.3, seed=9)
        bg = bounded(g, 2)
        chart = build_inside_chart(bg, [0, 1, 2, 0, 1, 2, 0])
        from depthpcfg.trees import left_corner_depth
        for s in range(200):
            t = sample_tree(chart, rng=s, words=list("abcabca")).tree
            assert t.leaves() == list("abcabca")
            assert left_corner_depth(t) <= 2

    def test_seeded(self):
        g = sample_prior_grammar(3, 3, 0.3, seed=9)
        chart = build_inside_chart(g, [0, 1, 2, 2])
        assert sample_tree(chart, rng=4).tree == sample_tree(chart, rng=4).tree
