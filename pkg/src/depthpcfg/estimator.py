"""scikit-learn style estimators wrapping the sampler and the decoders."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import DataError, ParameterError
from .gibbs import MemorySink, RunConfig, detect_convergence, gibbs_run, sampling_grammar
from .inside import build_inside_charts, sample_tree, sentence_log_likelihood
from .pioc import DEFAULT_MERGE_THRESHOLD, pioc_decode, samples_by_sentence
from .trees import Corpus, right_branching_tree


def check_corpus(X) -> list[list[str]]:
    """Validate raw input: an iterable of sentences, each a string or a token sequence."""
    if isinstance(X, str):
        raise ParameterError("expected a collection of sentences, got a single string")
    try:
        items = list(X)
    except TypeError:
        raise ParameterError(f"expected an iterable of sentences, got {type(X).__name__}") from None
    if not items:
        raise ParameterError("no sentences given")
    out = []
    for n, sent in enumerate(items):
        toks = sent.split() if isinstance(sent, str) else [str(t) for t in sent]
        if not toks:
            raise DataError(f"sentence {n} is empty")
        out.append(toks)
    return out


class PCFGInducer(BaseEstimator):
    """Unsupervised (optionally depth-bounded) PCFG induction by Gibbs sampling.

    Parameters
    ----------
    max_depth : int or None, default=2
        Left-corner depth bound; ``None`` induces an unbounded grammar.
    n_categories : int, default=15
    beta : float, default=0.2
        Symmetric Dirichlet concentration.
    n_iter, burn_in, sample_every : int
        Sampler schedule; samples are kept at iterations
        ``burn_in + sample_every, burn_in + 2 * sample_every, ...``.
    containment_iters : int, default=20
    merge_threshold : float or None, default=0.3
        Flatten decoded 3-4 word constituents whose two best splits differ by
        less than this; ``None`` disables flattening.
    n_predict_samples : int, default=100
        Trees drawn per sentence by :meth:`predict`.
    random_state : int or None
    n_workers : int, default=1

    Attributes
    ----------
    vocabulary_ : Vocabulary
    grammar_ : Grammar
        Unbounded grammar of the final iteration.
    sampling_grammar_ : Grammar or BoundedGrammar
        Grammar the final trees were drawn from.
    samples_ : list of (iteration, list of Tree)
        Posterior tree samples, corpus order.
    log_likelihood_ : ndarray
        Corpus log likelihood per iteration, starting at iteration 0.
    converged_ : bool
    """

    def __init__(self, max_depth=2, n_categories=15, beta=0.2, n_iter=700, burn_in=500, sample_every=2,
                 containment_iters=20, merge_threshold=DEFAULT_MERGE_THRESHOLD, n_predict_samples=100,
                 random_state=None, n_workers=1):
        self.max_depth = max_depth
        self.n_categories = n_categories
        self.beta = beta
        self.n_iter = n_iter
        self.burn_in = burn_in
        self.sample_every = sample_every
        self.containment_iters = containment_iters
        self.merge_threshold = merge_threshold
        self.n_predict_samples = n_predict_samples
        self.random_state = random_state
        self.n_workers = n_workers

    def _config(self) -> RunConfig:
        seed = self.random_state
        if seed is None:
            seed = int(np.random.SeedSequence().entropy % (2 ** 63))
        return RunConfig(max_depth=self.max_depth, n_categories=self.n_categories, beta=self.beta,
                         iterations=self.n_iter, burn_in=self.burn_in, sample_every=self.sample_every,
                         seed=int(seed), containment_iters=self.containment_iters, workers=self.n_workers)

    def fit(self, X, y=None):
        tokens = check_corpus(X)
        config = self._config()
        corpus = Corpus.from_tokens(tokens)
        sink = MemorySink()
        state = gibbs_run(corpus, config, [sink])
        self.config_ = config
        self.vocabulary_ = corpus.vocabulary
        self.grammar_ = state.grammar
        self.sampling_grammar_ = sampling_grammar(state.grammar, config, warn=False)
        self.samples_ = sink.samples
        self.initial_trees_ = sink.initial_trees
        self.trees_ = state.trees
        self.log_likelihood_ = sink.log_likelihoods
        window = 50
        self.converged_ = (len(self.log_likelihood_) >= 2 * window
                           and detect_convergence(self.log_likelihood_, window, 1e-4))
        self._train_tokens = tokens
        return self

    def posterior_trees(self):
        """Decode the training corpus from the stored posterior samples."""
        check_is_fitted(self, "samples_")
        if not self.samples_:
            raise ParameterError("no posterior samples were collected")
        per_sentence = samples_by_sentence(trees for _, trees in self.samples_)
        return pioc_decode(per_sentence, self.merge_threshold, self._train_tokens)

    def fit_predict(self, X, y=None):
        return self.fit(X).posterior_trees()

    def predict(self, X):
        """Decode new sentences from trees sampled under the final grammar."""
        check_is_fitted(self, "sampling_grammar_")
        tokens = check_corpus(X)
        ids = [self.vocabulary_.encode(t) for t in tokens]
        charts = build_inside_charts(self.sampling_grammar_, ids)
        ss = np.random.SeedSequence([self.config_.seed, 2])
        per_sentence = []
        for chart, toks, child in zip(charts, tokens, ss.spawn(len(charts))):
            rng = np.random.default_rng(child)
            per_sentence.append([sample_tree(chart, rng=rng, words=toks).tree
                                 for _ in range(self.n_predict_samples)])
        return pioc_decode(per_sentence, self.merge_threshold, tokens)

    def score(self, X, y=None):
        """Mean per-sentence log likelihood under the final sampling grammar."""
        check_is_fitted(self, "sampling_grammar_")
        ids = [self.vocabulary_.encode(t) for t in check_corpus(X)]
        charts = build_inside_charts(self.sampling_grammar_, ids)
        return float(np.mean([sentence_log_likelihood(c) for c in charts]))


class RightBranchingBaseline(BaseEstimator):
    """Predicts ``(X w1 (X w2 (X ...)))`` for every sentence."""

    def fit(self, X=None, y=None):
        return self

    def predict(self, X):
        return [right_branching_tree(t) for t in check_corpus(X)]
