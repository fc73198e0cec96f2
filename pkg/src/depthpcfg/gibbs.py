"""Alternating Gibbs sampler over grammars and trees.

Iteration ``t`` draws ``G^t ~ Dirichlet(beta + counts(trees^{t-1}))``, derives
the bounded grammar when a depth bound is set, and resamples every tree by
inside-sampling. Random streams are derived from ``(seed, t, ...)`` so results
do not depend on worker count or scheduling, and a run resumed from a
checkpoint continues exactly as an uninterrupted run would.
"""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .bounding import (CONVERGENCE_WARNING, DEFAULT_ITERATIONS, ROOT, Position, bound_grammar, child_positions,
                       compute_containment, is_valid_position, project_counts)
from .exceptions import DataError, InternalInvariantError, ParameterError, ParseError
from .grammar import CategorySet, CountMatrix, Grammar, Vocabulary, sample_posterior_grammar, sample_prior_grammar
from .inside import ChartGrammar, build_inside_charts, sample_tree, sentence_log_likelihood
from .trees import Corpus, Tree, left_corner_depth, parse_bracketed, emit_bracketed, write_trees

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = "DEPTHPCFG-CHECKPOINT 1"
CHUNK_SIZE = 64

_GRAMMAR_STREAM = 0
_TREE_STREAM = 1


@dataclass
class RunConfig:
    """Sampler hyperparameters and schedule.

    ``max_depth=None`` runs the unbounded model. The default schedule of 700
    iterations, burn-in 500 and ``sample_every=2`` emits 100 posterior samples.
    """

    max_depth: int | None = 2
    n_categories: int = 15
    beta: float = 0.2
    iterations: int = 700
    burn_in: int = 500
    sample_every: int = 2
    seed: int = 0
    containment_iters: int = DEFAULT_ITERATIONS
    workers: int = 1
    checkpoint_every: int = 50
    debug: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.max_depth is not None and self.max_depth < 1:
            raise ParameterError("max_depth must be >= 1 or None for unbounded")
        if self.n_categories < 1:
            raise ParameterError("n_categories must be >= 1")
        if not self.beta > 0:
            raise ParameterError("beta must be positive")
        if self.iterations < 1:
            raise ParameterError("iterations must be >= 1")
        if not 0 <= self.burn_in < self.iterations:
            raise ParameterError("burn_in must satisfy 0 <= burn_in < iterations")
        if self.sample_every < 1:
            raise ParameterError("sample_every must be >= 1")
        if self.containment_iters < 1:
            raise ParameterError("containment_iters must be >= 1")
        if self.workers < 1:
            raise ParameterError("workers must be >= 1")
        if self.checkpoint_every < 1:
            raise ParameterError("checkpoint_every must be >= 1")
        return self

    @property
    def bounded(self) -> bool:
        return self.max_depth is not None

    def is_sample_iteration(self, t: int) -> bool:
        return t > self.burn_in and (t - self.burn_in) % self.sample_every == 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["max_depth"] = "unbounded" if self.max_depth is None else self.max_depth
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "max_depth" in d and d["max_depth"] in ("unbounded", "inf", None):
            d["max_depth"] = None
        return cls(**d)


@dataclass
class SamplerState:
    iteration: int
    grammar: Grammar
    trees: list
    corpus_log_lik: float
    sentence_log_liks: np.ndarray | None = None


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


def _category_index(label: str, C: int) -> int:
    if not label.startswith("c"):
        raise DataError(f"node label {label!r} is not a category token")
    try:
        c = int(label[1:])
    except ValueError:
        raise DataError(f"node label {label!r} is not a category token") from None
    if not 0 <= c < C:
        raise DataError(f"category {label!r} out of range for C={C}")
    return c


def count_rules(trees: Iterable[Tree], vocab: Vocabulary, n_categories: int,
                max_depth: int | None = None) -> CountMatrix:
    """Tally rule applications over ``trees`` into a plain count matrix.

    With ``max_depth`` set, each node's position is derived from the root at
    ``(R, 0)``, counts are kept per position and then projected back; a node
    outside the bound raises :class:`DataError`.
    """
    C = n_categories
    W = len(vocab)
    cols = C * C + W
    if max_depth is None:
        flat = np.zeros(C * cols)
        for tree in trees:
            for node in _internal_nodes(tree):
                c = _category_index(node.label, C)
                flat[c * cols + _column(node, C, vocab)] += 1
        return CountMatrix(flat.reshape(C, cols), C)

    per_position: dict[Position, np.ndarray] = {}
    for tree in trees:
        stack = [(tree, ROOT)]
        while stack:
            node, pos = stack.pop()
            if not is_valid_position(pos, max_depth):
                raise DataError(f"tree exceeds depth bound {max_depth}: node at {pos}")
            c = _category_index(node.label, C)
            col = _column(node, C, vocab)
            table = per_position.get(pos)
            if table is None:
                table = per_position[pos] = np.zeros((C, cols))
            table[c, col] += 1
            if len(node.children) == 2:
                pl, pr = child_positions(pos)
                stack.append((node.children[0], pl))
                stack.append((node.children[1], pr))
    return project_counts(per_position, C, W)


def _internal_nodes(tree: Tree):
    stack = [tree]
    while stack:
        node = stack.pop()
        if node.is_leaf:
            continue
        yield node
        if len(node.children) == 2:
            stack.extend(node.children)


def _column(node: Tree, C: int, vocab: Vocabulary) -> int:
    kids = node.children
    if len(kids) == 2:
        if kids[0].is_leaf or kids[1].is_leaf:
            raise DataError(f"binary node {node.label!r} has a bare word child")
        return _category_index(kids[0].label, C) * C + _category_index(kids[1].label, C)
    if len(kids) == 1 and kids[0].is_leaf:
        return C * C + vocab.lookup(kids[0].label)
    raise DataError(f"node {node.label!r} with {len(kids)} children is not binary")


def count_events(trees: Iterable[Tree]) -> int:
    """Number of rule applications (non-leaf nodes) across ``trees``."""
    return sum(1 for t in trees for _ in _internal_nodes(t))


def detect_convergence(trace: Sequence[float], window: int, tolerance: float) -> bool:
    """True iff the mean of the last ``window`` values is within ``tolerance``
    (relative) of the mean of the ``window`` values before it."""
    if window < 1:
        raise ParameterError("window must be >= 1")
    if len(trace) < 2 * window:
        raise ParameterError(f"trace of length {len(trace)} shorter than 2 * window = {2 * window}")
    trace = np.asarray(trace, dtype=np.float64)
    last = trace[-window:].mean()
    prev = trace[-2 * window : -window].mean()
    return bool(abs(last - prev) < tolerance * abs(prev))


# --------------------------------------------------------------------------
# per-iteration tree sampling

def _chunks(corpus: Corpus) -> list[list[int]]:
    """Fixed, worker-independent partition of sentence indices (by length, corpus order)."""
    groups: dict[int, list[int]] = {}
    for n, s in enumerate(corpus.sentences):
        groups.setdefault(len(s), []).append(n)
    out = []
    for length in sorted(groups):
        idx = groups[length]
        out.extend(idx[k : k + CHUNK_SIZE] for k in range(0, len(idx), CHUNK_SIZE))
    return out


def _sample_chunk(cg: ChartGrammar, sentences, tokens, indices, seed: int, t: int):
    charts = build_inside_charts(cg, sentences)
    trees, lls = [], []
    for chart, toks, n in zip(charts, tokens, indices):
        ll = sentence_log_likelihood(chart)
        if not math.isfinite(ll):
            raise InternalInvariantError(f"sentence {n} unparsable under the sampled grammar (iteration {t})")
        trees.append(sample_tree(chart, rng=_stream(seed, t, _TREE_STREAM, n), words=toks).tree)
        lls.append(ll)
    return indices, trees, lls


class _TreeSampler:
    def __init__(self, corpus: Corpus, workers: int):
        self.corpus = corpus
        self.chunks = _chunks(corpus)
        self.tokens = [corpus.tokens(n) for n in range(len(corpus))]
        self.pool = ProcessPoolExecutor(workers) if workers > 1 else None

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()

    def __call__(self, grammar, seed: int, t: int):
        cg = ChartGrammar.from_grammar(grammar)
        N = len(self.corpus)
        trees: list = [None] * N
        lls = np.zeros(N)
        jobs = [(cg, [self.corpus.sentences[n] for n in idx], [self.tokens[n] for n in idx], idx, seed, t)
                for idx in self.chunks]
        if self.pool is None:
            results = (_sample_chunk(*job) for job in jobs)
        else:
            results = self.pool.map(_sample_chunk, *zip(*jobs))
        for idx, ts, ls in results:
            for n, tree, ll in zip(idx, ts, ls):
                trees[n] = tree
                lls[n] = ll
        return trees, lls


def sampling_grammar(grammar: Grammar, config: RunConfig, warn: bool = True):
    """The grammar trees are drawn from: bounded when ``config.max_depth`` is set."""
    if not config.bounded:
        return grammar
    h = compute_containment(grammar, config.max_depth, config.containment_iters, warn=warn)
    return bound_grammar(grammar, h)


def gibbs_run(corpus: Corpus, config: RunConfig, sinks: Sequence = (),
              resume: SamplerState | None = None) -> SamplerState:
    """Run the sampler to ``config.iterations`` and return the final state.

    ``sinks`` receive ``trace(t, loglik)``, ``initial(trees)``,
    ``sample(t, trees)`` and ``checkpoint(state, config, vocab)`` calls.
    Passing the state loaded from a checkpoint as ``resume`` continues the run
    from the iteration after it.
    """
    config.validate()
    if len(corpus) == 0:
        raise ParameterError("corpus is empty")
    sinks = list(sinks)
    C, W = config.n_categories, len(corpus.vocabulary)
    sampler = _TreeSampler(corpus, config.workers)
    try:
        if resume is None:
            g = sample_prior_grammar(C, W, config.beta, _stream(config.seed, 0, _GRAMMAR_STREAM))
            trees, lls = sampler(sampling_grammar(g, config, warn=False), config.seed, 0)
            state = SamplerState(0, g, trees, float(lls.sum()), lls)
            for s in sinks:
                s.initial(trees)
                s.trace(0, state.corpus_log_lik)
        else:
            state = resume
            if len(state.trees) != len(corpus):
                raise DataError("checkpoint tree count does not match the corpus")
        unconverged = 0
        for t in range(state.iteration + 1, config.iterations + 1):
            counts = count_rules(state.trees, corpus.vocabulary, C, config.max_depth)
            if config.debug:
                expected = count_events(state.trees)
                if counts.total() != expected:
                    raise InternalInvariantError(f"count mass {counts.total()} != {expected} rule events")
            g = sample_posterior_grammar(counts, config.beta, _stream(config.seed, t, _GRAMMAR_STREAM))
            sg = sampling_grammar(g, config, warn=False)
            if config.bounded and sg.containment.final_change > CONVERGENCE_WARNING:
                unconverged += 1
            trees, lls = sampler(sg, config.seed, t)
            if config.debug and config.bounded:
                deep = [n for n, tr in enumerate(trees) if left_corner_depth(tr) > config.max_depth]
                if deep:
                    raise InternalInvariantError(f"sentence {deep[0]} sampled beyond depth {config.max_depth}")
            state = SamplerState(t, g, trees, float(lls.sum()), lls)
            logger.debug("iteration %d log-likelihood %.4f", t, state.corpus_log_lik)
            for s in sinks:
                s.trace(t, state.corpus_log_lik)
                if config.is_sample_iteration(t):
                    s.sample(t, trees)
                if t % config.checkpoint_every == 0 or t == config.iterations:
                    s.checkpoint(state, config, corpus.vocabulary)
        if unconverged:
            logger.warning("containment change above %.0e after %d fixed-point iterations in %d of %d sampler iterations",
                           CONVERGENCE_WARNING, config.containment_iters, unconverged,
                           config.iterations - (resume.iteration if resume else 0))
    finally:
        sampler.close()
    return state


# --------------------------------------------------------------------------
# sinks and checkpoints

class MemorySink:
    """Keeps the trace and emitted samples in memory."""

    def __init__(self, keep_checkpoints: bool = False):
        self.trace_rows: list[tuple[int, float]] = []
        self.samples: list[tuple[int, list]] = []
        self.initial_trees: list | None = None
        self.keep_checkpoints = keep_checkpoints
        self.checkpoints: list[SamplerState] = []

    def initial(self, trees):
        self.initial_trees = list(trees)

    def trace(self, t, loglik):
        self.trace_rows.append((t, loglik))

    def sample(self, t, trees):
        self.samples.append((t, list(trees)))

    def checkpoint(self, state, config, vocab):
        if self.keep_checkpoints:
            self.checkpoints.append(state)

    @property
    def log_likelihoods(self) -> np.ndarray:
        return np.array([ll for _, ll in self.trace_rows])


class DirectorySink:
    """Writes a run directory.

    Layout::

        trace.tsv              iteration<TAB>logLikelihood
        init.trees             trees sampled under the prior grammar
        samples/iter<t>.trees  one bracketed tree per line, corpus order
        checkpoint.ckpt        latest checkpoint (see save_checkpoint)
    """

    def __init__(self, directory, resume_iteration: int | None = None):
        self.directory = Path(directory)
        self.samples_dir = self.directory / "samples"
        self.samples_dir.mkdir(parents=True, exist_ok=True)
        self.trace_path = self.directory / "trace.tsv"
        self.checkpoint_path = self.directory / "checkpoint.ckpt"
        if resume_iteration is None:
            with open(self.trace_path, "w", encoding="utf-8") as fh:
                fh.write("iteration\tlogLikelihood\n")
        else:
            self._truncate_trace(resume_iteration)

    def _truncate_trace(self, last: int):
        rows = read_trace(self.trace_path) if self.trace_path.exists() else []
        with open(self.trace_path, "w", encoding="utf-8") as fh:
            fh.write("iteration\tlogLikelihood\n")
            for t, ll in rows:
                if t <= last:
                    fh.write(f"{t}\t{ll!r}\n")
        for path in self.samples_dir.glob("iter*.trees"):
            if int(path.stem[4:]) > last:
                path.unlink()

    def initial(self, trees):
        write_trees(trees, self.directory / "init.trees")

    def trace(self, t, loglik):
        with open(self.trace_path, "a", encoding="utf-8") as fh:
            fh.write(f"{t}\t{loglik!r}\n")

    def sample(self, t, trees):
        write_trees(trees, self.samples_dir / f"iter{t}.trees")

    def checkpoint(self, state, config, vocab):
        tmp = self.checkpoint_path.with_suffix(".tmp")
        save_checkpoint(tmp, state, config, vocab)
        os.replace(tmp, self.checkpoint_path)


def read_trace(path) -> list[tuple[int, float]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("iteration"):
                continue
            try:
                t, ll = line.split("\t")
                rows.append((int(t), float(ll)))
            except ValueError:
                raise ParseError("malformed trace row", line=lineno) from None
    return rows


def save_checkpoint(path, state: SamplerState, config: RunConfig, vocab: Vocabulary) -> None:
    """Write a checkpoint.

    Format: the magic line ``DEPTHPCFG-CHECKPOINT 1`` followed by one JSON
    object with keys ``iteration``, ``config``, ``rng`` (seed and next
    iteration; all streams derive from them), ``corpus_log_lik``, ``vocab``,
    ``grammar`` (rows of ``float.hex`` strings, exact) and ``trees``
    (bracketed strings, corpus order).
    """
    payload = {
        "iteration": state.iteration,
        "config": config.to_dict(),
        "rng": {"seed": config.seed, "next_iteration": state.iteration + 1},
        "corpus_log_lik": state.corpus_log_lik,
        "vocab": list(vocab.words),
        "grammar": [[float(p).hex() for p in row] for row in state.grammar.probs],
        "trees": [emit_bracketed(t) for t in state.trees],
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(CHECKPOINT_MAGIC + "\n")
        json.dump(payload, fh)
        fh.write("\n")


def load_checkpoint(path) -> tuple[SamplerState, RunConfig, Vocabulary]:
    with open(path, encoding="utf-8") as fh:
        magic = fh.readline().rstrip("\n")
        if magic != CHECKPOINT_MAGIC:
            raise ParseError(f"not a checkpoint file (header {magic!r})", line=1)
        payload = json.loads(fh.read())
    config = RunConfig.from_dict(payload["config"])
    probs = np.array([[float.fromhex(p) for p in row] for row in payload["grammar"]])
    grammar = Grammar(probs, config.n_categories, check=False)
    trees = [parse_bracketed(s) for s in payload["trees"]]
    state = SamplerState(payload["iteration"], grammar, trees, payload["corpus_log_lik"])
    return state, config, Vocabulary(payload["vocab"])
