"""Unsupervised PCFG induction with left-corner depth bounding."""

from .bounding import (BoundedGrammar, Containment, Position, ROOT, bound_grammar, compute_containment,
                       project_counts, read_bounded_grammar, write_bounded_grammar)
from .estimator import PCFGInducer, RightBranchingBaseline
from .evaluation import Scores, extract_spans, unlabeled_parseval
from .exceptions import (DataError, DegenerateGrammarError, InternalInvariantError, ParameterError, ParseError,
                         PCFGError, SamplingError)
from .gibbs import RunConfig, SamplerState, count_rules, gibbs_run, load_checkpoint, save_checkpoint
from .grammar import (CategorySet, CountMatrix, Grammar, Vocabulary, read_grammar, sample_posterior_grammar,
                      sample_prior_grammar, write_grammar)
from .inside import ChartGrammar, build_inside_chart, build_inside_charts, sample_tree, sentence_log_likelihood
from .pioc import SpanStats, map_decode, merge_uncertain_spans, pioc_decode
from .trees import (Corpus, Tree, left_corner_depth, parse_bracketed, read_corpus, read_trees, right_branching_tree,
                    strip_punctuation, write_trees)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
