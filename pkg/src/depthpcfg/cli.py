"""Command-line front end.

Subcommands: ``induce``, ``bound``, ``pioc``, ``eval``, ``baseline``, ``analyze``.
"""

from __future__ import annotations

import argparse
import glob
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import stats as sps

from .bounding import DEFAULT_ITERATIONS, bound_grammar, compute_containment, write_bounded_grammar
from .evaluation import sentence_scores, unlabeled_parseval, f_measure
from .exceptions import DataError, ParameterError, PCFGError
from .gibbs import (DirectorySink, RunConfig, detect_convergence, gibbs_run, load_checkpoint, read_trace)
from .grammar import read_grammar
from .pioc import DEFAULT_MERGE_THRESHOLD, collect_span_stats, map_decode, merge_uncertain_spans
from .trees import (Tree, depth_histogram, is_punctuation, punctuation_from_list, read_corpus, read_trees,
                    right_branching_tree, write_trees)

logger = logging.getLogger("depthpcfg")

MANIFEST = "manifest.json"
CONVERGENCE_WINDOW = 50
CONVERGENCE_TOLERANCE = 1e-4


@dataclass
class RunManifest:
    run_directory: str
    corpus: str
    config: dict
    status: str = "running"
    final_loglik: float | None = None
    final_iteration: int | None = None

    def save(self):
        path = Path(self.run_directory) / MANIFEST
        tmp = path.with_suffix(".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)

    @classmethod
    def load(cls, run_dir) -> "RunManifest":
        with open(Path(run_dir) / MANIFEST, encoding="utf-8") as fh:
            return cls(**json.load(fh))


# --------------------------------------------------------------------------
# induce

_FLAG_TO_KEY = {
    "depth": "max_depth", "categories": "n_categories", "beta": "beta", "iterations": "iterations",
    "burn_in": "burn_in", "sample_every": "sample_every", "seed": "seed",
    "containment_iters": "containment_iters", "workers": "workers", "checkpoint_every": "checkpoint_every",
}


def _parse_depth(value):
    if value is None:
        return None
    if str(value).lower() in ("unbounded", "inf", "none"):
        return "unbounded"
    try:
        return int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"depth must be an integer or 'unbounded', got {value!r}")


def effective_config(args) -> RunConfig:
    """Flags override the config file, which overrides the defaults."""
    merged = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            merged.update(json.load(fh))
    for flag, key in _FLAG_TO_KEY.items():
        value = getattr(args, flag, None)
        if value is not None:
            merged[key] = value
    return RunConfig.from_dict(merged)


def cmd_induce(args) -> int:
    out = Path(args.out)
    manifest_path = out / MANIFEST
    corpus = read_corpus(args.corpus)
    resume_state = None
    if manifest_path.exists():
        if not args.resume:
            raise ParameterError(f"{out} already holds a run; use --resume or choose another directory")
        state, config, vocab = load_checkpoint(out / "checkpoint.ckpt")
        if vocab != corpus.vocabulary:
            raise DataError("checkpoint vocabulary does not match the corpus")
        manifest = RunManifest.load(out)
        if RunConfig.from_dict(manifest.config) != config:
            raise DataError("checkpoint config does not match the manifest")
        resume_state = state
        logger.info("resuming %s from iteration %d", out, state.iteration)
    else:
        if args.resume:
            raise ParameterError(f"nothing to resume in {out}")
        config = effective_config(args)
        out.mkdir(parents=True, exist_ok=True)
        manifest = RunManifest(str(out), str(Path(args.corpus).resolve()), config.to_dict())
        manifest.save()
    sink = DirectorySink(out, resume_iteration=None if resume_state is None else resume_state.iteration)
    state = gibbs_run(corpus, config, [sink], resume=resume_state)
    trace = [ll for _, ll in read_trace(sink.trace_path)]
    converged = (len(trace) >= 2 * CONVERGENCE_WINDOW
                 and detect_convergence(trace, CONVERGENCE_WINDOW, CONVERGENCE_TOLERANCE))
    manifest.status = "converged" if converged else "finished"
    manifest.final_loglik = state.corpus_log_lik
    manifest.final_iteration = state.iteration
    manifest.save()
    print(f"{out}\t{manifest.status}\t{state.corpus_log_lik:.4f}")
    return 0


# --------------------------------------------------------------------------
# bound

def cmd_bound(args) -> int:
    with open(args.grammar, encoding="utf-8") as fh:
        g, _cats, vocab = read_grammar(fh)
    h = compute_containment(g, args.depth, args.iterations)
    bg = bound_grammar(g, h, args.depth)
    if args.out:
        write_bounded_grammar(bg, vocab, args.out)
    else:
        sys.stdout.write(write_bounded_grammar(bg, vocab))
    return 0


# --------------------------------------------------------------------------
# pioc

def _run_sample_files(run_dir: Path) -> list[str]:
    files = sorted((run_dir / "samples").glob("iter*.trees"), key=lambda p: int(p.stem[4:]))
    return [str(p) for p in files]


def _final_loglik(run_dir: Path) -> float:
    if (run_dir / MANIFEST).exists():
        m = RunManifest.load(run_dir)
        if m.final_loglik is not None:
            return m.final_loglik
    trace = run_dir / "trace.tsv"
    if not trace.exists():
        raise DataError(f"{run_dir}: no trace.tsv")
    rows = read_trace(trace)
    if not rows:
        raise DataError(f"{run_dir}: empty trace")
    return rows[-1][1]


def select_top_runs(run_dirs, k: int) -> list[Path]:
    """The ``k`` runs with the highest final corpus log likelihood."""
    runs = sorted((Path(r) for r in run_dirs), key=_final_loglik, reverse=True)
    return runs[:k]


def expand_sample_args(items) -> list[str]:
    files = []
    for item in items:
        p = Path(item)
        if p.is_dir():
            files.extend(_run_sample_files(p))
        elif any(ch in item for ch in "*?["):
            files.extend(sorted(glob.glob(item)))
        else:
            files.append(item)
    return files


def cmd_pioc(args) -> int:
    corpus = read_corpus(args.corpus)
    items = args.samples
    if args.top_k_by_loglik:
        dirs = [Path(i) for i in items]
        if not all(d.is_dir() for d in dirs):
            raise ParameterError("--top-k-by-loglik expects run directories")
        chosen = select_top_runs(dirs, args.top_k_by_loglik)
        logger.info("selected runs: %s", ", ".join(map(str, chosen)))
        items = [str(d) for d in chosen]
    files = expand_sample_args(items)
    if not files:
        raise ParameterError("no sample files found")
    per_sentence = [[] for _ in range(len(corpus))]
    for path in files:
        trees = read_trees(path)
        if len(trees) != len(corpus):
            raise DataError(f"{path}: {len(trees)} trees for {len(corpus)} sentences")
        for n, t in enumerate(trees):
            if t.leaves() != corpus.tokens(n):
                raise DataError(f"{path}: sentence {n + 1} yield does not match the corpus")
            per_sentence[n].append(t)
    stats = collect_span_stats(per_sentence)
    decoded = []
    for n, st in enumerate(stats):
        tree = map_decode(st, corpus.tokens(n))
        if args.merge_threshold > 0:
            tree = merge_uncertain_spans(tree, st, args.merge_threshold)
        decoded.append(tree)
    write_trees(decoded, args.out)
    logger.info("decoded %d sentences from %d sample files", len(decoded), len(files))
    return 0


# --------------------------------------------------------------------------
# eval / baseline

def _punct(args):
    return punctuation_from_list(args.punct_list) if args.punct_list else is_punctuation


def cmd_eval(args) -> int:
    gold = read_trees(args.gold)
    pred = read_trees(args.pred)
    is_punct = _punct(args)
    include_root = not args.exclude_root
    scores = unlabeled_parseval(gold, pred, is_punct, include_root)
    if args.per_sentence:
        with open(args.per_sentence, "w", encoding="utf-8") as fh:
            fh.write("sentence\tmatched\tgold\tpredicted\tskipped\n")
            for s in sentence_scores(gold, pred, is_punct, include_root):
                fh.write(f"{s.index + 1}\t{s.matched}\t{s.gold}\t{s.predicted}\t{int(s.skipped)}\n")
    print("recall\tprecision\tf1")
    print(f"{scores.recall:.4f}\t{scores.precision:.4f}\t{scores.f1:.4f}")
    return 0


def cmd_baseline(args) -> int:
    corpus = read_corpus(args.corpus)
    write_trees([right_branching_tree(corpus.tokens(n)) for n in range(len(corpus))], args.out)
    return 0


# --------------------------------------------------------------------------
# analyze

def _run_depth(run_dir: Path):
    if (run_dir / MANIFEST).exists():
        return RunManifest.load(run_dir).config.get("max_depth")
    return None


def cmd_analyze(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    gold = read_trees(args.gold) if args.gold else None
    is_punct = _punct(args)
    rows = []
    depth_rows = []
    for item in args.runs:
        run = Path(item)
        if not (run / "trace.tsv").exists():
            raise DataError(f"{run}: missing trace.tsv")
        loglik = _final_loglik(run)
        row = {"run": str(run), "max_depth": _run_depth(run), "final_loglik": loglik}
        samples = _run_sample_files(run)
        if gold is not None:
            if not samples:
                raise DataError(f"{run}: no samples to score")
            r, p, f = unlabeled_parseval(gold, read_trees(samples[-1]), is_punct)
            row.update(recall=r, precision=p, f1=f)
        rows.append(row)
        stages = []
        if (run / "init.trees").exists():
            stages.append(("initial", run / "init.trees"))
        elif samples:
            stages.append(("initial", Path(samples[0])))
        if samples:
            stages.append(("converged", Path(samples[-1])))
        for stage, path in stages:
            for depth, frac in depth_histogram(read_trees(path)).items():
                depth_rows.append((str(run), stage, depth, frac))

    with open(out / "runs.tsv", "w", encoding="utf-8") as fh:
        cols = ["run", "max_depth", "final_loglik"] + (["recall", "precision", "f1"] if gold else [])
        fh.write("\t".join(cols) + "\n")
        for row in rows:
            fh.write("\t".join(_fmt(row[c]) for c in cols) + "\n")
        if gold is not None and len(rows) >= 3:
            lls = np.array([r["final_loglik"] for r in rows])
            f1s = np.array([r["f1"] for r in rows])
            if np.ptp(lls) > 0 and np.ptp(f1s) > 0:
                r, p = sps.pearsonr(lls, f1s)
                fh.write(f"# pearson_r\t{r:.4f}\tp\t{p:.4g}\tn\t{len(rows)}\n")
            for line in _depth_ttests(rows):
                fh.write(line + "\n")
    with open(out / "depths.tsv", "w", encoding="utf-8") as fh:
        fh.write("run\tstage\tdepth\tfraction\n")
        for run, stage, depth, frac in depth_rows:
            fh.write(f"{run}\t{stage}\t{depth}\t{frac:.6f}\n")
    sys.stdout.write((out / "runs.tsv").read_text(encoding="utf-8"))
    return 0


def _depth_ttests(rows):
    groups = {}
    for r in rows:
        groups.setdefault(str(r["max_depth"]), []).append(r["f1"])
    lines = []
    for key in sorted(groups):
        lines.append(f"# depth\t{key}\tmean_f1\t{np.mean(groups[key]):.4f}\tn\t{len(groups[key])}")
    base = groups.get("unbounded")
    if base and len(base) >= 2:
        for key, vals in sorted(groups.items()):
            if key != "unbounded" and len(vals) >= 2:
                t, p = sps.ttest_ind(vals, base)
                lines.append(f"# ttest\t{key}_vs_unbounded\tt\t{t:.4f}\tp\t{p:.4g}")
    return lines


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="depthpcfg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("induce", help="run the Gibbs sampler on a corpus")
    p.add_argument("corpus", help="one whitespace-tokenized sentence per line")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--config", help="JSON file with RunConfig fields")
    p.add_argument("--depth", type=_parse_depth, help="maximum depth or 'unbounded' (default 2)")
    p.add_argument("--categories", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--iterations", type=int)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--sample-every", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--containment-iters", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--checkpoint-every", type=int)
    p.add_argument("--resume", action="store_true", help="continue from the run directory's checkpoint")
    p.set_defaults(func=cmd_induce)

    p = sub.add_parser("bound", help="depth-bound a grammar file")
    p.add_argument("grammar")
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--iterations", type=int, default=DEFAULT_ITERATIONS)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("pioc", help="decode trees from posterior samples")
    p.add_argument("samples", nargs="+", help="sample files, globs or run directories")
    p.add_argument("--corpus", required=True)
    p.add_argument("--merge-threshold", type=float, default=DEFAULT_MERGE_THRESHOLD)
    p.add_argument("--top-k-by-loglik", type=int, help="use only the k runs with highest final log likelihood")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pioc)

    p = sub.add_parser("eval", help="unlabeled PARSEVAL")
    p.add_argument("gold")
    p.add_argument("pred")
    p.add_argument("--punct-list", help="file with one punctuation token per line")
    p.add_argument("--exclude-root", action="store_true", help="do not count the whole-sentence span")
    p.add_argument("--per-sentence", help="write per-sentence counts here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("baseline", help="right-branching trees for a corpus")
    p.add_argument("corpus")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("analyze", help="likelihood/accuracy and depth tables for run directories")
    p.add_argument("runs", nargs="+")
    p.add_argument("--gold")
    p.add_argument("--punct-list")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (PCFGError, OSError, json.JSONDecodeError) as e:
        print(f"depthpcfg {args.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
