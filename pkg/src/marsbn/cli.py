"""Command-line front end: gen, rank, score, learn, eval and run.

Exit codes: 0 success, 1 validation error, 2 I/O error (argparse usage
errors also exit 2).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import dataset, evaluation, forest, graph, mars, scoring, search

log = logging.getLogger("marsbn")

THREADS_ENV = "MARSBN_THREADS"

# stage -> index into the root seed's spawned streams
_STAGES = {"network": 0, "sample": 1, "forest": 2, "search": 3}


def stage_seed(root: int, stage: str) -> int:
    """Deterministic 63-bit seed for one pipeline stage."""
    ss = np.random.SeedSequence(root).spawn(len(_STAGES))[_STAGES[stage]]
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            t = int(env)
        except ValueError:
            raise SystemExit(f"{THREADS_ENV} must be an integer, got {env!r}")
        if t >= 1:
            return t
    return os.cpu_count() or 1


def read_config(path) -> dict[str, str]:
    """``key = value`` lines; '#' starts a comment. Dashes in keys map to underscores."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep or not key.strip():
                raise ValueError(f"{path}:{lineno}: expected key=value")
            out[key.strip().replace("-", "_")] = val.strip()
    return out


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


# ---------------------------------------------------------------------------
# option groups


def _add_common(p):
    p.add_argument("--seed", type=int, default=0, help="root seed, split per stage")
    p.add_argument("--threads", type=_positive_int, default=None,
                   help=f"worker threads (default ${THREADS_ENV} or CPU count)")
    p.add_argument("--config", help="key=value file; command-line flags take precedence")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_forest(p):
    g = p.add_argument_group("feature selection")
    g.add_argument("--trees", type=_positive_int, default=50)
    g.add_argument("--mtry", type=_positive_int, default=None)
    g.add_argument("--max-depth", type=_positive_int, default=12)
    g.add_argument("--min-leaf", type=_positive_int, default=5)


def _add_scoring(p):
    g = p.add_argument_group("scoring")
    g.add_argument("--lambda", dest="lam", type=_positive_int, default=5,
                   help="candidate parents kept per variable")
    g.add_argument("--time-limit", type=_positive_float, default=scoring.DEFAULT_TIME_LIMIT,
                   help="seconds per variable")
    g.add_argument("--max-terms", type=_positive_int, default=21)
    g.add_argument("--max-degree", type=_positive_int, default=10)
    g.add_argument("--min-rss-improve", type=float, default=1e-3)
    g.add_argument("--gcv-penalty", type=float, default=3.0)
    g.add_argument("--gcv-form", choices=("standard", "literal"), default="standard")


def _add_search(p):
    g = p.add_argument_group("search")
    g.add_argument("--exact-limit", type=_positive_int, default=search.EXACT_LIMIT)
    g.add_argument("--heuristic", action="store_true", help="force local search")
    g.add_argument("--restarts", type=_positive_int, default=10)
    g.add_argument("--no-prune", action="store_true", help="skip dominance pruning")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="marsbn",
                                     description="Bayesian network structure learning with MARS local scores.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a random network and sample data")
    _add_common(p)
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--samples", type=_positive_int, default=1000)
    p.add_argument("--kind", choices=dataset.KINDS, default="hinge")
    p.add_argument("--max-in", type=int, default=3)
    p.add_argument("--max-out", type=int, default=3)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--source-sd", type=float, default=None,
                   help="noise scale of parentless nodes (default: --noise)")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--data-name", default="data.csv")
    p.add_argument("--truth-name", default="truth.edges")

    p = sub.add_parser("rank", help="forest importance ranking of candidate parents")
    _add_common(p)
    _add_forest(p)
    p.add_argument("--data", required=True)
    p.add_argument("--target", action="append", help="variable name (repeatable; default all)")
    p.add_argument("--out", help="output TSV (default stdout)")

    p = sub.add_parser("score", help="compute the local score file")
    _add_common(p)
    _add_forest(p)
    _add_scoring(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default="scores.txt")
    p.add_argument("--dump-models", metavar="PATH",
                   help="write the best-scoring model of each variable")

    p = sub.add_parser("learn", help="search for the minimum-score DAG")
    _add_common(p)
    _add_search(p)
    p.add_argument("--scores", required=True)
    p.add_argument("--data", help="dataset to check the score file's hash against")
    p.add_argument("--out", default="learned.edges")

    p = sub.add_parser("eval", help="compare a learned DAG with the truth")
    _add_common(p)
    p.add_argument("--learned", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--format", choices=("tsv", "kv"), default="tsv")
    p.add_argument("--out", help="report file (default stdout)")

    p = sub.add_parser("run", help="score, learn and (optionally) evaluate in one go")
    _add_common(p)
    _add_forest(p)
    _add_scoring(p)
    _add_search(p)
    p.add_argument("--data", required=True)
    p.add_argument("--truth")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--format", choices=("tsv", "kv"), default="tsv")
    return parser


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = read_config(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        alias = {}
        for a in sub._actions:
            alias[a.dest] = a.dest
            for opt in a.option_strings:
                if opt.startswith("--"):
                    alias[opt[2:].replace("-", "_")] = a.dest
        unknown = sorted(set(cfg) - set(alias))
        if unknown:
            raise ValueError(f"{args.config}: unknown keys {', '.join(unknown)}")
        cfg = {alias[k]: v for k, v in cfg.items()}
        # config values become defaults, so explicit flags still win
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
        for a in sub._actions:
            if a.dest in cfg and isinstance(getattr(args, a.dest), str) and a.type is not None:
                setattr(args, a.dest, a.type(getattr(args, a.dest)))
            elif a.dest in cfg and isinstance(a, argparse._StoreTrueAction):
                setattr(args, a.dest, str(getattr(args, a.dest)).lower() in ("1", "true", "yes", "on"))
    if args.threads is None:
        args.threads = default_threads()
    return args


# ---------------------------------------------------------------------------
# configs from args


def forest_config(args) -> forest.ForestConfig:
    return forest.ForestConfig(n_trees=args.trees, mtry=args.mtry, max_depth=args.max_depth,
                               min_leaf=args.min_leaf, seed=stage_seed(args.seed, "forest"))


def fit_config(args) -> mars.FitConfig:
    return mars.FitConfig(max_terms=args.max_terms, max_degree=args.max_degree,
                          min_rss_improve=args.min_rss_improve, gcv_penalty=args.gcv_penalty,
                          gcv_form=args.gcv_form)


def _emit(text: str, path=None):
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# commands


def cmd_gen(args, parser=None):
    if args.nodes < 1:
        (parser or build_parser()).error("--nodes must be >= 1")
    net = dataset.generate_network(args.nodes, args.max_in, args.max_out, args.kind,
                                   seed=stage_seed(args.seed, "network"), noise_sd=args.noise,
                                   source_sd=args.source_sd)
    data = dataset.sample(net, args.samples, seed=stage_seed(args.seed, "sample"))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset.write_csv(data, out / args.data_name)
    graph.write_edges(net.dag, data.names, out / args.truth_name)
    print(f"wrote {out / args.data_name} ({data.N} rows, {data.n} variables) and {out / args.truth_name}")
    return 0


def format_ranking(rankings, names) -> str:
    lines = ["target\tcandidate\timportance\trank"]
    for r in rankings:
        for k, f in enumerate(r.order, 1):
            lines.append(f"{names[r.target]}\t{names[f]}\t{r.scores[f]:.6g}\t{k}")
    return "\n".join(lines) + "\n"


def cmd_rank(args):
    data = dataset.load_csv(args.data)
    targets = [data.index_of(t) for t in args.target] if args.target else range(data.n)
    cfg = forest_config(args)
    rankings = [forest.rank_candidates(t, data, cfg, args.threads) for t in targets]
    _emit(format_ranking(rankings, data.names), args.out)
    return 0


def _score(args, data):
    if not 1 <= args.lam < data.n:
        raise ValueError(f"--lambda must satisfy 1 <= lambda < n (= {data.n}); got {args.lam}")
    return scoring.score_all_variables(data, args.lam, fit_config(args), forest_config(args),
                                       args.time_limit, args.threads)


def dump_models(cache: scoring.ScoreCache, data, cfg, path):
    blocks = []
    for c in range(cache.n):
        rec = cache.best(c)
        model = mars.fit_mars(c, sorted(rec.parents), data, cfg)
        blocks.append(f"# {cache.names[c]}  gcv={model.gcv:.12g}\n{model.dump()}")
    Path(path).write_text("\n".join(blocks), encoding="utf-8")


def cmd_score(args):
    data = dataset.load_csv(args.data)
    cache = _score(args, data)
    scoring.write_score_file(cache, args.out)
    if args.dump_models:
        dump_models(cache, data, fit_config(args), args.dump_models)
    n_rec = sum(len(r) for r in cache.records)
    print(f"wrote {args.out} ({n_rec} records for {cache.n} variables)")
    return 0


def _learn(args, cache):
    if not args.no_prune:
        cache = scoring.prune_dominated(cache)
    return search.learn_dag(cache, args.exact_limit, args.heuristic, args.restarts,
                            stage_seed(args.seed, "search"), args.threads)


def _learn_summary(res) -> str:
    method = "exact" if res.exact else "heuristic"
    return f"method\t{method}\ntotal\t{res.total:.12g}\nedges\t{res.dag.n_edges}\n"


def cmd_learn(args):
    cache = scoring.read_score_file(args.scores)
    if args.data:
        data = dataset.load_csv(args.data)
        if cache.dataset_hash and cache.dataset_hash != data.fingerprint():
            raise ValueError(f"{args.scores} was computed from a different dataset "
                             f"(hash {cache.dataset_hash}, {args.data} has {data.fingerprint()})")
        if list(cache.names) != data.names:
            raise ValueError(f"variable names in {args.scores} do not match {args.data}")
    res = _learn(args, cache)
    graph.write_edges(res.dag, cache.names, args.out)
    sys.stdout.write(_learn_summary(res))
    return 0


def _report_text(rep: evaluation.EvalReport, fmt: str) -> str:
    return rep.to_tsv() if fmt == "tsv" else rep.to_kv()


def load_pair(learned_path, truth_path):
    learned, names = graph.read_edges(learned_path)
    tnames = graph.read_edges(truth_path)[1]
    if set(tnames) != set(names):
        only_l = sorted(set(names) - set(tnames))
        only_t = sorted(set(tnames) - set(names))
        raise ValueError(f"node names differ: only in learned {only_l}, only in truth {only_t}")
    truth, _ = graph.read_edges(truth_path, names)
    return learned, truth


def cmd_eval(args):
    learned, truth = load_pair(args.learned, args.truth)
    _emit(_report_text(evaluation.report(learned, truth), args.format), args.out)
    return 0


def cmd_run(args):
    data = dataset.load_csv(args.data)
    truth = None
    if args.truth:
        truth, _ = graph.read_edges(args.truth, data.names)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cache = _score(args, data)
    scoring.write_score_file(cache, out / "scores.txt")
    res = _learn(args, cache)
    graph.write_edges(res.dag, data.names, out / "learned.edges")
    summary = _learn_summary(res)
    (out / "learn.txt").write_text(summary, encoding="utf-8")
    log.info("%s", summary.strip())
    if truth is not None:
        text = _report_text(evaluation.report(res.dag, truth), args.format)
        (out / "report.txt").write_text(text, encoding="utf-8")
        sys.stdout.write(text)
    else:
        sys.stdout.write(summary)
    return 0


COMMANDS = {"gen": cmd_gen, "rank": cmd_rank, "score": cmd_score, "learn": cmd_learn,
            "eval": cmd_eval, "run": cmd_run}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except (ValueError, OSError) as e:
        print(f"marsbn: error: {e}", file=sys.stderr)
        return 2 if isinstance(e, OSError) else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "gen":
            return cmd_gen(args, build_parser())
        return COMMANDS[args.command](args)
    except OSError as e:
        print(f"marsbn: I/O error: {e}", file=sys.stderr)
        return 2
    except (ValueError, KeyError) as e:
        print(f"marsbn: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
