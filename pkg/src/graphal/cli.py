"""Command-line entry point.

Option values resolve in precedence order: explicit flag, then a
GRAPHAL_<NAME> environment variable, then the JSON file given by --config,
then the built-in default.  Exit codes: 0 success, 1 runtime failure,
2 usage error.
"""

import argparse
import json
import os
import sys

import numpy as np

from .centrality import CandidatePool, CentralityScores, build_pool
from .gcn import forward
from .graph import (GCN_SELF_LOOP, PLAIN_SYMMETRIC, LabelState, load_bundle,
                    normalize)
from .harness import (ExperimentConfig, make_splits, run_ablation,
                      run_active_learning, run_suite, sweep_budget)
from .propagation import LabelSeed, graph_uncertainty, lp_posterior, propagate
from .strategies import ALL_STRATEGIES, QueryContext, delta_h
from .synth import write_synthetic_bundle

# (flag name, config field, cast); every experiment subcommand shares these
_CONFIG_OPTIONS = [
    ("dataset", "dataset", str),
    ("strategy", "strategy", str),
    ("l-init", "l_init", int),
    ("l-max", "l_max", int),
    ("epochs", "epochs_total", int),
    ("epochs-per-query", "epochs_per_query", int),
    ("val-samples", "n_val_samples", int),
    ("repeats", "n_repeats", int),
    ("test-size", "test_size", int),
    ("val-size", "val_size", int),
    ("seed", "seed", int),
    ("alpha", "alpha", float),
    ("lp-tol", "lp_tol", float),
    ("beta", "beta", float),
    ("hidden", "hidden", int),
    ("dropout", "dropout", float),
    ("lr", "lr", float),
]
_CONFIG_FLAGS = [
    ("final-epoch-metric", "final_epoch_metric"),
    ("retrain-each-query", "retrain_each_query"),
]


def _usage_error(msg):
    print(f"usage error: {msg}", file=sys.stderr)
    raise SystemExit(2)


def _add_config_options(p):
    for flag, _, cast in _CONFIG_OPTIONS:
        p.add_argument("--" + flag, type=cast, default=None)
    for flag, _ in _CONFIG_FLAGS:
        p.add_argument("--" + flag, action="store_const", const=True, default=None)
    p.add_argument("--config", default=None, help="JSON file with option defaults")


def _resolve(args, flag, field, cast, file_values):
    v = getattr(args, flag.replace("-", "_"))
    if v is not None:
        return v
    env = os.environ.get("GRAPHAL_" + flag.upper().replace("-", "_"))
    if env is not None:
        if cast is bool:
            return env.strip().lower() in ("1", "true", "yes", "on")
        return cast(env)
    if field in file_values:
        return cast(file_values[field])
    return None


def _build_config(args):
    file_values = {}
    if args.config:
        with open(args.config) as f:
            file_values = json.load(f)
    kw = {}
    for flag, field, cast in _CONFIG_OPTIONS:
        v = _resolve(args, flag, field, cast, file_values)
        if v is not None:
            kw[field] = v
    for flag, field in _CONFIG_FLAGS:
        v = _resolve(args, flag, field, bool, file_values)
        if v is not None:
            kw[field] = v
    if "dataset" not in kw:
        _usage_error("a dataset is required (flag, environment, or config file)")
    return ExperimentConfig(**kw)


def _emit(obj, out):
    text = json.dumps(obj, indent=2)
    if out:
        with open(out, "w") as f:
            f.write(text + "\n")
    else:
        print(text)


def _cmd_run(args):
    cfg = _build_config(args)
    res = run_active_learning(cfg, val_idx=args.val_idx, repeat=args.repeat)
    _emit(res.record(), args.out)


def _parse_strategies(raw):
    names = [s.strip() for s in raw.split(",") if s.strip()]
    for s in names:
        if s not in ALL_STRATEGIES:
            _usage_error(f"unknown strategy {s!r}; choose from "
                         + ", ".join(ALL_STRATEGIES))
    return names


def _cmd_suite(args):
    cfg = _build_config(args)
    strategies = _parse_strategies(args.strategies) if args.strategies else None
    _, summary = run_suite(cfg, strategies, out_dir=args.out, workers=args.workers)
    _emit(summary, None)


def _cmd_ablation(args):
    cfg = _build_config(args)
    _, summary = run_ablation(cfg, out_dir=args.out, workers=args.workers)
    _emit(summary, None)


def _cmd_sweep_budget(args):
    cfg = _build_config(args)
    l_values = tuple(int(x) for x in args.l_values.split(","))
    _, table = sweep_budget(cfg, l_values, out_dir=args.out, workers=args.workers)
    _emit(table, None)


def _cmd_pool_inspect(args):
    cfg = _build_config(args)
    graph, _, labels, k = load_bundle(cfg.dataset)
    scores = CentralityScores.compute(graph, beta=cfg.beta)
    none = np.zeros(graph.n, dtype=bool)
    state = LabelState.initial(graph.n, k, [], [], none, none, 0)
    pool = build_pool(scores, state, cfg.l_max, k)
    rows = []
    for node in pool.members[:args.limit]:
        rows.append({
            "node": int(node),
            "degree": int(graph.degrees[node]),
            "pagerank": float(scores.pagerank[node]),
            "pool_score": float(scores.pool_score[node]),
        })
    _emit({"capacity": pool.capacity, "size": len(pool),
           "pagerank_converged": scores.converged, "top": rows}, args.out)


def _cmd_lp_debug(args):
    cfg = _build_config(args)
    graph, feats, labels, k = load_bundle(cfg.dataset)
    test_mask, val_mask, init_nodes = make_splits(labels, cfg, k,
                                                  val_idx=args.val_idx,
                                                  repeat=args.repeat)
    budget = cfg.budget(k)
    state = LabelState.initial(graph.n, k, init_nodes, labels[init_nodes],
                               test_mask, val_mask, budget)
    adj = normalize(graph, PLAIN_SYMMETRIC)
    seed = LabelSeed.from_state(state)
    res = propagate(adj, seed, alpha=cfg.alpha, tol=cfg.lp_tol,
                    max_iter=cfg.lp_max_iter)
    report = {
        "labeled": [int(x) for x in state.v_l],
        "iterations": res.iterations,
        "converged": res.converged,
        "uncertainty": graph_uncertainty(lp_posterior(res)),
    }
    if args.node is not None:
        if args.class_id is None:
            _usage_error("--node needs --class-id")
        model_adj = normalize(graph, GCN_SELF_LOOP)
        from .gcn import GcnModel
        model = GcnModel.init(feats.d, k, h=cfg.hidden, dropout_p=cfg.dropout,
                              lam=cfg.lam, seed=cfg.seed)
        post = forward(model, model_adj, feats)
        scores = CentralityScores.compute(graph, beta=cfg.beta)
        ctx = QueryContext(graph, adj, post, state,
                           CandidatePool(np.array([args.node], dtype=np.int64), 1),
                           scores, alpha=cfg.alpha, lp_tol=cfg.lp_tol,
                           lp_max_iter=cfg.lp_max_iter)
        report["node"] = args.node
        report["class_id"] = args.class_id
        report["uncertainty_drop"] = delta_h(ctx, args.node, args.class_id)
    _emit(report, args.out)


def _cmd_make_synth(args):
    write_synthetic_bundle(
        args.out, name=args.name, n=args.n, k=args.k, d=args.d, seed=args.seed,
        mean_degree=args.mean_degree, homophily=args.homophily, tail=args.tail,
        words_per_node=args.words_per_node, topic_frac=args.topic_frac,
        class_skew=args.class_skew, community_size=args.community_size,
        subtopic_frac=args.subtopic_frac, junk_frac=args.junk_frac,
        mix_frac=args.mix_frac, words_sigma=args.words_sigma,
        alias_frac=args.alias_frac)
    print(args.out)


def build_parser():
    p = argparse.ArgumentParser(prog="graphal",
                                description="Active learning for node "
                                            "classification on sparse graphs.")
    sub = p.add_subparsers(dest="command", required=True)

    def experiment_command(name, fn, help_):
        q = sub.add_parser(name, help=help_)
        _add_config_options(q)
        q.add_argument("--out", default=None)
        q.set_defaults(fn=fn)
        return q

    q = experiment_command("run", _cmd_run, "one seeded active-learning run")
    q.add_argument("--val-idx", type=int, default=0)
    q.add_argument("--repeat", type=int, default=0)

    q = experiment_command("suite", _cmd_suite,
                           "repeated runs with per-strategy aggregates")
    q.add_argument("--strategies", default=None,
                   help="comma-separated list, default the configured one")
    q.add_argument("--workers", type=int, default=1)

    q = experiment_command("ablation", _cmd_ablation,
                           "the five-workflow component knockout")
    q.add_argument("--workers", type=int, default=1)

    q = experiment_command("sweep-budget", _cmd_sweep_budget,
                           "one suite per per-class label target")
    q.add_argument("--l-values", default="2,4,6,8,10,12")
    q.add_argument("--workers", type=int, default=1)

    q = experiment_command("pool-inspect", _cmd_pool_inspect,
                           "centrality scores of the candidate pool")
    q.add_argument("--limit", type=int, default=20)

    q = experiment_command("lp-debug", _cmd_lp_debug,
                           "spreading diagnostics from the initial labels")
    q.add_argument("--val-idx", type=int, default=0)
    q.add_argument("--repeat", type=int, default=0)
    q.add_argument("--node", type=int, default=None)
    q.add_argument("--class-id", type=int, default=None)

    q = sub.add_parser("make-synth", help="generate a synthetic dataset bundle")
    q.add_argument("--out", required=True)
    q.add_argument("--name", default="synthetic")
    q.add_argument("--n", type=int, default=2708)
    q.add_argument("--k", type=int, default=7)
    q.add_argument("--d", type=int, default=1433)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--mean-degree", type=float, default=4.0)
    q.add_argument("--homophily", type=float, default=0.8)
    q.add_argument("--tail", type=float, default=2.8)
    q.add_argument("--words-per-node", type=int, default=18)
    q.add_argument("--topic-frac", type=float, default=0.7)
    q.add_argument("--class-skew", type=float, default=1.0)
    q.add_argument("--community-size", type=int, default=0)
    q.add_argument("--subtopic-frac", type=float, default=0.5)
    q.add_argument("--junk-frac", type=float, default=0.0)
    q.add_argument("--mix-frac", type=float, default=0.0)
    q.add_argument("--words-sigma", type=float, default=0.0)
    q.add_argument("--alias-frac", type=float, default=0.0)
    q.set_defaults(fn=_cmd_make_synth)

    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
    except SystemExit:
        raise
    except (ValueError, OSError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
