"""Experiment harness: splits, the active-learning training loop, and suites.

The harness owns the ground-truth label vector and plays the annotation
oracle.  LabelState never sees labels outside the revealed set, which is what
makes the no-peeking assertions in the query step meaningful.

Seeding discipline: every random choice is drawn from a generator derived
from (master seed, purpose tag, cell coordinates).  The test split depends
only on the master seed; validation samples on their index; the initial
labeled set, model init, and strategy randomness on (validation index,
repeat).  None of the derivations involve the strategy name, so runs with
the same coordinates are paired across strategies.
"""

import dataclasses
import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .centrality import CentralityScores, build_pool
from .gcn import GcnModel, evaluate, forward, train_step
from .graph import (GCN_SELF_LOOP, PLAIN_SYMMETRIC, LabelState, load_bundle,
                    normalize)
from .strategies import (ALL_STRATEGIES, QueryContext, build_density_pool,
                         build_random_pool, select_scored)

# purpose tags for seed derivation; distinct primes so no two purposes can
# collide even if their coordinate tuples happen to match
_TAG_TEST, _TAG_VAL, _TAG_INIT, _TAG_MODEL, _TAG_STRATEGY = 11, 13, 17, 19, 23

_SPLIT_RETRY_CAP = 100

ABLATION_STRATEGIES = ("random", "pool-only", "lp-random-pool",
                       "lp-embed-pool", "smartquery")

DEFAULT_SWEEP_BUDGETS = (2, 4, 6, 8, 10, 12)


def _seed_seq(master, *path):
    return np.random.SeedSequence([int(master)] + [int(p) for p in path])


def _rng_for(master, *path):
    return np.random.default_rng(_seed_seq(master, *path))


def _seed_for(master, *path):
    return int(_seed_seq(master, *path).generate_state(1)[0])


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment cell, fully determined (with a coordinate pair) by its
    fields.  `l_max` is the per-class label target; the query budget is
    (l_max - l_init) * k and needs the dataset's k, so schedule feasibility
    is checked at run time."""
    dataset: str
    strategy: str = "smartquery"
    l_init: int = 1
    l_max: int = 5
    epochs_total: int = 300
    epochs_per_query: int = 5
    n_val_samples: int = 10
    n_repeats: int = 20
    test_size: int = 1000
    val_size: int = 500
    seed: int = 0
    alpha: float = 0.9
    lp_tol: float = 1e-6
    lp_max_iter: int = 1000
    beta: float = 0.85
    hidden: int = 16
    dropout: float = 0.5
    lam: float = 5e-4
    lr: float = 0.01
    final_epoch_metric: bool = False
    retrain_each_query: bool = False

    def __post_init__(self):
        if self.strategy not in ALL_STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.l_init < 1:
            raise ValueError("l_init must be at least 1")
        if self.l_max < self.l_init:
            raise ValueError("l_max must be at least l_init")
        if self.epochs_total < 1 or self.epochs_per_query < 1:
            raise ValueError("epoch counts must be positive")
        if self.test_size < 1 or self.val_size < 1:
            raise ValueError("split sizes must be positive")
        if self.n_val_samples < 1 or self.n_repeats < 1:
            raise ValueError("suite dimensions must be positive")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    def budget(self, k):
        return (self.l_max - self.l_init) * int(k)


def config_hash(config):
    """Stable short digest of every field; changing any field changes it."""
    blob = json.dumps(dataclasses.asdict(config), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# dataset cache: immutable per-path artifacts shared by every run in a suite

_DATASET_CACHE = {}


def _dataset_for(config):
    key = (os.path.abspath(config.dataset), config.beta)
    if key not in _DATASET_CACHE:
        graph, feats, labels, k = load_bundle(config.dataset)
        _DATASET_CACHE[key] = (
            graph, feats, labels, k,
            normalize(graph, PLAIN_SYMMETRIC),
            normalize(graph, GCN_SELF_LOOP),
            CentralityScores.compute(graph, beta=config.beta),
        )
    return _DATASET_CACHE[key]


# ---------------------------------------------------------------------------
# splits


def make_splits(labels, config, k, val_idx=0, repeat=0):
    """(test_mask, val_mask, initial labeled nodes).

    The test draw uses only the master seed, so every cell of a suite is
    scored on the same nodes.  A validation draw that leaves some class
    without l_init free nodes is resampled, up to a cap, then fails loudly.
    """
    labels = np.asarray(labels)
    n = len(labels)
    if config.test_size + config.val_size + config.l_init * k > n:
        raise ValueError("dataset too small for the requested splits")
    test_rng = _rng_for(config.seed, _TAG_TEST)
    test_mask = np.zeros(n, dtype=bool)
    test_mask[test_rng.choice(n, size=config.test_size, replace=False)] = True
    rest = np.flatnonzero(~test_mask)

    for attempt in range(_SPLIT_RETRY_CAP):
        val_rng = _rng_for(config.seed, _TAG_VAL, val_idx, attempt)
        val_mask = np.zeros(n, dtype=bool)
        val_mask[val_rng.choice(rest, size=config.val_size, replace=False)] = True
        free = ~(test_mask | val_mask)
        init_rng = _rng_for(config.seed, _TAG_INIT, val_idx, repeat, attempt)
        picks = []
        for c in range(k):
            avail = np.flatnonzero(free & (labels == c))
            if len(avail) < config.l_init:
                picks = None
                break
            picks.append(init_rng.choice(avail, size=config.l_init, replace=False))
        if picks is not None:
            return test_mask, val_mask, np.sort(np.concatenate(picks))
    raise RuntimeError(
        f"no validation sample left every class {config.l_init} free seed "
        f"node(s) after {_SPLIT_RETRY_CAP} attempts")


# ---------------------------------------------------------------------------
# one run


@dataclass
class RunResult:
    strategy: str
    val_idx: int
    repeat: int
    macro_f1: float
    micro_f1: float
    trace: list
    config_hash: str
    wall_time: float

    def record(self):
        """JSON-serializable row for results.jsonl."""
        return {
            "strategy": self.strategy, "val_idx": self.val_idx,
            "repeat": self.repeat, "macro_f1": self.macro_f1,
            "micro_f1": self.micro_f1,
            "trace": [[n, s] for n, s in self.trace],
            "config_hash": self.config_hash, "wall_time": self.wall_time,
        }


def run_active_learning(config, val_idx=0, repeat=0):
    """One seeded run: train, query on schedule, reveal, continue training.

    The model is trained for epochs_total in one continuous pass; every
    epochs_per_query epochs one query is spent while budget remains, and the
    new label joins the loss from the next step on.  Test metrics come from
    the weights with the best validation micro-F1 unless final_epoch_metric
    asks for the last epoch.  retrain_each_query restarts the model (fresh
    init and optimizer state) after each reveal instead of continuing.
    """
    t0 = time.perf_counter()
    graph, feats, labels, k, lp_adj, gcn_adj, scores = _dataset_for(config)
    budget = config.budget(k)
    if budget > 0 and config.epochs_per_query * budget > config.epochs_total:
        raise ValueError(
            f"cannot spend {budget} queries at one per "
            f"{config.epochs_per_query} epochs inside {config.epochs_total}")
    test_mask, val_mask, init_nodes = make_splits(labels, config, k, val_idx, repeat)
    state = LabelState.initial(graph.n, k, init_nodes, labels[init_nodes],
                               test_mask, val_mask, budget)

    strat_rng = _rng_for(config.seed, _TAG_STRATEGY, val_idx, repeat)
    pool = None
    if config.strategy in ("smartquery", "pool-only"):
        pool = build_pool(scores, state, config.l_max, k)
    elif config.strategy == "lp-random-pool":
        pool = build_random_pool(state, config.l_max, k, strat_rng)
    # lp-embed-pool builds its pool at the first query, once a posterior exists

    model = GcnModel.init(feats.d, k, h=config.hidden, dropout_p=config.dropout,
                          lam=config.lam,
                          seed=_seed_for(config.seed, _TAG_MODEL, val_idx, repeat))
    best_val = -1.0
    best_w = (model.w1.copy(), model.w2.copy())
    trace = []
    n_queries = 0
    for epoch in range(1, config.epochs_total + 1):
        train_step(model, gcn_adj, feats, state, lr=config.lr)
        post = forward(model, gcn_adj, feats)
        _, val_micro = evaluate(post, labels, val_mask)
        if val_micro > best_val:
            best_val = val_micro
            best_w = (model.w1.copy(), model.w2.copy())
        if state.budget_remaining > 0 and epoch % config.epochs_per_query == 0:
            if config.strategy == "lp-embed-pool" and pool is None:
                pool = build_density_pool(post, state, config.l_max, k, strat_rng)
            ctx = QueryContext(graph, lp_adj, post, state, pool, scores,
                               alpha=config.alpha, lp_tol=config.lp_tol,
                               lp_max_iter=config.lp_max_iter)
            qs = select_scored(ctx, config.strategy, rng=strat_rng, epoch_t=epoch)
            node = int(qs.node)
            # no-peeking guards: the oracle only ever answers for free nodes
            assert not test_mask[node] and not val_mask[node]
            assert state.labels[node] < 0
            state = state.with_label(node, int(labels[node]))
            if pool is not None and node in pool:
                pool = pool.remove(node)
            trace.append((node, float(qs.value)))
            n_queries += 1
            if config.retrain_each_query:
                model = GcnModel.init(
                    feats.d, k, h=config.hidden, dropout_p=config.dropout,
                    lam=config.lam,
                    seed=_seed_for(config.seed, _TAG_MODEL, val_idx, repeat,
                                   n_queries))
    assert len(trace) == budget
    if not config.final_epoch_metric:
        model.w1[:] = best_w[0]
        model.w2[:] = best_w[1]
    macro, micro = evaluate(forward(model, gcn_adj, feats), labels, test_mask)
    return RunResult(config.strategy, val_idx, repeat, macro, micro, trace,
                     config_hash(config), time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# suites


def _run_cell(config, strategy, val_idx, repeat):
    cfg = replace(config, strategy=strategy)
    try:
        return run_active_learning(cfg, val_idx, repeat).record()
    except Exception as e:  # a bad cell must not sink the suite
        return {"strategy": strategy, "val_idx": val_idx, "repeat": repeat,
                "error": f"{type(e).__name__}: {e}"}


def run_suite(config, strategies=None, out_dir=None, workers=1):
    """All (strategy, val sample, repeat) cells.

    Returns (rows, summary): one record per run, failures included as error
    rows, and per-strategy aggregates.  With out_dir set, writes
    results.jsonl and summary.tsv there.
    """
    strategies = list(strategies) if strategies else [config.strategy]
    jobs = [(s, v, r) for s in strategies
            for v in range(config.n_val_samples)
            for r in range(config.n_repeats)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            futures = [ex.submit(_run_cell, config, *job) for job in jobs]
            rows = [f.result() for f in futures]
    else:
        rows = [_run_cell(config, *job) for job in jobs]
    summary = summarize(rows)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "results.jsonl"), "w") as f:
            for row in rows:
                f.write(json.dumps(row) + "\n")
        write_table(os.path.join(out_dir, "summary.tsv"), summary)
    return rows, summary


def summarize(rows):
    """Per-strategy mean and population std of both F1s over successful runs."""
    order = []
    for row in rows:
        if row["strategy"] not in order:
            order.append(row["strategy"])
    out = []
    for s in order:
        ok = [r for r in rows if r["strategy"] == s and "error" not in r]
        failed = sum(1 for r in rows if r["strategy"] == s and "error" in r)
        entry = {"strategy": s, "runs": len(ok), "failures": failed}
        for name in ("micro_f1", "macro_f1"):
            vals = np.array([r[name] for r in ok])
            entry[name + "_mean"] = float(vals.mean()) if len(ok) else float("nan")
            entry[name + "_std"] = float(vals.std()) if len(ok) else float("nan")
        out.append(entry)
    return out


def run_ablation(config, out_dir=None, workers=1):
    """The five-workflow component knockout: plain training with random
    picks, centrality pool alone, spread scoring over a random pool, spread
    scoring over an embedding-density pool, and the full pipeline."""
    return run_suite(config, ABLATION_STRATEGIES, out_dir, workers)


def sweep_budget(config, l_values=DEFAULT_SWEEP_BUDGETS, out_dir=None, workers=1):
    """config.strategy at several per-class label targets.

    Larger budgets can outgrow the default cadence; each point tightens
    epochs_per_query to floor(epochs_total / budget) when needed so the whole
    budget is always spent inside the same training schedule.
    """
    k = _dataset_for(config)[3]
    all_rows, table = [], []
    for l_max in l_values:
        budget = (int(l_max) - config.l_init) * k
        epq = config.epochs_per_query
        if budget > 0:
            if config.epochs_total < budget:
                raise ValueError(f"budget {budget} needs at least one epoch per query")
            epq = min(epq, config.epochs_total // budget)
        cfg = replace(config, l_max=int(l_max), epochs_per_query=epq)
        rows, summary = run_suite(cfg, [config.strategy], out_dir=None,
                                  workers=workers)
        for row in rows:
            row["l_max"] = int(l_max)
        all_rows.extend(rows)
        srow = dict(summary[0])
        srow["l_max"] = int(l_max)
        table.append(srow)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "results.jsonl"), "w") as f:
            for row in all_rows:
                f.write(json.dumps(row) + "\n")
        write_table(os.path.join(out_dir, "sweep.tsv"), table)
    return all_rows, table


def write_table(path, rows):
    """Plain TSV, one header line, %.6g floats."""
    if not rows:
        with open(path, "w") as f:
            f.write("\n")
        return
    cols = list(rows[0].keys())
    with open(path, "w") as f:
        f.write("\t".join(cols) + "\n")
        for row in rows:
            f.write("\t".join(
                "%.6g" % row[c] if isinstance(row[c], float) else str(row[c])
                for c in cols) + "\n")
