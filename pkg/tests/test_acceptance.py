"""Acceptance gate: every shipping criterion, one test and one printed line each.

Heavy fixtures are session-cached so the benchmark-style criteria share their
runs: the vicinity, ordering, ablation, and leak-audit tests all read from one
pool of seeded experiment runs on the pinned synthetic dataset.
"""

import dataclasses
import sys
import time

import numpy as np
import pytest

from graphal.centrality import CentralityScores, build_pool, pagerank
from graphal.gcn import GcnModel, _gradients, forward, loss
from graphal.graph import (PLAIN_SYMMETRIC, LabelState, SparseGraph,
                           load_bundle, normalize)
from graphal.harness import ExperimentConfig, make_splits, run_active_learning
from graphal.propagation import (LabelSeed, graph_uncertainty, lp_posterior,
                                 propagate)
from graphal.strategies import QueryContext, smartquery_score
from graphal.synth import write_synthetic_bundle

from conftest import random_graph

# operating point for the statistical criteria; the reference headline run
# reports 73.88 micro / 69.33 macro at this budget, and the suite accepts a
# +-6 point vicinity around it
TARGET_MICRO = 73.88
TARGET_MACRO = 69.33
VICINITY_PTS = 6.0
ORDERING_MARGIN_PTS = 3.0
MONOTONE_ALLOWANCE_PTS = 1.0

VICINITY_GENERATOR = dict(n=2708, k=7, d=1433, seed=0, mean_degree=3.9,
                          homophily=0.78, tail=2.4, words_per_node=18,
                          topic_frac=0.30, class_skew=0.78)
SUITE_CELLS = [(v, r) for v in range(5) for r in range(4)]  # 20 runs
SWEEP_BUDGETS = (2, 4, 6, 8, 10, 12)
SWEEP_CELLS = [(v, 0) for v in range(4)]


def _report(name, ok, detail):
    line = f"ACCEPTANCE {'PASS' if ok else 'FAIL'} {name}: {detail}"
    print(line, file=sys.__stdout__, flush=True)  # visible under capture
    assert ok, line


# ---------------------------------------------------------------------------
# shared experiment runs


@pytest.fixture(scope="session")
def vicinity_bundle(tmp_path_factory):
    path = str(tmp_path_factory.mktemp("vicinity") / "bundle")
    write_synthetic_bundle(path, name="vicinity", **VICINITY_GENERATOR)
    return path


class _RunPool:
    """Lazily executed, cached experiment runs; every run is logged for the
    final leak audit."""

    def __init__(self, bundle):
        self.bundle = bundle
        self.cache = {}
        self.audit_log = []
        self.walls = {}

    def config(self, strategy, l_max=5, epochs_per_query=5):
        return ExperimentConfig(dataset=self.bundle, strategy=strategy,
                                l_init=1, l_max=l_max,
                                epochs_per_query=epochs_per_query, seed=0)

    def runs(self, strategy, l_max=5, cells=None):
        cells = SUITE_CELLS if cells is None else cells
        epq = 5
        budget = (l_max - 1) * VICINITY_GENERATOR["k"]
        if epq * budget > 300:
            epq = 300 // budget
        key = (strategy, l_max, tuple(cells))
        if key not in self.cache:
            cfg = self.config(strategy, l_max, epq)
            t0 = time.perf_counter()
            out = [run_active_learning(cfg, val_idx=v, repeat=r)
                   for v, r in cells]
            self.walls[key] = time.perf_counter() - t0
            for res in out:
                self.audit_log.append((cfg, res))
            self.cache[key] = out
        return self.cache[key]

    def micro_mean(self, strategy, l_max=5, cells=None):
        return 100.0 * np.mean([r.micro_f1 for r in self.runs(strategy, l_max, cells)])


@pytest.fixture(scope="session")
def run_pool(vicinity_bundle):
    return _RunPool(vicinity_bundle)


# ---------------------------------------------------------------------------
# criterion: iterative spreading matches the dense closed form


def test_label_spreading_closed_form():
    rng = np.random.default_rng(20)
    propagate(normalize(SparseGraph.from_edges(2, [(0, 1)]), PLAIN_SYMMETRIC),
              np.eye(2), alpha=0.5)  # warm the jit before the clock starts
    t0 = time.perf_counter()
    worst = 0.0
    for case in range(50):
        n = int(rng.integers(5, 51))
        g = random_graph(rng, n)
        adj = normalize(g, PLAIN_SYMMETRIC)
        y = np.zeros((n, 3))
        y[rng.choice(n, size=3, replace=False), rng.integers(0, 3, size=3)] = 1.0
        for alpha in (0.1, 0.5, 0.9):
            res = propagate(adj, y, alpha=alpha, tol=1e-9)
            want = (1.0 - alpha) * np.linalg.solve(
                np.eye(n) - alpha * adj.to_dense(), y)
            worst = max(worst, np.abs(res.f - want).max())
    elapsed = time.perf_counter() - t0
    _report("lp-closed-form", worst <= 1e-6 and elapsed < 10.0,
            f"max dev {worst:.2e} (tol 1e-6), 50 graphs x 3 alphas in {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion: analytic gradients match central finite differences


def _fd_gradients(model, adj, x, state, h=1e-6):
    def value():
        return loss(forward(model, adj, x), state, model)
    out = []
    for w in (model.w1, model.w2):
        g = np.zeros_like(w)
        it = np.nditer(w, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            keep = w[idx]
            w[idx] = keep + h
            up = value()
            w[idx] = keep - h
            down = value()
            w[idx] = keep
            g[idx] = (up - down) / (2.0 * h)
        out.append(g)
    return out


def test_gcn_gradient_correctness():
    rng = np.random.default_rng(77)
    t0 = time.perf_counter()
    worst = 0.0
    for case in range(20):
        n = int(rng.integers(8, 16))
        g = random_graph(rng, n)
        from graphal.graph import GCN_SELF_LOOP, FeatureMatrix
        adj = normalize(g, GCN_SELF_LOOP)
        x = FeatureMatrix(rng.normal(size=(n, 6)))
        masks = np.zeros(n, dtype=bool)
        labeled = rng.choice(n, size=4, replace=False)
        state = LabelState.initial(n, 3, labeled, rng.integers(0, 3, size=4),
                                   masks, masks.copy(), 0)
        model = GcnModel.init(6, 3, h=5, dropout_p=0.0, lam=5e-4,
                              seed=int(rng.integers(10000)),
                              reg_both=bool(case % 2))
        _, dw1, dw2 = _gradients(model, adj, x, state)
        fd1, fd2 = _fd_gradients(model, adj, x, state)
        for a, b in ((dw1, fd1), (dw2, fd2)):
            rel = np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12)
            worst = max(worst, rel)
    elapsed = time.perf_counter() - t0
    _report("gcn-gradients", worst <= 1e-4 and elapsed < 30.0,
            f"max relative error {worst:.2e} (tol 1e-4), 20 instances in {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion: power iteration matches a dense solve, mass conserved


def _dense_pagerank(g, beta):
    # direct solve of PR = (1-beta)/n + beta * M PR with uniform
    # redistribution of dangling mass; independent of the iterative code
    n = g.n
    a = g.to_scipy().toarray()
    deg = a.sum(axis=0)
    m = np.divide(a, deg, out=np.zeros((n, n)), where=deg > 0)
    m[:, deg == 0] = 1.0 / n
    return np.linalg.solve(np.eye(n) - beta * m,
                           np.full(n, (1.0 - beta) / n))


def test_pagerank_correctness():
    rng = np.random.default_rng(31)
    worst_dev, worst_mass = 0.0, 0.0
    for case in range(50):
        n = int(rng.integers(5, 61))
        g = random_graph(rng, n)
        if case % 2:  # force dangling nodes: strip every edge of a few ids
            iso = rng.choice(n, size=max(1, n // 8), replace=False)
            pairs = [(u, v) for u, v in g.edge_pairs()
                     if u not in iso and v not in iso]
            g = SparseGraph.from_edges(n, pairs)
        res = pagerank(g, beta=0.85)
        want = _dense_pagerank(g, 0.85)
        worst_dev = max(worst_dev, np.abs(res.values - want).max())
        worst_mass = max(worst_mass, abs(res.values.sum() - 1.0))
    _report("pagerank-oracle", worst_dev <= 1e-8 and worst_mass <= 1e-9,
            f"max dev {worst_dev:.2e} (tol 1e-8), max mass error {worst_mass:.2e}")


# ---------------------------------------------------------------------------
# criterion: pooled scoring equals exhaustive two-run computation


def _brute_force_score(graph, adj, post, state, candidate, alpha, tol, max_iter):
    base = propagate(adj, LabelSeed.from_state(state), alpha, tol, max_iter)
    h0 = graph_uncertainty(lp_posterior(base))
    drops = np.empty(state.k)
    for c in range(state.k):
        seed = LabelSeed.from_state(state).augmented(candidate, c)
        aug = propagate(adj, seed, alpha, tol, max_iter)
        drops[c] = h0 - graph_uncertainty(lp_posterior(aug))
    return float(post.probs[candidate] @ drops)


def test_smartquery_score_brute_force():
    rng = np.random.default_rng(5)
    worst = 0.0
    for case in range(20):
        n = int(rng.integers(10, 31))
        k = int(rng.integers(2, 5))
        g = random_graph(rng, n)
        adj = normalize(g, PLAIN_SYMMETRIC)
        masks = np.zeros(n, dtype=bool)
        labeled = rng.choice(n, size=k, replace=False)
        state = LabelState.initial(n, k, labeled, np.arange(k), masks,
                                   masks.copy(), n)
        probs = rng.dirichlet(np.ones(k), size=n)
        post = type("P", (), {"probs": probs})()
        pool = build_pool(CentralityScores.compute(g), state, 2, k)
        ctx = QueryContext(g, adj, post, state, pool,
                           CentralityScores.compute(g))
        for cand in pool.members[:3]:
            ours = smartquery_score(ctx, int(cand)).value
            brute = _brute_force_score(g, adj, post, state, int(cand),
                                       0.9, 1e-6, 1000)
            worst = max(worst, abs(ours - brute))
    _report("score-brute-force", worst <= 1e-10,
            f"max |pooled - exhaustive| {worst:.2e} (tol 1e-10), 20 cases")


# ---------------------------------------------------------------------------
# criterion: benchmark vicinity


def test_benchmark_vicinity(run_pool):
    runs = run_pool.runs("smartquery")
    wall = run_pool.walls[("smartquery", 5, tuple(SUITE_CELLS))]
    micro = 100.0 * np.mean([r.micro_f1 for r in runs])
    macro = 100.0 * np.mean([r.macro_f1 for r in runs])
    ok = (abs(micro - TARGET_MICRO) <= VICINITY_PTS
          and abs(macro - TARGET_MACRO) <= VICINITY_PTS
          and wall < 900.0)
    _report("benchmark-vicinity", ok,
            f"20-run micro {micro:.2f} (target {TARGET_MICRO}+-{VICINITY_PTS}), "
            f"macro {macro:.2f} (target {TARGET_MACRO}+-{VICINITY_PTS}), "
            f"{wall:.0f}s")


# ---------------------------------------------------------------------------
# criterion: strategy ordering on paired runs


def test_strategy_ordering(run_pool):
    smart = run_pool.micro_mean("smartquery")
    rand = run_pool.micro_mean("random")
    entr = run_pool.micro_mean("entropy")
    ok = (smart - rand >= ORDERING_MARGIN_PTS
          and smart - entr >= ORDERING_MARGIN_PTS)
    _report("strategy-ordering", ok,
            f"smartquery {smart:.2f} vs random {rand:.2f} "
            f"(+{smart - rand:.2f}) and entropy {entr:.2f} "
            f"(+{smart - entr:.2f}), margin {ORDERING_MARGIN_PTS}")


# ---------------------------------------------------------------------------
# criterion: component knockout ordering


def test_ablation_ordering(run_pool):
    full = run_pool.micro_mean("smartquery")
    pool_only = run_pool.micro_mean("pool-only")
    base = run_pool.micro_mean("random")
    ok = full > pool_only > base
    _report("ablation-ordering", ok,
            f"full {full:.2f} > pool-only {pool_only:.2f} > base {base:.2f}")


# ---------------------------------------------------------------------------
# criterion: more budget never hurts (within noise)


def test_budget_monotonicity(run_pool):
    means = [run_pool.micro_mean("smartquery", l_max=l, cells=SWEEP_CELLS)
             for l in SWEEP_BUDGETS]
    drops = [means[i] - means[i + 1] for i in range(len(means) - 1)]
    ok = max(drops) <= MONOTONE_ALLOWANCE_PTS
    curve = ", ".join(f"{l}:{m:.1f}" for l, m in zip(SWEEP_BUDGETS, means))
    _report("budget-monotonicity", ok,
            f"micro by l_max {{{curve}}}, worst adjacent drop "
            f"{max(drops):.2f} (allowance {MONOTONE_ALLOWANCE_PTS})")


# ---------------------------------------------------------------------------
# criterion: bitwise reproducibility


def test_determinism(run_pool):
    cfg = run_pool.config("smartquery")
    a = run_active_learning(cfg, val_idx=0, repeat=0)
    b = run_active_learning(cfg, val_idx=0, repeat=0)
    run_pool.audit_log.append((cfg, a))
    run_pool.audit_log.append((cfg, b))
    ok = (a.trace == b.trace and a.micro_f1 == b.micro_f1
          and a.macro_f1 == b.macro_f1)
    _report("determinism", ok,
            f"re-run identical: trace {a.trace == b.trace}, "
            f"micro {a.micro_f1 == b.micro_f1}, macro {a.macro_f1 == b.macro_f1}")


# ---------------------------------------------------------------------------
# criterion: the oracle only ever labeled free nodes (runs last by position)


def test_no_leak_audit(run_pool):
    checked = 0
    bad = 0
    _, _, labels, k = load_bundle(run_pool.bundle)
    split_cache = {}
    for cfg, res in run_pool.audit_log:
        key = (cfg.seed, res.val_idx, res.repeat, cfg.l_init)
        if key not in split_cache:
            split_cache[key] = make_splits(labels, cfg, k, res.val_idx,
                                           res.repeat)
        test_mask, val_mask, _ = split_cache[key]
        for node, _ in res.trace:
            checked += 1
            if test_mask[node] or val_mask[node]:
                bad += 1
    ok = bad == 0 and checked > 0
    _report("no-leak-audit", ok,
            f"{checked} queried nodes across {len(run_pool.audit_log)} runs, "
            f"{bad} in held-out splits")
