"""Query selection: expected uncertainty-drop scoring plus all baselines.

The main scorer asks, for each candidate node and each class it might turn out
to have: how much would total post-spreading entropy fall if we labeled it
that way?  Those per-class drops, weighted by the classifier's predicted class
probabilities, give the candidate's score.

Evaluating one hypothesis honestly means one full spreading run on the seed
matrix with one extra row.  Because the spreading kernel treats columns
independently, all hypotheses share their unmodified columns with the base
run, so only the modified column of each needs iterating; we batch those into
one wide matrix.  Per-column stopping mirrors the stopping rule a standalone
run of the augmented seed would apply (its max-change test covers the base
columns too), which keeps every score bitwise equal to the two-full-runs
computation it stands in for.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import rankdata

from .centrality import CandidatePool, CentralityScores
from .gcn import Posterior
from .graph import NormalizedAdjacency, SparseGraph
from .propagation import LabelSeed, graph_uncertainty, lp_posterior, lp_step, row_entropy

POOL_STRATEGIES = ("smartquery", "pool-only", "lp-random-pool", "lp-embed-pool")
FREE_STRATEGIES = ("random", "entropy", "degree", "coreset", "age")
ALL_STRATEGIES = ("smartquery", "random", "entropy", "degree", "coreset", "age",
                  "pool-only", "lp-random-pool", "lp-embed-pool")

AGE_BASEF = 0.995


@dataclass(frozen=True)
class QueryScore:
    node: int
    value: float
    strategy: str

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError("query score must be finite")


class _BaseRun:
    """Base spreading trajectory with lazy extension and replayable snapshots.

    Stores the per-step per-column max-abs changes (needed by the per-column
    stopping rule) and memoizes iterates at requested step counts.  Replays
    are bitwise-faithful: every step is a pure function of the previous
    iterate and the seed, through the same kernel.
    """

    def __init__(self, adj, seed, alpha, tol, max_iter):
        self.adj = adj
        self.seed = np.ascontiguousarray(seed)
        self.alpha = alpha
        self.tol = tol
        self.max_iter = max_iter
        self.w = self.seed.copy()
        self.out = np.empty_like(self.w)
        self.cd = np.empty(self.w.shape[1])
        self.deltas = []    # deltas[t-1][c] = max-abs change of column c at step t
        self.top2 = []      # (largest delta, its column, second largest) per step
        self.snapshots = {}
        self.stop_t = None  # first step where every column's change < tol

    def ensure(self, t):
        while len(self.deltas) < t:
            lp_step(self.adj, self.w, self.seed, self.alpha, self.out, self.cd)
            self.w, self.out = self.out, self.w
            cd = self.cd.copy()
            self.deltas.append(cd)
            am = int(np.argmax(cd))
            m2 = float(np.partition(cd, -2)[-2]) if cd.size > 1 else 0.0
            self.top2.append((float(cd[am]), am, m2))
            step = len(self.deltas)
            if self.stop_t is None and cd[am] < self.tol:
                self.stop_t = step
                self.snapshots[step] = self.w.copy()

    def capture(self, t):
        """Cheap snapshot when the live iterate happens to sit at step t."""
        if t not in self.snapshots and len(self.deltas) == t:
            self.snapshots[t] = self.w.copy()

    def snapshot(self, t):
        hit = self.snapshots.get(t)
        if hit is not None:
            return hit
        earlier = [s for s in self.snapshots if s < t]
        if earlier:
            t0 = max(earlier)
            w = self.snapshots[t0].copy()
        else:
            t0 = 0
            w = self.seed.copy()
        out = np.empty_like(w)
        cd = np.empty(w.shape[1])
        for _ in range(t - t0):
            lp_step(self.adj, w, self.seed, self.alpha, out, cd)
            w, out = out, w
        self.snapshots[t] = w
        return w

    def run_to_stop(self):
        """(stop step, iterate there, converged flag) for the base seed alone."""
        while self.stop_t is None and len(self.deltas) < self.max_iter:
            self.ensure(len(self.deltas) + 1)
        if self.stop_t is None:
            return self.max_iter, self.snapshot(self.max_iter), False
        return self.stop_t, self.snapshots[self.stop_t], True


@dataclass
class QueryContext:
    """Everything one query decision reads.

    Built fresh by the harness for each query iteration; the posterior must
    come from the current model and the spreading cache lives exactly as long
    as the context does.
    """

    graph: SparseGraph
    lp_adj: NormalizedAdjacency
    posterior: Posterior
    state: object
    pool: CandidatePool
    scores: CentralityScores
    alpha: float = 0.9
    lp_tol: float = 1e-6
    lp_max_iter: int = 1000
    lp_converged: bool = field(default=True, init=False)
    _base: _BaseRun = field(default=None, init=False, repr=False)
    _h_base: float = field(default=None, init=False, repr=False)
    _dh: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        if self.pool is not None and np.isin(self.pool.members, self.state.v_l).any():
            raise ValueError("candidate pool overlaps the labeled set")

    def _base_run(self):
        if self._base is None:
            seed = LabelSeed.from_state(self.state).y
            self._base = _BaseRun(self.lp_adj, seed, self.alpha,
                                  self.lp_tol, self.lp_max_iter)
        return self._base


def _score_pairs(ctx, pairs):
    """Fill ctx._dh with the uncertainty drop of each (node, class) hypothesis.

    One wide matrix carries the modified column of every hypothesis; the base
    run advances in lockstep to supply the other columns' step changes for the
    stopping rule, and its snapshots supply their values at each hypothesis's
    stop step.
    """
    pairs = [p for p in pairs if p not in ctx._dh]
    if not pairs:
        return
    base = ctx._base_run()
    adj, alpha = ctx.lp_adj, ctx.alpha
    tol, max_iter = ctx.lp_tol, ctx.lp_max_iter
    n, k = base.seed.shape
    width = len(pairs)
    nodes = np.fromiter((p[0] for p in pairs), np.int64, width)
    ks = np.fromiter((p[1] for p in pairs), np.int64, width)

    s = base.seed[:, ks]                 # fancy indexing copies
    s[nodes, np.arange(width)] = 1.0     # the one extra labeled row per column
    g = s.copy()
    out = np.empty_like(g)
    wdelta = np.empty(width)
    done = np.zeros(width, dtype=bool)
    stop_t = np.full(width, max_iter, dtype=np.int64)
    results = np.empty((n, width))
    t = 0
    while t < max_iter and not done.all():
        t += 1
        base.ensure(t)
        lp_step(adj, g, s, alpha, out, wdelta)
        g, out = out, g
        m1, am, m2 = base.top2[t - 1]
        excl = np.where(ks == am, m2, m1)   # base columns' change, minus column k
        newly = (np.maximum(excl, wdelta) < tol) & ~done
        if newly.any():
            base.capture(t)
            for j in np.flatnonzero(newly):
                results[:, j] = g[:, j]
                stop_t[j] = t
            done |= newly
    if not done.all():   # max_iter exhausted; keep best iterates, flag it
        ctx.lp_converged = False
        for j in np.flatnonzero(~done):
            results[:, j] = g[:, j]

    if ctx._h_base is None:
        _, f_base, base_ok = base.run_to_stop()
        ctx._h_base = graph_uncertainty(lp_posterior(f_base))
        ctx.lp_converged = ctx.lp_converged and base_ok
    for j in range(width):
        f = base.snapshot(int(stop_t[j])).copy()
        f[:, ks[j]] = results[:, j]
        ctx._dh[pairs[j]] = ctx._h_base - graph_uncertainty(lp_posterior(f))


def delta_h(ctx, candidate, class_id):
    """Drop in total post-spreading entropy if `candidate` got `class_id`.

    Equals two independent full spreading runs (with and without the extra
    row) fed through the same posterior and entropy pipeline.  May be
    negative; a hypothetical label can raise uncertainty.  Non-convergence
    surfaces on ctx.lp_converged.
    """
    if ctx.pool is None or candidate not in ctx.pool:
        raise ValueError(f"candidate {candidate} not in pool")
    if not 0 <= class_id < ctx.state.k:
        raise ValueError(f"class {class_id} out of range")
    key = (int(candidate), int(class_id))
    _score_pairs(ctx, [key])
    return ctx._dh[key]


def smartquery_score(ctx, candidate):
    """Expected uncertainty drop, weighted by the classifier's class beliefs."""
    if ctx.pool is None or candidate not in ctx.pool:
        raise ValueError(f"candidate {candidate} not in pool")
    i = int(candidate)
    k = ctx.state.k
    _score_pairs(ctx, [(i, c) for c in range(k)])
    drops = np.array([ctx._dh[(i, c)] for c in range(k)])
    return QueryScore(i, float(ctx.posterior.probs[i] @ drops), "smartquery")


def _uncertainty_drop_values(ctx, cands):
    k = ctx.state.k
    _score_pairs(ctx, [(int(i), c) for i in cands for c in range(k)])
    probs = ctx.posterior.probs
    out = np.empty(len(cands))
    for j, i in enumerate(cands):
        drops = np.array([ctx._dh[(int(i), c)] for c in range(k)])
        out[j] = probs[i] @ drops
    return out


# ---------------------------------------------------------------------------
# baselines


def _coreset_values(ctx, cands):
    emb = ctx.posterior.hidden
    v_l = ctx.state.v_l
    if len(v_l) == 0:
        return np.zeros(len(cands))
    return cdist(emb[cands], emb[v_l]).min(axis=1)


def _kmeans(points, k, rng, iters=50):
    """Plain Lloyd with sample init; an emptied cluster is re-seeded from rng."""
    cent = points[rng.choice(len(points), size=k, replace=False)].copy()
    assign = None
    for _ in range(iters):
        d = cdist(points, cent)
        assign = d.argmin(axis=1)
        new = cent.copy()
        for c in range(k):
            sel = assign == c
            if sel.any():
                new[c] = points[sel].mean(axis=0)
            else:
                new[c] = points[rng.integers(len(points))]
        if np.allclose(new, cent, atol=1e-12):
            cent = new
            break
        cent = new
    return cent, assign


def _density_scores(probs, k, rng):
    """Negative distance to the nearest k-means centroid of the class beliefs."""
    cent, _ = _kmeans(probs, k, rng)
    return -cdist(probs, cent).min(axis=1)


def _percentile(x):
    return rankdata(x, method="average") / len(x)


def _age_weights(epoch_t, rng):
    # random pagerank weight shrinks (on average) as training ages, shifting
    # emphasis toward the model-dependent metrics
    eps = rng.beta(1.0, 1.005 - AGE_BASEF ** epoch_t)
    half = (1.0 - eps) / 2.0
    return half, half, eps


def _age_values(ctx, cands, weights, rng):
    gamma, delta, eps = weights
    ent = _percentile(row_entropy(ctx.posterior.probs[cands]))
    dens = _percentile(_density_scores(ctx.posterior.probs, ctx.state.k, rng)[cands])
    pr = _percentile(ctx.scores.pagerank[cands])
    return gamma * ent + delta * dens + eps * pr


def baseline_entropy(ctx, candidate):
    """Predictive entropy of one node's class beliefs."""
    value = float(row_entropy(ctx.posterior.probs[int(candidate)]))
    return QueryScore(int(candidate), value, "entropy")


def baseline_coreset(ctx):
    """Greedy k-center step: the unlabeled node farthest (in layer-1 embedding
    space) from its nearest labeled node."""
    cands = _free_candidates(ctx)
    return int(cands[np.argmax(_coreset_values(ctx, cands))])


def baseline_age(ctx, epoch_t, rng, weights=None):
    """Percentile blend of entropy, embedding density, and pagerank.

    `weights` overrides the time-sensitive draw (testing hook); otherwise
    (gamma, delta, eps) come from the epoch-dependent schedule via rng.
    """
    cands = _free_candidates(ctx)
    if weights is None:
        weights = _age_weights(epoch_t, rng)
    return int(cands[np.argmax(_age_values(ctx, cands, weights, rng))])


def baseline_degree(ctx):
    cands = _free_candidates(ctx)
    return int(cands[np.argmax(ctx.graph.degrees[cands])])


def baseline_random(ctx, rng):
    cands = _free_candidates(ctx)
    return int(cands[rng.integers(len(cands))])


def _free_candidates(ctx):
    vu = ctx.state.v_u
    if len(vu) == 0:
        raise ValueError("no unlabeled candidates")
    return vu  # sorted ascending, so first argmax hit is the lowest id


def _pool_candidates(ctx):
    if ctx.pool is None or len(ctx.pool) == 0:
        raise ValueError("empty candidate pool")
    return np.sort(ctx.pool.members)


# ---------------------------------------------------------------------------
# dispatch


def select_scored(ctx, strategy, rng=None, epoch_t=0):
    """Best candidate under `strategy`, with its score. Ties go to the lowest
    node id. The caller owns state/pool updates after the oracle answers."""
    if strategy == "random":
        if rng is None:
            raise ValueError("random selection needs an rng")
        cands = _free_candidates(ctx)
        return QueryScore(int(cands[rng.integers(len(cands))]), 0.0, strategy)
    if strategy in ("smartquery", "lp-random-pool", "lp-embed-pool"):
        cands = _pool_candidates(ctx)
        vals = _uncertainty_drop_values(ctx, cands)
    elif strategy == "pool-only":
        cands = _pool_candidates(ctx)
        vals = ctx.scores.pool_score[cands]
    elif strategy == "entropy":
        cands = _free_candidates(ctx)
        vals = row_entropy(ctx.posterior.probs[cands])
    elif strategy == "degree":
        cands = _free_candidates(ctx)
        vals = ctx.graph.degrees[cands].astype(np.float64)
    elif strategy == "coreset":
        cands = _free_candidates(ctx)
        vals = _coreset_values(ctx, cands)
    elif strategy == "age":
        if rng is None:
            raise ValueError("age selection needs an rng")
        cands = _free_candidates(ctx)
        vals = _age_values(ctx, cands, _age_weights(epoch_t, rng), rng)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    j = int(np.argmax(vals))
    return QueryScore(int(cands[j]), float(vals[j]), strategy)


def select(ctx, strategy, rng=None, epoch_t=0):
    """Node id of the best candidate under `strategy`."""
    return select_scored(ctx, strategy, rng, epoch_t).node


# ---------------------------------------------------------------------------
# alternative pools for the ablation workflows


def build_random_pool(state, l_max, k, rng):
    """Uniformly random capacity-sized pool from the unlabeled set."""
    capacity = 2 * int(l_max) * int(k)
    vu = state.v_u
    if len(vu) == 0:
        raise ValueError("no unlabeled nodes to pool")
    take = min(capacity, len(vu))
    members = np.sort(rng.choice(vu, size=take, replace=False))
    return CandidatePool(members.astype(np.int64), capacity)


def build_density_pool(posterior, state, l_max, k, rng):
    """Pool of the unlabeled nodes densest in class-belief space."""
    capacity = 2 * int(l_max) * int(k)
    vu = state.v_u
    if len(vu) == 0:
        raise ValueError("no unlabeled nodes to pool")
    dens = _density_scores(posterior.probs, k, rng)[vu]
    order = np.lexsort((vu, -dens))
    return CandidatePool(vu[order][:capacity].copy(), capacity)
