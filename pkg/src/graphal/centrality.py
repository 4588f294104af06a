"""Structural node scores (degree, PageRank) and one-time candidate pooling.

The pool is built once per experiment from the unlabeled set: each node gets
pool_score = minmax(degree) + minmax(pagerank), the top `2 * l_max * k` nodes
by that score are admitted, and queried nodes are removed as they get labeled.
The pool is never rebuilt.
"""

from dataclasses import dataclass

import numpy as np

from .graph import SparseGraph, _frozen


def _minmax(x):
    """Min-max to [0, 1]; a constant vector maps to all zeros."""
    x = np.asarray(x, dtype=np.float64)
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.zeros_like(x)
    return (x - lo) / (hi - lo)


@dataclass(frozen=True)
class PageRankResult:
    values: np.ndarray
    iterations: int
    converged: bool


def pagerank(g: SparseGraph, beta=0.85, tol=1e-10, max_iter=1000):
    """Damped power iteration, PR = (1 - beta)/n + beta * sum_j A_ij PR_j / deg_j.

    Mass of degree-0 nodes is redistributed uniformly each step, so the output
    sums to 1 regardless of danglings.  Stops when the L1 step change drops
    below tol; exhaustion of max_iter is flagged on the result, not raised.
    """
    if g.n < 1:
        raise ValueError("pagerank needs at least one node")
    if not 0.0 <= beta < 1.0:
        raise ValueError("beta must lie in [0, 1)")
    n = g.n
    deg = g.degrees.astype(np.float64)
    dangling = deg == 0.0
    safe_deg = np.where(dangling, 1.0, deg)
    a = g.to_scipy()
    pr = np.full(n, 1.0 / n)
    base = (1.0 - beta) / n
    for it in range(1, max_iter + 1):
        contrib = pr / safe_deg
        contrib[dangling] = 0.0
        nxt = base + beta * (a @ contrib) + beta * pr[dangling].sum() / n
        delta = np.abs(nxt - pr).sum()
        pr = nxt
        if delta < tol:
            return PageRankResult(_frozen(pr), it, True)
    return PageRankResult(_frozen(pr), max_iter, False)


def degree_scores(g: SparseGraph):
    """Per-node degree on raw A (no self-loops), min-max normalized."""
    return _frozen(_minmax(g.degrees))


@dataclass(frozen=True)
class CentralityScores:
    """Per-node structural scores; pool_score = degree_norm + pagerank_norm."""

    degree_norm: np.ndarray
    pagerank: np.ndarray
    pagerank_norm: np.ndarray
    pool_score: np.ndarray
    converged: bool = True

    def __post_init__(self):
        for a in (self.degree_norm, self.pagerank, self.pagerank_norm, self.pool_score):
            _frozen(a)
        if abs(self.pagerank.sum() - 1.0) > 1e-9:
            raise ValueError("pagerank scores must sum to 1")

    @classmethod
    def compute(cls, g, beta=0.85, tol=1e-10, max_iter=1000):
        pr = pagerank(g, beta=beta, tol=tol, max_iter=max_iter)
        dn = degree_scores(g)
        pn = _minmax(pr.values)
        return cls(dn, pr.values, pn, dn + pn, pr.converged)


@dataclass(frozen=True)
class CandidatePool:
    """Unlabeled candidates ordered by pool_score descending, ties by id."""

    members: np.ndarray  # int64
    capacity: int

    def __post_init__(self):
        _frozen(self.members)

    def __len__(self):
        return len(self.members)

    def __contains__(self, node):
        return bool(np.isin(node, self.members))

    def remove(self, node):
        """Pool without `node`, order preserved. The node must be a member."""
        if node not in self:
            raise ValueError(f"node {node} not in pool")
        return CandidatePool(self.members[self.members != node], self.capacity)


def build_pool(scores: CentralityScores, state, l_max, k) -> CandidatePool:
    """Admit the top 2*l_max*k unlabeled nodes by pool_score.

    The per-class phrasing of the pool-size rule cannot be applied literally
    (candidate classes are unknown), so the cap is global.  Ties at the cut go
    to the lower node id.
    """
    capacity = 2 * int(l_max) * int(k)
    vu = state.v_u
    if len(vu) == 0:
        raise ValueError("no unlabeled nodes to pool")
    order = np.lexsort((vu, -scores.pool_score[vu]))
    members = vu[order][:capacity].copy()
    return CandidatePool(_frozen(members), capacity)
