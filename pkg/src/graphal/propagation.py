"""Label spreading over the normalized adjacency, plus the entropy readout.

The spreading iteration is F(t+1) = alpha * A_hat F(t) + (1 - alpha) * Y with
F(0) = Y, run until the largest per-entry change in one step drops below tol.
A_hat is the plain symmetric normalization without self-loops; its spectral
radius is at most 1, so the damped iteration contracts toward the fixed point
(1 - alpha) * (I - alpha * A_hat)^{-1} Y.

Every spreading step in this package goes through the same fused kernel.  The
kernel updates each column independently, so a column's trajectory is bitwise
identical whether it is iterated alone or batched beside hundreds of other
columns; the query scorer leans on that to evaluate many hypothetical seeds in
one wide matrix while staying exactly equal to one-at-a-time runs.
"""

from dataclasses import dataclass

import numpy as np

from .graph import NormalizedAdjacency, _frozen

try:
    from numba import njit
except ImportError:  # pragma: no cover - exercised only without numba
    njit = None


if njit is not None:

    @njit(cache=True)
    def _fused_step(indptr, indices, data, w, s, alpha, out, coldelta):
        n, width = w.shape
        onem = 1.0 - alpha
        for c in range(width):
            coldelta[c] = 0.0
        acc = np.empty(width)
        for i in range(n):
            for c in range(width):
                acc[c] = 0.0
            for jj in range(indptr[i], indptr[i + 1]):
                j = indices[jj]
                v = data[jj]
                for c in range(width):
                    acc[c] += v * w[j, c]
            for c in range(width):
                x = alpha * acc[c] + onem * s[i, c]
                d = abs(x - w[i, c])
                if d > coldelta[c]:
                    coldelta[c] = d
                out[i, c] = x

else:  # pragma: no cover
    _fused_step = None


def lp_step(adj, w, s, alpha, out, coldelta):
    """One spreading step on every column at once.

    Fills `out` with alpha * A_hat w + (1 - alpha) * s and `coldelta[c]` with
    max_i |out[i, c] - w[i, c]|.  All dense arguments must be C-contiguous
    float64.  The backend is fixed at import time; each backend is
    self-consistent across widths, but bitwise parity between the two is not
    promised.
    """
    if _fused_step is not None:
        _fused_step(adj.row_ptr, adj.col_idx, adj.values, w, s, alpha, out, coldelta)
    else:  # pragma: no cover
        p = adj.to_scipy().dot(w)
        np.multiply(p, alpha, out=out)
        out += (1.0 - alpha) * s
        np.abs(out - w).max(axis=0, out=coldelta)


@dataclass(frozen=True)
class LabelSeed:
    """One-hot rows for labeled nodes, all-zero rows everywhere else."""

    y: np.ndarray  # n x k float64

    def __post_init__(self):
        y = np.ascontiguousarray(self.y, dtype=np.float64)
        object.__setattr__(self, "y", y)
        if y.ndim != 2:
            raise ValueError("seed must be a 2-D matrix")
        if not np.isin(y, (0.0, 1.0)).all():
            raise ValueError("seed entries must be 0 or 1")
        rs = y.sum(axis=1)
        if (rs > 1.0).any():
            raise ValueError("a seed row marks more than one class")
        _frozen(y)

    @classmethod
    def from_state(cls, state):
        """Seed matrix for the currently labeled set of a LabelState."""
        y = np.zeros((len(state.labels), state.k))
        y[state.v_l, state.labels[state.v_l]] = 1.0
        return cls(y)

    def augmented(self, node, class_id):
        """Copy with one extra labeled row; the row must currently be all-zero."""
        if self.y[node].any():
            raise ValueError(f"row {node} already seeded")
        y = self.y.copy()
        y[node, class_id] = 1.0
        return LabelSeed(y)


@dataclass(frozen=True)
class PropagationResult:
    """Converged (or max_iter-truncated) spread scores plus iteration stats."""

    f: np.ndarray
    iterations: int
    converged: bool

    def __post_init__(self):
        if not np.isfinite(self.f).all():
            raise ValueError("propagation produced non-finite values")
        _frozen(self.f)


def propagate(adj: NormalizedAdjacency, seed, alpha=0.9, tol=1e-6, max_iter=1000):
    """Iterate label spreading from F(0) = seed until the step change < tol.

    `seed` may be a LabelSeed or a raw n x k matrix.  alpha in [0, 1) blends
    neighborhood agreement against the injected seed; alpha = 0 returns the
    seed after a single no-op step.  Non-convergence within max_iter is
    reported through the result flag rather than raised, since the contraction
    argument makes it unreachable for the plain symmetric normalization.
    """
    y = seed.y if isinstance(seed, LabelSeed) else np.asarray(seed, dtype=np.float64)
    if y.ndim != 2 or y.shape[0] != adj.n:
        raise ValueError(f"seed shape {y.shape} incompatible with n={adj.n}")
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    s = np.ascontiguousarray(y)
    w = s.copy()
    out = np.empty_like(w)
    coldelta = np.empty(w.shape[1])
    for it in range(1, max_iter + 1):
        lp_step(adj, w, s, alpha, out, coldelta)
        w, out = out, w
        if coldelta.max() < tol:
            return PropagationResult(_frozen(w), it, True)
    return PropagationResult(_frozen(w), max_iter, False)


def lp_posterior(result):
    """Row-normalize spread scores into per-node class distributions.

    Accepts a PropagationResult or a raw n x k matrix.  L1 scaling per row;
    rows with total mass below 1e-12 carry no signal and fall back to uniform.
    """
    f = result.f if isinstance(result, PropagationResult) else np.asarray(result, dtype=np.float64)
    k = f.shape[1]
    rs = f.sum(axis=1, keepdims=True)
    dead = rs[:, 0] < 1e-12
    with np.errstate(invalid="ignore", divide="ignore"):
        p = f / rs
    p[dead] = 1.0 / k
    return p


def row_entropy(probs):
    """Shannon entropy of each row, natural log, with 0 ln 0 = 0."""
    p = np.asarray(probs, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(p > 0.0, p * np.log(p), 0.0)
    return -t.sum(axis=-1)


def graph_uncertainty(probs):
    """Total entropy summed over all rows of a row-stochastic matrix."""
    p = np.asarray(probs, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(p > 0.0, p * np.log(p), 0.0)
    return float(-t.sum())
