"""Sparse graph core: CSR adjacency, normalizations, and the on-disk bundle format.

A dataset bundle is a directory of four text files:

    meta.json       {"name": ..., "n": ..., "d": ..., "k": ...}
    edges.tsv       one undirected edge per line, two 0-based node ids (either
                    orientation; duplicates and repeated orientations tolerated)
    features.tsv    one row per node, d tab-separated decimals
    labels.tsv      one class id per line, in [0, k)

The LINQS plain-text pair (<name>.content / <name>.cites) is also accepted,
with string ids densified in first-seen content order.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


class BundleError(ValueError):
    """Raised when a dataset bundle is missing, malformed, or inconsistent."""


def _frozen(a):
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class SparseGraph:
    """Undirected, unweighted adjacency in CSR form. No self-loops, no duplicates."""

    n: int
    row_ptr: np.ndarray  # int64, len n+1
    col_idx: np.ndarray  # int64, len 2*|E|
    degrees: np.ndarray  # int64, len n

    @classmethod
    def from_edges(cls, n, edges):
        """Build from an iterable of (u, v) pairs; symmetrizes, dedupes, drops loops."""
        e = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= n):
            raise BundleError(f"edge endpoint out of range [0, {n})")
        e = e[e[:, 0] != e[:, 1]]  # drop self-loops
        both = np.concatenate([e, e[:, ::-1]], axis=0)
        if both.size:
            keys = both[:, 0] * n + both[:, 1]
            both = both[np.argsort(keys, kind="stable")]
            keys = both[:, 0] * n + both[:, 1]
            both = both[np.concatenate([[True], keys[1:] != keys[:-1]])]
        counts = np.bincount(both[:, 0], minlength=n).astype(np.int64)
        row_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=row_ptr[1:])
        return cls(n, _frozen(row_ptr), _frozen(both[:, 1].copy()), _frozen(counts))

    def __post_init__(self):
        if len(self.row_ptr) != self.n + 1:
            raise ValueError("row_ptr length must be n+1")

    def neighbors(self, i):
        return self.col_idx[self.row_ptr[i]:self.row_ptr[i + 1]]

    def edge_pairs(self):
        """Undirected edges as a set of (min, max) tuples."""
        src = np.repeat(np.arange(self.n), np.diff(self.row_ptr))
        mask = src < self.col_idx
        return set(zip(src[mask].tolist(), self.col_idx[mask].tolist()))

    @property
    def num_edges(self):
        return len(self.col_idx) // 2

    def to_scipy(self):
        data = np.ones(len(self.col_idx), dtype=np.float64)
        return sp.csr_matrix((data, self.col_idx, self.row_ptr), shape=(self.n, self.n))


@dataclass(frozen=True)
class FeatureMatrix:
    """Dense n x d node features, float64."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 2:
            raise ValueError("feature matrix must be 2-D")
        if not np.isfinite(self.data).all():
            raise ValueError("feature matrix contains non-finite entries")
        _frozen(self.data)

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def d(self):
        return self.data.shape[1]


GCN_SELF_LOOP = "gcn-self-loop"
PLAIN_SYMMETRIC = "plain-symmetric"


@dataclass(frozen=True)
class NormalizedAdjacency:
    """Symmetrically normalized adjacency in CSR form.

    kind "gcn-self-loop":   D~^(-1/2) (A+I) D~^(-1/2), D~ the degrees of A+I
    kind "plain-symmetric": D^(-1/2) A D^(-1/2); isolated nodes get all-zero rows
    """

    kind: str
    n: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray  # float64
    _csr: sp.csr_matrix = field(repr=False, compare=False, default=None)

    def to_scipy(self):
        return self._csr

    def to_dense(self):
        return self._csr.toarray()


def normalize(g: SparseGraph, kind: str) -> NormalizedAdjacency:
    """Symmetric normalization of the adjacency; deterministic for a given graph."""
    if kind == GCN_SELF_LOOP:
        a = g.to_scipy() + sp.identity(g.n, format="csr", dtype=np.float64)
        deg = np.asarray(a.sum(axis=1)).ravel()
    elif kind == PLAIN_SYMMETRIC:
        a = g.to_scipy()
        deg = g.degrees.astype(np.float64)
    else:
        raise ValueError(f"unknown normalization kind: {kind!r}")
    with np.errstate(divide="ignore"):
        dinv = 1.0 / np.sqrt(deg)
    dinv[~np.isfinite(dinv)] = 0.0
    a = a.tocoo()
    vals = dinv[a.row] * dinv[a.col] * a.data
    csr = sp.csr_matrix((vals, (a.row, a.col)), shape=(g.n, g.n))
    csr.sort_indices()
    return NormalizedAdjacency(
        kind, g.n,
        _frozen(csr.indptr.astype(np.int64)),
        _frozen(csr.indices.astype(np.int64)),
        _frozen(csr.data),
        csr,
    )


def spmm(adj: NormalizedAdjacency, m: np.ndarray) -> np.ndarray:
    """CSR sparse * dense product. Exact shapes enforced; rows independent."""
    m = np.asarray(m, dtype=np.float64)
    if m.shape[0] != adj.n:
        raise ValueError(f"row count {m.shape[0]} != node count {adj.n}")
    return adj.to_scipy() @ m


@dataclass(frozen=True)
class LabelState:
    """Partition of nodes into labeled/unlabeled/test/validation, plus budget.

    `labels` holds class ids only for labeled nodes (-1 elsewhere); ground truth
    for everything else lives with the experiment oracle, never here.
    """

    labels: np.ndarray       # int64, -1 where hidden
    k: int
    v_l: np.ndarray          # int64, sorted labeled ids
    v_u: np.ndarray          # int64, sorted unlabeled ids
    test_mask: np.ndarray    # bool
    val_mask: np.ndarray     # bool
    budget_remaining: int

    def __post_init__(self):
        for a in (self.labels, self.v_l, self.v_u, self.test_mask, self.val_mask):
            _frozen(a)
        if self.budget_remaining < 0:
            raise ValueError("negative budget")
        if np.any(self.test_mask & self.val_mask):
            raise ValueError("test and validation masks overlap")

    @classmethod
    def initial(cls, n, k, labeled, labeled_classes, test_mask, val_mask, budget):
        labels = np.full(n, -1, dtype=np.int64)
        labeled = np.asarray(labeled, dtype=np.int64)
        labels[labeled] = np.asarray(labeled_classes, dtype=np.int64)
        held = test_mask | val_mask
        if held[labeled].any():
            raise ValueError("labeled node inside test/validation split")
        free = np.flatnonzero(~held)
        v_u = np.setdiff1d(free, labeled, assume_unique=False)
        return cls(labels, k, np.sort(labeled), v_u, test_mask.copy(), val_mask.copy(), budget)

    def with_label(self, node, class_id):
        """New state with `node` moved from the unlabeled set into the labeled set."""
        if self.labels[node] >= 0:
            raise ValueError(f"node {node} already labeled")
        if self.test_mask[node] or self.val_mask[node]:
            raise ValueError(f"node {node} is in a held-out split")
        if self.budget_remaining <= 0:
            raise ValueError("labeling budget exhausted")
        labels = self.labels.copy()
        labels[node] = class_id
        v_l = np.sort(np.append(self.v_l, node))
        v_u = self.v_u[self.v_u != node]
        return LabelState(labels, self.k, v_l, v_u, self.test_mask, self.val_mask,
                          self.budget_remaining - 1)


# ---------------------------------------------------------------------------
# bundle I/O

_BUNDLE_FILES = ("meta.json", "edges.tsv", "features.tsv", "labels.tsv")


def load_bundle(path, fmt="bundle"):
    """Load a dataset directory.

    fmt "bundle" reads the canonical four-file layout; fmt "linqs" reads a
    <name>.content/<name>.cites pair. Returns (graph, features, labels, k)
    where labels is the full ground-truth vector.
    """
    if fmt == "linqs":
        return _load_linqs(path)
    if fmt != "bundle":
        raise ValueError(f"unknown bundle format {fmt!r}")
    for fname in _BUNDLE_FILES:
        if not os.path.isfile(os.path.join(path, fname)):
            raise BundleError(f"missing bundle file: {fname}")
    with open(os.path.join(path, "meta.json")) as f:
        meta = json.load(f)
    n, d, k = int(meta["n"]), int(meta["d"]), int(meta["k"])

    feats = _read_matrix(os.path.join(path, "features.tsv"))
    if feats.shape != (n, d):
        raise BundleError(f"features shape {feats.shape} != meta ({n}, {d})")
    labels = np.loadtxt(os.path.join(path, "labels.tsv"), dtype=np.int64, ndmin=1)
    if labels.shape != (n,):
        raise BundleError(f"labels length {labels.shape[0]} != n={n}")
    if labels.min() < 0 or labels.max() >= k:
        raise BundleError(f"label outside [0, {k})")
    if len(np.unique(labels)) > k:
        raise BundleError("more classes present than meta k")

    edges = _read_edges(os.path.join(path, "edges.tsv"))
    graph = SparseGraph.from_edges(n, edges)
    return graph, FeatureMatrix(feats), _frozen(labels), k


def save_bundle(path, graph, features, labels, k, name="dataset", extra_meta=None):
    """Write the canonical bundle. Inverse of load_bundle on edge sets/features/labels."""
    os.makedirs(path, exist_ok=True)
    meta = {"name": name, "n": graph.n, "d": features.d, "k": int(k)}
    if extra_meta:
        meta.update(extra_meta)
    with open(os.path.join(path, "meta.json"), "w") as f:
        json.dump(meta, f, indent=2)
        f.write("\n")
    with open(os.path.join(path, "edges.tsv"), "w") as f:
        for u, v in sorted(graph.edge_pairs()):
            f.write(f"{u}\t{v}\n")
    with open(os.path.join(path, "features.tsv"), "w") as f:
        for row in features.data:
            f.write("\t".join("%.17g" % x for x in row))
            f.write("\n")
    with open(os.path.join(path, "labels.tsv"), "w") as f:
        for y in labels:
            f.write(f"{int(y)}\n")


def _read_matrix(path):
    rows = []
    width = None
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise BundleError(f"{os.path.basename(path)}:{lineno}: expected "
                                  f"{width} columns, got {len(parts)}")
            rows.append(parts)
    if not rows:
        raise BundleError(f"{os.path.basename(path)} is empty")
    try:
        return np.array(rows, dtype=np.float64)
    except ValueError as e:
        raise BundleError(f"non-numeric feature value: {e}") from None


def _read_edges(path):
    edges = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise BundleError(f"edges.tsv:{lineno}: expected two ids")
            edges.append((int(parts[0]), int(parts[1])))
    return edges


def _load_linqs(path):
    """LINQS <name>.content / <name>.cites pair; ids densified in first-seen order."""
    base = None
    for fname in os.listdir(path):
        if fname.endswith(".content"):
            base = fname[:-len(".content")]
            break
    if base is None:
        raise BundleError("no .content file in directory")
    cites = os.path.join(path, base + ".cites")
    if not os.path.isfile(cites):
        raise BundleError(f"missing {base}.cites")

    ids, feat_rows, label_names = {}, [], []
    class_ids = {}
    with open(os.path.join(path, base + ".content")) as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            node, feats, cls = parts[0], parts[1:-1], parts[-1]
            if node in ids:
                raise BundleError(f"duplicate content id {node}")
            ids[node] = len(ids)
            feat_rows.append([float(x) for x in feats])
            if cls not in class_ids:
                class_ids[cls] = len(class_ids)
            label_names.append(cls)

    n = len(ids)
    edges, skipped = [], 0
    with open(cites) as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise BundleError("malformed .cites line")
            a, b = parts
            if a in ids and b in ids:
                edges.append((ids[a], ids[b]))
            else:
                skipped += 1  # real LINQS dumps cite papers outside .content

    if not feat_rows:
        raise BundleError("empty .content file")
    widths = {len(r) for r in feat_rows}
    if len(widths) != 1:
        raise BundleError("ragged feature rows in .content")
    feats = np.array(feat_rows, dtype=np.float64)
    labels = np.array([class_ids[c] for c in label_names], dtype=np.int64)
    graph = SparseGraph.from_edges(n, edges)
    return graph, FeatureMatrix(feats), _frozen(labels), len(class_ids)
