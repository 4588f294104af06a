import numpy as np

from graphal.graph import SparseGraph


def random_graph(rng, n, mean_degree=4.0):
    """Erdos-Renyi-ish undirected graph; isolated nodes allowed."""
    p = min(1.0, mean_degree / max(n - 1, 1))
    iu = np.triu_indices(n, 1)
    sel = rng.random(len(iu[0])) < p
    edges = np.stack([iu[0][sel], iu[1][sel]], axis=1)
    return SparseGraph.from_edges(n, edges)


def one_hot_seed(rng, n, k, n_labeled):
    """Random one-hot seed matrix with n_labeled labeled rows."""
    y = np.zeros((n, k))
    rows = rng.choice(n, size=n_labeled, replace=False)
    y[rows, rng.integers(0, k, size=n_labeled)] = 1.0
    return y
