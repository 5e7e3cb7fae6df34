"""Adjacency construction over node features, and graph CSV export.

The primary method is the banded lag-correlation graph: for each lag
``d = 1..tau`` the elementwise product of the feature matrix with its
``d``-shifted copy is reduced by a max over the feature axis and rectified;
the resulting per-lag vectors populate the ``+-d`` diagonals of a symmetric
adjacency with a zero main diagonal.  Built from autodiff kernels, so the
graph weights are differentiable in the node features (gradient flows to the
argmax feature of each pair; ties resolve to the lowest index).

Two detached baselines are provided for ablations: a Gaussian-kernel
distance graph on the same band, and a k-nearest-neighbour graph
(symmetrized by max, distance ties broken toward the lower node index).
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

__all__ = [
    "adjacency_correlation",
    "adjacency_distance",
    "adjacency_knn",
    "export_graph",
    "load_edges",
]


def _check_tau(tau, n):
    if not 1 <= tau < n:
        raise ValueError(f"tau must satisfy 1 <= tau < n_nodes, got tau={tau}, n={n}")


def adjacency_correlation(x, tau):
    """Banded correlation adjacency.

    ``x`` may be a Tensor (differentiable path, used inside the model) of
    shape (..., n, f), or a plain array, in which case a plain array comes
    back.
    """
    tensor_in = isinstance(x, Tensor)
    xt = x if tensor_in else Tensor(np.asarray(x, dtype=np.float64))
    if xt.ndim < 2:
        raise ad.ShapeError(f"adjacency_correlation: need (..., n, f) features, got {xt.shape}")
    n = xt.shape[-2]
    _check_tau(tau, n)
    diags = []
    for d in range(1, tau + 1):
        lagged = ad.mul(xt[..., : n - d, :], xt[..., d:, :])
        diags.append(ad.relu(ad.reduce_max(lagged, axis=-1)))
    a = ad.band_embed(diags, n)
    return a if tensor_in else a.data


def _pairwise_sq_dists(x):
    sq = (x * x).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    return np.maximum(d2, 0.0)


def adjacency_distance(x, tau):
    """Gaussian-kernel weights on the same +-tau band (detached baseline).

    The kernel width is the median squared distance over the band; if that
    median is zero (all banded rows identical) every band entry is 1.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        return np.stack([adjacency_distance(row, tau) for row in x])
    n = x.shape[0]
    _check_tau(tau, n)
    d2 = _pairwise_sq_dists(x)
    offset = np.abs(np.arange(n)[:, None] - np.arange(n)[None, :])
    band = (offset >= 1) & (offset <= tau)
    sigma2 = np.median(d2[band])
    if sigma2 == 0.0:
        return band.astype(np.float64)
    return np.where(band, np.exp(-d2 / sigma2), 0.0)


def adjacency_knn(x, k):
    """Unit-weight k-nearest-neighbour graph, symmetrized by max."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        return np.stack([adjacency_knn(row, k) for row in x])
    n = x.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"adjacency_knn: need 1 <= k < n, got k={k}, n={n}")
    d2 = _pairwise_sq_dists(x)
    np.fill_diagonal(d2, np.inf)
    order = np.argsort(d2, axis=1, kind="stable")  # stable: ties go to the lower index
    a = np.zeros((n, n))
    rows = np.repeat(np.arange(n), k)
    a[rows, order[:, :k].reshape(-1)] = 1.0
    return np.maximum(a, a.T)


def export_graph(node_features, adjacency, out_prefix, threshold=0.0):
    """Write ``<prefix>_edges.csv`` and ``<prefix>_nodes.csv``.

    Edges are undirected (each emitted once, src < dst) and keep only
    weights strictly above ``threshold``; weights are printed with full
    float64 precision so a parse reproduces the matrix exactly.  The node
    file carries the L2 norm of each node's feature row.
    """
    x = np.asarray(node_features, dtype=np.float64)
    a = np.asarray(adjacency, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or x.ndim != 2 or x.shape[0] != a.shape[0]:
        raise ValueError(f"export_graph: inconsistent shapes features={x.shape} adjacency={a.shape}")
    prefix = Path(out_prefix)
    edges_path = prefix.parent / (prefix.name + "_edges.csv")
    nodes_path = prefix.parent / (prefix.name + "_nodes.csv")
    n = a.shape[0]
    with open(edges_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["src", "dst", "weight"])
        for i in range(n):
            for j in range(i + 1, n):
                if a[i, j] > threshold:
                    w.writerow([i, j, f"{a[i, j]:.17g}"])
    with open(nodes_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["id", "norm"])
        for i in range(n):
            w.writerow([i, f"{np.linalg.norm(x[i]):.17g}"])
    return edges_path, nodes_path


def load_edges(path, n):
    """Rebuild the symmetric adjacency from an exported edge CSV."""
    a = np.zeros((n, n))
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        for row in reader:
            i, j, wt = int(row["src"]), int(row["dst"]), float(row["weight"])
            a[i, j] = a[j, i] = wt
    return a
