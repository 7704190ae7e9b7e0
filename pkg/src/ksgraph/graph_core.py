"""Pooled datasets, distance matrices and k-MST similarity graphs.

The k-MST is the union of k edge-disjoint minimum spanning trees, where the
j-th tree is the MST of the complete graph with the edges of trees 1..j-1
removed. Candidate edges are totally ordered by
``(weight, smaller index, larger index)`` so the construction is
deterministic even when distances tie.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import ConstructionError, InputError

__all__ = [
    "Dataset",
    "DistanceMatrix",
    "SimilarityGraph",
    "GraphConditionStats",
    "pairwise_distances",
    "build_kmst",
    "condition_stats",
]


def _group_sizes(labels: np.ndarray, n_groups: int) -> np.ndarray:
    return np.bincount(labels, minlength=n_groups)


@dataclass(frozen=True)
class Dataset:
    """Pooled observations with group labels ``0..K-1``."""

    points: np.ndarray
    labels: np.ndarray
    group_sizes: np.ndarray = field(init=False)

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if points.ndim != 2 or points.shape[1] < 1:
            raise InputError("points must be an N x d matrix with d >= 1")
        if not np.all(np.isfinite(points)):
            raise InputError("points contain non-finite values")
        labels = check_labels(self.labels, points.shape[0])
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "group_sizes", _group_sizes(labels, labels.max() + 1))

    @classmethod
    def from_groups(cls, groups) -> "Dataset":
        """Stack a sequence of per-group ``n_i x d`` arrays."""
        groups = [np.atleast_2d(np.asarray(g, dtype=float)) for g in groups]
        if not groups:
            raise InputError("at least one group is required")
        labels = np.concatenate([np.full(len(g), i) for i, g in enumerate(groups)])
        return cls(np.vstack(groups), labels)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def n_groups(self) -> int:
        return len(self.group_sizes)


def check_labels(labels, n: int | None = None) -> np.ndarray:
    """Validate a 0-based label vector in which every group is nonempty."""
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.size == 0:
        raise InputError("labels must be a nonempty 1-D vector")
    if n is not None and labels.size != n:
        raise InputError(f"expected {n} labels, got {labels.size}")
    if not np.issubdtype(labels.dtype, np.integer):
        if not np.all(np.equal(np.mod(labels, 1), 0)):
            raise InputError("labels must be integers")
    labels = labels.astype(np.int64)
    if labels.min() < 0:
        raise InputError("labels must be nonnegative group indices")
    sizes = _group_sizes(labels, labels.max() + 1)
    if np.any(sizes == 0):
        missing = np.flatnonzero(sizes == 0).tolist()
        raise InputError(f"groups {missing} are empty; labels must cover 0..K-1")
    return labels


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetric, nonnegative, zero-diagonal dissimilarities."""

    values: np.ndarray

    def __post_init__(self):
        d = np.array(self.values, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise InputError(f"distance matrix must be square, got shape {d.shape}")
        if not np.all(np.isfinite(d)):
            raise InputError("distance matrix contains non-finite entries")
        if np.any(d < 0):
            raise InputError("distance matrix contains negative entries")
        if np.any(np.diag(d) != 0):
            raise InputError("distance matrix must have a zero diagonal")
        if not np.array_equal(d, d.T):
            scale = max(1.0, float(np.abs(d).max()))
            if np.abs(d - d.T).max() > 1e-12 * scale:
                raise InputError("distance matrix is not symmetric")
            d = np.triu(d, 1)
            d = d + d.T
        d.setflags(write=False)
        object.__setattr__(self, "values", d)

    @property
    def n(self) -> int:
        return self.values.shape[0]


def pairwise_distances(dataset, metric: str = "euclidean") -> DistanceMatrix:
    """Exact pairwise distances between the rows of ``dataset``.

    ``dataset`` may be a :class:`Dataset` or a bare ``N x d`` array. Each row
    block is computed independently from the point coordinates, so results do
    not depend on how rows are scheduled.
    """
    x = dataset.points if isinstance(dataset, Dataset) else np.asarray(dataset, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if not np.all(np.isfinite(x)):
        raise InputError("points contain non-finite values")
    if metric not in ("euclidean", "manhattan"):
        raise InputError(f"unknown metric {metric!r}")
    n = x.shape[0]
    out = np.zeros((n, n))
    for i in range(n - 1):
        diff = x[i + 1:] - x[i]
        if metric == "euclidean":
            row = np.sqrt(np.sum(diff * diff, axis=1))
        else:
            row = np.sum(np.abs(diff), axis=1)
        out[i, i + 1:] = row
        out[i + 1:, i] = row
    return DistanceMatrix(out)


@dataclass(frozen=True)
class SimilarityGraph:
    """Undirected simple graph stored as an ``E x 2`` array with ``u < v``."""

    n_nodes: int
    edges: np.ndarray
    degrees: np.ndarray = field(init=False)

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if self.n_nodes < 1:
            raise InputError("graph needs at least one node")
        if edges.size and (edges.min() < 0 or edges.max() >= self.n_nodes):
            raise InputError("edge endpoint out of range")
        if np.any(edges[:, 0] == edges[:, 1]):
            raise InputError("self-loops are not allowed")
        edges = np.sort(edges, axis=1)
        if len(np.unique(edges, axis=0)) != len(edges):
            raise InputError("duplicate edges are not allowed")
        edges.setflags(write=False)
        degrees = np.bincount(edges.ravel(), minlength=self.n_nodes)
        degrees.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "degrees", degrees)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @property
    def sum_sq_degrees(self) -> int:
        return int(np.sum(self.degrees.astype(np.int64) ** 2))

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(u), int(v)) for u, v in self.edges}

    def is_connected(self) -> bool:
        if self.n_nodes == 1:
            return True
        adj = self.adjacency()
        n_comp, _ = sparse.csgraph.connected_components(adj, directed=False)
        return n_comp == 1

    def adjacency(self) -> sparse.csr_matrix:
        u, v = self.edges[:, 0], self.edges[:, 1]
        data = np.ones(2 * len(u), dtype=np.int64)
        return sparse.csr_matrix(
            (data, (np.concatenate([u, v]), np.concatenate([v, u]))),
            shape=(self.n_nodes, self.n_nodes),
        )


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, x):
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return True


def _kruskal_tree(order_i, order_j, n):
    uf = _UnionFind(n)
    tree = []
    for u, v in zip(order_i, order_j):
        if uf.union(u, v):
            tree.append((u, v))
            if len(tree) == n - 1:
                break
    return tree


def _prim_tree(w, n):
    """MST of the dense weight matrix ``w`` (``inf`` marks a missing edge).

    Comparisons use the ``(weight, min index, max index)`` order, under which
    the MST is unique and identical to the Kruskal result.
    """
    nodes = np.arange(n)
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best_w = w[0].copy()
    best_p = np.zeros(n, dtype=np.int64)
    tree = []
    for _ in range(n - 1):
        cand = np.flatnonzero(~in_tree)
        cw = best_w[cand]
        m = cw.min()
        if not np.isfinite(m):
            return tree
        ties = cand[cw == m]
        if len(ties) > 1:
            lo = np.minimum(best_p[ties], ties)
            hi = np.maximum(best_p[ties], ties)
            ties = ties[np.lexsort((hi, lo))]
        v = int(ties[0])
        p = int(best_p[v])
        tree.append((min(p, v), max(p, v)))
        in_tree[v] = True

        new_w = w[v]
        new_lo = np.minimum(v, nodes)
        new_hi = np.maximum(v, nodes)
        cur_lo = np.minimum(best_p, nodes)
        cur_hi = np.maximum(best_p, nodes)
        better = (new_w < best_w) | (
            (new_w == best_w)
            & ((new_lo < cur_lo) | ((new_lo == cur_lo) & (new_hi < cur_hi)))
        )
        better &= ~in_tree
        best_w[better] = new_w[better]
        best_p[better] = v
    return tree


def build_kmst(dist, k: int = 5, method: str = "prim") -> SimilarityGraph:
    """Union of ``k`` successive edge-disjoint minimum spanning trees.

    ``method="kruskal"`` runs Kruskal with union-find over the globally sorted
    edge list; ``method="prim"`` runs a vectorised dense Prim. Both honour the
    same total edge order and return identical graphs.
    """
    d = dist.values if isinstance(dist, DistanceMatrix) else DistanceMatrix(dist).values
    n = d.shape[0]
    if n < 2:
        raise InputError("need at least 2 nodes to build a spanning tree")
    if int(k) != k or k < 1:
        raise InputError("k must be a positive integer")
    k = int(k)

    edges: list[tuple[int, int]] = []
    if method == "kruskal":
        iu, ju = np.triu_indices(n, 1)
        order = np.lexsort((ju, iu, d[iu, ju]))
        oi, oj = iu[order].tolist(), ju[order].tolist()
        used: set[tuple[int, int]] = set()
        for t in range(1, k + 1):
            keep = [idx for idx, e in enumerate(zip(oi, oj)) if e not in used] if used else None
            if keep is not None:
                ti, tj = [oi[x] for x in keep], [oj[x] for x in keep]
            else:
                ti, tj = oi, oj
            tree = _kruskal_tree(ti, tj, n)
            if len(tree) < n - 1:
                raise ConstructionError(f"MST #{t} cannot span the graph after removing earlier trees")
            used.update(tree)
            edges.extend(tree)
    elif method == "prim":
        w = np.array(d, dtype=float)
        np.fill_diagonal(w, np.inf)
        for t in range(1, k + 1):
            tree = _prim_tree(w, n)
            if len(tree) < n - 1:
                raise ConstructionError(f"MST #{t} cannot span the graph after removing earlier trees")
            a = np.array(tree)
            w[a[:, 0], a[:, 1]] = np.inf
            w[a[:, 1], a[:, 0]] = np.inf
            edges.extend(tree)
    else:
        raise InputError(f"unknown MST method {method!r}")
    return SimilarityGraph(n, np.array(edges, dtype=np.int64).reshape(-1, 2))


@dataclass(frozen=True)
class GraphConditionStats:
    """Graph quantities entering the chi-square limit conditions.

    ``sum_ab`` is the sum over edges of ``|A_e| * |B_e|``, where ``A_e`` holds
    ``e`` and every edge sharing a node with it and ``B_e`` adds every edge
    sharing a node with a member of ``A_e``. The ratios are the three
    quantities normalised by the growth rates that keep them bounded.
    """

    n_nodes: int
    edge_count: int
    sum_sq_degrees: int
    sum_ab: int
    ratio_edges: float
    ratio_hub: float
    ratio_ab: float

    def asdict(self) -> dict:
        from dataclasses import asdict

        return asdict(self)


def edge_neighbourhood_sizes(G: SimilarityGraph) -> tuple[np.ndarray, np.ndarray]:
    """Per-edge ``|A_e|`` and ``|B_e|``."""
    if G.edge_count == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    u, v = G.edges[:, 0], G.edges[:, 1]
    a_sizes = G.degrees[u] + G.degrees[v] - 1
    e = G.edge_count
    cols = np.arange(e)
    # node-edge incidence; column e marks the endpoints of edge e
    inc = sparse.csr_matrix(
        (np.ones(2 * e, dtype=np.int64), (np.concatenate([u, v]), np.concatenate([cols, cols]))),
        shape=(G.n_nodes, e),
    )
    closed = G.adjacency() + sparse.identity(G.n_nodes, dtype=np.int64, format="csr")
    # nodes within one hop of either endpoint, i.e. all nodes touched by A_e
    touched = (closed @ inc).astype(bool).astype(np.int64)
    b_sizes = np.asarray((inc.T @ touched).astype(bool).sum(axis=0)).ravel()
    return a_sizes.astype(np.int64), b_sizes.astype(np.int64)


def condition_stats(G: SimilarityGraph) -> GraphConditionStats:
    n = G.n_nodes
    a_sizes, b_sizes = edge_neighbourhood_sizes(G)
    m = G.edge_count
    ssq = G.sum_sq_degrees
    sum_ab = int(np.sum(a_sizes * b_sizes))
    return GraphConditionStats(
        n_nodes=n,
        edge_count=m,
        sum_sq_degrees=ssq,
        sum_ab=sum_ab,
        ratio_edges=m / n,
        ratio_hub=max(0.0, (ssq - 4.0 * m * m / n) / n),
        ratio_ab=sum_ab / n**1.5,
    )
