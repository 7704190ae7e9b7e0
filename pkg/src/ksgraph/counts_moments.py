"""Within/between-sample edge counts and their permutation-null moments.

The full count vector is ordered ``(R_00, ..., R_{K-1,K-1}, R_01, R_02, ...,
R_{K-2,K-1})``: the K within-sample counts, then the between-sample counts in
row-major upper-triangle order.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import InputError, UnsupportedSizeError
from .graph_core import SimilarityGraph, check_labels

__all__ = [
    "EdgeCounts",
    "NullMoments",
    "pair_list",
    "pair_index",
    "count_edges",
    "count_vectors",
    "null_moments",
    "exact_moments_bruteforce",
    "enumerate_assignments",
    "standardized_counts",
]

ENUMERATION_LIMIT = 10**6


def pair_list(K: int) -> list[tuple[int, int]]:
    """Group pairs in full-vector order."""
    return [(i, i) for i in range(K)] + list(itertools.combinations(range(K), 2))


def pair_index(K: int) -> np.ndarray:
    """``K x K`` symmetric matrix mapping a group pair to its full-vector slot."""
    idx = np.empty((K, K), dtype=np.int64)
    for p, (i, j) in enumerate(pair_list(K)):
        idx[i, j] = idx[j, i] = p
    return idx


@dataclass(frozen=True)
class EdgeCounts:
    """Symmetric ``K x K`` matrix ``R`` of edge counts between groups."""

    R: np.ndarray

    @property
    def K(self) -> int:
        return self.R.shape[0]

    @property
    def total(self) -> int:
        return int(np.trace(self.R) + np.triu(self.R, 1).sum())

    def full_vector(self) -> np.ndarray:
        return np.array([self.R[i, j] for i, j in pair_list(self.K)], dtype=float)

    @classmethod
    def from_vector(cls, vec, K: int) -> "EdgeCounts":
        vec = np.asarray(vec)
        R = np.zeros((K, K), dtype=vec.dtype)
        for p, (i, j) in enumerate(pair_list(K)):
            R[i, j] = R[j, i] = vec[p]
        return cls(R)


def _edge_pairs(G: SimilarityGraph, labels: np.ndarray, K: int) -> np.ndarray:
    return pair_index(K)[labels[..., G.edges[:, 0]], labels[..., G.edges[:, 1]]]


def count_edges(G: SimilarityGraph, labels, n_groups: int | None = None) -> EdgeCounts:
    """Classify every edge of ``G`` by the groups of its endpoints."""
    labels = np.asarray(labels)
    if labels.shape != (G.n_nodes,):
        raise InputError(f"expected {G.n_nodes} labels, got shape {labels.shape}")
    if labels.size and labels.min() < 0:
        raise InputError("labels must be nonnegative group indices")
    K = int(labels.max()) + 1 if n_groups is None else int(n_groups)
    if labels.max() >= K:
        raise InputError(f"label {int(labels.max())} out of range for {K} groups")
    vec = np.bincount(_edge_pairs(G, labels, K), minlength=K * (K + 1) // 2)
    return EdgeCounts.from_vector(vec, K)


def count_vectors(G: SimilarityGraph, label_rows: np.ndarray, K: int) -> np.ndarray:
    """Full count vectors for a batch of labelings (one labeling per row)."""
    label_rows = np.atleast_2d(label_rows)
    P = K * (K + 1) // 2
    b = label_rows.shape[0]
    codes = _edge_pairs(G, label_rows, K) + (np.arange(b) * P)[:, None]
    return np.bincount(codes.ravel(), minlength=b * P).reshape(b, P)


@dataclass(frozen=True)
class NullMoments:
    """Mean and covariance of the full count vector under the permutation null."""

    K: int
    mean_full: np.ndarray
    cov_full: np.ndarray

    @property
    def within_index(self) -> np.ndarray:
        return np.arange(self.K)

    @property
    def between_index(self) -> np.ndarray:
        return np.arange(self.K, self.K * (self.K + 1) // 2)

    def all_index(self, drop: int | None = None) -> np.ndarray:
        """Full-vector slots minus one between-sample count (the last by default)."""
        full = np.arange(self.K * (self.K + 1) // 2)
        if self.K < 2:
            return full
        drop = full[-1] if drop is None else drop
        if drop < self.K or drop >= len(full):
            raise InputError("only a between-sample count can be dropped")
        return np.delete(full, drop)

    def index(self, kind: str, drop: int | None = None) -> np.ndarray:
        if kind == "W":
            return self.within_index
        if kind == "B":
            return self.between_index
        if kind == "A":
            return self.all_index(drop)
        raise InputError(f"unknown view {kind!r}")

    def view(self, kind: str, drop: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        idx = self.index(kind, drop)
        return self.mean_full[idx], self.cov_full[np.ix_(idx, idx)]

    @property
    def mean_W(self):
        return self.view("W")[0]

    @property
    def cov_W(self):
        return self.view("W")[1]

    @property
    def cov_B(self):
        return self.view("B")[1]

    @property
    def cov_A(self):
        return self.view("A")[1]

    def variance_matrix(self) -> np.ndarray:
        """``K x K`` matrix of ``Var(R_ij)``."""
        return EdgeCounts.from_vector(np.diag(self.cov_full), self.K).R

    def mean_matrix(self) -> np.ndarray:
        return EdgeCounts.from_vector(self.mean_full, self.K).R


def _falling_ratio(ns, N, r) -> Fraction:
    """``prod(ns) / (N (N-1) ... (N-r+1))`` with ``ns`` the numerator factors."""
    num = 1
    for a in ns:
        num *= a
    den = 1
    for s in range(r):
        den *= N - s
    return Fraction(num, den)


def null_moments(G: SimilarityGraph, group_sizes) -> NullMoments:
    """Closed-form permutation-null mean and covariance of the count vector.

    Only ``|G|``, the sum of squared degrees and the group sizes enter. All
    inputs are integers, so the formulas are evaluated in exact rational
    arithmetic and rounded once; a floating-point evaluation loses the
    covariance to cancellation against the squared means.
    """
    sizes = np.asarray(group_sizes, dtype=np.int64)
    N = int(sizes.sum())
    if N != G.n_nodes:
        raise InputError(f"group sizes sum to {N} but the graph has {G.n_nodes} nodes")
    if np.any(sizes < 1):
        raise InputError("every group must be nonempty")
    if N < 4:
        raise UnsupportedSizeError(
            "closed-form moments need N >= 4; use exact_moments_bruteforce or a permutation test"
        )
    K = len(sizes)
    n = [int(s) for s in sizes]
    m = G.edge_count
    ssq = G.sum_sq_degrees
    adj = ssq - 2 * m          # ordered pairs of distinct edges sharing a node
    disj = m * m - ssq + m     # ordered pairs of node-disjoint edges

    def f2(a, b):
        return _falling_ratio([a, b], N, 2)

    def f3(a, b, c):
        return _falling_ratio([a, b, c], N, 3)

    def f4(a, b, c, d):
        return _falling_ratio([a, b, c, d], N, 4)

    pairs = pair_list(K)
    mean = []
    for i, j in pairs:
        mean.append(m * f2(n[i], n[i] - 1) if i == j else 2 * m * f2(n[i], n[j]))

    def second_moment(p, q):
        (i, j), (k, l) = pairs[p], pairs[q]
        if i == j and k == l:
            if i == k:
                return (m * f2(n[i], n[i] - 1)
                        + adj * f3(n[i], n[i] - 1, n[i] - 2)
                        + disj * f4(n[i], n[i] - 1, n[i] - 2, n[i] - 3))
            return disj * f4(n[i], n[i] - 1, n[k], n[k] - 1)
        if i != j and k != l:
            shared = {i, j} & {k, l}
            if len(shared) == 2:
                return (2 * m * f2(n[i], n[j])
                        + adj * f3(n[i], n[j], n[i] + n[j] - 2)
                        + 4 * disj * f4(n[i], n[j], n[i] - 1, n[j] - 1))
            if len(shared) == 1:
                s = shared.pop()
                a = ({i, j} - {s}).pop()
                b = ({k, l} - {s}).pop()
                return (adj * f3(n[s], n[a], n[b])
                        + 4 * disj * f4(n[s], n[a], n[b], n[s] - 1))
            return 4 * disj * f4(n[i], n[j], n[k], n[l])
        if i != j:
            (i, j), (k, l) = (k, l), (i, j)
        # now R_ii against R_kl with k != l
        if i in (k, l):
            o = l if k == i else k
            return (adj * f3(n[i], n[o], n[i] - 1)
                    + 2 * disj * f4(n[i], n[o], n[i] - 1, n[i] - 2))
        return 2 * disj * f4(n[i], n[i] - 1, n[k], n[l])

    P = len(pairs)
    cov = np.empty((P, P))
    for p in range(P):
        for q in range(p, P):
            cov[p, q] = cov[q, p] = float(second_moment(p, q) - mean[p] * mean[q])
    return NullMoments(K, np.array([float(v) for v in mean]), cov)


def _multinomial(sizes) -> int:
    out, rest = 1, int(sum(sizes))
    for s in sizes:
        out *= math.comb(rest, int(s))
        rest -= int(s)
    return out


def enumerate_assignments(group_sizes, limit: int = ENUMERATION_LIMIT) -> np.ndarray:
    """Every distinct labeling with the given group sizes, one per row."""
    sizes = [int(s) for s in group_sizes]
    total = _multinomial(sizes)
    if total > limit:
        raise UnsupportedSizeError(f"{total} label assignments exceed the enumeration limit {limit}")
    N = sum(sizes)
    rows = np.empty((total, N), dtype=np.int64)

    def fill(free, g, prefix, start):
        # prefix: fixed labels so far; returns number of rows written
        if g == len(sizes) - 1:
            row = prefix.copy()
            row[list(free)] = g
            rows[start] = row
            return 1
        written = 0
        for chosen in itertools.combinations(free, sizes[g]):
            row = prefix.copy()
            row[list(chosen)] = g
            remaining = tuple(x for x in free if x not in set(chosen))
            written += fill(remaining, g + 1, row, start + written)
        return written

    fill(tuple(range(N)), 0, np.full(N, -1, dtype=np.int64), 0)
    return rows


def exact_moments_bruteforce(G: SimilarityGraph, group_sizes,
                             limit: int = ENUMERATION_LIMIT) -> NullMoments:
    """Mean and covariance by enumerating every labeling (test oracle)."""
    sizes = np.asarray(group_sizes, dtype=np.int64)
    if int(sizes.sum()) != G.n_nodes:
        raise InputError("group sizes do not match the graph")
    K = len(sizes)
    X = count_vectors(G, enumerate_assignments(sizes, limit), K).astype(float)
    mean = X.mean(axis=0)
    centred = X - mean
    cov = centred.T @ centred / len(X)
    return NullMoments(K, mean, cov)


def standardized_counts(counts: EdgeCounts, moments: NullMoments,
                        var_tol: float | None = None) -> np.ndarray:
    """``(R_ij - E R_ij) / sd(R_ij)`` as a ``K x K`` matrix.

    Entries whose null variance is zero (up to ``var_tol``) are NaN.
    """
    if counts.K != moments.K:
        raise InputError(f"counts have K={counts.K} but moments have K={moments.K}")
    var = moments.variance_matrix()
    mean = moments.mean_matrix()
    if var_tol is None:
        var_tol = 1e-9 * max(1.0, float(np.max(np.abs(mean))) ** 2)
    z = np.full(var.shape, np.nan)
    ok = var > var_tol
    z[ok] = (counts.R[ok] - mean[ok]) / np.sqrt(var[ok])
    return z
