"""Mahalanobis-type statistics on edge-count vectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .counts_moments import EdgeCounts, NullMoments
from .errors import InputError

__all__ = [
    "StatValue",
    "QuadraticForm",
    "matrix_rank",
    "quadratic_form",
    "stat_SW",
    "stat_SB",
    "stat_SA",
    "stat_S",
    "compute_statistic",
]

SYMMETRY_TOL = 1e-10


def _rank_tol(eigvals: np.ndarray, tol: float | None) -> float:
    if tol is not None:
        return float(tol)
    if eigvals.size == 0:
        return 0.0
    return eigvals.size * np.finfo(float).eps * float(np.max(np.abs(eigvals)))


def matrix_rank(cov, tol: float | None = None) -> int:
    """Numerical rank of a symmetric matrix.

    Eigenvalues above ``dim * eps * max|eigenvalue|`` count, unless an
    absolute ``tol`` is given.
    """
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.size == 0:
        return 0
    eigvals = np.linalg.eigvalsh((cov + cov.T) / 2)
    return int(np.sum(eigvals > _rank_tol(eigvals, tol)))


@dataclass(frozen=True)
class QuadraticForm:
    """A reusable ``(x - mean)^T M (x - mean)`` evaluator.

    ``precision`` is the inverse of the covariance when it has full numerical
    rank, otherwise its Moore-Penrose pseudo-inverse.
    """

    mean: np.ndarray
    precision: np.ndarray
    rank: int
    used_pseudo_inverse: bool

    @classmethod
    def from_cov(cls, mean, cov, tol: float | None = None) -> "QuadraticForm":
        mean = np.asarray(mean, dtype=float)
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        dim = len(mean)
        if cov.shape != (dim, dim):
            raise InputError(f"covariance shape {cov.shape} does not match mean length {dim}")
        scale = max(1.0, float(np.max(np.abs(cov)))) if cov.size else 1.0
        if cov.size and np.max(np.abs(cov - cov.T)) > SYMMETRY_TOL * scale:
            raise InputError("covariance matrix is not symmetric")
        cov = (cov + cov.T) / 2
        eigvals, eigvecs = np.linalg.eigh(cov)
        cutoff = _rank_tol(eigvals, tol)
        keep = eigvals > cutoff
        rank = int(keep.sum())
        if rank == dim and dim > 0:
            try:
                chol = np.linalg.cholesky(cov)
                inv_chol = np.linalg.solve(chol, np.eye(dim))
                return cls(mean, inv_chol.T @ inv_chol, rank, False)
            except np.linalg.LinAlgError:
                pass
        vecs = eigvecs[:, keep]
        precision = (vecs / eigvals[keep]) @ vecs.T
        return cls(mean, precision, rank, True)

    def __call__(self, x) -> tuple[float, bool]:
        """Value for one vector, and whether a rounding negative was clipped."""
        values, clipped = self.evaluate(np.atleast_2d(x))
        return float(values[0]), bool(clipped[0])

    def evaluate(self, rows) -> tuple[np.ndarray, np.ndarray]:
        """Values for a batch of vectors (one per row)."""
        diff = np.asarray(rows, dtype=float) - self.mean
        values = np.einsum("bi,ij,bj->b", diff, self.precision, diff)
        clipped = values < 0
        return np.where(clipped, 0.0, values), clipped


def quadratic_form(x, mean, cov, tol: float | None = None) -> tuple[float, int, bool]:
    """Return ``(value, rank, used_pseudo_inverse)`` of the Mahalanobis form."""
    qf = QuadraticForm.from_cov(mean, cov, tol)
    value, _ = qf(x)
    return value, qf.rank, qf.used_pseudo_inverse


@dataclass(frozen=True)
class StatValue:
    kind: str
    value: float
    dof: int | tuple[int, int]
    used_pseudo_inverse: bool
    clipped: bool = False


def _view_stat(kind, counts: EdgeCounts, moments: NullMoments, drop=None, tol=None):
    if counts.K != moments.K:
        raise InputError(f"counts have K={counts.K} but moments have K={moments.K}")
    idx = moments.index(kind, drop)
    mean, cov = moments.view(kind, drop)
    qf = QuadraticForm.from_cov(mean, cov, tol)
    value, clipped = qf(counts.full_vector()[idx])
    return StatValue("S" + kind, value, qf.rank, qf.used_pseudo_inverse, clipped)


def stat_SW(counts: EdgeCounts, moments: NullMoments, tol: float | None = None) -> StatValue:
    """Quadratic form of the K within-sample counts."""
    return _view_stat("W", counts, moments, tol=tol)


def stat_SB(counts: EdgeCounts, moments: NullMoments, tol: float | None = None) -> StatValue:
    """Quadratic form of the K(K-1)/2 between-sample counts."""
    return _view_stat("B", counts, moments, tol=tol)


def stat_SA(counts: EdgeCounts, moments: NullMoments, drop: int | None = None,
            tol: float | None = None) -> StatValue:
    """Quadratic form of all counts except one between-sample count.

    ``drop`` is the full-vector slot left out; the last slot by default.
    """
    return _view_stat("A", counts, moments, drop=drop, tol=tol)


def stat_S(counts: EdgeCounts, moments: NullMoments, tol: float | None = None) -> StatValue:
    """``S^W + S^B``; ``dof`` holds the two component ranks for reporting only."""
    sw = stat_SW(counts, moments, tol)
    sb = stat_SB(counts, moments, tol)
    return StatValue(
        "S",
        sw.value + sb.value,
        (sw.dof, sb.dof),
        sw.used_pseudo_inverse or sb.used_pseudo_inverse,
        sw.clipped or sb.clipped,
    )


def compute_statistic(kind: str, counts: EdgeCounts, moments: NullMoments,
                      tol: float | None = None) -> StatValue:
    kinds = {"SW": stat_SW, "SB": stat_SB, "SA": stat_SA, "S": stat_S, "Ssum": stat_S}
    if kind not in kinds:
        raise InputError(f"unknown statistic {kind!r}")
    return kinds[kind](counts, moments, tol=tol)
