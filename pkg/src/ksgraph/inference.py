"""p-values: chi-square asymptotics, the Bonferroni fast test and permutation."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .counts_moments import (
    NullMoments,
    count_edges,
    count_vectors,
    enumerate_assignments,
    null_moments,
)
from .errors import DegenerateInputError, InputError
from .graph_core import GraphConditionStats, SimilarityGraph, check_labels, condition_stats
from .statistics import QuadraticForm, compute_statistic

__all__ = [
    "TestResult",
    "chi_square_sf",
    "regularized_gamma_q",
    "asymptotic_test",
    "ss_test",
    "permutation_test",
    "exact_permutation_test",
    "bonferroni_pair",
    "StatEvaluator",
]

ASYMPTOTIC_METHODS = {"SW": "SW_asym", "SB": "SB_asym", "SA": "SA_asym"}
PERMUTATION_METHODS = {"S": "perm_S", "Ssum": "perm_S", "SW": "perm_SW",
                       "SB": "perm_SB", "SA": "perm_SA"}
STRAINED_RATIO_AB = 1.0
PERM_BATCH = 512

_EPS = np.finfo(float).eps
_TINY = 1e-300


def _gamma_series(a: float, x: float) -> float:
    # lower regularized P(a, x); converges fast for x < a + 1
    ap, term = a, 1.0 / a
    total = term
    for _ in range(10_000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_contfrac(a: float, x: float) -> float:
    # upper regularized Q(a, x) by modified Lentz; for x >= a + 1
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def regularized_gamma_q(a: float, x: float) -> float:
    """Upper regularized incomplete gamma ``Q(a, x) = Gamma(a, x) / Gamma(a)``."""
    if not (a > 0) or not math.isfinite(a):
        raise InputError("shape parameter must be positive and finite")
    if not (x >= 0):
        raise InputError("x must be nonnegative")
    if x == 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return min(1.0, max(0.0, 1.0 - _gamma_series(a, x)))
    return min(1.0, max(0.0, _gamma_contfrac(a, x)))


def chi_square_sf(x: float, dof: int) -> float:
    """Upper tail ``P(chi2_dof >= x)``."""
    if int(dof) != dof or dof < 1:
        raise InputError(f"degrees of freedom must be a positive integer, got {dof}")
    if not (x >= 0):
        raise InputError(f"chi-square argument must be nonnegative, got {x}")
    return regularized_gamma_q(dof / 2.0, x / 2.0)


@dataclass(frozen=True)
class TestResult:
    """Outcome of one test on one dataset."""

    method: str
    statistic: float
    dof: int | None
    p_value: float
    n_permutations: int | None = None
    seed: int | None = None
    diagnostics: GraphConditionStats | None = None
    details: dict = field(default_factory=dict)

    __test__ = False  # not a pytest class

    def reject(self, alpha: float) -> bool:
        return self.p_value <= alpha

    def asdict(self) -> dict:
        return asdict(self)


def _prepare(G: SimilarityGraph, labels, group_sizes, moments):
    labels = check_labels(labels, G.n_nodes)
    sizes = np.bincount(labels)
    if group_sizes is not None and not np.array_equal(np.asarray(group_sizes), sizes):
        raise InputError(f"group sizes {list(group_sizes)} disagree with labels {sizes.tolist()}")
    if moments is None:
        moments = null_moments(G, sizes)
    elif moments.K != len(sizes):
        raise InputError("moments were computed for a different number of groups")
    return labels, sizes, moments


def _check_degenerate(moments: NullMoments):
    scale = max(1.0, float(np.max(np.abs(moments.mean_full))) ** 2)
    if np.all(np.diag(moments.cov_full) <= 1e-9 * scale):
        raise DegenerateInputError("every edge count has zero null variance; nothing to test")


def _diagnostics(G, want):
    if not want:
        return None, {}
    diag = condition_stats(G)
    return diag, {"conditions_strained": bool(diag.ratio_ab >= STRAINED_RATIO_AB)}


def asymptotic_test(G: SimilarityGraph, labels, group_sizes=None, kind: str = "SA", *,
                    moments: NullMoments | None = None, diagnostics: bool = True,
                    tol: float | None = None) -> TestResult:
    """Chi-square test for ``SW`` (dof K), ``SB`` or ``SA`` (dof = covariance rank)."""
    if kind not in ASYMPTOTIC_METHODS:
        raise InputError(f"no asymptotic calibration for statistic {kind!r}")
    labels, sizes, moments = _prepare(G, labels, group_sizes, moments)
    _check_degenerate(moments)
    if np.any(sizes < 2):
        warnings.warn(
            "a group has fewer than 2 observations; the chi-square approximation is "
            "unreliable, prefer permutation_test",
            RuntimeWarning,
            stacklevel=2,
        )
    counts = count_edges(G, labels, len(sizes))
    stat = compute_statistic(kind, counts, moments, tol)
    if stat.dof < 1:
        raise DegenerateInputError(f"covariance of {kind} has rank 0")
    diag, extra = _diagnostics(G, diagnostics)
    details = {"used_pseudo_inverse": stat.used_pseudo_inverse, "clipped": stat.clipped, **extra}
    return TestResult(ASYMPTOTIC_METHODS[kind], stat.value, stat.dof,
                      chi_square_sf(stat.value, stat.dof), diagnostics=diag, details=details)


def bonferroni_pair(p_w: float, p_b: float) -> float:
    """``min(1, 2 * min(p_w, p_b))``."""
    return min(1.0, 2.0 * min(p_w, p_b))


def ss_test(G: SimilarityGraph, labels, group_sizes=None, *,
            moments: NullMoments | None = None, diagnostics: bool = True,
            tol: float | None = None) -> TestResult:
    """Bonferroni combination of the ``SW`` and ``SB`` chi-square tests.

    ``p = min(1, 2 * min(p_W, p_B))``; the reported statistic is ``S^W + S^B``.
    """
    labels, sizes, moments = _prepare(G, labels, group_sizes, moments)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        w = asymptotic_test(G, labels, kind="SW", moments=moments, diagnostics=False, tol=tol)
        b = asymptotic_test(G, labels, kind="SB", moments=moments, diagnostics=False, tol=tol)
    if np.any(sizes < 2):
        warnings.warn("a group has fewer than 2 observations; prefer permutation_test",
                      RuntimeWarning, stacklevel=2)
    raw = 2.0 * min(w.p_value, b.p_value)
    diag, extra = _diagnostics(G, diagnostics)
    details = {
        "p_W": w.p_value,
        "p_B": b.p_value,
        "S_W": w.statistic,
        "S_B": b.statistic,
        "dof_W": w.dof,
        "dof_B": b.dof,
        "p_capped": raw > 1.0,
        **extra,
    }
    return TestResult("SS_fast", w.statistic + b.statistic, None, bonferroni_pair(w.p_value, b.p_value),
                      diagnostics=diag, details=details)


class StatEvaluator:
    """Vectorised statistic over batches of full count vectors.

    Observed and permuted values go through the same code path, so equal
    count vectors give bit-identical statistics.
    """

    def __init__(self, kind: str, moments: NullMoments, tol: float | None = None):
        if kind not in PERMUTATION_METHODS:
            raise InputError(f"unknown statistic {kind!r}")
        self.kind = "Ssum" if kind == "S" else kind
        views = ("W", "B") if self.kind == "Ssum" else (self.kind[1],)
        self.parts = []
        for v in views:
            mean, cov = moments.view(v)
            self.parts.append((moments.index(v), QuadraticForm.from_cov(mean, cov, tol)))

    def __call__(self, vectors) -> np.ndarray:
        vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
        total = np.zeros(len(vectors))
        for idx, qf in self.parts:
            total += qf.evaluate(vectors[:, idx])[0]
        return total


def _batch_sizes(n_perm: int, batch: int) -> list[int]:
    full, rest = divmod(n_perm, batch)
    return [batch] * full + ([rest] if rest else [])


def permutation_test(G: SimilarityGraph, labels, group_sizes=None, kind: str = "S",
                     n_perm: int = 1000, seed: int | None = None, *,
                     moments: NullMoments | None = None, n_jobs: int = 1,
                     diagnostics: bool = True, tol: float | None = None) -> TestResult:
    """Monte Carlo permutation p-value ``(1 + #{T_perm >= T_obs}) / (n_perm + 1)``.

    Permutations are drawn in fixed-size batches; batch ``b`` uses the
    substream ``SeedSequence(seed, spawn_key=(b,))``, so the result depends
    only on ``seed`` and not on ``n_jobs``.
    """
    if int(n_perm) != n_perm or n_perm < 1:
        raise InputError("n_perm must be a positive integer")
    n_perm = int(n_perm)
    labels, sizes, moments = _prepare(G, labels, group_sizes, moments)
    K = len(sizes)
    evaluator = StatEvaluator(kind, moments, tol)
    observed = float(evaluator(count_vectors(G, labels, K))[0])
    if seed is None:
        seed = int(np.random.SeedSequence().entropy % 2**63)

    def run_batch(item):
        b, size = item
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(b,)))
        perms = rng.permuted(np.broadcast_to(labels, (size, len(labels))), axis=1)
        return int(np.sum(evaluator(count_vectors(G, perms, K)) >= observed))

    batches = list(enumerate(_batch_sizes(n_perm, PERM_BATCH)))
    if n_jobs > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            exceed = sum(pool.map(run_batch, batches))
    else:
        exceed = sum(map(run_batch, batches))

    diag, extra = _diagnostics(G, diagnostics)
    return TestResult(PERMUTATION_METHODS[kind], observed, None, (1 + exceed) / (n_perm + 1),
                      n_permutations=n_perm, seed=seed, diagnostics=diag,
                      details={"n_exceed": exceed, **extra})


def exact_permutation_test(G: SimilarityGraph, labels, kind: str = "S", *,
                           tol: float | None = None) -> TestResult:
    """Exact permutation p-value by enumerating every labeling (small N only)."""
    labels = check_labels(labels, G.n_nodes)
    sizes = np.bincount(labels)
    K = len(sizes)
    moments = null_moments(G, sizes)
    evaluator = StatEvaluator(kind, moments, tol)
    observed = float(evaluator(count_vectors(G, labels, K))[0])
    values = evaluator(count_vectors(G, enumerate_assignments(sizes), K))
    p = float(np.mean(values >= observed))
    return TestResult("exact_" + PERMUTATION_METHODS[kind].split("_", 1)[1], observed, None, p,
                      n_permutations=len(values))
