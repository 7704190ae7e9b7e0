import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from ksgraph.counts_moments import null_moments
from ksgraph.errors import DegenerateInputError, InputError
from ksgraph.graph_core import SimilarityGraph, build_kmst, pairwise_distances
from ksgraph.inference import (
    asymptotic_test,
    bonferroni_pair,
    chi_square_sf,
    exact_permutation_test,
    permutation_test,
    ss_test,
)

from conftest import labels_from_sizes, path_graph


@pytest.mark.parametrize("dof", [1, 2, 7, 50, 200])
def test_sf_at_zero(dof):
    assert chi_square_sf(0.0, dof) == 1.0


def test_sf_95_quantile():
    assert chi_square_sf(3.8415, 1) == pytest.approx(0.05, abs=1e-4)


@pytest.mark.parametrize("x", [0.1, 1.0, 3.0, 10.0, 50.0, 300.0])
def test_sf_two_dof_closed_form(x):
    assert chi_square_sf(x, 2) == pytest.approx(math.exp(-x / 2), rel=1e-13, abs=1e-300)


def test_sf_against_scipy():
    rng = np.random.default_rng(0)
    xs = rng.uniform(0, 500, 400)
    dofs = rng.integers(1, 201, 400)
    err = max(abs(chi_square_sf(x, int(k)) - stats.chi2.sf(x, k)) for x, k in zip(xs, dofs))
    assert err <= 1e-10


@settings(max_examples=200, deadline=None)
@given(x=st.floats(0, 400), dx=st.floats(1e-3, 50), dof=st.integers(1, 200))
def test_sf_monotone(x, dx, dof):
    a, b = chi_square_sf(x, dof), chi_square_sf(x + dx, dof)
    assert 0.0 <= b <= a <= 1.0
    if a > 1e-12 and a < 1 - 1e-12:
        assert b < a


@pytest.mark.parametrize("x,dof", [(-1.0, 2), (1.0, 0), (1.0, 2.5), (float("nan"), 3)])
def test_sf_invalid(x, dof):
    with pytest.raises(InputError):
        chi_square_sf(x, dof)


def test_bonferroni_rule():
    assert bonferroni_pair(0.03, 0.40) == pytest.approx(0.06)
    assert bonferroni_pair(0.9, 0.9) == 1.0


def _separated_clusters(n_per=20, K=3, seed=0):
    rng = np.random.default_rng(seed)
    x = np.vstack([rng.standard_normal((n_per, 2)) + 50.0 * i for i in range(K)])
    return x, np.repeat(np.arange(K), n_per)


def test_ss_matches_components():
    x, labels = _separated_clusters(seed=1)
    G = build_kmst(pairwise_distances(x), 2)
    r = ss_test(G, labels)
    pw = asymptotic_test(G, labels, kind="SW").p_value
    pb = asymptotic_test(G, labels, kind="SB").p_value
    assert r.p_value == min(1.0, 2 * min(pw, pb))
    assert r.details["p_W"] == pw and r.details["p_B"] == pb
    assert r.method == "SS_fast" and r.dof is None


def test_asymptotic_dof_is_rank():
    rng = np.random.default_rng(4)
    G = build_kmst(pairwise_distances(rng.standard_normal((40, 5))), 3)
    labels = rng.permutation(labels_from_sizes([10, 10, 10, 10]))
    assert asymptotic_test(G, labels, kind="SW").dof == 4
    assert asymptotic_test(G, labels, kind="SB").dof == 6
    assert asymptotic_test(G, labels, kind="SA").dof == 9


def test_zero_statistic_gives_p_one():
    # labels hit E(R_00) = E(R_11) = 5 * 6/30 = 1 exactly (found by enumeration)
    G = SimilarityGraph(6, [(0, 2), (0, 3), (0, 4), (2, 5), (3, 5)])
    labels = np.array([0, 0, 0, 1, 1, 1])
    r = asymptotic_test(G, labels, kind="SW")
    assert r.statistic == pytest.approx(0.0, abs=1e-12)
    assert r.p_value == pytest.approx(1.0, abs=1e-12)


def test_degenerate_single_group():
    G = path_graph(6)
    with pytest.raises(DegenerateInputError):
        asymptotic_test(G, np.zeros(6, dtype=int), kind="SW")


def test_small_group_warns():
    rng = np.random.default_rng(2)
    G = build_kmst(pairwise_distances(rng.standard_normal((12, 2))), 2)
    labels = np.array([0] * 6 + [1] * 5 + [2])
    with pytest.warns(RuntimeWarning, match="permutation"):
        asymptotic_test(G, labels, kind="SA")


def test_unknown_kind():
    with pytest.raises(InputError):
        asymptotic_test(path_graph(6), [0, 0, 0, 1, 1, 1], kind="S")


def test_conditions_flag_attached():
    x, labels = _separated_clusters()
    G = build_kmst(pairwise_distances(x), 5)
    r = asymptotic_test(G, labels, kind="SA")
    assert r.diagnostics.edge_count == G.edge_count
    assert r.details["conditions_strained"] == (r.diagnostics.ratio_ab >= 1.0)


def test_permutation_extreme_observed():
    x, labels = _separated_clusters(seed=3)
    G = build_kmst(pairwise_distances(x), 1)
    r = permutation_test(G, labels, kind="S", n_perm=999, seed=5)
    assert r.p_value == pytest.approx(1 / 1000)
    assert r.n_permutations == 999 and r.seed == 5


def test_permutation_invariant_statistic():
    # complete graph: every labeling yields the same counts
    n = 6
    iu, ju = np.triu_indices(n, 1)
    G = SimilarityGraph(n, np.column_stack([iu, ju]))
    for kind in ("S", "SW", "SB"):
        r = permutation_test(G, [0, 0, 1, 1, 2, 2], kind=kind, n_perm=200, seed=1)
        assert r.p_value == 1.0


def test_permutation_reproducible_across_jobs():
    rng = np.random.default_rng(8)
    G = build_kmst(pairwise_distances(rng.standard_normal((60, 5))), 3)
    labels = rng.permutation(labels_from_sizes([20, 20, 20]))
    a = permutation_test(G, labels, kind="S", n_perm=3000, seed=11, n_jobs=1)
    b = permutation_test(G, labels, kind="S", n_perm=3000, seed=11, n_jobs=4)
    c = permutation_test(G, labels, kind="S", n_perm=3000, seed=11)
    assert a.p_value == b.p_value == c.p_value
    d = permutation_test(G, labels, kind="S", n_perm=3000, seed=12)
    assert d.seed == 12


def test_permutation_without_seed_records_one():
    G = path_graph(9)
    r = permutation_test(G, labels_from_sizes([3, 3, 3]), n_perm=50)
    again = permutation_test(G, labels_from_sizes([3, 3, 3]), n_perm=50, seed=r.seed)
    assert r.p_value == again.p_value


def test_permutation_invalid():
    with pytest.raises(InputError):
        permutation_test(path_graph(9), labels_from_sizes([3, 3, 3]), n_perm=0)


def test_permutation_close_to_exact():
    G = path_graph(9)
    labels = np.array([0, 0, 1, 0, 1, 1, 2, 2, 2])
    exact = exact_permutation_test(G, labels, "SA")
    assert exact.n_permutations == 1680
    mc = permutation_test(G, labels, kind="SA", n_perm=20000, seed=3)
    p = exact.p_value
    assert abs(mc.p_value - p) <= 4 * math.sqrt(p * (1 - p) / 20000) + 1 / 20001


def test_permutation_super_uniform():
    # labels are exchangeable by construction: random relabelings of one graph
    rng = np.random.default_rng(21)
    G = build_kmst(pairwise_distances(rng.standard_normal((30, 3))), 3)
    base = labels_from_sizes([10, 10, 10])
    moments = null_moments(G, [10, 10, 10])
    n_perm, alpha, reps = 99, 0.05, 1000
    hits = 0
    for r in range(reps):
        labels = rng.permutation(base)
        res = permutation_test(G, labels, kind="S", n_perm=n_perm, seed=r,
                               moments=moments, diagnostics=False)
        hits += res.p_value <= alpha
    bound = alpha + 1 / (n_perm + 1)
    assert hits / reps <= bound + 3 * math.sqrt(bound * (1 - bound) / reps)
