import itertools

import numpy as np
import pytest

from ksgraph.errors import ConstructionError
from ksgraph.graph_core import SimilarityGraph, build_kmst, pairwise_distances


def path_graph(n):
    return SimilarityGraph(n, [(i, i + 1) for i in range(n - 1)])


def star_graph(n):
    return SimilarityGraph(n, [(0, i) for i in range(1, n)])


def cycle_graph(n):
    return SimilarityGraph(n, [(i, (i + 1) % n) for i in range(n)])


def random_tree(n, rng):
    return SimilarityGraph(n, [(int(rng.integers(0, i)), i) for i in range(1, n)])


def kmst_graph(n, k, rng, d=3, attempts=50):
    """k-MST on Gaussian points, redrawing when a later tree cannot span."""
    for _ in range(attempts):
        try:
            return build_kmst(pairwise_distances(rng.standard_normal((n, d))), k)
        except ConstructionError:
            continue
    raise ConstructionError(f"no spanning {k}-MST found on {n} nodes")


def fixture_graphs(n, seed=0):
    """Paths, stars, cycles, random trees and 2-MST unions on ``n`` nodes."""
    rng = np.random.default_rng(seed + n)
    graphs = {
        "path": path_graph(n),
        "star": star_graph(n),
        "cycle": cycle_graph(n),
        "tree_a": random_tree(n, rng),
        "tree_b": random_tree(n, rng),
        "mst1": kmst_graph(n, 1, rng),
    }
    if n >= 4:
        graphs["mst2"] = kmst_graph(n, 2, rng)
    return graphs


def compositions(n, k):
    """Every ordered split of ``n`` into ``k`` positive parts."""
    for cuts in itertools.combinations(range(1, n), k - 1):
        bounds = (0,) + cuts + (n,)
        yield tuple(b - a for a, b in zip(bounds, bounds[1:]))


def labels_from_sizes(sizes):
    return np.repeat(np.arange(len(sizes)), sizes)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria report one line each at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
