import numpy as np
import pytest

from sirg.generator import SpatialGraph
from sirg.geometry import BoxSpec, PointCloud
from sirg.weights import WeightVector


def make_graph(n, edges, points=None, d=1, side=None, metric="euclidean"):
    """A SpatialGraph with the given edges; points default to 0, 1, 2, ... on a line."""
    if points is None:
        points = np.arange(n, dtype=float)[:, None] * np.ones((1, d))
    points = np.asarray(points, dtype=float).reshape(n, d)
    side = side if side is not None else max(1.0, 2.0 * (np.abs(points).max() + 1.0))
    edges = list(edges)
    ei = [a for a, _ in edges]
    ej = [b for _, b in edges]
    return SpatialGraph.from_edges(ei, ej, PointCloud(points, BoxSpec(d, side)),
                                   WeightVector(np.ones(n)), metric=metric)


def complete_edges(n):
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one verdict line per acceptance criterion; all are repeated at the end."""
    def add(criterion, passed, detail):
        line = f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

