import numpy as np
import pytest

from qek.graph_io import Graph


def path_graph(n, gid=1, label=1):
    return Graph(id=gid, n_nodes=n, edges=tuple((i, i + 1) for i in range(n - 1)), label=label)


def star_graph(leaves, gid=1, label=1):
    return Graph(id=gid, n_nodes=leaves + 1, edges=tuple((0, i) for i in range(1, leaves + 1)), label=label)


def random_register(rng, n, min_dist=4.0, box=20.0):
    """Rejection-sampled positions with a minimum pair distance."""
    pts = []
    while len(pts) < n:
        p = rng.uniform(0, box, size=2)
        if all(np.linalg.norm(p - q) >= min_dist for q in pts):
            pts.append(p)
    return np.array(pts)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record and assert one acceptance line: ``criterion(n, ok, detail)``."""
    def check(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return check


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
