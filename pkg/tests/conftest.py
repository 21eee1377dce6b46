import numpy as np
import pytest

from chebppr import build_graph, GraphDelta


def random_graph(rng, n, p=None, connected=True):
    """Erdos-Renyi style graph; with ``connected`` a random spanning path is added."""
    p = min(1.0, 3.0 / n) if p is None else p
    edges = []
    if connected:
        order = rng.permutation(n)
        edges += [(int(order[i]), int(order[i + 1]), float(rng.integers(1, 4))) for i in range(n - 1)]
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(iu.size) < p
    edges += [(int(u), int(v), float(rng.integers(1, 4))) for u, v in zip(iu[keep], ju[keep])]
    return build_graph(edges, n)


def random_delta(rng, g, count, allow_removal=True):
    """Mix of new edges, weight increases and (optionally) removals."""
    changes, used = [], set()
    existing = g.edges()
    count = min(count, g.num_nodes * (g.num_nodes - 1) // 2)
    while len(changes) < count:
        if allow_removal and existing and rng.random() < 0.3:
            u, v, w = existing[rng.integers(len(existing))]
            change = -w if rng.random() < 0.5 else -w / 2
        else:
            u, v = (int(x) for x in rng.choice(g.num_nodes, size=2, replace=False))
            change = float(rng.integers(1, 3))
        key = (min(u, v), max(u, v))
        if key in used:
            continue
        used.add(key)
        changes.append((u, v, change))
    return GraphDelta.from_changes(changes)


def additions_only(rng, g, count):
    return random_delta(rng, g, count, allow_removal=False)


@pytest.fixture
def two_node():
    return build_graph([(0, 1, 1.0)], 2)


@pytest.fixture
def path3():
    return build_graph([(0, 1, 1.0), (1, 2, 1.0)], 3)


@pytest.fixture
def triangle():
    return build_graph([(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)], 3)


@pytest.fixture
def path5():
    return build_graph([(i, i + 1, 1.0) for i in range(4)], 5)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
