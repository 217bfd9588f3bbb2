import sys
import numpy as np
import pytest

from tagrobust.graph import TextAttributedGraph
from tagrobust.synthetic import planted_partition


def random_graph(seed, n=None, p=0.5, d=3, classes=2, n_range=(4, 7)):
    """Small Erdos-Renyi graph with Gaussian features and random labels."""
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(*n_range))
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(len(iu)) < p
    edges = np.stack([iu[keep], ju[keep]], axis=1)
    labels = np.arange(n) % classes
    rng.shuffle(labels)
    X = rng.normal(size=(n, d))
    return TextAttributedGraph(n=n, edges=edges, features=X, labels=labels, class_count=classes)


def graph_from_edges(n, edges, labels=None, features=None, classes=None):
    labels = np.zeros(n, dtype=int) if labels is None else np.asarray(labels)
    features = np.eye(n) if features is None else np.asarray(features, dtype=float)
    classes = classes or int(labels.max()) + 1
    return TextAttributedGraph(n=n, edges=np.asarray(edges, dtype=int).reshape(-1, 2),
                               features=features, labels=labels, class_count=classes)


@pytest.fixture(scope="session")
def planted():
    return planted_partition(seed=0)


@pytest.fixture(scope="session")
def planted_texts():
    return planted_partition(n=60, seed=1, with_texts=True)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
