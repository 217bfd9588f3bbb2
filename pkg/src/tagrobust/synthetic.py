"""Planted-partition text-attributed graphs for tests and desk-scale benchmarks."""
from __future__ import annotations

import numpy as np

from .graph import TextAttributedGraph


def planted_partition(n: int = 200, n_classes: int = 2, p_in: float = 0.10, p_out: float = 0.01,
                      n_features: int = 8, offset: float = 2.0, sigma: float = 1.0,
                      seed: int = 0, with_texts: bool = False,
                      name: str = "planted") -> TextAttributedGraph:
    """Stochastic block model with Gaussian class-conditional features.

    Labels are assigned round-robin so class sizes differ by at most one.
    Features of a class-``c`` node are ``offset`` on the ``c``-th block of
    ``n_features // n_classes`` coordinates (zero elsewhere) plus
    ``N(0, sigma^2)`` noise, so with ``sigma=0`` class rows are exactly
    orthogonal.  With ``with_texts`` each node also gets a short synthetic
    document drawn from a class-specific vocabulary.
    """
    if n_features < n_classes:
        raise ValueError("need at least one feature coordinate per class")
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % n_classes
    rng.shuffle(labels)

    iu, ju = np.triu_indices(n, k=1)
    same = labels[iu] == labels[ju]
    prob = np.where(same, p_in, p_out)
    keep = rng.random(len(iu)) < prob
    edges = np.stack([iu[keep], ju[keep]], axis=1)

    block = n_features // n_classes
    means = np.zeros((n_classes, n_features))
    for c in range(n_classes):
        means[c, c * block:(c + 1) * block] = offset
    X = means[labels]
    if sigma > 0:
        X = X + rng.normal(0.0, sigma, size=X.shape)

    texts = None
    if with_texts:
        texts = tuple(_synthetic_text(rng, int(c)) for c in labels)
    return TextAttributedGraph(n=n, edges=edges, features=X, labels=labels,
                               class_count=n_classes, texts=texts, name=name)


def _synthetic_text(rng, c: int, vocab: int = 12, shared: int = 20, length: int = 12) -> str:
    own = [f"c{c}w{int(k)}" for k in rng.integers(0, vocab, size=length // 2)]
    common = [f"w{int(k)}" for k in rng.integers(0, shared, size=length - length // 2)]
    words = own + common
    rng.shuffle(words)
    return " ".join(words)
