"""Graph data model, dataset I/O, featurization, splits and GCN normalization."""
from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import (
    DuplicateEdge,
    EmptyCorpus,
    FeatureDimensionMismatch,
    GraphTooSmall,
    LabelOutOfRange,
    MalformedRow,
    MissingFile,
    SelfLoop,
)

__all__ = [
    "TextAttributedGraph",
    "SplitMode",
    "Split",
    "Budget",
    "canonical_edges",
    "load_dataset",
    "save_dataset",
    "make_split",
    "bow_featurize",
    "BowVocabulary",
    "normalized_adjacency",
]


def canonical_edges(edges: Iterable, n: int, strict: bool = True) -> np.ndarray:
    """Return edges as a sorted ``(m, 2)`` int array with ``u < v`` per row.

    With ``strict`` duplicates (in either orientation) and self loops raise;
    otherwise they are silently dropped.
    """
    arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
    if arr.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    arr = arr.reshape(-1, 2)
    if arr.min() < 0 or arr.max() >= n:
        raise ValueError(f"edge endpoint outside [0, {n})")
    loops = arr[:, 0] == arr[:, 1]
    if loops.any():
        if strict:
            u = int(arr[loops][0, 0])
            raise SelfLoop(f"self loop at node {u}")
        arr = arr[~loops]
    arr = np.sort(arr, axis=1)
    uniq, counts = np.unique(arr, axis=0, return_counts=True)
    if strict and (counts > 1).any():
        u, v = uniq[counts > 1][0]
        raise DuplicateEdge(f"duplicate edge ({u}, {v})")
    return uniq.reshape(-1, 2)


@dataclass(frozen=True, eq=False)
class TextAttributedGraph:
    """Undirected graph with per-node feature rows, labels and optional texts.

    Instances are immutable: arrays are stored read-only and every mutating
    helper returns a new graph.
    """

    n: int
    edges: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    class_count: int
    texts: Optional[tuple] = None
    name: str = "graph"

    def __post_init__(self):
        n = int(self.n)
        edges = canonical_edges(self.edges, n)
        features = np.array(self.features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] != n or features.shape[1] < 1:
            raise FeatureDimensionMismatch(
                f"features must be {n} x d with d >= 1, got {features.shape}"
            )
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if labels.shape[0] != n:
            raise LabelOutOfRange(f"expected {n} labels, got {labels.shape[0]}")
        C = int(self.class_count)
        if n and (labels.min() < 0 or labels.max() >= C):
            raise LabelOutOfRange(f"labels must lie in [0, {C})")
        texts = None if self.texts is None else tuple(str(t) for t in self.texts)
        if texts is not None and len(texts) != n:
            raise ValueError(f"expected {n} texts, got {len(texts)}")
        for a in (edges, features, labels):
            a.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_count", C)
        object.__setattr__(self, "texts", texts)

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    def edge_set(self) -> set:
        return {(int(u), int(v)) for u, v in self.edges}

    def adjacency(self, dtype=np.float64) -> np.ndarray:
        """Dense symmetric 0/1 adjacency matrix."""
        A = np.zeros((self.n, self.n), dtype=dtype)
        if self.num_edges:
            A[self.edges[:, 0], self.edges[:, 1]] = 1
            A[self.edges[:, 1], self.edges[:, 0]] = 1
        return A

    def sparse_adjacency(self) -> sp.csr_matrix:
        u, v = self.edges[:, 0], self.edges[:, 1]
        data = np.ones(2 * len(u))
        return sp.csr_matrix(
            (data, (np.concatenate([u, v]), np.concatenate([v, u]))), shape=(self.n, self.n)
        )

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.reshape(-1), minlength=self.n).astype(np.int64)

    def neighbors(self) -> list:
        """Adjacency-list view: ``nbrs[i]`` is a sorted int array."""
        out = [[] for _ in range(self.n)]
        for u, v in self.edges:
            out[u].append(int(v))
            out[v].append(int(u))
        return [np.array(sorted(x), dtype=np.int64) for x in out]

    def replace(self, **changes) -> "TextAttributedGraph":
        kw = dict(
            n=self.n,
            edges=self.edges,
            features=self.features,
            labels=self.labels,
            class_count=self.class_count,
            texts=self.texts,
            name=self.name,
        )
        kw.update(changes)
        return TextAttributedGraph(**kw)

    def induced_subgraph(self, nodes: Sequence[int]) -> tuple["TextAttributedGraph", np.ndarray]:
        """Subgraph on ``nodes`` (relabelled 0..k-1) and the old->new index map.

        The returned map holds -1 for nodes that were dropped.
        """
        nodes = np.asarray(sorted(set(int(i) for i in nodes)), dtype=np.int64)
        remap = -np.ones(self.n, dtype=np.int64)
        remap[nodes] = np.arange(len(nodes))
        e = remap[self.edges] if self.num_edges else np.zeros((0, 2), dtype=np.int64)
        keep = (e >= 0).all(axis=1) if len(e) else np.zeros(0, dtype=bool)
        texts = None if self.texts is None else tuple(self.texts[i] for i in nodes)
        sub = TextAttributedGraph(
            n=len(nodes),
            edges=e[keep],
            features=self.features[nodes],
            labels=self.labels[nodes],
            class_count=self.class_count,
            texts=texts,
            name=self.name,
        )
        return sub, remap

    def same_as(self, other: "TextAttributedGraph") -> bool:
        return (
            self.n == other.n
            and self.class_count == other.class_count
            and np.array_equal(self.edges, other.edges)
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and self.texts == other.texts
        )


class SplitMode(str, Enum):
    TRANSDUCTIVE = "transductive"
    INDUCTIVE = "inductive"


SPLIT_PROPORTIONS = {
    SplitMode.TRANSDUCTIVE: (0.1, 0.1),
    SplitMode.INDUCTIVE: (0.6, 0.2),
}


@dataclass(frozen=True, eq=False)
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    mode: SplitMode
    seed: int = 0

    def __post_init__(self):
        for name in ("train", "val", "test"):
            a = np.sort(np.asarray(getattr(self, name), dtype=np.int64))
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        object.__setattr__(self, "mode", SplitMode(self.mode))
        allidx = np.concatenate([self.train, self.val, self.test])
        if len(np.unique(allidx)) != len(allidx):
            raise ValueError("split sets must be pairwise disjoint")

    @property
    def n(self) -> int:
        return len(self.train) + len(self.val) + len(self.test)

    def __eq__(self, other):
        if not isinstance(other, Split):
            return NotImplemented
        return (
            self.mode == other.mode
            and np.array_equal(self.train, other.train)
            and np.array_equal(self.val, other.val)
            and np.array_equal(self.test, other.test)
        )

    def to_json(self) -> dict:
        return {
            "mode": self.mode.value,
            "seed": self.seed,
            "train": self.train.tolist(),
            "val": self.val.tolist(),
            "test": self.test.tolist(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "Split":
        return cls(d["train"], d["val"], d["test"], SplitMode(d["mode"]), d.get("seed", 0))


@dataclass(frozen=True)
class Budget:
    delta_struct: int = 0
    delta_text: int = 0

    def __post_init__(self):
        if self.delta_struct < 0 or self.delta_text < 0:
            raise ValueError("budgets must be non-negative")

    @classmethod
    def from_rates(cls, num_edges: int, ptb_rate: float = 0.0,
                   text_pool: int = 0, text_rate: float = 0.0) -> "Budget":
        # floor: never exceed the declared rate
        return cls(
            delta_struct=int(math.floor(ptb_rate * num_edges + 1e-9)),
            delta_text=int(math.floor(text_rate * text_pool + 1e-9)),
        )


def make_split(graph: TextAttributedGraph, mode, seed: int) -> Split:
    """Uniform random train/val/test partition.

    Transductive uses 10/10/80 and inductive 60/20/20; set sizes are
    ``round(p * n)`` for train and val, the remainder goes to test.
    """
    mode = SplitMode(mode)
    n = graph.n if isinstance(graph, TextAttributedGraph) else int(graph)
    if n < 5:
        raise GraphTooSmall(f"need at least 5 nodes to split, got {n}")
    p_train, p_val = SPLIT_PROPORTIONS[mode]
    n_train = max(1, int(round(p_train * n)))
    n_val = max(1, int(round(p_val * n)))
    perm = np.random.default_rng(seed).permutation(n)
    return Split(
        train=perm[:n_train],
        val=perm[n_train:n_train + n_val],
        test=perm[n_train + n_val:],
        mode=mode,
        seed=seed,
    )


_TOKEN_RE = re.compile(r"[^0-9a-z]+")


def tokenize(text: str) -> list:
    return [t for t in _TOKEN_RE.split(text.lower()) if t]


@dataclass(frozen=True)
class BowVocabulary:
    tokens: tuple
    index: dict = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "index", {t: i for i, t in enumerate(self.tokens)})

    @classmethod
    def fit(cls, texts: Sequence[str], max_vocab: int) -> "BowVocabulary":
        docs = [tokenize(t) for t in texts]
        counts = Counter(tok for d in docs for tok in d)
        if not counts:
            raise EmptyCorpus("no tokens in any text")
        # most frequent first, ties lexicographic
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        return cls(tuple(t for t, _ in ranked[:max_vocab]))

    def transform(self, texts: Sequence[str]) -> np.ndarray:
        X = np.zeros((len(texts), len(self.tokens)), dtype=np.float64)
        for i, t in enumerate(texts):
            for tok in tokenize(t):
                j = self.index.get(tok)
                if j is not None:
                    X[i, j] = 1.0
        return X


def bow_featurize(texts: Sequence[str], max_vocab: int) -> np.ndarray:
    """Binary bag-of-words matrix over the ``max_vocab`` most frequent tokens.

    Tokens are lowercase alphanumeric runs. Columns are ordered by
    descending corpus frequency with lexicographic tie-breaking.
    """
    return BowVocabulary.fit(texts, max_vocab).transform(texts)


def _is_square_matrix(obj, n) -> bool:
    if not isinstance(obj, np.ndarray) or obj.ndim != 2 or obj.shape[0] != obj.shape[1]:
        return False
    return n is None or obj.shape[0] == n


def normalized_adjacency(graph_or_edges, n: Optional[int] = None, sparse: bool = False):
    """Symmetric GCN propagation operator ``D^-1/2 (A + I) D^-1/2``.

    Accepts a graph, an edge list (with ``n``), or a dense (possibly relaxed,
    weighted) adjacency matrix.
    """
    if isinstance(graph_or_edges, TextAttributedGraph):
        A = graph_or_edges.sparse_adjacency() if sparse else graph_or_edges.adjacency()
        n = graph_or_edges.n
    elif sp.issparse(graph_or_edges):
        A = sp.csr_matrix(graph_or_edges, dtype=np.float64)
        n = A.shape[0]
        sparse = True
    elif _is_square_matrix(graph_or_edges, n):
        A = np.asarray(graph_or_edges, dtype=np.float64)
        n = A.shape[0]
        if sparse:
            A = sp.csr_matrix(A)
    else:
        if n is None:
            raise ValueError("n is required when passing an edge list")
        e = canonical_edges(graph_or_edges, n)
        A = np.zeros((n, n))
        A[e[:, 0], e[:, 1]] = 1.0
        A[e[:, 1], e[:, 0]] = 1.0
        if sparse:
            A = sp.csr_matrix(A)
    if sparse:
        At = A + sp.identity(n, format="csr")
        d = np.asarray(At.sum(axis=1)).ravel()
        s = sp.diags(1.0 / np.sqrt(d))
        return (s @ At @ s).tocsr()
    At = A + np.eye(n)
    s = 1.0 / np.sqrt(At.sum(axis=1))
    return At * s[:, None] * s[None, :]


# --------------------------------------------------------------------------
# dataset directory I/O


def _read_lines(path: Path) -> list:
    with open(path, encoding="utf-8") as fh:
        return fh.read().splitlines()


def load_dataset(path, max_vocab: int = 1000) -> TextAttributedGraph:
    """Load ``nodes.tsv``, ``edges.tsv`` and optional ``features.tsv``.

    When ``features.tsv`` is absent the node texts are featurized with
    :func:`bow_featurize`.
    """
    root = Path(path)
    nodes_p, edges_p, feats_p = root / "nodes.tsv", root / "edges.tsv", root / "features.tsv"
    for p in (nodes_p, edges_p):
        if not p.is_file():
            raise MissingFile(str(p))

    labels, texts = [], []
    for lineno, line in enumerate(_read_lines(nodes_p), start=1):
        if not line.strip():
            continue
        parts = line.split("\t", 2)
        if len(parts) < 2:
            raise MalformedRow(nodes_p, lineno, "expected id<TAB>label<TAB>text")
        try:
            nid, lab = int(parts[0]), int(parts[1])
        except ValueError:
            raise MalformedRow(nodes_p, lineno, "non-integer id or label") from None
        if nid != len(labels):
            raise MalformedRow(nodes_p, lineno, f"expected id {len(labels)}, got {nid}")
        if lab < 0:
            raise LabelOutOfRange(f"{nodes_p}:{lineno}: negative label {lab}")
        labels.append(lab)
        texts.append(parts[2] if len(parts) == 3 else "")
    n = len(labels)

    edges, seen = [], set()
    for lineno, line in enumerate(_read_lines(edges_p), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise MalformedRow(edges_p, lineno, "expected u<TAB>v")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise MalformedRow(edges_p, lineno, "non-integer endpoint") from None
        if not (0 <= u < n and 0 <= v < n):
            raise MalformedRow(edges_p, lineno, f"endpoint outside [0, {n})")
        if u == v:
            raise SelfLoop(f"{edges_p}:{lineno}: self loop at node {u}")
        key = (min(u, v), max(u, v))
        if key in seen:
            raise DuplicateEdge(f"{edges_p}:{lineno}: duplicate edge {key}")
        seen.add(key)
        edges.append(key)

    if feats_p.is_file():
        rows = []
        for lineno, line in enumerate(_read_lines(feats_p), start=1):
            if not line.strip():
                continue
            try:
                rows.append([float(x) for x in line.split()])
            except ValueError:
                raise MalformedRow(feats_p, lineno, "non-numeric feature") from None
        dims = {len(r) for r in rows}
        if len(rows) != n or len(dims) != 1 or 0 in dims:
            raise FeatureDimensionMismatch(
                f"features.tsv has {len(rows)} rows with dims {sorted(dims)}; expected {n} rows"
            )
        features = np.array(rows, dtype=np.float64)
    else:
        features = bow_featurize(texts, max_vocab)

    class_count = max(labels) + 1 if labels else 1
    return TextAttributedGraph(
        n=n,
        edges=np.array(edges, dtype=np.int64).reshape(-1, 2),
        features=features,
        labels=np.array(labels, dtype=np.int64),
        class_count=class_count,
        texts=tuple(texts),
        name=root.name,
    )


def save_dataset(graph: TextAttributedGraph, path, write_features: bool = True) -> Path:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    texts = graph.texts or ("",) * graph.n
    with open(root / "nodes.tsv", "w", encoding="utf-8") as fh:
        for i in range(graph.n):
            clean = texts[i].replace("\t", " ").replace("\n", " ")
            fh.write(f"{i}\t{int(graph.labels[i])}\t{clean}\n")
    with open(root / "edges.tsv", "w", encoding="utf-8") as fh:
        for u, v in graph.edges:
            fh.write(f"{u}\t{v}\n")
    fp = root / "features.tsv"
    if write_features:
        with open(fp, "w", encoding="utf-8") as fh:
            for row in graph.features:
                fh.write(" ".join(repr(float(x)) for x in row) + "\n")
    elif fp.exists():
        fp.unlink()
    return root
