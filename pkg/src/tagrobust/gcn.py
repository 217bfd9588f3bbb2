"""Two-layer GCN (and APPNP head) with hand-written backpropagation.

Everything runs in float64 numpy so that gradients can be checked against
finite differences.  The same code path is used for the attack surrogate,
the victim/defender models and the (C+1)-class Auto predictor.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, DivergedLoss, EmptyNodeSet, EmptySplit
from .graph import Split, SplitMode, TextAttributedGraph, normalized_adjacency

CHECKPOINT_FORMAT = "tagrobust-gcn"
CHECKPOINT_VERSION = 1


@dataclass(eq=False)
class GcnModel:
    W1: np.ndarray
    W2: np.ndarray
    arch: str = "gcn"
    alpha: float = 0.1
    k_steps: int = 10

    def __post_init__(self):
        self.W1 = np.asarray(self.W1, dtype=np.float64)
        self.W2 = np.asarray(self.W2, dtype=np.float64)
        if self.W1.ndim != 2 or self.W2.ndim != 2 or self.W1.shape[1] != self.W2.shape[0]:
            raise DimensionMismatch(f"W1 {self.W1.shape} and W2 {self.W2.shape} do not chain")
        if self.W1.shape[1] < 1:
            raise ValueError("hidden width must be >= 1")
        if self.arch not in ("gcn", "appnp"):
            raise ValueError(f"unknown arch {self.arch!r}")

    @property
    def in_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def hidden(self) -> int:
        return self.W1.shape[1]

    @property
    def out_dim(self) -> int:
        return self.W2.shape[1]

    def copy(self) -> "GcnModel":
        return GcnModel(self.W1.copy(), self.W2.copy(), self.arch, self.alpha, self.k_steps)

    def params_equal(self, other: "GcnModel") -> bool:
        return np.array_equal(self.W1, other.W1) and np.array_equal(self.W2, other.W2)


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    weight_decay: float = 5e-4
    dropout: float = 0.5
    max_epochs: int = 500
    patience: int = 100
    seed: int = 0
    hidden: int = 64
    arch: str = "gcn"
    alpha: float = 0.1
    k_steps: int = 10

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")
        if self.max_epochs < 0 or self.patience < 0:
            raise ValueError("epoch counts must be >= 0")

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "TrainConfig":
        return cls(**(d or {}))


def init_model(in_dim: int, hidden: int, out_dim: int, seed=0, arch: str = "gcn",
               alpha: float = 0.1, k_steps: int = 10) -> GcnModel:
    """Glorot-uniform initialisation."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    a1 = np.sqrt(6.0 / (in_dim + hidden))
    a2 = np.sqrt(6.0 / (hidden + out_dim))
    W1 = rng.uniform(-a1, a1, size=(in_dim, hidden))
    W2 = rng.uniform(-a2, a2, size=(hidden, out_dim))
    return GcnModel(W1, W2, arch=arch, alpha=alpha, k_steps=k_steps)


# --------------------------------------------------------------------------
# forward / backward


def appnp_predict(H, A_hat, alpha: float, k_steps: int) -> np.ndarray:
    """Personalized-PageRank propagation ``Z <- (1-alpha) A_hat Z + alpha H``."""
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    if k_steps < 0:
        raise ValueError("k_steps must be >= 0")
    H = np.asarray(H, dtype=np.float64)
    Z = H
    for _ in range(k_steps):
        Z = (1.0 - alpha) * (A_hat @ Z) + alpha * H
    return np.asarray(Z)


def _check_dims(model: GcnModel, A_hat, X):
    n = X.shape[0]
    if A_hat.shape != (n, n):
        raise DimensionMismatch(f"A_hat {A_hat.shape} does not match {n} feature rows")
    if X.shape[1] != model.in_dim:
        raise DimensionMismatch(f"features have dim {X.shape[1]}, model expects {model.in_dim}")


def _forward(model, A_hat, X, dropout=0.0, rng=None):
    """Forward pass keeping the intermediates needed by ``_backward``."""
    _check_dims(model, A_hat, X)
    XW = X @ model.W1
    H1 = A_hat @ XW if model.arch == "gcn" else XW
    H1 = np.asarray(H1)
    Z1 = np.maximum(H1, 0.0)
    mask = None
    if dropout > 0:
        mask = (rng.random(Z1.shape) >= dropout) / (1.0 - dropout)
        Z1 = Z1 * mask
    ZW = Z1 @ model.W2
    if model.arch == "gcn":
        out = np.asarray(A_hat @ ZW)
    else:
        out = appnp_predict(ZW, A_hat, model.alpha, model.k_steps)
    return out, dict(XW=XW, H1=H1, Z1=Z1, ZW=ZW, mask=mask)


def gcn_forward(model: GcnModel, A_hat, X, dropout_off: bool = True,
                dropout: float = 0.5, rng=None) -> np.ndarray:
    """Logits ``A_hat relu(A_hat X W1) W2`` (APPNP models propagate the MLP output)."""
    X = np.asarray(X, dtype=np.float64)
    if dropout_off:
        return _forward(model, A_hat, X)[0]
    rng = rng if rng is not None else np.random.default_rng()
    return _forward(model, A_hat, X, dropout, rng)[0]


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def cross_entropy(logits, labels, nodes) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over ``nodes`` and its gradient w.r.t. ``logits``."""
    nodes = np.asarray(nodes, dtype=np.int64)
    if len(nodes) == 0:
        raise EmptyNodeSet("cross-entropy over an empty node set")
    y = np.asarray(labels)[nodes]
    lp = log_softmax(logits[nodes])
    loss = -float(lp[np.arange(len(nodes)), y].mean())
    G = np.zeros_like(logits)
    P = np.exp(lp)
    P[np.arange(len(nodes)), y] -= 1.0
    np.add.at(G, nodes, P / len(nodes))
    return loss, G


def masked_cross_entropy(logits, labels, nodes) -> tuple[float, np.ndarray]:
    """Cross-entropy restricted to ``nodes`` that are currently classified correctly."""
    nodes = np.asarray(nodes, dtype=np.int64)
    correct = nodes[logits[nodes].argmax(axis=1) == np.asarray(labels)[nodes]]
    if len(correct) == 0:
        return 0.0, np.zeros_like(logits)
    return cross_entropy(logits, labels, correct)


def tanh_margin(logits, labels, nodes) -> tuple[float, np.ndarray]:
    """Mean ``tanh(best other logit - true logit)``; bounded, so no node dominates."""
    nodes = np.asarray(nodes, dtype=np.int64)
    if len(nodes) == 0:
        raise EmptyNodeSet("margin over an empty node set")
    y = np.asarray(labels)[nodes]
    Z = logits[nodes].copy()
    rows = np.arange(len(nodes))
    zy = Z[rows, y]
    Z[rows, y] = -np.inf
    b = Z.argmax(axis=1)
    t = np.tanh(Z[rows, b] - zy)
    G = np.zeros_like(logits)
    w = (1.0 - t * t) / len(nodes)
    np.add.at(G, (nodes, b), w)
    np.add.at(G, (nodes, y), -w)
    return float(t.mean()), G


ATTACK_LOSSES = {
    "ce": cross_entropy,
    "masked-ce": masked_cross_entropy,
    "tanh-margin": tanh_margin,
}


def _backward(model, A_hat, X, cache, G_out, want_adj=False):
    if model.arch == "gcn":
        dZW = np.asarray(A_hat.T @ G_out)
    else:
        # propagation operator is a polynomial in a symmetric A_hat
        dZW = appnp_predict(G_out, A_hat, model.alpha, model.k_steps)
    dW2 = cache["Z1"].T @ dZW
    dZ1 = dZW @ model.W2.T
    if cache["mask"] is not None:
        dZ1 = dZ1 * cache["mask"]
    dH1 = dZ1 * (cache["H1"] > 0)
    if model.arch == "gcn":
        dXW = np.asarray(A_hat.T @ dH1)
    else:
        dXW = dH1
    dW1 = X.T @ dXW
    dA_hat = None
    if want_adj:
        if model.arch != "gcn":
            raise NotImplementedError("adjacency gradients are only defined for the GCN")
        dA_hat = G_out @ cache["ZW"].T + dH1 @ cache["XW"].T
    return dW1, dW2, dA_hat


def loss_and_param_grads(model, A_hat, X, labels, nodes, dropout=0.0, rng=None):
    out, cache = _forward(model, A_hat, X, dropout, rng)
    loss, G = cross_entropy(out, labels, nodes)
    dW1, dW2, _ = _backward(model, A_hat, X, cache, G)
    return loss, dW1, dW2


def _dense(A):
    return A.toarray() if sp.issparse(A) else np.asarray(A, dtype=np.float64)


def normalization_backward(A: np.ndarray, G_hat: np.ndarray) -> np.ndarray:
    """Chain ``dL/dA_hat`` through ``A_hat = D^-1/2 (A + I) D^-1/2``.

    Returns the derivative w.r.t. each unordered pair ``a_uv`` with
    ``A[u, v] = A[v, u] = a_uv`` (reported at both positions) and zeros on
    the diagonal.
    """
    n = A.shape[0]
    At = A + np.eye(n)
    d = At.sum(axis=1)
    s = d ** -0.5
    M = G_hat * At
    ds = M @ s + M.T @ s
    dd = -0.5 * ds * d ** -1.5
    G_full = G_hat * s[:, None] * s[None, :] + dd[:, None]
    G = G_full + G_full.T
    np.fill_diagonal(G, 0.0)
    return G


def gcn_loss_and_grad_adj(model: GcnModel, X, y, target_nodes, relaxed_A,
                          loss: str = "ce") -> tuple[float, np.ndarray]:
    """Attack loss (mean CE on targets by default) and its gradient w.r.t. the relaxed adjacency."""
    A = _dense(relaxed_A)
    X = np.asarray(X, dtype=np.float64)
    if A.shape != (X.shape[0], X.shape[0]):
        raise DimensionMismatch(f"adjacency {A.shape} vs {X.shape[0]} nodes")
    A_hat = normalized_adjacency(A)
    out, cache = _forward(model, A_hat, X)
    value, G = ATTACK_LOSSES[loss](out, y, target_nodes)
    _, _, dA_hat = _backward(model, A_hat, X, cache, G, want_adj=True)
    return value, normalization_backward(A, dA_hat)


def gcn_loss_grad_adj(model: GcnModel, X, y, target_nodes, relaxed_A, loss: str = "ce") -> np.ndarray:
    return gcn_loss_and_grad_adj(model, X, y, target_nodes, relaxed_A, loss)[1]


def attack_loss(model: GcnModel, X, y, target_nodes, A, loss: str = "ce") -> float:
    """Attack objective (mean CE of the true labels by default) for adjacency ``A``."""
    out = gcn_forward(model, normalized_adjacency(_dense(A)), X)
    return ATTACK_LOSSES[loss](out, y, target_nodes)[0]


# --------------------------------------------------------------------------
# training


@dataclass(eq=False)
class TrainingView:
    """One graph view with the nodes whose loss is optimised on it."""

    A_hat: object
    X: np.ndarray
    nodes: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.X = np.asarray(self.X, dtype=np.float64)


@dataclass
class TrainHistory:
    best_epoch: int = -1
    best_val_acc: float = float("nan")
    best_val_loss: float = float("inf")
    epochs_run: int = 0
    losses: list = field(default_factory=list)


def _adam_step(params, grads, state, t, lr, b1=0.9, b2=0.999, eps=1e-8):
    for p, g, (m, v) in zip(params, grads, state):
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        p -= lr * mhat / (np.sqrt(vhat) + eps)


def _evaluate(model, views):
    """Pooled accuracy and mean cross-entropy over the nodes of several views."""
    hits = total = 0
    loss = 0.0
    for v in views:
        if len(v.nodes) == 0:
            continue
        out = gcn_forward(model, v.A_hat, v.X)
        l, _ = cross_entropy(out, v.labels, v.nodes)
        hits += int(np.sum(out[v.nodes].argmax(axis=1) == v.labels[v.nodes]))
        total += len(v.nodes)
        loss += l * len(v.nodes)
    return hits / total, loss / total


def fit_views(views: Sequence[TrainingView], val_view, out_dim: int,
              config: TrainConfig, history: Optional[TrainHistory] = None) -> GcnModel:
    """Full-batch Adam on the summed per-sample cross-entropy of all ``views``.

    ``val_view`` is one view or a list of views whose nodes are pooled.  The
    returned parameters are those with the best validation accuracy (ties:
    lower validation loss); training stops after ``patience`` epochs
    without improvement.
    """
    views = list(views)
    val_views = list(val_view) if isinstance(val_view, (list, tuple)) else [val_view]
    n_samples = sum(len(v.nodes) for v in views)
    if n_samples == 0:
        raise EmptySplit("no training samples")
    if sum(len(v.nodes) for v in val_views) == 0:
        raise EmptySplit("empty validation set")
    rng = np.random.default_rng(config.seed)
    in_dim = views[0].X.shape[1]
    model = init_model(in_dim, config.hidden, out_dim, rng, arch=config.arch,
                       alpha=config.alpha, k_steps=config.k_steps)
    hist = history if history is not None else TrainHistory()
    if config.max_epochs == 0:
        return model

    state = [(np.zeros_like(model.W1), np.zeros_like(model.W1)),
             (np.zeros_like(model.W2), np.zeros_like(model.W2))]
    best = model.copy()
    best_key = None
    wait = 0
    for epoch in range(1, config.max_epochs + 1):
        gW1 = np.zeros_like(model.W1)
        gW2 = np.zeros_like(model.W2)
        total = 0.0
        for v in views:
            if len(v.nodes) == 0:
                continue
            loss, dW1, dW2 = loss_and_param_grads(model, v.A_hat, v.X, v.labels, v.nodes,
                                                  config.dropout, rng)
            w = len(v.nodes) / n_samples
            total += w * loss
            gW1 += w * dW1
            gW2 += w * dW2
        if not (np.isfinite(total) and np.isfinite(gW1).all() and np.isfinite(gW2).all()):
            raise DivergedLoss(f"non-finite training loss or gradient at epoch {epoch}")
        hist.losses.append(total)
        if config.weight_decay:
            gW1 += config.weight_decay * model.W1
            gW2 += config.weight_decay * model.W2
        _adam_step([model.W1, model.W2], [gW1, gW2], state, epoch, config.learning_rate)

        vacc, vloss = _evaluate(model, val_views)
        key = (vacc, -vloss)
        hist.epochs_run = epoch
        if best_key is None or key > best_key:
            best_key = key
            best = model.copy()
            hist.best_epoch, hist.best_val_acc, hist.best_val_loss = epoch, vacc, vloss
            wait = 0
        else:
            wait += 1
            if wait >= config.patience:
                break
    return best


def training_views(graph: TextAttributedGraph, split: Split, features=None):
    """Train and validation views for the split's learning setting.

    Inductive: the model trains on the subgraph induced by the training
    nodes and validates on the subgraph induced by train+val nodes.
    Transductive: both use the full graph.
    """
    X = graph.features if features is None else np.asarray(features, dtype=np.float64)
    if split.mode == SplitMode.INDUCTIVE:
        g = graph.replace(features=X)
        sub_tr, map_tr = g.induced_subgraph(split.train)
        sub_va, map_va = g.induced_subgraph(np.concatenate([split.train, split.val]))
        tr = TrainingView(normalized_adjacency(sub_tr), sub_tr.features,
                          map_tr[split.train], sub_tr.labels)
        va = TrainingView(normalized_adjacency(sub_va), sub_va.features,
                          map_va[split.val], sub_va.labels)
        return tr, va
    A_hat = normalized_adjacency(graph)
    return (TrainingView(A_hat, X, split.train, graph.labels),
            TrainingView(A_hat, X, split.val, graph.labels))


def gcn_train(graph: TextAttributedGraph, split: Split, config: Optional[TrainConfig] = None,
              out_dim: Optional[int] = None, history: Optional[TrainHistory] = None) -> GcnModel:
    config = config or TrainConfig()
    if len(split.train) == 0 or len(split.val) == 0:
        raise EmptySplit("train and validation sets must be non-empty")
    tr, va = training_views(graph, split)
    return fit_views([tr], va, out_dim or graph.class_count, config, history)


def predict(model: GcnModel, graph: TextAttributedGraph, features=None,
            n_classes: Optional[int] = None) -> np.ndarray:
    """Argmax class per node, optionally restricted to the first ``n_classes`` outputs."""
    X = graph.features if features is None else features
    out = gcn_forward(model, normalized_adjacency(graph, sparse=True), X)
    if n_classes is not None:
        out = out[:, :n_classes]
    return out.argmax(axis=1)


def accuracy(predictions, labels, node_set) -> float:
    nodes = np.asarray(node_set, dtype=np.int64)
    if len(nodes) == 0:
        raise EmptyNodeSet("accuracy over an empty node set")
    return float(np.mean(np.asarray(predictions)[nodes] == np.asarray(labels)[nodes]))


# --------------------------------------------------------------------------
# checkpoints


def save_model(model: GcnModel, path) -> Path:
    """Write a JSON checkpoint; floats use ``repr`` so round-trips are exact."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "arch": model.arch,
        "in_dim": model.in_dim,
        "hidden": model.hidden,
        "out_dim": model.out_dim,
        "alpha": model.alpha,
        "k_steps": model.k_steps,
        "W1": model.W1.tolist(),
        "W2": model.W2.tolist(),
    }
    p = Path(path)
    p.write_text(json.dumps(doc), encoding="utf-8")
    return p


def load_model(path) -> GcnModel:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    model = GcnModel(np.array(doc["W1"], dtype=np.float64).reshape(doc["in_dim"], doc["hidden"]),
                     np.array(doc["W2"], dtype=np.float64).reshape(doc["hidden"], doc["out_dim"]),
                     arch=doc["arch"], alpha=doc["alpha"], k_steps=doc["k_steps"])
    return model


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
