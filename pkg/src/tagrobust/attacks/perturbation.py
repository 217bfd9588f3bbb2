"""Budget-accounted perturbation sets and their application to graphs."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import BudgetViolation, DimensionMismatch
from ..graph import Budget, TextAttributedGraph


@dataclass(frozen=True)
class TextReplacement:
    """Replacement for one node: a feature row and, when known, its origin/text."""

    row: tuple
    source_node: Optional[int] = None
    text: Optional[str] = None

    def to_json(self) -> dict:
        if self.source_node is not None:
            d = {"source_node": int(self.source_node)}
        else:
            d = {"row": [float(x) for x in self.row]}
        if self.text is not None:
            d["text"] = self.text
        return d


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class PerturbationSet:
    """Edge flips plus node feature replacements, validated against a budget.

    ``edge_flips`` holds unordered pairs ``(u, v)`` with ``u < v``; a flip
    removes an existing edge or adds an absent one.
    """

    edge_flips: frozenset = frozenset()
    text_replacements: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    budget: Optional[Budget] = None

    def __post_init__(self):
        flips = set()
        for u, v in self.edge_flips:
            u, v = int(u), int(v)
            if u == v:
                raise BudgetViolation(f"self-loop flip at node {u}")
            pair = (min(u, v), max(u, v))
            if pair in flips:
                raise BudgetViolation(f"duplicate flip {pair}")
            flips.add(pair)
        object.__setattr__(self, "edge_flips", frozenset(flips))
        reps = {int(k): v for k, v in self.text_replacements.items()}
        dims = {len(r.row) for r in reps.values()}
        if len(dims) > 1:
            raise BudgetViolation("replacement rows have inconsistent dimensions")
        object.__setattr__(self, "text_replacements", reps)
        if self.budget is not None:
            if len(flips) > self.budget.delta_struct:
                raise BudgetViolation(
                    f"{len(flips)} edge flips exceed delta_struct={self.budget.delta_struct}")
            if len(reps) > self.budget.delta_text:
                raise BudgetViolation(
                    f"{len(reps)} text replacements exceed delta_text={self.budget.delta_text}")

    @property
    def num_flips(self) -> int:
        return len(self.edge_flips)

    def sorted_flips(self) -> list:
        return sorted(self.edge_flips)

    def merged(self, other: "PerturbationSet") -> "PerturbationSet":
        budget = None
        if self.budget is not None and other.budget is not None:
            budget = Budget(self.budget.delta_struct + other.budget.delta_struct,
                            self.budget.delta_text + other.budget.delta_text)
        reps = dict(self.text_replacements)
        reps.update(other.text_replacements)
        return PerturbationSet(self.edge_flips ^ other.edge_flips, reps,
                               {"merged": [self.provenance, other.provenance]}, budget)

    def validate_against(self, graph: TextAttributedGraph) -> None:
        for u, v in self.edge_flips:
            if not (0 <= u < graph.n and 0 <= v < graph.n):
                raise DimensionMismatch(f"flip ({u}, {v}) outside a {graph.n}-node graph")
        for node, rep in self.text_replacements.items():
            if not 0 <= node < graph.n:
                raise DimensionMismatch(f"replacement for node {node} outside graph")
            if len(rep.row) != graph.feature_dim:
                raise DimensionMismatch(
                    f"replacement row dim {len(rep.row)} != feature dim {graph.feature_dim}")

    # -- serialization ----------------------------------------------------
    def to_json(self) -> dict:
        doc = {
            "edge_flips": [[u, v] for u, v in self.sorted_flips()],
            "text_replacements": {str(k): self.text_replacements[k].to_json()
                                  for k in sorted(self.text_replacements)},
            "provenance": self.provenance,
        }
        if self.budget is not None:
            doc["budget"] = {"delta_struct": self.budget.delta_struct,
                             "delta_text": self.budget.delta_text}
        return doc

    def save(self, path) -> Path:
        p = Path(path)
        p.write_text(json.dumps(self.to_json(), indent=1, sort_keys=False), encoding="utf-8")
        return p

    @classmethod
    def from_json(cls, doc: dict, graph: Optional[TextAttributedGraph] = None) -> "PerturbationSet":
        """Rebuild from JSON; ``source_node`` entries need ``graph`` to resolve rows."""
        reps = {}
        for key, spec in doc.get("text_replacements", {}).items():
            text = spec.get("text")
            if "source_node" in spec:
                if graph is None:
                    raise ValueError("source_node replacements need the source graph")
                k = int(spec["source_node"])
                row = tuple(float(x) for x in graph.features[k])
                if text is None and graph.texts is not None:
                    text = graph.texts[k]
                reps[int(key)] = TextReplacement(row, k, text)
            else:
                reps[int(key)] = TextReplacement(tuple(float(x) for x in spec["row"]), None, text)
        b = doc.get("budget")
        budget = Budget(b["delta_struct"], b["delta_text"]) if b else None
        return cls(frozenset(tuple(e) for e in doc.get("edge_flips", [])), reps,
                   doc.get("provenance", {}), budget)

    @classmethod
    def load(cls, path, graph: Optional[TextAttributedGraph] = None) -> "PerturbationSet":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")), graph)


def flips_between(before: TextAttributedGraph, after: TextAttributedGraph) -> set:
    return before.edge_set() ^ after.edge_set()


def apply_perturbation(graph: TextAttributedGraph, pset: PerturbationSet) -> TextAttributedGraph:
    """Toggle the flipped pairs and swap in replacement rows; input is untouched."""
    pset.validate_against(graph)
    edges = graph.edge_set() ^ set(pset.edge_flips)
    X = graph.features
    texts = graph.texts
    if pset.text_replacements:
        X = X.copy()
        tlist = list(texts) if texts is not None else None
        for node, rep in pset.text_replacements.items():
            X[node] = rep.row
            if tlist is not None and rep.text is not None:
                tlist[node] = rep.text
        texts = tuple(tlist) if tlist is not None else None
    e = np.array(sorted(edges), dtype=np.int64).reshape(-1, 2)
    return graph.replace(edges=e, features=X, texts=texts)


def perturbed_adjacency(A: np.ndarray, flips) -> np.ndarray:
    A = A.copy()
    for u, v in flips:
        A[u, v] = A[v, u] = 1.0 - A[u, v]
    return A
