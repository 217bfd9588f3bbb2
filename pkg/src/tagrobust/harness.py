"""Experiment runner, rank aggregation and report emission."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .attacks import (DiceConfig, GrbcdConfig, PgdConfig, apply_perturbation, attack_dice,
                      attack_grbcd, attack_pgd, attack_pgd_guard, attack_text_classswap,
                      visible_labels)
from .attacks.perturbation import PerturbationSet, config_hash
from .defenses import (SimilarityFilterConfig, auto_infer, guardual_filter, guardual_thresholds,
                       similarity_filter, train_auto_predictor)
from .errors import EmptySimilarityClass, EmptyTable, IoFailure, ScenarioPairingViolation, StageError, TagRobustError
from .gcn import TrainConfig, accuracy, gcn_train, predict
from .graph import Budget, SplitMode, TextAttributedGraph, load_dataset, make_split
from .synthetic import planted_partition

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SCENARIO_MODE = {"evasion": SplitMode.INDUCTIVE, "poisoning": SplitMode.TRANSDUCTIVE}
ATTACKS = ("none", "pgd", "grbcd", "dice", "pgd-guard", "text-classswap")
DEFENSES = ("gcn", "appnp", "gnnguard", "jaccard", "guardual", "autogcn")
MISSING = "-"


def normalize_scenario(scenario: str) -> str:
    """Accept ``evasion``/``poisoning`` or the long ``evasion-inductive`` form."""
    s = str(scenario).lower()
    for name, mode in SCENARIO_MODE.items():
        if s in (name, f"{name}-{mode.value}"):
            return name
    raise ValueError(f"unknown scenario {scenario!r}")


def check_pairing(scenario: str, mode) -> None:
    scenario = normalize_scenario(scenario)
    expected = SCENARIO_MODE[scenario]
    if SplitMode(mode) != expected:
        raise ScenarioPairingViolation(
            f"{scenario} attacks require {expected.value} splits, got {SplitMode(mode).value}")


def _train_config(d: Optional[Mapping], **overrides) -> TrainConfig:
    allowed = {f.name for f in fields(TrainConfig)}
    kw = {k: v for k, v in dict(d or {}).items() if k in allowed}
    unknown = set(dict(d or {})) - allowed
    if unknown:
        raise ValueError(f"unknown training options: {sorted(unknown)}")
    kw.update(overrides)
    return TrainConfig(**kw)


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment grid: datasets x seeds x defenses under a single attack.

    The split mode is derived from (and must agree with) the attack
    scenario: evasion pairs with inductive splits, poisoning with
    transductive ones.
    """
    datasets: tuple
    attack: str = "none"
    ptb_rate: float = 0.0
    scenario: str = "evasion"
    split_mode: Optional[str] = None
    seeds: tuple = (0, 1, 2)
    attack_params: Mapping = field(default_factory=dict)
    defenses: tuple = DEFENSES
    defense_params: Mapping = field(default_factory=dict)
    surrogate: Mapping = field(default_factory=dict)
    training: Mapping = field(default_factory=dict)
    output: str = "results"
    cell_time_budget: Optional[float] = None
    jobs: int = 1
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        object.__setattr__(self, "scenario", normalize_scenario(self.scenario))
        mode = self.split_mode or SCENARIO_MODE[self.scenario].value
        check_pairing(self.scenario, mode)
        object.__setattr__(self, "split_mode", SplitMode(mode).value)
        if self.attack not in ATTACKS:
            raise ValueError(f"attack must be one of {ATTACKS}")
        bad = [d for d in self.defenses if d not in DEFENSES]
        if bad:
            raise ValueError(f"unknown defenses {bad}; choose from {DEFENSES}")
        if not 0.0 <= self.ptb_rate <= 1.0:
            raise ValueError("ptb_rate must lie in [0, 1]")
        if not self.datasets:
            raise ValueError("at least one dataset is required")
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(f"unsupported config schema version {self.schema_version}")
        ds = tuple(d if isinstance(d, Mapping) else {"path": str(d)} for d in self.datasets)
        object.__setattr__(self, "datasets", ds)
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "defenses", tuple(self.defenses))

    @classmethod
    def from_json(cls, doc: Mapping) -> "ExperimentConfig":
        doc = dict(doc)
        if "dataset" in doc:
            ds = doc.pop("dataset")
            doc["datasets"] = ds if isinstance(ds, list) else [ds]
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for key in ("datasets", "seeds", "defenses"):
            if key in doc:
                doc[key] = tuple(doc[key])
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_json(json.loads(Path(path).read_text()))

    def to_json(self) -> dict:
        d = asdict(self)
        for key in ("datasets", "seeds", "defenses"):
            d[key] = list(d[key])
        d["datasets"] = [dict(x) for x in d["datasets"]]
        return d

    def fingerprint(self) -> str:
        d = self.to_json()
        for key in ("output", "jobs"):
            d.pop(key)
        return config_hash(d)


@dataclass(frozen=True)
class ResultRecord:
    method: str
    dataset: str
    scenario: str
    seed: int
    clean_accuracy: float
    attacked_accuracy: float
    runtime: float = field(default=0.0, compare=False)
    provenance: str = ""

    def __post_init__(self):
        for name in ("clean_accuracy", "attacked_accuracy"):
            v = getattr(self, name)
            if v is None or not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    @property
    def drop(self) -> float:
        return self.clean_accuracy - self.attacked_accuracy


RESULT_COLUMNS = [f.name for f in fields(ResultRecord)]


# --------------------------------------------------------------------------
# pipeline stages

def load_dataset_spec(spec: Mapping) -> TextAttributedGraph:
    """``{"path": dir}`` or ``{"synthetic": {planted_partition kwargs}}``, optional ``name``."""
    if "synthetic" in spec:
        kw = dict(spec["synthetic"])
        kw.setdefault("name", spec.get("name", "planted"))
        return planted_partition(**kw)
    g = load_dataset(spec["path"], max_vocab=spec.get("max_vocab", 1000))
    return g.replace(name=spec.get("name", g.name))


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except (TagRobustError, ValueError, OSError) as exc:
        raise StageError(name, exc) from exc


def run_attack(graph, split, surrogate, name: str, ptb_rate: float, scenario: str, seed: int,
               params: Optional[Mapping] = None) -> PerturbationSet:
    """Build the perturbation for one attack; targets are the test nodes."""
    params = dict(params or {})
    if name == "none" or ptb_rate == 0:
        return PerturbationSet(frozenset(), {}, {"attack": "none"}, Budget())
    if name == "text-classswap":
        return attack_text_classswap(graph, split, scenario, ptb_rate, seed)
    budget = Budget.from_rates(graph.num_edges, ptb_rate)
    if name == "dice":
        vis = visible_labels(graph, split.train, predict(surrogate, graph))
        return attack_dice(graph, vis, DiceConfig(budget=budget, seed=seed, **params),
                           train_nodes=split.train)
    targets = split.test
    if name == "grbcd":
        return attack_grbcd(graph, surrogate, targets, GrbcdConfig(budget=budget, seed=seed, **params))
    threshold = params.pop("similarity_threshold", 0.5)
    cfg = PgdConfig(budget=budget, seed=seed, **params)
    if name == "pgd-guard":
        return attack_pgd_guard(graph, surrogate, targets, cfg, threshold)
    return attack_pgd(graph, surrogate, targets, cfg)


class _Defender:
    """Fits a defense on one graph and predicts on another."""

    def __init__(self, name: str, params: Mapping, train_cfg: TrainConfig):
        self.name = name
        self.params = dict(params)
        self.cfg = train_cfg

    def fit(self, graph, split):
        if self.name == "appnp":
            cfg = replace(self.cfg, arch="appnp", alpha=self.params.get("alpha", 0.1),
                          k_steps=self.params.get("k_steps", 10))
            return gcn_train(graph, split, cfg)
        if self.name == "autogcn":
            return train_auto_predictor(graph, split, self.cfg)
        if self.name == "guardual":
            try:
                th = guardual_thresholds(graph.features, graph.edges, graph.labels, split.train,
                                         dataset=graph.name)
            except EmptySimilarityClass:
                # too few labelled edges: fill in the rest with plain-GCN predictions
                pseudo = predict(gcn_train(graph, split, self.cfg), graph)
                th = guardual_thresholds(graph.features, graph.edges, graph.labels, split.train,
                                         predicted=pseudo, dataset=graph.name)
            model = gcn_train(guardual_filter(graph, th, "train").graph, split, self.cfg)
            return model, th
        return gcn_train(self._filtered(graph), split, self.cfg)

    def _filtered(self, graph):
        if self.name == "gnnguard":
            return similarity_filter(graph, cfg=SimilarityFilterConfig(
                "cosine", self.params.get("threshold", 0.5))).graph
        if self.name == "jaccard":
            return similarity_filter(graph, cfg=SimilarityFilterConfig(
                "jaccard", self.params.get("threshold", 0.05))).graph
        return graph

    def predict(self, state, graph, test):
        if self.name == "autogcn":
            return auto_infer(state, graph, test, tau_sim=self.params.get("tau_sim", 0.5)).predictions
        if self.name == "guardual":
            model, th = state
            return predict(model, guardual_filter(graph, th, "test").graph)
        return predict(state, self._filtered(graph))


def _digest(*parts) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(json.dumps(p, sort_keys=True, default=str).encode())
        h.update(b"\x00")
    return h.hexdigest()[:16]


def _run_cell(config: ExperimentConfig, ds_spec: Mapping, seed: int) -> list:
    graph = _stage("load", load_dataset_spec, ds_spec)
    split = _stage("split", make_split, graph, config.split_mode, seed)
    surrogate = None
    if config.attack not in ("none", "text-classswap") and config.ptb_rate > 0:
        surrogate = _stage("surrogate", gcn_train, graph, split,
                           _train_config(config.surrogate, seed=seed))
    pset = _stage("attack", run_attack, graph, split, surrogate, config.attack, config.ptb_rate,
                  config.scenario, seed, config.attack_params)
    attacked = _stage("attack", apply_perturbation, graph, pset)
    pdigest = config_hash(pset.to_json())

    records = []
    base = _train_config(config.training, seed=seed)
    for method in config.defenses:
        t0 = time.perf_counter()
        d = _Defender(method, config.defense_params.get(method, {}), base)
        stage = f"defend:{method}"
        state = _stage(stage, d.fit, graph, split)
        clean_pred = _stage(stage, d.predict, state, graph, split.test)
        if config.scenario == "poisoning" and pset.num_flips + len(pset.text_replacements) > 0:
            state = _stage(stage, d.fit, attacked, split)
        att_pred = _stage(stage, d.predict, state, attacked, split.test)
        clean = accuracy(clean_pred, graph.labels, split.test)
        att = accuracy(att_pred, graph.labels, split.test)
        runtime = time.perf_counter() - t0
        if config.cell_time_budget is not None and runtime > config.cell_time_budget:
            log.warning("%s on %s seed %d exceeded the time budget (%.1fs); marked missing",
                        method, graph.name, seed, runtime)
            continue
        prov = _digest(config.fingerprint(), graph.name, seed, method, pdigest,
                       np.asarray(att_pred)[split.test].tolist())
        records.append(ResultRecord(method, graph.name, config.scenario, seed, clean, att,
                                    runtime, prov))
    return records


def run_pipeline(config: ExperimentConfig) -> list:
    """Run every (dataset, seed) cell and return one record per defense per cell.

    Evasion trains each defender on the clean graph and evaluates it on the
    attacked graph.  Poisoning retrains the defender on the attacked graph.
    Errors are wrapped in :class:`StageError` naming the failing stage.
    """
    check_pairing(config.scenario, config.split_mode)
    cells = [(ds, seed) for ds in config.datasets for seed in config.seeds]
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            chunks = list(pool.map(_run_cell, [config] * len(cells), *zip(*cells)))
    else:
        chunks = [_run_cell(config, ds, seed) for ds, seed in cells]
    return [r for chunk in chunks for r in chunk]


# --------------------------------------------------------------------------
# ranks

@dataclass(frozen=True)
class RankTable:
    methods: tuple
    datasets: tuple
    ranks: Mapping          # method -> dataset -> rank or None
    average: Mapping        # method -> mean rank over present datasets, or None
    direction: str = "max"

    def rows(self) -> list:
        out = []
        for m in self.methods:
            cells = [MISSING if self.ranks[m][d] is None else _fmt(self.ranks[m][d]) for d in self.datasets]
            avg = self.average[m]
            out.append([m, *cells, MISSING if avg is None else _fmt(avg)])
        return out


def _fmt(x: float) -> str:
    return repr(float(x))


def average_rank(table: Mapping, direction: str = "max") -> RankTable:
    """Rank methods per dataset and average over the datasets where they appear.

    ``table[method][dataset]`` is a score or ``None`` for a missing cell.
    ``direction='max'`` gives rank 1 to the highest score (accuracy),
    ``'min'`` to the lowest (accuracy drop).  Ties share the mean position.
    """
    if direction not in ("max", "min"):
        raise ValueError("direction must be 'max' or 'min'")
    methods = tuple(table)
    datasets = tuple(sorted({d for m in methods for d in table[m]}))
    if not methods or not datasets:
        raise EmptyTable("rank table needs at least one method and one dataset")
    ranks = {m: {d: None for d in datasets} for m in methods}
    for d in datasets:
        present = [m for m in methods if table[m].get(d) is not None]
        if not present:
            continue
        vals = np.array([float(table[m][d]) for m in present])
        r = rankdata(-vals if direction == "max" else vals, method="average")
        for m, rv in zip(present, r):
            ranks[m][d] = float(rv)
    average = {}
    for m in methods:
        got = [ranks[m][d] for d in datasets if ranks[m][d] is not None]
        average[m] = float(np.mean(got)) if got else None
    return RankTable(methods, datasets, ranks, average, direction)


def _column_key(r: ResultRecord, multi_scenario: bool) -> str:
    return f"{r.dataset}/{r.scenario}" if multi_scenario else r.dataset


def rank_records(records: Sequence[ResultRecord]) -> tuple:
    """Accuracy-rank and drop-rank tables from seed-averaged records."""
    if not records:
        raise EmptyTable("no records to rank")
    multi = len({r.scenario for r in records}) > 1
    methods = list(dict.fromkeys(r.method for r in records))
    acc = {m: {} for m in methods}
    drop = {m: {} for m in methods}
    groups = {}
    for r in records:
        groups.setdefault((r.method, _column_key(r, multi)), []).append(r)
    cols = sorted({k for _, k in groups})
    for m in methods:
        for c in cols:
            rs = groups.get((m, c))
            acc[m][c] = None if not rs else float(np.mean([r.attacked_accuracy for r in rs]))
            drop[m][c] = None if not rs else float(np.mean([r.drop for r in rs]))
    return average_rank(acc, "max"), average_rank(drop, "min")


# --------------------------------------------------------------------------
# reports

def _mean_std(values):
    values = [float(v) for v in values]
    std = statistics.stdev(values) if len(values) > 1 else None
    return statistics.fmean(values), std


def summarize(records: Sequence[ResultRecord]) -> list:
    groups = {}
    for r in records:
        groups.setdefault((r.method, r.dataset, r.scenario), []).append(r)
    out = []
    for (m, d, s), rs in sorted(groups.items()):
        cm, cs = _mean_std(r.clean_accuracy for r in rs)
        am, as_ = _mean_std(r.attacked_accuracy for r in rs)
        out.append({"method": m, "dataset": d, "scenario": s, "seeds": sorted(r.seed for r in rs),
                    "clean_mean": cm, "clean_std": cs, "attacked_mean": am, "attacked_std": as_})
    return out


def write_results_csv(records: Sequence[ResultRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in records:
            w.writerow([r.method, r.dataset, r.scenario, r.seed, _fmt(r.clean_accuracy),
                        _fmt(r.attacked_accuracy), f"{r.runtime:.6f}", r.provenance])


def read_results_csv(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [ResultRecord(row["method"], row["dataset"], row["scenario"], int(row["seed"]),
                         float(row["clean_accuracy"]), float(row["attacked_accuracy"]),
                         float(row["runtime"]), row["provenance"]) for row in rows]


def write_ranks_csv(tables: Sequence[RankTable], path, kinds=("accuracy", "drop")) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "method", *tables[0].datasets, "average"])
        for kind, t in zip(kinds, tables):
            for row in t.rows():
                w.writerow([kind, *row])


def emit_report(records: Sequence[ResultRecord], rank_tables: Optional[Sequence[RankTable]],
                path) -> list:
    """Write ``results.csv``, ``ranks.csv`` and ``summary.json`` under ``path``."""
    records = list(records)
    if not records:
        raise EmptyTable("no records to report")
    tables = list(rank_tables) if rank_tables else list(rank_records(records))
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        files = [out / "results.csv", out / "ranks.csv", out / "summary.json"]
        write_results_csv(records, files[0])
        write_ranks_csv(tables, files[1])
        summary = {
            "schema_version": SCHEMA_VERSION,
            "cells": summarize(records),
            "ranks": {kind: {"average": dict(t.average), "per_dataset": {m: dict(v) for m, v in t.ranks.items()}}
                      for kind, t in zip(("accuracy", "drop"), tables)},
        }
        files[2].write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write report to {out}: {exc}") from exc
    return files
