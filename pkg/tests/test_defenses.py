from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tagrobust.defenses import (DualThresholds, SimilarityFilterConfig, attack_ratio,
                                auto_build_training_set, auto_detect_structure, auto_infer,
                                guardual_filter, guardual_thresholds, select_thresholds,
                                similarity_filter, threshold_objective, train_auto_predictor)
from tagrobust.errors import EmptySimilarityClass, PredictorClassMismatch, SingleClass
from tagrobust.gcn import GcnModel, TrainConfig, gcn_forward, init_model
from tagrobust.graph import Split, make_split, normalized_adjacency
from tagrobust.synthetic import planted_partition

from conftest import graph_from_edges, random_graph


def scan_oracle(intra, inter, weights):
    """Smallest tau in {k/100} maximising the weighted objective, in exact rationals."""
    best, arg = None, None
    for k in range(101):
        tau = k / 100
        p = Fraction(sum(s >= tau for s in intra), len(intra))
        f = Fraction(sum(s < tau for s in inter), len(inter))
        score = weights[0] * p + weights[1] * f
        if best is None or score > best:
            best, arg = score, tau
    return arg


class TestSimilarityFilter:
    def test_vacuous_threshold(self):
        g = random_graph(0, n=8)
        res = similarity_filter(g, cfg=SimilarityFilterConfig("cosine", -1.0))
        assert res.graph.edge_set() == g.edge_set() and not res.removed

    def test_orthogonal_classes(self):
        g = planted_partition(n=60, sigma=0.0, p_out=0.05, seed=2)
        res = similarity_filter(g, cfg=SimilarityFilterConfig("cosine", 0.5))
        y = g.labels
        assert all(y[u] == y[v] for u, v in res.graph.edge_set())
        assert all(y[u] != y[v] for u, v in res.removed)
        assert len(res.removed) == sum(y[u] != y[v] for u, v in g.edge_set())

    def test_jaccard(self):
        g = graph_from_edges(2, [(0, 1)], features=[[1, 1, 0], [0, 1, 1]])
        assert np.isclose(similarity_filter(g, cfg=SimilarityFilterConfig("jaccard", 1 / 3)).similarities[0], 1 / 3)
        assert not similarity_filter(g, cfg=SimilarityFilterConfig("jaccard", 0.33)).removed
        assert similarity_filter(g, cfg=SimilarityFilterConfig("jaccard", 0.34)).removed == {(0, 1)}

    def test_zero_vector(self):
        g = graph_from_edges(2, [(0, 1)], features=[[0.0, 0.0], [1.0, 0.0]])
        res = similarity_filter(g, cfg=SimilarityFilterConfig("cosine", 0.0))
        assert res.similarities[0] == 0.0 and not res.removed

    def test_threshold_range(self):
        with pytest.raises(ValueError):
            SimilarityFilterConfig("jaccard", -0.1)
        with pytest.raises(ValueError):
            SimilarityFilterConfig("cosine", 1.5)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 10_000), tau=st.floats(-1, 1))
    def test_subset_and_idempotent(self, seed, tau):
        g = random_graph(seed, n=7)
        cfg = SimilarityFilterConfig("cosine", tau)
        once = similarity_filter(g, cfg=cfg).graph
        twice = similarity_filter(once, cfg=cfg).graph
        assert once.edge_set() <= g.edge_set()
        assert twice.edge_set() == once.edge_set()
        assert np.array_equal(once.features, g.features)


class TestThresholdObjective:
    def test_examples(self):
        assert threshold_objective([0.8, 0.6], [0.3], 0.7) == (0.5, 1.0)
        assert threshold_objective([0.8, 0.6], [0.3], -2) == (1.0, 0.0)
        assert threshold_objective([0.8, 0.6], [0.3], 2) == (0.0, 1.0)
        with pytest.raises(EmptySimilarityClass):
            threshold_objective([], [0.3], 0.5)


class TestGuardual:
    def test_perfect_separation(self):
        cons, bal = select_thresholds([0.9] * 5, [0.1] * 4)
        for tau in (cons, bal):
            assert 0.1 < tau <= 0.9
            assert threshold_objective([0.9] * 5, [0.1] * 4, tau) == (1.0, 1.0)

    @settings(max_examples=200, deadline=None)
    @given(intra=st.lists(st.floats(0, 1), min_size=1, max_size=25),
           inter=st.lists(st.floats(0, 1), min_size=1, max_size=25))
    def test_matches_scan_oracle(self, intra, inter):
        cons, bal = select_thresholds(intra, inter)
        assert cons == scan_oracle(intra, inter, (Fraction(7, 10), Fraction(3, 10)))
        assert bal == scan_oracle(intra, inter, (Fraction(1, 2), Fraction(1, 2)))

    def test_ordering_fuzz(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            a = rng.random(rng.integers(1, 30)) ** rng.uniform(0.2, 3)
            b = rng.random(rng.integers(1, 30)) ** rng.uniform(0.2, 3)
            cons, bal = select_thresholds(np.round(a, 2), np.round(b, 2))
            assert cons <= bal

    def test_train_visible_only(self):
        # triangle 0-1-2 plus pendant 3; only 0,1,2 are label-visible
        g = graph_from_edges(4, [(0, 1), (1, 2), (2, 3)], labels=[0, 0, 1, 1],
                             features=[[1, 0], [1, 0.1], [0, 1], [1, 1]])
        th = guardual_thresholds(g.features, g.edges, g.labels, [0, 1, 2])
        oracle_intra = [float(np.dot(g.features[0], g.features[1]) /
                              np.linalg.norm(g.features[0]) / np.linalg.norm(g.features[1]))]
        oracle_inter = [float(np.dot(g.features[1], g.features[2]) / np.linalg.norm(g.features[1]))]
        assert (th.conservative, th.balanced) == select_thresholds(oracle_intra, oracle_inter)
        with pytest.raises(EmptySimilarityClass):
            guardual_thresholds(g.features, g.edges, g.labels, [0, 1])

    def test_phases_and_json(self, tmp_path):
        g = planted_partition(n=80, seed=4)
        s = make_split(g, "inductive", 0)
        th = guardual_thresholds(g.features, g.edges, g.labels, s.train, dataset="planted")
        path = th.save(tmp_path / "th.json")
        assert DualThresholds.load(path) == th
        tr = guardual_filter(g, th, "train").graph.edge_set()
        te = guardual_filter(g, th, "test").graph.edge_set()
        assert te <= tr <= g.edge_set()


class TestAutoTrainingSet:
    def test_ratio(self):
        assert attack_ratio(7) == Fraction(1, 7)
        assert attack_ratio(2) == Fraction(15, 100)

    def test_counts_and_sources(self):
        g = planted_partition(n=125, seed=0)
        s = Split(np.arange(100), np.arange(100, 110), np.arange(110, 125), "inductive")
        ts = auto_build_training_set(g, s, seed=3)
        assert len(ts.attacked) == len(ts.recovery) == 15
        assert set(ts.attacked) <= set(s.train.tolist())
        assert np.all(g.labels[ts.sources] != g.labels[ts.attacked])
        assert np.all(np.isin(ts.sources, s.train))
        assert ts.attack_label == 2
        Xa, Xr = ts.attacked_features(g.features), ts.recovery_features(g.features)
        assert np.array_equal(Xa[ts.attacked], g.features[ts.sources])
        assert np.all(Xr[ts.recovery] == 0)
        again = auto_build_training_set(g, s, seed=3)
        assert np.array_equal(again.attacked, ts.attacked) and np.array_equal(again.sources, ts.sources)

    def test_single_class(self):
        g = graph_from_edges(5, [(0, 1)], labels=[0] * 5, classes=2)
        with pytest.raises(SingleClass):
            auto_build_training_set(g, Split([0, 1, 2], [3], [4], "inductive"))


class TestStructureDetection:
    def test_examples(self):
        # node 0: 4 neighbours, 2 dissimilar; node 5: 3 neighbours, 1 dissimilar; node 9 isolated
        X = np.array([[1, 0]] * 10, dtype=float)
        X[[3, 4, 8]] = [0, 1]
        edges = [(0, 1), (0, 2), (0, 3), (0, 4), (5, 6), (5, 7), (5, 8)]
        g = graph_from_edges(10, edges, features=X)
        flagged = auto_detect_structure(g)
        assert 0 in flagged and 5 not in flagged and 9 not in flagged


@pytest.fixture(scope="module")
def auto_setup():
    g = planted_partition(n=150, seed=5)
    s = make_split(g, "inductive", 5)
    return g, s, train_auto_predictor(g, s, TrainConfig(seed=5, max_epochs=150))


class TestAutoInfer:
    def test_mismatch(self):
        g = random_graph(0, n=6)
        with pytest.raises(PredictorClassMismatch):
            auto_infer(init_model(3, 4, 2), g, np.arange(6))

    def test_collapse_without_flags(self):
        # identical rows: no structure flags; extra class pushed far below the rest
        g = graph_from_edges(5, [(0, 1), (1, 2), (3, 4)], labels=[0, 1, 0, 1, 0],
                             features=np.ones((5, 3)))
        m = init_model(3, 4, 3, seed=1)
        W2 = m.W2.copy()
        W2[:, 2] = -100.0
        m = GcnModel(np.abs(m.W1), W2)
        res = auto_infer(m, g, np.arange(5))
        plain = gcn_forward(m, normalized_adjacency(g), g.features)[:, :2].argmax(1)
        assert not res.report.text_flagged and not res.report.structure_flagged
        assert np.array_equal(res.predictions, plain)
        assert res.invocations_per_node == 1.0

    def test_outputs_valid(self, auto_setup):
        g, s, m = auto_setup
        assert m.out_dim == g.class_count + 1
        X = g.features.copy()
        X[s.test[:5]] = X[s.test[-5:]][::-1]
        res = auto_infer(m, g, s.test, features=X)
        p = res.predictions[s.test]
        assert np.all((p >= 0) & (p < g.class_count))
        assert np.all(res.predictions[np.setdiff1d(np.arange(g.n), s.test)] == -1)
        assert res.invocations_per_node <= 2
        assert not res.report.text_flagged & res.report.structure_flagged
        js = res.report.to_json()
        assert set(js["nodes"]) == {str(i) for i in s.test}
