"""Acceptance criteria, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py`` (lines are repeated in the
terminal summary) or directly with ``python3 tests/test_acceptance.py``.
Tolerances are pinned here; a failing line reports the measured values.
"""
import math
import statistics
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import random_graph  # noqa: E402
from test_analysis import S, auc_oracle, discr_oracle, fuzz_samples, overlap_oracle, percentile_oracle  # noqa: E402
from test_attacks import scalar_bisection  # noqa: E402
from test_defenses import scan_oracle  # noqa: E402
from test_gcn import fd_adj_grad, fd_param_grads, rel_err  # noqa: E402

from tagrobust.analysis import auc, cohen_d, discriminability, histogram_overlap, non_overlap, threshold_gap
from tagrobust.attacks import (DiceConfig, GrbcdConfig, PgdConfig, apply_perturbation, attack_dice,
                               attack_grbcd, attack_pgd, attack_pgd_guard, attack_text_classswap,
                               inverse_degree_weights, project_budget)
from tagrobust.attacks.perturbation import perturbed_adjacency
from tagrobust.defenses import (SimilarityFilterConfig, auto_infer, guardual_thresholds,
                                select_thresholds, similarity_filter, train_auto_predictor)
from tagrobust.errors import ExhaustedMoves
from tagrobust.gcn import (TrainConfig, accuracy, attack_loss, gcn_loss_and_grad_adj, gcn_train,
                           init_model, loss_and_param_grads, predict)
from tagrobust.graph import Budget, make_split, normalized_adjacency
from tagrobust.harness import ExperimentConfig, average_rank, run_pipeline
from tagrobust.synthetic import planted_partition

GRAD_TOL = 1e-4
GRAD_SECONDS = 5.0
CLEAN_MIN = 0.95
CLEAN_SECONDS = 30.0
PGD_DROP = 0.15
OTHER_DROP = 0.08
RECOVERY_GAP = 0.02
RECALL_MIN, PRECISION_MIN, AUTO_GAIN, INVOCATIONS_MAX = 0.9, 0.8, 0.10, 2.0
PROJECTION_ATOL = 1e-9
SEEDS = (0, 1, 2)
RATES = (0.05, 0.1, 0.2)

RESULTS = []


def report(criterion, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} [{criterion}] {detail}"
    RESULTS.append(line)
    print(line)
    return ok


# 1 ------------------------------------------------------------------------

def test_gradient_fidelity():
    start = time.perf_counter()
    worst = 0.0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(8, 13))
        g = random_graph(100 + seed, n=n, p=0.4, d=4, classes=3)
        model = init_model(4, 5, 3, seed=seed)
        nodes = np.arange(n)
        A_hat = normalized_adjacency(g)
        _, gW1, gW2 = loss_and_param_grads(model, A_hat, g.features, g.labels, nodes)
        fW1, fW2 = fd_param_grads(model, A_hat, g.features, g.labels, nodes)
        A = g.adjacency()
        _, gA = gcn_loss_and_grad_adj(model, g.features, g.labels, nodes, A, "ce")
        fA = fd_adj_grad(model, g.features, g.labels, nodes, A, "ce")
        worst = max(worst, rel_err(gW1, fW1), rel_err(gW2, fW2), rel_err(gA, fA))
    elapsed = time.perf_counter() - start
    ok = worst < GRAD_TOL and elapsed < GRAD_SECONDS
    assert report(1, ok, f"gradient fidelity: max rel err {worst:.2e} (< {GRAD_TOL:g}), {elapsed:.2f}s (< {GRAD_SECONDS:g}s)")


# 2 ------------------------------------------------------------------------

def test_clean_baseline():
    start = time.perf_counter()
    accs = []
    for seed in SEEDS:
        g = planted_partition(n=200, seed=seed)
        s = make_split(g, "inductive", seed)
        m = gcn_train(g, s, TrainConfig(seed=seed))
        accs.append(accuracy(predict(m, g), g.labels, s.test))
    elapsed = time.perf_counter() - start
    mean = statistics.fmean(accs)
    ok = mean >= CLEAN_MIN and elapsed < CLEAN_SECONDS
    assert report(2, ok, f"clean baseline: mean test acc {mean:.4f} (>= {CLEAN_MIN}) over seeds {SEEDS}, {elapsed:.1f}s (< {CLEAN_SECONDS:g}s)")


# 3 ------------------------------------------------------------------------

def _undefended(attack, rate, seeds=SEEDS):
    cfg = ExperimentConfig(datasets=({"name": "planted", "synthetic": {"n": 200, "seed": 0}},),
                           attack=attack, ptb_rate=rate, scenario="evasion", seeds=seeds,
                           defenses=("gcn",))
    recs = run_pipeline(cfg)
    return [r.clean_accuracy for r in recs], [r.attacked_accuracy for r in recs]


def test_attack_effectiveness():
    lines, ok_all = [], True
    for attack, need in (("pgd", PGD_DROP), ("grbcd", OTHER_DROP), ("dice", OTHER_DROP)):
        means, stds, clean = [], [], None
        for rate in RATES:
            c, a = _undefended(attack, rate)
            clean = statistics.fmean(c)
            means.append(statistics.fmean(a))
            stds.append(statistics.stdev(a))
        drop = clean - means[-1]
        # monotone within seed noise: each step may rise by at most one seed std
        mono = all(means[i + 1] <= means[i] + max(stds[i], stds[i + 1]) for i in range(len(RATES) - 1))
        ok = drop >= need and mono
        ok_all &= ok
        lines.append(f"{attack}: clean {clean:.3f}, attacked {'/'.join(f'{m:.3f}' for m in means)} "
                     f"at {RATES}, drop {100 * drop:.1f} pts (>= {100 * need:.0f}), monotone={mono}")
    assert report(3, ok_all, "attack effectiveness (evasion, undefended GCN): " + "; ".join(lines))


# 4 ------------------------------------------------------------------------

def test_defense_recovery():
    gaps, details = [], []
    for seed in SEEDS:
        g = planted_partition(n=200, sigma=0.0, seed=seed)
        s = make_split(g, "inductive", seed)
        victim = gcn_train(g, s, TrainConfig(seed=seed))
        clean = accuracy(predict(victim, g), g.labels, s.test)
        pert = attack_pgd(g, victim, s.test, PgdConfig(budget=Budget.from_rates(g.num_edges, 0.2), seed=seed))
        attacked = apply_perturbation(g, pert)
        th = guardual_thresholds(g.features, g.edges, g.labels, s.train)
        filt = similarity_filter(attacked, cfg=SimilarityFilterConfig("cosine", th.balanced))
        y = g.labels
        leaked = sum(y[u] != y[v] for u, v in filt.graph.edge_set())
        before = accuracy(predict(victim, attacked), y, s.test)
        after = accuracy(predict(victim, filt.graph), y, s.test)
        gaps.append(clean - after)
        details.append(f"seed {seed}: clean {clean:.3f} pgd {before:.3f} filtered {after:.3f} "
                       f"(tau {th.balanced:.2f}, inter edges left {leaked})")
    ok = max(gaps) <= RECOVERY_GAP
    assert report(4, ok, f"defense recovery: worst gap {100 * max(gaps):.1f} pts (<= {100 * RECOVERY_GAP:.0f}); " + "; ".join(details))


# 5 ------------------------------------------------------------------------

def _exhaustive_flip(model, g, targets, loss):
    A = g.adjacency()
    base = attack_loss(model, g.features, g.labels, targets, A, loss)
    iu, ju = np.triu_indices(g.n, 1)
    vals = np.array([attack_loss(model, g.features, g.labels, targets, perturbed_adjacency(A, [(u, v)]), loss)
                     for u, v in zip(iu, ju)])
    k = int(np.argmax(vals))
    return {(int(iu[k]), int(ju[k]))} if vals[k] > base else set()


def _gradient_flip(model, g, targets, loss):
    A = g.adjacency()
    _, G = gcn_loss_and_grad_adj(model, g.features, g.labels, targets, A, loss)
    iu, ju = np.triu_indices(g.n, 1)
    score = G[iu, ju] * (1 - 2 * A[iu, ju])
    k = int(np.argmax(score))
    return {(int(iu[k]), int(ju[k]))} if score[k] > 0 else set()


def test_oracle_equivalences():
    rng = np.random.default_rng(5)
    parts = {}

    mism = 0
    for _ in range(300):
        a = np.round(rng.random(rng.integers(1, 30)), int(rng.integers(1, 4)))
        b = np.round(rng.random(rng.integers(1, 30)), int(rng.integers(1, 4)))
        got = select_thresholds(a, b)
        want = (scan_oracle(a, b, (Fraction(7, 10), Fraction(3, 10))),
                scan_oracle(a, b, (Fraction(1, 2), Fraction(1, 2))))
        mism += got != want
    parts["guardual"] = (mism == 0, f"guardual vs scan {300 - mism}/300")

    mism = sum(auc(S(a, b)) != float(auc_oracle(a.tolist(), b.tolist())) for a, b in fuzz_samples(300, seed=21))
    parts["auc"] = (mism == 0, f"auc vs pairwise {300 - mism}/300")

    worst = 0.0
    for _ in range(300):
        s = rng.uniform(-2, 3, rng.integers(1, 40))
        delta = float(rng.uniform(0, 6))
        worst = max(worst, float(np.max(np.abs(project_budget(s, delta) - scalar_bisection(s, delta)))))
    parts["projection"] = (worst <= PROJECTION_ATOL, f"projection vs bisection max diff {worst:.1e} (<= {PROJECTION_ATOL:g})")

    pgd_ok = grbcd_ok = 0
    trials = 100
    for seed in range(trials):
        g = random_graph(seed, n_range=(4, 7))
        model = init_model(3, 8, 2, seed=seed)
        t = np.arange(g.n)
        p = attack_pgd(g, model, t, PgdConfig(budget=Budget(1, 0), seed=seed))
        pgd_ok += set(p.edge_flips) == _exhaustive_flip(model, g, t, "tanh-margin")
        q = attack_grbcd(g, model, t, GrbcdConfig(budget=Budget(1, 0), seed=seed))
        grbcd_ok += set(q.edge_flips) == _gradient_flip(model, g, t, "tanh-margin")
    parts["pgd"] = (pgd_ok == trials, f"budget-1 PGD vs exhaustive loss argmax {pgd_ok}/{trials}")
    parts["grbcd"] = (grbcd_ok == trials, f"budget-1 GRBCD vs exhaustive gradient-scored flip {grbcd_ok}/{trials}")
    ok = all(v[0] for v in parts.values())
    assert report(5, ok, "oracle equivalences: " + "; ".join(v[1] for v in parts.values()))


# 6 ------------------------------------------------------------------------

def test_guardual_ordering():
    rng = np.random.default_rng(6)
    violations = 0
    for _ in range(1000):
        a = rng.random(rng.integers(1, 50)) ** rng.uniform(0.2, 4)
        b = rng.random(rng.integers(1, 50)) ** rng.uniform(0.2, 4)
        if rng.random() < 0.5:
            a, b = np.round(a, 2), np.round(b, 2)
        cons, bal = select_thresholds(a, b)
        violations += cons > bal
    assert report(6, violations == 0, f"guardual ordering: {violations} violations in 1000 fuzzed multisets")


# 7 ------------------------------------------------------------------------

def test_rank_aggregation():
    t = average_rank({"A": {"d1": 3.0, "d2": 2.0, "d3": 1.0},
                      "B": {"d1": 2.0, "d2": 3.0, "d3": 3.0},
                      "C": {"d1": 1.0, "d2": 1.0, "d3": 2.0}})
    first = (t.ranks["A"]["d1"], t.ranks["A"]["d2"], t.ranks["A"]["d3"]), t.average["A"]
    u = average_rank({"A": {"d1": 3.0, "d2": 2.0, "d3": None},
                      "B": {"d1": 2.0, "d2": 3.0, "d3": 3.0}})
    second = (u.ranks["A"]["d1"], u.ranks["A"]["d2"], u.ranks["A"]["d3"]), u.average["A"]
    ok = first == ((1.0, 2.0, 3.0), 2.0) and second == ((1.0, 2.0, None), 1.5)
    assert report(7, ok, f"rank aggregation: (1,2,3) -> {first[1]}, (1,2,-) -> {second[1]}")


# 8 ------------------------------------------------------------------------

def test_dice_semantics():
    bad, exhausted = 0, 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        g = random_graph(seed, p=float(rng.uniform(0.1, 0.9)), classes=int(rng.integers(2, 4)), n_range=(5, 16))
        budget = int(rng.integers(1, 2 * max(1, g.num_edges)))
        cfg = DiceConfig(budget=Budget(budget, 0), add_probability=float(rng.uniform(0, 1)), seed=seed)
        p = attack_dice(g, g.labels, cfg)
        y = g.labels
        for kind, u, v in p.provenance["moves"]:
            same = y[u] == y[v]
            bad += (kind == "remove" and not same) or (kind == "add" and same)
        if p.provenance["exhausted"]:
            exhausted += 1
            try:
                attack_dice(g, g.labels, cfg, strict=True)
                bad += 1
            except ExhaustedMoves:
                pass
        else:
            bad += p.num_flips != budget
        bad += len(p.provenance["moves"]) != p.num_flips
    g = random_graph(0, n=8, p=0.35, classes=2)
    N = 4000
    counts = np.zeros(g.n)
    for seed in range(N):
        p = attack_dice(g, g.labels, DiceConfig(budget=Budget(1, 0), add_probability=1.0, seed=seed))
        counts[p.provenance["moves"][0][1]] += 1
    # first endpoints are drawn among nodes that have a legal inter-label non-neighbour
    y, A = g.labels, g.adjacency()
    legal = np.array([any(y[u] != y[v] and not A[u, v] for v in range(g.n)) for u in range(g.n)])
    w = np.zeros(g.n)
    w[legal] = inverse_degree_weights(g.degrees()[legal])
    nz = w > 0
    z = np.abs(counts[nz] - N * w[nz]) / np.sqrt(N * w[nz] * (1 - w[nz]))
    bad += int(counts[~nz].sum())
    ok = bad == 0 and float(z.max()) <= 3.0
    assert report(8, ok, f"dice semantics: {bad} violations over 100 graphs ({exhausted} exhausted); "
                         f"endpoint frequency max |z| {z.max():.2f} (<= 3) over {N} draws")


# 9 ------------------------------------------------------------------------

def test_auto_pipeline():
    recalls, precisions, gains, invs, details = [], [], [], [], []
    for seed in SEEDS:
        g = planted_partition(n=200, seed=seed)
        s = make_split(g, "inductive", seed)
        predictor = train_auto_predictor(g, s, TrainConfig(seed=seed))
        victim = gcn_train(g, s, TrainConfig(seed=seed))
        pert = attack_text_classswap(g, s, "evasion", 0.1, seed=seed)
        attacked = apply_perturbation(g, pert)
        truth = set(pert.text_replacements)
        res = auto_infer(predictor, attacked, s.test)
        flagged = res.report.text_flagged
        hit = len(flagged & truth)
        recall = hit / len(truth)
        precision = hit / len(flagged) if flagged else 0.0
        auto_acc = accuracy(res.predictions, g.labels, s.test)
        plain = accuracy(predict(victim, attacked), g.labels, s.test)
        recalls.append(recall)
        precisions.append(precision)
        gains.append(auto_acc - plain)
        invs.append(res.invocations_per_node)
        details.append(f"seed {seed}: recall {recall:.2f} precision {precision:.2f} "
                       f"auto {auto_acc:.3f} vs gcn {plain:.3f}")
    r, p, gain, inv = (statistics.fmean(x) for x in (recalls, precisions, gains, invs))
    ok = r >= RECALL_MIN and p >= PRECISION_MIN and gain >= AUTO_GAIN and max(invs) <= INVOCATIONS_MAX
    assert report(9, ok, f"auto pipeline: recall {r:.2f} (>= {RECALL_MIN}), precision {p:.2f} (>= {PRECISION_MIN}), "
                         f"gain {100 * gain:.1f} pts (>= {100 * AUTO_GAIN:.0f}), invocations {max(invs):.2f} (<= 2); "
                         + "; ".join(details))


# 10 -----------------------------------------------------------------------

def _corpus():
    for seed in range(40):
        rng = np.random.default_rng(1000 + seed)
        g = random_graph(seed, p=float(rng.uniform(0.2, 0.8)), n_range=(5, 14))
        s = make_split(g, "inductive", seed)
        model = init_model(3, 6, 2, seed=seed)
        b = Budget(int(rng.integers(1, 8)), 0)
        yield "pgd", g, attack_pgd(g, model, s.test, PgdConfig(budget=b, opt_epochs=30, seed=seed))
        try:
            yield "pgd-guard", g, attack_pgd_guard(g, model, s.test, PgdConfig(budget=b, opt_epochs=30, seed=seed), 0.0)
        except Exception:
            pass
        yield "grbcd", g, attack_grbcd(g, model, s.test, GrbcdConfig(budget=b, seed=seed))
        yield "dice", g, attack_dice(g, g.labels, DiceConfig(budget=b, seed=seed))
        rate = float(rng.uniform(0.1, 0.9))
        scen = "evasion" if seed % 2 else "poisoning"
        yield "text", g, attack_text_classswap(g, s, scen, rate, seed=seed)


def test_budget_law():
    total, bad = 0, 0
    for _, g, p in _corpus():
        total += 1
        A = g.adjacency()
        diff = int(np.sum(apply_perturbation(g, p).adjacency() != A))
        bad += diff != 2 * p.num_flips or p.num_flips > p.budget.delta_struct
        bad += len(p.text_replacements) > p.budget.delta_text
    assert report(10, bad == 0, f"budget law: {bad} violations over {total} attack outputs")


# 11 -----------------------------------------------------------------------

def test_metric_identities():
    same = S([0.1, 0.4, 0.4, 0.9], [0.1, 0.4, 0.4, 0.9])
    disjoint = S([0.8, 0.9], [0.1, 0.2])
    exact = (non_overlap(same) == 0.0 and non_overlap(disjoint) == 1.0 and cohen_d(same) == 0.0
             and auc(disjoint) == 1.0)
    mism = 0
    for a, b in fuzz_samples(500, seed=31):
        s, la, lb = S(a, b), a.tolist(), b.tolist()
        mism += auc(s) != float(auc_oracle(la, lb))
        mism += discriminability(s) != float(discr_oracle(la, lb))
        mism += histogram_overlap(s) != float(overlap_oracle(la, lb))
        mism += abs(threshold_gap(s) - (percentile_oracle(la, 20) - percentile_oracle(lb, 80))) > 1e-12
        pooled = (statistics.pvariance(la) + statistics.pvariance(lb)) / 2
        if pooled > 0:
            ref = (statistics.fmean(la) - statistics.fmean(lb)) / math.sqrt(pooled)
            mism += abs(cohen_d(s) - ref) > 1e-12 * max(1.0, abs(ref))
    assert report(11, exact and mism == 0, f"metric identities exact={exact}; {mism} oracle mismatches on 500 samples")


if __name__ == "__main__":
    fns = [v for k, v in sorted(globals().items()) if k.startswith("test_")]
    for fn in sorted(fns, key=lambda f: f.__code__.co_firstlineno):
        try:
            fn()
        except AssertionError:
            pass
    print(f"{sum(r.startswith('PASS') for r in RESULTS)}/{len(RESULTS)} criteria passed")
