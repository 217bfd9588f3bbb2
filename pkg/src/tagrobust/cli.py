"""Command-line entry point: ``tagrobust <subcommand> ...``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import analysis, harness
from .attacks import PerturbationSet, RewriterClient, apply_perturbation
from .attacks.text import attack_text_classswap
from .defenses import (DualThresholds, SimilarityFilterConfig, auto_infer, guardual_filter,
                       guardual_thresholds, similarity_filter, train_auto_predictor)
from .errors import TagRobustError
from .gcn import accuracy, gcn_train, load_model, predict, save_model
from .graph import BowVocabulary, Split, bow_featurize, load_dataset, make_split, save_dataset
from .synthetic import planted_partition

log = logging.getLogger("tagrobust")


def _emit(doc, out=None):
    text = json.dumps(doc, indent=2, sort_keys=True)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n")
    print(text)


def _load_split(args, graph):
    if args.split:
        return Split.from_json(json.loads(Path(args.split).read_text()))
    return make_split(graph, args.mode, args.seed)


def _train_cfg(args):
    return harness._train_config({}, seed=args.seed, hidden=args.hidden, max_epochs=args.epochs,
                                 arch=getattr(args, "arch", "gcn"))


def _require_out(args):
    if not args.out:
        raise SystemExit(f"{args.command}: --out is required")
    return args.out


# --------------------------------------------------------------------------
# subcommands

def cmd_synth(args):
    g = planted_partition(n=args.n, n_classes=args.classes, p_in=args.p_in, p_out=args.p_out,
                          n_features=args.features, offset=args.offset, sigma=args.sigma,
                          seed=args.seed, with_texts=args.texts, name=Path(_require_out(args)).name)
    save_dataset(g, args.out)
    _emit({"nodes": g.n, "edges": g.num_edges, "classes": g.class_count, "path": args.out})


def cmd_split(args):
    g = load_dataset(args.dataset)
    s = make_split(g, args.mode, args.seed)
    doc = s.to_json()
    if args.out:
        Path(args.out).write_text(json.dumps(doc) + "\n")
    print(json.dumps({"mode": s.mode.value, "train": len(s.train), "val": len(s.val),
                      "test": len(s.test)}))


def cmd_featurize(args):
    g = load_dataset(args.dataset)
    if g.texts is None:
        raise SystemExit("dataset has no texts")
    g = g.replace(features=bow_featurize(g.texts, args.max_vocab))
    save_dataset(g, _require_out(args))
    _emit({"nodes": g.n, "feature_dim": g.feature_dim, "path": args.out})


def cmd_train(args):
    g = load_dataset(args.dataset)
    s = _load_split(args, g)
    cfg = _train_cfg(args)
    model = train_auto_predictor(g, s, cfg) if args.auto else gcn_train(g, s, cfg)
    save_model(model, _require_out(args))
    C = g.class_count
    val = accuracy(predict(model, g, n_classes=C), g.labels, s.val)
    _emit({"model": args.out, "arch": model.arch, "outputs": model.out_dim, "val_accuracy": val})


def _rewriter(graph):
    if graph.texts is None:
        return None
    vocab = BowVocabulary.fit(graph.texts, graph.feature_dim)
    if len(vocab.tokens) != graph.feature_dim:
        log.warning("features are not bag-of-words; rewriter disabled")
        return None
    return RewriterClient.from_env(lambda t: vocab.transform([t])[0])


def cmd_attack(args):
    g = load_dataset(args.dataset)
    s = _load_split(args, g)
    harness.check_pairing(args.scenario, s.mode)
    if args.attack == "text-classswap":
        pset = attack_text_classswap(g, s, args.scenario, args.ptb_rate, args.seed, _rewriter(g))
    else:
        surrogate = load_model(args.model) if args.model else gcn_train(g, s, _train_cfg(args))
        params = json.loads(args.params) if args.params else {}
        pset = harness.run_attack(g, s, surrogate, args.attack, args.ptb_rate, args.scenario,
                                  args.seed, params)
    pset.save(_require_out(args))
    if args.apply_to:
        save_dataset(apply_perturbation(g, pset), args.apply_to)
    print(json.dumps({"attack": args.attack, "edge_flips": pset.num_flips,
                      "text_replacements": len(pset.text_replacements)}))


def cmd_defend(args):
    g = load_dataset(args.dataset)
    out = Path(_require_out(args))
    if args.defense == "guardual":
        if args.thresholds:
            th = DualThresholds.load(args.thresholds)
        else:
            s = _load_split(args, g)
            th = guardual_thresholds(g.features, g.edges, g.labels, s.train, dataset=g.name)
        res = guardual_filter(g, th, args.phase)
        save_dataset(res.graph, out)
        th.save(out / "thresholds.json")
        extra = {"conservative": th.conservative, "balanced": th.balanced}
    else:
        metric = "cosine" if args.defense == "gnnguard" else "jaccard"
        tau = args.threshold if args.threshold is not None else (0.5 if metric == "cosine" else 0.05)
        res = similarity_filter(g, cfg=SimilarityFilterConfig(metric, tau))
        save_dataset(res.graph, out)
        extra = {"threshold": tau}
    _emit({"defense": args.defense, "removed": len(res.removed), "kept": res.graph.num_edges, **extra})


def cmd_eval(args):
    g = load_dataset(args.dataset)
    s = _load_split(args, g)
    if args.perturbation:
        g = apply_perturbation(g, PerturbationSet.load(args.perturbation, g))
    model = load_model(args.model)
    nodes = getattr(s, args.nodes)
    if model.out_dim == g.class_count + 1:
        res = auto_infer(model, g, nodes)
        pred = res.predictions
        extra = {"invocations_per_node": res.invocations_per_node,
                 "text_flagged": len(res.report.text_flagged),
                 "structure_flagged": len(res.report.structure_flagged)}
    else:
        pred, extra = predict(model, g), {}
    _emit({"nodes": args.nodes, "accuracy": accuracy(pred, g.labels, nodes), **extra}, args.out)


def cmd_analyze(args):
    g = load_dataset(args.dataset)
    sample = analysis.split_edge_similarities(g)
    report = analysis.analyze(sample, bins=args.bins)
    if args.out:
        analysis.write_report(report, args.out, sample if args.raw else None)
    print(json.dumps(report["metrics"], indent=2, sort_keys=True))


def cmd_rank(args):
    records = [r for p in args.results for r in harness.read_results_csv(p)]
    tables = harness.rank_records(records)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        harness.write_ranks_csv(tables, out / "ranks.csv")
    for kind, t in zip(("accuracy", "drop"), tables):
        print(kind, json.dumps(t.average, sort_keys=True))


def cmd_run(args):
    if not args.config:
        raise SystemExit("run: --config is required")
    cfg = harness.ExperimentConfig.load(args.config)
    if args.seed_given:
        cfg = dataclasses.replace(cfg, seeds=(args.seed,))
    files = harness.emit_report(harness.run_pipeline(cfg), None, args.out or cfg.output)
    for f in files:
        print(f)


# --------------------------------------------------------------------------
# parser

def _common() -> argparse.ArgumentParser:
    # SUPPRESS so a value given before the subcommand is not reset by the subparser
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=argparse.SUPPRESS,
                   help="JSON file; for 'run' the experiment config, otherwise option defaults")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    p.add_argument("--out", default=argparse.SUPPRESS, help="output file or directory")
    return p


def _data(p, split=True):
    p.add_argument("--dataset", required=True, help="dataset directory (nodes.tsv, edges.tsv)")
    if split:
        p.add_argument("--split", help="split JSON from 'split'; drawn from --mode/--seed otherwise")
        p.add_argument("--mode", choices=["transductive", "inductive"], default="inductive")


def _training(p):
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--epochs", type=int, default=500)


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="tagrobust", parents=[common],
                                     description="Robustness experiments on text-attributed graphs.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=fn)
        return p

    p = add("synth", cmd_synth, "write a planted-partition dataset")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--p-in", type=float, default=0.10)
    p.add_argument("--p-out", type=float, default=0.01)
    p.add_argument("--features", type=int, default=8)
    p.add_argument("--offset", type=float, default=2.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--texts", action="store_true", help="also write synthetic node texts")

    p = add("split", cmd_split, "draw a train/val/test split")
    _data(p, split=False)
    p.add_argument("--mode", choices=["transductive", "inductive"], default="inductive")

    p = add("featurize", cmd_featurize, "bag-of-words features from node texts")
    _data(p, split=False)
    p.add_argument("--max-vocab", type=int, default=1000)

    p = add("train", cmd_train, "train a GCN/APPNP model or the Auto predictor")
    _data(p)
    _training(p)
    p.add_argument("--arch", choices=["gcn", "appnp"], default="gcn")
    p.add_argument("--auto", action="store_true", help="train the (C+1)-class Auto predictor")

    p = add("attack", cmd_attack, "generate a perturbation set")
    _data(p)
    _training(p)
    p.add_argument("--attack", required=True,
                   choices=["pgd", "grbcd", "dice", "pgd-guard", "text-classswap"])
    p.add_argument("--ptb-rate", type=float, required=True)
    p.add_argument("--scenario", choices=["evasion", "poisoning"], default="evasion")
    p.add_argument("--model", help="surrogate checkpoint; trained on the fly when omitted")
    p.add_argument("--params", help="JSON object of extra attack options")
    p.add_argument("--apply-to", help="also write the perturbed dataset to this directory")

    p = add("defend", cmd_defend, "filter edges by feature similarity")
    _data(p)
    p.add_argument("--defense", choices=["gnnguard", "jaccard", "guardual"], required=True)
    p.add_argument("--threshold", type=float)
    p.add_argument("--thresholds", help="Guardual thresholds JSON to reuse")
    p.add_argument("--phase", choices=["train", "test"], default="test")

    p = add("eval", cmd_eval, "accuracy of a checkpoint, optionally under a perturbation")
    _data(p)
    p.add_argument("--model", required=True)
    p.add_argument("--perturbation")
    p.add_argument("--nodes", choices=["train", "val", "test"], default="test")

    p = add("analyze-embeddings", cmd_analyze, "intra/inter edge similarity metrics")
    _data(p, split=False)
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--raw", action="store_true", help="also export raw similarities")

    p = add("rank", cmd_rank, "average ranks from results.csv files")
    p.add_argument("results", nargs="+")

    add("run", cmd_run, "full pipeline from an experiment config")
    return parser


def _parse(parser, argv):
    args = parser.parse_args(argv)
    for name in ("config", "seed", "out"):
        if not hasattr(args, name):
            setattr(args, name, None)
    return args


def _apply_config_defaults(parser, argv):
    """Re-parse with ``--config`` keys as defaults for non-``run`` commands."""
    args = _parse(parser, argv)
    if args.config and args.command != "run":
        doc = json.loads(Path(args.config).read_text())
        sub = parser._subparsers._group_actions[0].choices[args.command]
        sub.set_defaults(**{k.replace("-", "_"): v for k, v in doc.items()})
        args = _parse(parser, argv)
    return args


def main(argv=None) -> int:
    parser = build_parser()
    args = _apply_config_defaults(parser, argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args.seed_given = args.seed is not None
    if args.seed is None:
        args.seed = 0
    try:
        args.func(args)
    except TagRobustError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
