"""Command-line entry point.

stdout carries data, stderr carries diagnostics; exit codes: 0 success,
1 domain error, 2 usage error.  Every subcommand is reproducible given
--seed (no timestamps or other ambient state in any output).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import dataset as ds
from . import forest as rf
from . import search as es
from .errors import TraincostError
from .features import (INFERENCE_ONLY, TRAINING, extract_features,
                       feature_names, write_feature_csv)
from .ir import (BUNDLED_NETWORKS, bundled_network, load_network,
                 network_to_dict, serialize_network)
from .predictor import AttributeModelSet, evaluate, predict_attributes, train_models
from .pruning import PruneConfig, STRATEGY_NAMES, build_strategy, prune_network

log = logging.getLogger("traincost")

_ATTR_ALIASES = {
    "gamma": "gamma", "Γ": "gamma",
    "phi": "phi", "Φ": "phi",
    "small-gamma": "small_gamma", "small_gamma": "small_gamma", "γ": "small_gamma",
    "small-phi": "small_phi", "small_phi": "small_phi", "φ": "small_phi",
}


def _attr(name: str) -> str:
    try:
        return _ATTR_ALIASES[name]
    except KeyError:
        raise argparse.ArgumentTypeError(
            f"unknown attribute {name!r}; use gamma, phi, small-gamma or small-phi") from None


def _resolve_network(arg: str):
    if arg in BUNDLED_NETWORKS and not os.path.exists(arg):
        return bundled_network(arg)
    return load_network(arg)


def _load_networks(args_list) -> dict:
    nets = {}
    for arg in args_list:
        net = _resolve_network(arg)
        nets[net.name] = net
    return nets


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x != ""]


def _emit(payload: dict, fmt: str, text_renderer):
    if fmt == "json":
        print(json.dumps(payload, sort_keys=True))
    else:
        text_renderer(payload)


def _load_model_set(paths) -> AttributeModelSet:
    models = {}
    for path in paths:
        model = rf.load(path)
        if model.target_name in models:
            raise TraincostError(f"duplicate model for attribute '{model.target_name}'")
        models[model.target_name] = model
    return AttributeModelSet(models=models)


# -- subcommand implementations ---------------------------------------------


def _cmd_features(args) -> int:
    net = _resolve_network(args.network)
    mode = INFERENCE_ONLY if args.mode == "inference" else TRAINING
    strategy_name = args.strategy
    rows = []
    for bs in args.bs:
        variant = net
        if args.level:
            cfg = PruneConfig(level=args.level, strategy=build_strategy(strategy_name, net),
                              seed=args.seed)
            variant = prune_network(net, cfg)
        fv = extract_features(variant, bs, mode, args.split_winograd)
        rows.append(((net.name, args.level, strategy_name, args.seed), fv))
    if args.output:
        write_feature_csv(args.output, rows, mode, args.split_winograd)
        log.info("wrote %d feature rows to %s", len(rows), args.output)
        return 0
    payload = {"mode": mode, "rows": [
        {"network": meta[0], "pruning_level": meta[1], "strategy": meta[2],
         "seed": meta[3], "bs": fv.bs,
         "features": {k: float(v) for k, v in fv.as_dict().items()}}
        for meta, fv in rows]}

    def render(p):
        names = feature_names(mode, args.split_winograd)
        print(",".join(("network", "pruning_level", "strategy", "seed", "bs") + names))
        for row in p["rows"]:
            feats = [repr(row["features"][n]) for n in names]
            print(",".join([row["network"], str(row["pruning_level"]), row["strategy"],
                            str(row["seed"]), str(row["bs"])] + feats))

    _emit(payload, args.format, render)
    return 0


def _parse_levels(train_arg, test_arg) -> list[int]:
    levels: list[int] = []
    if train_arg:
        levels += ds.train_levels() if train_arg == "default" else _int_list(train_arg)
    if test_arg:
        levels += ds.test_levels() if test_arg == "default" else _int_list(test_arg)
    if not levels:
        raise TraincostError("no pruning levels given; pass --train-levels and/or --test-levels")
    return levels


def _cmd_plan(args) -> int:
    nets = _load_networks(args.networks)
    levels = _parse_levels(args.train_levels, args.test_levels)
    batch_sizes = (ds.default_batch_sizes() if args.batch_sizes == "default"
                   else _int_list(args.batch_sizes))
    plan = ds.generate_plan(sorted(nets), levels, tuple(args.strategies),
                            tuple(args.seeds), batch_sizes)
    if args.materialize:
        os.makedirs(args.materialize, exist_ok=True)
        seen = set()
        for e in plan.entries:
            key = (e.network, e.pruning_level, e.strategy, e.seed)
            if key in seen:
                continue
            seen.add(key)
            base = nets[e.network]
            cfg = PruneConfig(level=e.pruning_level,
                              strategy=build_strategy(e.strategy, base), seed=e.seed)
            out = os.path.join(args.materialize, variant_filename(*key))
            with open(out, "w", encoding="utf-8") as fh:
                fh.write(serialize_network(prune_network(base, cfg)))
        log.info("materialized %d network variants in %s", len(seen), args.materialize)
    if args.output:
        ds.write_plan_csv(plan, args.output)
        log.info("wrote plan with %d entries to %s", len(plan.entries), args.output)
        return 0
    payload = {"entries": [
        {"network": e.network, "pruning_level": e.pruning_level, "strategy": e.strategy,
         "seed": e.seed, "bs": e.bs} for e in plan.entries]}

    def render(p):
        print(",".join(ds.PLAN_HEADER))
        for e in p["entries"]:
            print(f"{e['network']},{e['pruning_level']},{e['strategy']},{e['seed']},{e['bs']}")

    _emit(payload, args.format, render)
    return 0


def variant_filename(network: str, level: int, strategy: str, seed: int) -> str:
    return f"{network}__L{level}__{strategy}__s{seed}.json"


def _cmd_prune(args) -> int:
    net = _resolve_network(args.network)
    cfg = PruneConfig(level=args.level, strategy=build_strategy(args.strategy, net),
                      seed=args.seed)
    pruned = prune_network(net, cfg)
    text = serialize_network(pruned)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
        return 0
    if args.format == "json":
        print(json.dumps(network_to_dict(pruned), sort_keys=True))
    else:
        sys.stdout.write(text)
    return 0


def _forest_config(args) -> rf.ForestConfig:
    fps = args.features_per_split
    if fps not in ("all", "sqrt"):
        fps = float(fps)
    return rf.ForestConfig(n_trees=args.trees, max_depth=args.max_depth,
                           min_samples_leaf=args.min_samples_leaf,
                           features_per_split=fps, bootstrap=not args.no_bootstrap,
                           seed=args.seed)


def _cmd_train(args) -> int:
    records = ds.load_dataset(args.dataset)
    networks = _load_networks(args.networks)
    models = train_models(records, networks, [args.attr], _forest_config(args))
    model = models.models[args.attr]
    rf.save(model, args.output)
    log.info("trained %s model on %d records -> %s", args.attr, len(records), args.output)
    payload = {"attribute": args.attr, "records": len(records),
               "target_range": list(model.target_range), "model": args.output}
    _emit(payload, args.format,
          lambda p: print(f"trained {p['attribute']} on {p['records']} records "
                          f"-> {p['model']}"))
    return 0


def _cmd_predict(args) -> int:
    models = _load_model_set(args.models)
    net = _resolve_network(args.network)
    values = predict_attributes(models, net, args.bs)
    payload = {"network": net.name, "bs": args.bs,
               "predictions": {k: values[k] for k in sorted(values)}}

    def render(p):
        for attr in sorted(p["predictions"]):
            unit = "MB" if "gamma" in attr else "ms"
            print(f"{attr}: {p['predictions'][attr]:.3f} {unit}")

    _emit(payload, args.format, render)
    return 0


def _cmd_evaluate(args) -> int:
    models = _load_model_set(args.models)
    records = ds.load_dataset(args.dataset)
    networks = _load_networks(args.networks)
    report = evaluate(models, records, networks)
    if args.report_csv:
        report.write_csv(args.report_csv)
    if args.summary_json:
        report.write_summary_json(args.summary_json)
    payload = report.summary()

    def render(p):
        for attr in sorted(p):
            print(f"{attr}: mean APE {100 * p[attr]['mean_ape']:.2f}% "
                  f"over {p[attr]['targets']['count']} records")

    _emit(payload, args.format, render)
    return 0


def _cmd_search(args) -> int:
    with open(args.space, "r", encoding="utf-8") as fh:
        space = es.parse_space(fh.read())
    models = _load_model_set(args.models)
    constraints = es.Constraints(max_gamma_mb=args.max_gamma, gamma_bs=args.gamma_bs,
                                 max_small_gamma_mb=args.max_small_gamma,
                                 max_small_phi_ms=args.max_small_phi)
    config = es.EsConfig(population=args.population, iterations=args.iterations,
                         mutation_rate=args.mutation_rate,
                         parent_fraction=args.parent_fraction, seed=args.seed,
                         rejection_budget=args.rejection_budget)
    result = es.evolve(space, constraints, models, es.parameter_count_fitness, config)
    if args.log:
        es.write_search_log(result.log, args.log)
    if args.best_network:
        with open(args.best_network, "w", encoding="utf-8") as fh:
            fh.write(serialize_network(result.best_network))
    # training attributes are reported at the constraint batch size,
    # inference attributes at batch size 1
    values = {}
    for attr, model in models.models.items():
        bs = args.gamma_bs if attr in ("gamma", "phi") else 1
        fv = extract_features(result.best_network, bs, ds.ATTR_MODE[attr])
        values[attr] = rf.predict(model, fv.as_floats())
    payload = {"best_encoding": list(result.best.encoding),
               "best_fitness": result.best_fitness,
               "evaluations": result.evaluations,
               "predictions": {k: values[k] for k in sorted(values)}}

    def render(p):
        print(f"best encoding: {p['best_encoding']}")
        print(f"fitness (weight-parameter proxy): {p['best_fitness']:.0f}")
        print(f"candidates evaluated: {p['evaluations']}")
        for attr in sorted(p["predictions"]):
            print(f"  predicted {attr}: {p['predictions'][attr]:.3f}")

    _emit(payload, args.format, render)
    return 0


def _cmd_synth(args) -> int:
    networks = _load_networks(args.networks)
    levels = _parse_levels(args.train_levels, args.test_levels)
    batch_sizes = (ds.default_batch_sizes() if args.batch_sizes == "default"
                   else _int_list(args.batch_sizes))
    records = ds.synthetic_dataset(networks, levels, tuple(args.strategies),
                                   tuple(args.seeds), batch_sizes, noise=args.noise,
                                   rng_seed=args.seed,
                                   include_inference=not args.no_inference)
    ds.save_dataset(records, args.output)
    print("NOTE: fabricated measurements for pipeline testing, not from any real device",
          file=sys.stderr)
    payload = {"rows": len(records), "noise": args.noise, "output": args.output,
               "synthetic": True}
    _emit(payload, args.format,
          lambda p: print(f"synthetic-device dataset ({p['rows']} rows) -> {p['output']}"))
    return 0


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for anything randomized")
    common.add_argument("--verbose", action="store_true", help="log progress to stderr")
    common.add_argument("--format", choices=("text", "json"), default="text",
                        help="stdout format for data-emitting commands")

    parser = argparse.ArgumentParser(
        prog="traincost",
        description="Predict CNN training memory and latency from analytical "
                    "layer features and profiled data.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("features", parents=[common],
                       help="extract the analytical feature vector of a network")
    p.add_argument("network", help="network JSON path or bundled name")
    p.add_argument("--bs", type=int, nargs="+", required=True)
    p.add_argument("--mode", choices=("training", "inference"), default="training")
    p.add_argument("--split-winograd", action="store_true",
                   help="separate columns per winograd tile configuration")
    p.add_argument("--level", type=int, default=0)
    p.add_argument("--strategy", choices=STRATEGY_NAMES, default="uniform")
    p.add_argument("-o", "--output", help="write CSV here instead of stdout")
    p.set_defaults(func=_cmd_features)

    p = sub.add_parser("plan", parents=[common], help="generate a profiling plan")
    p.add_argument("--networks", nargs="+", required=True)
    p.add_argument("--train-levels", default=None,
                   help="'default' for the training preset, or comma-separated percents")
    p.add_argument("--test-levels", default=None,
                   help="'default' for the held-out preset, or comma-separated percents")
    p.add_argument("--batch-sizes", default="default")
    p.add_argument("--strategies", nargs="+", default=["uniform"], choices=STRATEGY_NAMES)
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--materialize", metavar="DIR",
                   help="also write every pruned network variant into DIR")
    p.add_argument("-o", "--output", help="write plan CSV here instead of stdout")
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("prune", parents=[common], help="structurally prune a network")
    p.add_argument("network")
    p.add_argument("--level", type=int, required=True)
    p.add_argument("--strategy", choices=STRATEGY_NAMES, default="uniform")
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_prune)

    p = sub.add_parser("train", parents=[common], help="fit a forest for one attribute")
    p.add_argument("--dataset", required=True)
    p.add_argument("--networks", nargs="+", required=True)
    p.add_argument("--attr", type=_attr, required=True)
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--min-samples-leaf", type=int, default=1)
    p.add_argument("--features-per-split", default="all")
    p.add_argument("--no-bootstrap", action="store_true")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", parents=[common],
                       help="predict attributes for a (network, batch size)")
    p.add_argument("network")
    p.add_argument("--model", dest="models", action="append", required=True)
    p.add_argument("--bs", type=int, required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("evaluate", parents=[common],
                       help="score models against a measurement CSV")
    p.add_argument("--model", dest="models", action="append", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--networks", nargs="+", required=True)
    p.add_argument("--report-csv")
    p.add_argument("--summary-json")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("search", parents=[common],
                       help="constrained evolutionary sub-network search")
    p.add_argument("--space", required=True, help="search-space JSON document")
    p.add_argument("--model", dest="models", action="append", required=True)
    p.add_argument("--max-gamma", type=float, default=None,
                   help="training-memory bound in MB")
    p.add_argument("--gamma-bs", type=int, default=32,
                   help="batch size at which the training-memory bound applies")
    p.add_argument("--max-small-gamma", type=float, default=None,
                   help="inference-memory bound in MB (checked at bs=1)")
    p.add_argument("--max-small-phi", type=float, default=None,
                   help="inference-latency bound in ms (checked at bs=1)")
    p.add_argument("--population", type=int, default=100)
    p.add_argument("--iterations", type=int, default=500)
    p.add_argument("--mutation-rate", type=float, default=0.1)
    p.add_argument("--parent-fraction", type=float, default=0.25)
    p.add_argument("--rejection-budget", type=int, default=10_000)
    p.add_argument("--log", help="write a JSON-lines per-iteration search log here")
    p.add_argument("--best-network", help="write the decoded best candidate here")
    p.set_defaults(func=_cmd_search)

    p = sub.add_parser("synth", parents=[common],
                       help="emit the labeled synthetic-device dataset (testing only)")
    p.add_argument("--networks", nargs="+", required=True)
    p.add_argument("--train-levels", default="default")
    p.add_argument("--test-levels", default=None)
    p.add_argument("--batch-sizes", default="default")
    p.add_argument("--strategies", nargs="+", default=["uniform"], choices=STRATEGY_NAMES)
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--noise", type=float, default=0.01)
    p.add_argument("--no-inference", action="store_true",
                   help="omit the inference-stage columns")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_synth)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr,
                        level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except TraincostError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
