"""Command-line entry points.

Subcommands: ``run`` executes a full experiment from a JSON config,
``select`` runs only the selection pipeline, ``query`` only the query
workload, ``synth`` writes a synthetic dataset CSV, and ``sensitivity``
reports the correlated and group sensitivity of one query. Failures exit
nonzero with a stage-tagged message.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .dataset import load_csv
from .correlation import build_matrix, correlated_sensitivity, group_sensitivity
from .harness import (
    ExperimentConfig,
    PipelineError,
    aggregate_mae,
    prepare_data,
    query_rows,
    run_pipeline,
    run_selection,
    write_csv,
)
from .publishing import AggQuery
from .synthetic import make_synthetic


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seeds"] = (args.seed,)
    if args.epsilon is not None:
        overrides["epsilons"] = (args.epsilon,)
    if args.out_dir is not None:
        overrides["out_dir"] = args.out_dir
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    return cfg


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    paths = run_pipeline(cfg)
    for name, path in sorted(paths.items()):
        print(f"{name}: {path}")
    return 0


def _cmd_select(args) -> int:
    cfg = _load_config(args)
    data = prepare_data(cfg)
    traces = []
    for seed in cfg.seeds:
        for epsilon in cfg.epsilons:
            sel = run_selection(cfg, data, epsilon, seed, private=True)
            trace = sel.sets.trace_dict()
            trace.update({"epsilon": epsilon, "seed": seed})
            traces.append(trace)
    print(json.dumps(traces, indent=2, sort_keys=True))
    return 0


def _cmd_query(args) -> int:
    cfg = _load_config(args)
    data = prepare_data(cfg)
    rows = []
    for seed in cfg.seeds:
        plain = run_selection(cfg, data, epsilon=1.0, seed=seed, private=False)
        for epsilon in cfg.epsilons:
            private = run_selection(cfg, data, epsilon, seed, private=True)
            rows.extend(query_rows(cfg, data, epsilon, seed, private, plain))
    if args.scheme is not None:
        rows = [r for r in rows if r["scheme"] == args.scheme]
    out = args.out_dir or "."
    import os

    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "queries.csv")
    write_csv(
        path, rows,
        ["query_id", "kind", "scheme", "epsilon", "seed", "true", "released",
         "abs_error", "sensitivity"],
    )
    for kind in ("count", "mean"):
        for row in aggregate_mae(rows, kind):
            print(
                f"{kind} scheme={row['scheme']} epsilon={row['epsilon']} "
                f"seed={row['seed']} mae={row['mae']:.6g}"
            )
    print(f"queries: {path}")
    return 0


def _cmd_synth(args) -> int:
    ds = make_synthetic(
        n_clusters=args.clusters,
        correlation=args.correlation,
        n_records=args.records,
        n_features=args.features,
        seed=args.seed if args.seed is not None else 0,
        independent_features=args.independent,
    )
    path = args.out
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(ds.feature_names + ("label",)) + "\n")
        for row, lab in zip(ds.values, ds.label):
            fh.write(",".join(f"{v:.17g}" for v in row) + f",{int(lab)}\n")
    print(f"wrote {ds.n_records}x{ds.n_features} dataset to {path}")
    return 0


def _cmd_sensitivity(args) -> int:
    ds = load_csv(args.data, args.label_column)
    query = AggQuery(
        kind=args.kind,
        feature=args.feature,
        op=args.op,
        value=args.value,
    )
    corr = build_matrix(ds, args.theta0)
    dcs = correlated_sensitivity(corr, query, ds)
    dgs = group_sensitivity(corr, query, ds)
    print(f"correlated_sensitivity: {dcs:.17g}")
    print(f"group_sensitivity: {dgs:.17g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="corrdp")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="run a single seed")
        p.add_argument("--epsilon", type=float, default=None, help="run a single epsilon")
        p.add_argument("--out-dir", default=None)
        p.add_argument("--scheme", default=None, choices=["nonprivate", "group", "zhu", "crfs"])

    p_run = sub.add_parser("run", help="full experiment sweep")
    common(p_run)
    p_run.set_defaults(fn=_cmd_run)

    p_sel = sub.add_parser("select", help="selection pipeline only")
    common(p_sel)
    p_sel.set_defaults(fn=_cmd_select)

    p_query = sub.add_parser("query", help="query workload only")
    common(p_query)
    p_query.set_defaults(fn=_cmd_query)

    p_synth = sub.add_parser("synth", help="write a synthetic dataset CSV")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--records", type=int, required=True)
    p_synth.add_argument("--features", type=int, required=True)
    p_synth.add_argument("--clusters", type=int, required=True)
    p_synth.add_argument("--correlation", type=float, required=True)
    p_synth.add_argument("--independent", type=int, default=0)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.set_defaults(fn=_cmd_synth)

    p_sens = sub.add_parser("sensitivity", help="report sensitivities for one query")
    p_sens.add_argument("--data", required=True, help="dataset CSV")
    p_sens.add_argument("--label-column", required=True)
    p_sens.add_argument("--kind", required=True, choices=["count", "mean"])
    p_sens.add_argument("--feature", required=True)
    p_sens.add_argument("--op", default=None, choices=["<", "<=", "=", ">=", ">"])
    p_sens.add_argument("--value", type=float, default=None)
    p_sens.add_argument("--theta0", type=float, default=0.9)
    p_sens.set_defaults(fn=_cmd_sensitivity)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except PipelineError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"[{args.command}] {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
