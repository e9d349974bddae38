"""Command-line interface.

Subcommands cover the whole workflow: feature extraction over a directory
of CNF files, runtime collection for external solvers, dataset splitting,
portfolio training, solving a single instance, evaluation reports, and
synthetic benchmark generation. Randomized commands take --seed; the
ZF_WORKERS environment variable sets parallelism for feature extraction
and runtime collection.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import evaluation, execution, features as features_mod, portfolio as portfolio_mod
from .cnf import DimacsError, read_dimacs_file
from .probes import ProbeBudget
from .runners import ExternalRunner, SimulatedRunner
from .runtimes import SolverDescriptor, load_runtime_csv, save_runtime_csv
from .scoring import PurseConfig, load_purse_config, save_purse_config, singleton_series
from .synthetic import generate_benchmark


def _instance_seed(seed: int, instance_id: str) -> int:
    digest = hashlib.sha256(f"{seed}:{instance_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _extract_one(args):
    path, budget, seed = args
    try:
        formula = read_dimacs_file(path)
    except DimacsError as exc:
        return Path(path).stem, None, str(exc)
    fv = features_mod.extract_all(formula, budget, _instance_seed(seed, Path(path).stem))
    return Path(path).stem, fv, None


def cmd_features(args) -> int:
    paths = sorted(Path(args.cnf_dir).glob("*.cnf"))
    if not paths:
        print(f"no .cnf files under {args.cnf_dir}", file=sys.stderr)
        return 1
    budget = ProbeBudget(
        per_probe_seconds=args.per_probe_seconds,
        total_seconds=args.total_seconds,
        max_ls_steps=args.max_ls_steps,
        deterministic=args.deterministic,
    )
    jobs = [(str(p), budget, args.seed) for p in paths]
    workers = execution.worker_count()
    table = {}
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_extract_one, jobs))
    else:
        results = [_extract_one(j) for j in jobs]
    for iid, fv, err in results:
        if err is not None:
            print(f"skipping {iid}: {err}", file=sys.stderr)
            continue
        table[iid] = fv
    features_mod.save_feature_csv(args.output, table)
    print(f"wrote features for {len(table)} instances to {args.output}")
    return 0


def load_solvers_config(path) -> list[SolverDescriptor]:
    with open(path) as fh:
        doc = json.load(fh)
    return [
        SolverDescriptor(d["id"], d.get("kind", "complete"), d.get("command"))
        for d in doc
    ]


def cmd_collect(args) -> int:
    descriptors = load_solvers_config(args.solvers)
    paths = sorted(Path(args.cnf_dir).glob("*.cnf"))
    if not paths:
        print(f"no .cnf files under {args.cnf_dir}", file=sys.stderr)
        return 1
    matrix = execution.collect_runtimes(descriptors, [str(p) for p in paths], args.cutoff)
    save_runtime_csv(args.output, matrix)
    print(f"wrote {len(matrix)} runs to {args.output}")
    return 0


def _read_instance_ids(path) -> list[str]:
    text = Path(path).read_text().splitlines()
    if not text:
        return []
    first = text[0]
    if "," in first and first.split(",")[0] == "instance_id":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            return sorted({row[0] for row in reader})
    return [line.strip() for line in text if line.strip()]


def cmd_split(args) -> int:
    ids = _read_instance_ids(args.source)
    ratios = tuple(float(r) for r in args.ratios.split(","))
    train, valid, test = evaluation.split_data(ids, ratios, args.seed)
    doc = {
        "ratios": list(ratios), "seed": args.seed,
        "train": train, "validation": valid, "test": test,
    }
    with open(args.output, "w") as fh:
        json.dump(doc, fh, indent=1)
    print(f"split {len(ids)} instances into {len(train)}/{len(valid)}/{len(test)}")
    return 0


def _load_labels_csv(path):
    sat, category = {}, {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            sat[row["instance_id"]] = row["satisfiable"]
            category[row["instance_id"]] = row["category"]
    return sat, category


def cmd_train(args) -> int:
    features = features_mod.load_feature_csv(args.features)
    matrix = load_runtime_csv(args.runtimes, args.cutoff)
    descriptors = load_solvers_config(args.solvers)

    kept, fraction = evaluation.drop_unsolvable(matrix)
    if fraction < 1.0:
        print(f"dropped {len(matrix.instances) - len(kept)} unsolvable instances "
              f"({100 * fraction:.1f}% retained)")
    matrix = matrix.restrict(instances=kept)

    if args.split:
        with open(args.split) as fh:
            doc = json.load(fh)
        train = [i for i in doc["train"] if i in set(kept)]
        valid = [i for i in doc["validation"] if i in set(kept)]
    else:
        ratios = tuple(float(r) for r in args.ratios.split(","))
        train, valid, _ = evaluation.split_data(kept, ratios, args.seed)

    purse, series = None, None
    if args.purse:
        purse, series = load_purse_config(args.purse)
        series = {i: series[i] for i in kept if i in series} or None

    category_labels = None
    if args.labels:
        _, category_labels = _load_labels_csv(args.labels)

    objective = {"runtime": portfolio_mod.OBJECTIVE_RUNTIME,
                 "score": portfolio_mod.OBJECTIVE_SCORE}[args.objective]
    settings = portfolio_mod.BuildSettings(
        objective=objective,
        hierarchy=args.hierarchy,
        cutoff_seconds=args.cutoff,
        cv_folds=args.cv_folds,
        max_raw_terms=args.max_raw_terms,
        max_expanded_terms=args.max_expanded_terms,
        presolver_top=args.presolver_top,
        min_training_rows=args.min_training_rows,
        seed=args.seed,
    )
    built = portfolio_mod.build_portfolio(
        train, valid, features, matrix.restrict(instances=[*train, *valid]),
        descriptors, settings, purse, series, category_labels,
    )
    portfolio_mod.save_portfolio(built, args.output)
    print(f"portfolio: presolvers [{built.presolvers.describe()}], "
          f"backup {built.backup_solver}, subset {built.subset}")
    print(f"wrote {args.output}")
    return 0


def cmd_solve(args) -> int:
    built = portfolio_mod.load_portfolio(args.portfolio)
    needed = set(built.subset) | {built.backup_solver}
    needed |= {e.solver_id for e in built.presolvers.active()}
    missing = [sid for sid in needed if not built.descriptors[sid].command]
    if missing:
        print(f"portfolio references solvers without commands: {missing}",
              file=sys.stderr)
        return 1
    runner = ExternalRunner(built.descriptors)
    outcome = portfolio_mod.solve(built, args.instance, runner)
    for step in outcome.trace:
        print(f"c {step}")
    print(f"c chosen: {outcome.chosen_solver}  "
          f"time: {outcome.total_time_seconds:.3f}s")
    if outcome.status == "sat":
        print("s SATISFIABLE")
        return 10
    if outcome.status == "unsat":
        print("s UNSATISFIABLE")
        return 20
    print("s UNKNOWN")
    return 0


def cmd_evaluate(args) -> int:
    matrix = load_runtime_csv(args.runtimes, args.cutoff)
    if args.purse:
        purse, series = load_purse_config(args.purse)
        missing = [i for i in matrix.instances if i not in series]
        for i in missing:
            series[i] = f"series-{i}"
    else:
        purse = PurseConfig(time_limit=args.cutoff)
        series = singleton_series(matrix.instances)

    if args.portfolio:
        built = portfolio_mod.load_portfolio(args.portfolio)
        features = features_mod.load_feature_csv(args.features)
        sim = portfolio_mod.PortfolioSimulator(
            matrix, features, matrix.instances, built.presolvers,
            built.backup_solver, built.models, built.objective,
            built.cutoff_seconds, purse, series,
        )
        extended = matrix.restrict()
        for rec in sim.records(built.subset, solver_id="portfolio").values():
            extended.add(rec)
        matrix = extended

    report = evaluation.evaluate(matrix, purse, series)
    text = report.to_csv()
    if args.output:
        Path(args.output).write_text(text)
        print(f"wrote {args.output}")
    else:
        print(text, end="")
    return 0


def cmd_synth_bench(args) -> int:
    bench = generate_benchmark(
        num_instances=args.instances, clusters=args.clusters, seed=args.seed,
        unsat_fraction=args.unsat_fraction, cutoff_seconds=args.cutoff,
    )
    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    features_mod.save_feature_csv(outdir / "features.csv", bench.features)
    save_runtime_csv(outdir / "runtimes.csv", bench.matrix)
    with open(outdir / "solvers.json", "w") as fh:
        json.dump(
            [{"id": d.id, "kind": d.kind, "command": d.command}
             for d in bench.descriptors],
            fh, indent=1,
        )
    save_purse_config(outdir / "purse.json", bench.purse, bench.series)
    with open(outdir / "labels.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instance_id", "satisfiable", "category"])
        for inst in bench.instances:
            writer.writerow([inst.id, "sat" if inst.satisfiable else "unsat",
                             inst.category])
    print(f"wrote synthetic benchmark ({args.instances} instances, "
          f"{len(bench.descriptors)} solvers) to {outdir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zfolio",
        description="Per-instance SAT solver portfolios from learned models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("features", help="extract instance features from CNF files")
    p.add_argument("cnf_dir")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--per-probe-seconds", type=float, default=1.0)
    p.add_argument("--total-seconds", type=float, default=60.0)
    p.add_argument("--max-ls-steps", type=int, default=300_000)
    p.add_argument("--deterministic", action="store_true",
                   help="gate probes by step counts only (reproducible)")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("collect", help="run external solvers over CNF files")
    p.add_argument("solvers", help="JSON solver config")
    p.add_argument("cnf_dir")
    p.add_argument("--cutoff", type=float, default=1200.0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("split", help="split instances into train/validation/test")
    p.add_argument("source", help="features.csv, runtimes.csv or an id list")
    p.add_argument("--ratios", default="0.4,0.3,0.3")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="build a portfolio")
    p.add_argument("--features", required=True)
    p.add_argument("--runtimes", required=True)
    p.add_argument("--solvers", required=True)
    p.add_argument("--objective", choices=["runtime", "score"], default="runtime")
    p.add_argument("--hierarchy", choices=["none", "sat2", "general6"], default="none")
    p.add_argument("--split", help="split JSON from the split command")
    p.add_argument("--ratios", default="0.4,0.3,0.3")
    p.add_argument("--purse", help="purse/series JSON (needed for score)")
    p.add_argument("--labels", help="labels CSV (categories for general6)")
    p.add_argument("--cutoff", type=float, default=1200.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cv-folds", type=int, default=10)
    p.add_argument("--max-raw-terms", type=int, default=30)
    p.add_argument("--max-expanded-terms", type=int, default=40)
    p.add_argument("--presolver-top", type=int, default=3)
    p.add_argument("--min-training-rows", type=int, default=10)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("solve", help="solve one CNF instance with a portfolio")
    p.add_argument("portfolio")
    p.add_argument("instance")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("evaluate", help="evaluation report over recorded runs")
    p.add_argument("--runtimes", required=True)
    p.add_argument("--purse")
    p.add_argument("--portfolio", help="include a trained portfolio as a virtual solver")
    p.add_argument("--features", help="features CSV (needed with --portfolio)")
    p.add_argument("--cutoff", type=float, default=1200.0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth-bench", help="generate a synthetic benchmark")
    p.add_argument("--clusters", type=int, default=3)
    p.add_argument("--instances", type=int, default=600)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--unsat-fraction", type=float, default=0.3)
    p.add_argument("--cutoff", type=float, default=1200.0)
    p.add_argument("-o", "--output-dir", required=True)
    p.set_defaults(func=cmd_synth_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
