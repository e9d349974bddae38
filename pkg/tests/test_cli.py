import json
import random
import stat

import numpy as np
import pytest

from zfolio.cli import main
from zfolio.cnf import write_dimacs
from zfolio.evaluation import drop_unsolvable, split_data
from zfolio.features import load_feature_csv
from zfolio.portfolio import BuildSettings, build_portfolio, save_portfolio
from zfolio.probes import ProbeBudget
from zfolio.runtimes import SolverDescriptor, load_runtime_csv
from zfolio.synthetic import generate_benchmark
from conftest import random_3cnf


@pytest.fixture
def cnf_dir(tmp_path):
    rng = random.Random(5)
    d = tmp_path / "cnfs"
    d.mkdir()
    for k in range(6):
        f = random_3cnf(8, 20, rng)
        (d / f"inst{k}.cnf").write_text(write_dimacs(f))
    return d


def script_solver(tmp_path, name, body):
    path = tmp_path / name
    path.write_text("#!/bin/sh\n" + body)
    path.chmod(path.stat().st_mode | stat.S_IEXEC)
    return path


def test_features_command(tmp_path, cnf_dir, monkeypatch):
    monkeypatch.setenv("ZF_WORKERS", "1")
    out = tmp_path / "features.csv"
    rc = main([
        "features", str(cnf_dir), "-o", str(out),
        "--deterministic", "--max-ls-steps", "400", "--seed", "7",
    ])
    assert rc == 0
    table = load_feature_csv(out)
    assert len(table) == 6
    for fv in table.values():
        assert fv.values is not None and len(fv.values) == 48


def test_collect_command(tmp_path, cnf_dir, monkeypatch):
    monkeypatch.setenv("ZF_WORKERS", "2")
    a = script_solver(tmp_path, "sat-solver", 'echo "s SATISFIABLE"\nexit 10\n')
    b = script_solver(tmp_path, "other", "exit 10\n")
    cfg = tmp_path / "solvers.json"
    cfg.write_text(json.dumps([
        {"id": "alpha", "kind": "complete", "command": f"{a} {{instance}}"},
        {"id": "beta", "kind": "local_search", "command": f"{b} {{instance}}"},
    ]))
    out = tmp_path / "runtimes.csv"
    rc = main(["collect", str(cfg), str(cnf_dir), "--cutoff", "10", "-o", str(out)])
    assert rc == 0
    matrix = load_runtime_csv(out, 10.0)
    assert matrix.is_complete()
    assert len(matrix) == 12


def test_split_command(tmp_path):
    src = tmp_path / "ids.txt"
    src.write_text("\n".join(f"i{k}" for k in range(10)) + "\n")
    out = tmp_path / "split.json"
    rc = main(["split", str(src), "--seed", "3", "-o", str(out)])
    assert rc == 0
    doc = json.loads(out.read_text())
    assert len(doc["train"]) == 4
    assert len(doc["validation"]) == 3
    assert len(doc["test"]) == 3


def test_synth_train_evaluate_pipeline(tmp_path):
    bench_dir = tmp_path / "bench"
    rc = main(["synth-bench", "--instances", "120", "--seed", "4",
               "-o", str(bench_dir)])
    assert rc == 0
    for name in ("features.csv", "runtimes.csv", "solvers.json", "purse.json",
                 "labels.csv"):
        assert (bench_dir / name).exists()

    split_path = tmp_path / "split.json"
    rc = main(["split", str(bench_dir / "runtimes.csv"), "--seed", "2",
               "-o", str(split_path)])
    assert rc == 0

    portfolio_path = tmp_path / "portfolio.json"
    rc = main([
        "train",
        "--features", str(bench_dir / "features.csv"),
        "--runtimes", str(bench_dir / "runtimes.csv"),
        "--solvers", str(bench_dir / "solvers.json"),
        "--split", str(split_path),
        "--purse", str(bench_dir / "purse.json"),
        "--objective", "runtime",
        "--cv-folds", "3", "--max-raw-terms", "3", "--max-expanded-terms", "4",
        "--presolver-top", "1", "--min-training-rows", "5",
        "-o", str(portfolio_path),
    ])
    assert rc == 0
    doc = json.loads(portfolio_path.read_text())
    assert doc["format"] == "zfolio-portfolio/1"
    assert doc["subset"]

    report_path = tmp_path / "report.csv"
    rc = main([
        "evaluate",
        "--runtimes", str(bench_dir / "runtimes.csv"),
        "--purse", str(bench_dir / "purse.json"),
        "--portfolio", str(portfolio_path),
        "--features", str(bench_dir / "features.csv"),
        "-o", str(report_path),
    ])
    assert rc == 0
    text = report_path.read_text()
    assert "portfolio" in text
    assert "oracle" in text


def test_solve_command(tmp_path, capsys):
    bench = generate_benchmark(num_instances=100, seed=21)
    kept, _ = drop_unsolvable(bench.matrix)
    train, valid, _ = split_data(kept, seed=1)
    settings = BuildSettings(
        objective="min_runtime", cv_folds=3, max_raw_terms=3,
        max_expanded_terms=4, min_training_rows=5, presolver_top=1,
        feature_budget=ProbeBudget(max_ls_steps=400, ls_runs=4, dpll_runs=5),
    )
    built = build_portfolio(
        train, valid, bench.features,
        bench.matrix.restrict(instances=[*train, *valid]),
        bench.descriptors, settings, bench.purse, bench.series,
    )
    script = script_solver(tmp_path, "instant", "exit 10\n")
    built.descriptors = {
        sid: SolverDescriptor(sid, d.kind, f"{script} {{instance}}")
        for sid, d in built.descriptors.items()
    }
    path = tmp_path / "portfolio.json"
    save_portfolio(built, path)

    instance = tmp_path / "tiny.cnf"
    instance.write_text("p cnf 3 2\n1 -2 0\n2 3 0\n")
    rc = main(["solve", str(path), str(instance)])
    out = capsys.readouterr().out
    assert rc == 10
    assert "s SATISFIABLE" in out


def test_solve_refuses_commandless_portfolio(tmp_path, capsys):
    bench = generate_benchmark(num_instances=100, seed=21)
    kept, _ = drop_unsolvable(bench.matrix)
    train, valid, _ = split_data(kept, seed=1)
    settings = BuildSettings(
        objective="min_runtime", cv_folds=3, max_raw_terms=3,
        max_expanded_terms=4, min_training_rows=5, presolver_top=1,
    )
    built = build_portfolio(
        train, valid, bench.features,
        bench.matrix.restrict(instances=[*train, *valid]),
        bench.descriptors, settings, bench.purse, bench.series,
    )
    path = tmp_path / "portfolio.json"
    save_portfolio(built, path)
    instance = tmp_path / "tiny.cnf"
    instance.write_text("p cnf 1 1\n1 0\n")
    rc = main(["solve", str(path), str(instance)])
    assert rc == 1
