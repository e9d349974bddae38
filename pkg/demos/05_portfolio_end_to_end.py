"""Build and exercise a full portfolio on the synthetic benchmark.

Three latent instance clusters, three complete solvers (each dominant on
one cluster) and three local-search solvers that never solve unsatisfiable
instances. The build enumerates pre-solver schedules, trains censored
runtime models per schedule, picks the backup and the solver subset, and
keeps the best validated configuration. The result is then compared on the
held-out test set against every component and the oracle.
"""

import numpy as np

from zfolio import (
    BuildSettings,
    PortfolioSimulator,
    SimulatedRunner,
    build_portfolio,
    drop_unsolvable,
    evaluate,
    generate_benchmark,
    solve,
    split_data,
)

bench = generate_benchmark(num_instances=240, clusters=3, seed=3)
kept, fraction = drop_unsolvable(bench.matrix)
print(f"benchmark: {len(bench.instances)} instances, kept {100 * fraction:.1f}%")

train, valid, test = split_data(kept, ratios=(0.4, 0.3, 0.3), seed=3)
print(f"split 40:30:30 -> {len(train)}/{len(valid)}/{len(test)}")

settings = BuildSettings(
    objective="min_runtime",
    cv_folds=3, max_raw_terms=3, max_expanded_terms=5,
    presolver_top=2, min_training_rows=8, seed=3,
)
portfolio = build_portfolio(
    train, valid, bench.features,
    bench.matrix.restrict(instances=[*train, *valid]),
    bench.descriptors, settings, bench.purse, bench.series,
)
print(f"\npre-solvers: {portfolio.presolvers.describe()}")
print(f"backup: {portfolio.backup_solver}; subset: {portfolio.subset}")

# score the portfolio on the untouched test set as a virtual solver
test_matrix = bench.matrix.restrict(instances=test)
sim = PortfolioSimulator(
    test_matrix, bench.features, test, portfolio.presolvers,
    portfolio.backup_solver, portfolio.models, portfolio.objective,
    portfolio.cutoff_seconds,
)
extended = test_matrix.restrict()
for rec in sim.records(portfolio.subset).values():
    extended.add(rec)
report = evaluate(extended, bench.purse, bench.series)
print("\ntest-set comparison:")
for row in [*report.rows, report.oracle]:
    print(f"  {row.solver_id:12s} avg {row.avg_runtime:7.1f}s   "
          f"solved {row.pct_solved:5.1f}%")

# the online procedure, including its fallbacks
runner = SimulatedRunner(bench.features, bench.matrix)
iid = test[0]
outcome = solve(portfolio, iid, runner)
print(f"\nsolve({iid}): {outcome.status} via {outcome.chosen_solver} "
      f"in {outcome.total_time_seconds:.1f}s")

forced = SimulatedRunner(bench.features, bench.matrix, feature_timeouts={iid})
outcome = solve(portfolio, iid, forced)
print(f"with a feature timeout it falls back to {outcome.chosen_solver}")

if outcome.chosen_solver.startswith("backup"):
    first = solve(portfolio, iid, runner).chosen_solver
    if ":" not in first:
        crashy = SimulatedRunner(bench.features, bench.matrix,
                                 crashes={(first, iid)})
        outcome = solve(portfolio, iid, crashy)
        print(f"and if {first} crashes, it reruns with {outcome.chosen_solver}")
