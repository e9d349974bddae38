"""Dataset splitting and evaluation reports.

Average runtimes count unsolved runs (timeouts and crashes) at the cutoff.
The oracle row is the per-instance best solver at zero overhead, an upper
bound on what any selection strategy over the same solvers can achieve.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .runtimes import RuntimeMatrix
from .scoring import PurseConfig, ScoreBreakdown, ScoreContext, SeriesMap, competition_score


def split_data(instance_ids, ratios=(0.4, 0.3, 0.3), seed: int = 0):
    """Random partition into train/validation/test by the given ratios.

    Sizes use largest-remainder rounding; the shuffle is seeded and applied
    to a sorted copy, so the partition is independent of input order.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must sum to 1")
    ids = sorted(instance_ids)
    n = len(ids)
    raw = [n * r for r in ratios]
    sizes = [math.floor(v) for v in raw]
    remainders = sorted(
        range(len(ratios)), key=lambda i: (-(raw[i] - sizes[i]), i)
    )
    for i in range(n - sum(sizes)):
        sizes[remainders[i % len(ratios)]] += 1
    rng = random.Random(seed)
    rng.shuffle(ids)
    parts = []
    at = 0
    for size in sizes:
        parts.append(ids[at : at + size])
        at += size
    return tuple(parts)


def drop_unsolvable(matrix: RuntimeMatrix):
    """Instances solved by no solver are removed from consideration.

    Returns (kept instance ids, retained fraction).
    """
    kept = [
        iid
        for iid in matrix.instances
        if any(matrix.solved(s, iid) for s in matrix.solvers)
    ]
    fraction = len(kept) / len(matrix.instances) if matrix.instances else 0.0
    return kept, fraction


@dataclass
class SolverSummary:
    solver_id: str
    avg_runtime: float
    pct_solved: float
    score: ScoreBreakdown | None
    cdf: list[tuple[float, float]]


@dataclass
class EvaluationReport:
    cutoff_seconds: float
    rows: list[SolverSummary]
    oracle: SolverSummary

    def row(self, solver_id: str) -> SolverSummary:
        return next(r for r in self.rows if r.solver_id == solver_id)

    def to_csv(self) -> str:
        lines = ["solver_id,avg_runtime,pct_solved,solution,speed,series,total"]
        for r in [*self.rows, self.oracle]:
            if r.score is None:
                score_cells = ",,,"
            else:
                score_cells = f"{r.score.solution!r},{r.score.speed!r},{r.score.series!r},{r.score.total!r}"
            lines.append(f"{r.solver_id},{r.avg_runtime!r},{r.pct_solved!r},{score_cells}")
        return "\n".join(lines) + "\n"


def _cdf_points(solve_times, n_total, cutoff) -> list[tuple[float, float]]:
    points = []
    times = sorted(solve_times)
    for i, t in enumerate(times, start=1):
        if points and points[-1][0] == t:
            points[-1] = (t, i / n_total)
        else:
            points.append((t, i / n_total))
    frac = len(times) / n_total if n_total else 0.0
    if not points or points[-1][0] < cutoff:
        points.append((cutoff, frac))
    return points


def _summary(solver_id, solved_times, n_total, cutoff, score) -> SolverSummary:
    total_time = sum(solved_times) + (n_total - len(solved_times)) * cutoff
    return SolverSummary(
        solver_id,
        total_time / n_total if n_total else 0.0,
        100.0 * len(solved_times) / n_total if n_total else 0.0,
        score,
        _cdf_points(solved_times, n_total, cutoff),
    )


def evaluate(matrix: RuntimeMatrix, purse: PurseConfig | None = None,
             series: SeriesMap | None = None, solvers=None) -> EvaluationReport:
    """Per-solver average runtime, percent solved, score and CDF, plus the
    oracle over the same solver subset."""
    solvers = list(solvers) if solvers is not None else matrix.solvers
    instances = matrix.instances
    n = len(instances)
    cutoff = matrix.cutoff_seconds

    scores = {}
    oracle_score = None
    if purse is not None and series is not None:
        sub = matrix.restrict(solvers=solvers)
        scores = competition_score(sub, purse, series)
        ctx = ScoreContext(sub, purse, series)
        oracle_solved = {}
        oracle_runtime = {}
        for iid in instances:
            times = [matrix.runtime(s, iid) for s in solvers if matrix.solved(s, iid)]
            oracle_solved[iid] = bool(times)
            oracle_runtime[iid] = min(times) if times else cutoff
        oracle_score = ctx.virtual_total(oracle_solved, oracle_runtime)

    rows = []
    for s in solvers:
        solved_times = [
            matrix.runtime(s, iid) for iid in instances if matrix.solved(s, iid)
        ]
        rows.append(_summary(s, solved_times, n, cutoff, scores.get(s)))

    oracle_times = []
    for iid in instances:
        times = [matrix.runtime(s, iid) for s in solvers if matrix.solved(s, iid)]
        if times:
            oracle_times.append(min(times))
    oracle = _summary("oracle", oracle_times, n, cutoff, oracle_score)
    return EvaluationReport(cutoff, rows, oracle)
