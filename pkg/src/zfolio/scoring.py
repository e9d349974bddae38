"""Competition-style scoring.

Each instance carries a solution purse (split equally among solvers that
solve it) and a speed purse (split in proportion to the speed factor
SF = timeLimit / (1 + timeUsed)); each series of instances carries a series
purse split equally among solvers solving at least one instance of the
series. Crashes and timeouts score exactly zero. For training targets the
series purse is approximated by an independent per-instance share,
SeriesP / (N * n), a conservative lower bound on the exact share.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .runtimes import RunRecord, RuntimeMatrix


class MissingReferenceRuns(ValueError):
    pass


@dataclass
class PurseConfig:
    """Per-instance and per-series purse values.

    The published purse amounts for real competitions vary; the defaults
    here are placeholders whose conservation and ranking properties do not
    depend on magnitude.
    """

    solution_purse: float = 1000.0
    speed_purse: float = 1000.0
    series_purse: float = 300.0
    time_limit: float = 1200.0

    def __post_init__(self):
        if min(self.solution_purse, self.speed_purse, self.series_purse) < 0:
            raise ValueError("purse values must be nonnegative")
        if self.time_limit <= 0:
            raise ValueError("time_limit must be positive")


# instance_id -> series_id; a trivial map puts each instance in its own series
SeriesMap = dict


def singleton_series(instance_ids) -> SeriesMap:
    return {iid: f"series-{iid}" for iid in instance_ids}


def series_groups(series: SeriesMap, instance_ids) -> dict[str, list[str]]:
    groups: dict[str, list[str]] = {}
    for iid in instance_ids:
        groups.setdefault(series[iid], []).append(iid)
    return groups


@dataclass
class ScoreBreakdown:
    solution: float = 0.0
    speed: float = 0.0
    series: float = 0.0

    @property
    def total(self) -> float:
        return self.solution + self.speed + self.series

    def __add__(self, other):
        return ScoreBreakdown(
            self.solution + other.solution,
            self.speed + other.speed,
            self.series + other.series,
        )


def speed_factor(time_limit: float, time_used: float) -> float:
    """SF = timeLimit / (1 + timeUsed); discounts small runtime differences."""
    return time_limit / (1.0 + time_used)


def _solved(record: RunRecord) -> bool:
    return record.status in ("sat", "unsat")


def instance_scores(records: dict[str, RunRecord], purse: PurseConfig) -> dict[str, tuple[float, float]]:
    """Solution and speed purse shares for one instance.

    `records` maps solver id to its run on this instance. Solvers that do
    not solve it (timeout or crash) receive exactly zero for both purses.
    """
    solvers = sorted(records)
    solving = [s for s in solvers if _solved(records[s])]
    out = {s: (0.0, 0.0) for s in solvers}
    if not solving:
        return out
    solution_share = purse.solution_purse / len(solving)
    sfs = {s: speed_factor(purse.time_limit, records[s].runtime_seconds) for s in solving}
    sf_sum = sum(sfs.values())
    for s in solving:
        out[s] = (solution_share, purse.speed_purse * sfs[s] / sf_sum)
    return out


def series_scores(solved: dict[str, set], series: SeriesMap, purse: PurseConfig,
                  instance_ids=None) -> dict[str, float]:
    """Exact series purse totals: each series splits equally among the
    solvers solving at least one of its instances."""
    if instance_ids is None:
        instance_ids = sorted({iid for ids in solved.values() for iid in ids} | set(series))
    groups = series_groups(series, instance_ids)
    totals = {s: 0.0 for s in solved}
    for sid, members in groups.items():
        winners = [s for s in sorted(solved) if solved[s] & set(members)]
        if not winners:
            continue
        share = purse.series_purse / len(winners)
        for s in winners:
            totals[s] += share
    return totals


class UndefinedShare(ValueError):
    pass


def independent_series_share(series: SeriesMap, solvable_counts: dict[str, int],
                             solver_counts: dict[str, int], purse: PurseConfig) -> dict[str, float]:
    """Per-instance series share SeriesP / (N * n) for each series.

    N is the number of the series' instances solved by any component solver
    and n the number of solvers solving at least one of them. The share is
    0 by convention when N or n is 0. A solver solving all N instances
    accumulates exactly SeriesP / n; solving fewer yields strictly less, so
    this is a lower bound on the exact series share.
    """
    shares = {}
    for sid in series_groups(series, list(series)).keys():
        n_inst = solvable_counts.get(sid, 0)
        n_solv = solver_counts.get(sid, 0)
        if n_inst == 0 or n_solv == 0:
            shares[sid] = 0.0
        else:
            shares[sid] = purse.series_purse / (n_inst * n_solv)
    return shares


def score_labels(matrix: RuntimeMatrix, candidate_id: str, purse: PurseConfig,
                 series: SeriesMap) -> dict[str, float]:
    """Per-instance independent score for one solver against the others.

    Solution and speed shares are exact; the series contribution uses the
    independent SeriesP / (N * n) approximation. Unsolved instances score
    zero, so these labels need no censoring machinery.
    """
    if candidate_id not in matrix.solvers:
        raise MissingReferenceRuns(f"candidate {candidate_id!r} not in the matrix")
    if not matrix.is_complete():
        raise MissingReferenceRuns("reference runtimes must cover all (solver, instance) pairs")

    groups = series_groups(series, matrix.instances)
    solvable_counts = {}
    solver_counts = {}
    for sid, members in groups.items():
        solvable_counts[sid] = sum(
            1 for iid in members if any(_solved(matrix.get(s, iid)) for s in matrix.solvers)
        )
        solver_counts[sid] = sum(
            1 for s in matrix.solvers if any(_solved(matrix.get(s, iid)) for iid in members)
        )
    shares = independent_series_share(series, solvable_counts, solver_counts, purse)

    labels = {}
    for iid in matrix.instances:
        rec = matrix.get(candidate_id, iid)
        if not _solved(rec):
            labels[iid] = 0.0
            continue
        per_solver = instance_scores({s: matrix.get(s, iid) for s in matrix.solvers}, purse)
        solution, speed = per_solver[candidate_id]
        labels[iid] = solution + speed + shares[series[iid]]
    return labels


def competition_score(matrix: RuntimeMatrix, purse: PurseConfig,
                      series: SeriesMap) -> dict[str, ScoreBreakdown]:
    """Exact totals over a complete matrix (simulated competition)."""
    totals = {s: ScoreBreakdown() for s in matrix.solvers}
    for iid in matrix.instances:
        per_solver = instance_scores({s: matrix.get(s, iid) for s in matrix.solvers}, purse)
        for s, (solution, speed) in per_solver.items():
            totals[s] = totals[s] + ScoreBreakdown(solution, speed, 0.0)
    solved_sets = {
        s: {iid for iid in matrix.instances if _solved(matrix.get(s, iid))}
        for s in matrix.solvers
    }
    for s, val in series_scores(solved_sets, series, purse, matrix.instances).items():
        totals[s] = totals[s] + ScoreBreakdown(0.0, 0.0, val)
    return totals


class ScoreContext:
    """Precomputed aggregates to score one extra (virtual) solver quickly.

    Scoring a portfolio as if it had entered the competition alongside the
    reference solvers only needs, per instance, how many references solved
    it and their speed-factor mass, and per series the reference winner
    count. virtual_total() then runs in O(instances).
    """

    def __init__(self, matrix: RuntimeMatrix, purse: PurseConfig, series: SeriesMap):
        self.purse = purse
        self.series = series
        self.instances = list(matrix.instances)
        self.n_solving = {}
        self.sf_sum = {}
        for iid in self.instances:
            solving = [s for s in matrix.solvers if _solved(matrix.get(s, iid))]
            self.n_solving[iid] = len(solving)
            self.sf_sum[iid] = sum(
                speed_factor(purse.time_limit, matrix.get(s, iid).runtime_seconds)
                for s in solving
            )
        groups = series_groups(series, self.instances)
        self.series_winner_counts = {}
        for sid, members in groups.items():
            self.series_winner_counts[sid] = sum(
                1 for s in matrix.solvers
                if any(_solved(matrix.get(s, iid)) for iid in members)
            )

    def virtual_total(self, solved: dict[str, bool], runtime: dict[str, float]) -> ScoreBreakdown:
        purse = self.purse
        solution = speed = 0.0
        series_hit = set()
        for iid in self.instances:
            if not solved.get(iid, False):
                continue
            solution += purse.solution_purse / (self.n_solving[iid] + 1)
            sf = speed_factor(purse.time_limit, runtime[iid])
            speed += purse.speed_purse * sf / (self.sf_sum[iid] + sf)
            series_hit.add(self.series[iid])
        series_total = sum(
            purse.series_purse / (self.series_winner_counts[sid] + 1)
            for sid in series_hit
        )
        return ScoreBreakdown(solution, speed, series_total)


def score_report_csv(totals: dict[str, ScoreBreakdown]) -> str:
    lines = ["solver_id,solution,speed,series,total"]
    for s in sorted(totals):
        b = totals[s]
        lines.append(f"{s},{b.solution!r},{b.speed!r},{b.series!r},{b.total!r}")
    return "\n".join(lines) + "\n"


def save_purse_config(path, purse: PurseConfig, series: SeriesMap) -> None:
    doc = {
        "solution_purse": purse.solution_purse,
        "speed_purse": purse.speed_purse,
        "series_purse": purse.series_purse,
        "time_limit": purse.time_limit,
        "series": {},
    }
    for sid, members in series_groups(series, list(series)).items():
        doc["series"][sid] = sorted(members)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_purse_config(path) -> tuple[PurseConfig, SeriesMap]:
    with open(path) as fh:
        doc = json.load(fh)
    purse = PurseConfig(
        solution_purse=float(doc["solution_purse"]),
        speed_purse=float(doc["speed_purse"]),
        series_purse=float(doc["series_purse"]),
        time_limit=float(doc["time_limit"]),
    )
    series = {}
    for sid, members in doc.get("series", {}).items():
        for iid in members:
            series[iid] = sid
    return purse, series
