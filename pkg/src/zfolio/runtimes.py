"""Run records and the solver-by-instance runtime matrix."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

STATUSES = ("sat", "unsat", "timeout", "crash")
SOLVED_STATUSES = ("sat", "unsat")


class DataConsistencyError(ValueError):
    """Contradictory sat/unsat statuses for the same instance."""


@dataclass(frozen=True)
class SolverDescriptor:
    """A component solver: complete or local_search, optionally with an
    external command template containing an {instance} placeholder."""

    id: str
    kind: str = "complete"
    command: str | None = None

    def __post_init__(self):
        if self.kind not in ("complete", "local_search"):
            raise ValueError(f"unknown solver kind {self.kind!r}")


@dataclass(frozen=True)
class RunRecord:
    """One (solver, instance) run. Timeouts sit exactly at the cutoff and
    are censored (the true runtime is only known to exceed it)."""

    solver_id: str
    instance_id: str
    runtime_seconds: float
    status: str
    censored: bool = field(default=None)

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if self.censored is None:
            object.__setattr__(self, "censored", self.status == "timeout")
        if self.status == "timeout" and not self.censored:
            raise ValueError("timeout records must be censored")
        if self.runtime_seconds < 0:
            raise ValueError("runtime must be nonnegative")

    @property
    def solved(self) -> bool:
        return self.status in SOLVED_STATUSES


class RuntimeMatrix:
    """Records over solvers x instances with a shared cutoff.

    Ingestion enforces the status invariants and the sat/unsat consensus:
    no instance may carry both a sat and an unsat status across solvers.
    """

    def __init__(self, cutoff_seconds: float):
        if cutoff_seconds <= 0:
            raise ValueError("cutoff must be positive")
        self.cutoff_seconds = float(cutoff_seconds)
        self._records: dict[tuple[str, str], RunRecord] = {}
        self._solvers: set[str] = set()
        self._instances: set[str] = set()
        self._sat_label: dict[str, str] = {}

    def add(self, record: RunRecord) -> None:
        if record.status == "timeout" and record.runtime_seconds != self.cutoff_seconds:
            raise ValueError("timeout records must carry the cutoff as runtime")
        if record.solved and record.runtime_seconds > self.cutoff_seconds:
            raise ValueError("solved runtime exceeds the cutoff")
        if record.solved:
            known = self._sat_label.get(record.instance_id)
            if known is not None and known != record.status:
                raise DataConsistencyError(
                    f"instance {record.instance_id!r} labeled both {known} and {record.status}"
                )
            self._sat_label[record.instance_id] = record.status
        self._records[(record.solver_id, record.instance_id)] = record
        self._solvers.add(record.solver_id)
        self._instances.add(record.instance_id)

    @property
    def solvers(self) -> list[str]:
        return sorted(self._solvers)

    @property
    def instances(self) -> list[str]:
        return sorted(self._instances)

    def get(self, solver_id: str, instance_id: str) -> RunRecord:
        return self._records[(solver_id, instance_id)]

    def has(self, solver_id: str, instance_id: str) -> bool:
        return (solver_id, instance_id) in self._records

    def solved(self, solver_id: str, instance_id: str) -> bool:
        return self.get(solver_id, instance_id).solved

    def runtime(self, solver_id: str, instance_id: str) -> float:
        return self.get(solver_id, instance_id).runtime_seconds

    def sat_label(self, instance_id: str) -> str | None:
        """Consensus satisfiability ('sat'/'unsat') or None if never solved."""
        return self._sat_label.get(instance_id)

    def is_complete(self) -> bool:
        return all(
            (s, i) in self._records for s in self._solvers for i in self._instances
        )

    def restrict(self, instances=None, solvers=None) -> "RuntimeMatrix":
        instances = set(self._instances if instances is None else instances)
        solvers = set(self._solvers if solvers is None else solvers)
        out = RuntimeMatrix(self.cutoff_seconds)
        for (s, i), rec in self._records.items():
            if s in solvers and i in instances:
                out.add(rec)
        return out

    def __len__(self) -> int:
        return len(self._records)


CSV_HEADER = ("instance_id", "solver_id", "runtime", "status")


def save_runtime_csv(path, matrix: RuntimeMatrix) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for iid in matrix.instances:
            for sid in matrix.solvers:
                if matrix.has(sid, iid):
                    rec = matrix.get(sid, iid)
                    writer.writerow([iid, sid, repr(rec.runtime_seconds), rec.status])


def load_runtime_csv(path, cutoff_seconds: float) -> RuntimeMatrix:
    matrix = RuntimeMatrix(cutoff_seconds)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_HEADER:
            raise ValueError("unexpected runtime CSV header")
        for iid, sid, runtime, status in reader:
            matrix.add(RunRecord(sid, iid, float(runtime), status))
    return matrix
