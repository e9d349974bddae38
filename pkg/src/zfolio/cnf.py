"""DIMACS CNF parsing, validation and serialization.

Formulas are kept exactly as written: duplicate literals and tautological
clauses are preserved, because instance features must reflect the input as
given, not a simplified form.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class DimacsError(ValueError):
    """Base class for malformed DIMACS input."""


class MissingHeader(DimacsError):
    pass


class HeaderMismatch(DimacsError):
    pass


class LiteralOutOfRange(DimacsError):
    pass


class EmptyClause(DimacsError):
    pass


class MalformedToken(DimacsError):
    pass


@dataclass
class CnfFormula:
    """A propositional formula in conjunctive normal form.

    `clauses` is an ordered list of clauses, each an ordered list of nonzero
    signed integers; positive k is the positive literal of variable k.
    `source_id` is an opaque instance identifier and does not take part in
    equality.
    """

    num_vars: int
    clauses: list[list[int]]
    source_id: str = field(default="", compare=False)

    def __post_init__(self):
        if self.num_vars < 1:
            raise ValueError(f"num_vars must be positive, got {self.num_vars}")
        for idx, clause in enumerate(self.clauses):
            if not clause:
                raise EmptyClause(f"clause {idx + 1} is empty")
            for lit in clause:
                if lit == 0:
                    raise LiteralOutOfRange(f"literal 0 in clause {idx + 1}")
                if abs(lit) > self.num_vars:
                    raise LiteralOutOfRange(
                        f"literal {lit} exceeds num_vars={self.num_vars}"
                    )

    @property
    def num_clauses(self) -> int:
        return len(self.clauses)


def parse_dimacs(text: str, source_id: str = "") -> CnfFormula:
    """Parse DIMACS CNF text into a CnfFormula.

    Comment lines ("c ..."), blank lines and \\r line endings are ignored.
    Clauses may span multiple lines; literals accumulate until a 0.
    Everything after a lone "%" line is ignored (a known competition file
    convention). Parse failure raises before any formula is constructed.
    """
    num_vars = None
    declared_clauses = None
    clauses: list[list[int]] = []
    current: list[int] = []

    for raw_line in text.splitlines():
        line = raw_line.strip()
        if not line or line[0] == "c":
            continue
        if line == "%":
            break
        if line[0] == "p":
            if num_vars is not None:
                raise MalformedToken("duplicate problem line")
            parts = line.split()
            if len(parts) != 4 or parts[0] != "p" or parts[1] != "cnf":
                raise MalformedToken(f"bad problem line: {line!r}")
            try:
                num_vars = int(parts[2])
                declared_clauses = int(parts[3])
            except ValueError:
                raise MalformedToken(f"bad problem line: {line!r}") from None
            if num_vars < 1 or declared_clauses < 0:
                raise MalformedToken(f"bad problem line counts: {line!r}")
            continue
        if num_vars is None:
            raise MissingHeader("clause data before the problem line")
        for tok in line.split():
            try:
                lit = int(tok)
            except ValueError:
                raise MalformedToken(f"non-integer token {tok!r}") from None
            if lit == 0:
                if not current:
                    raise EmptyClause(f"empty clause (clause {len(clauses) + 1})")
                clauses.append(current)
                current = []
            else:
                if abs(lit) > num_vars:
                    raise LiteralOutOfRange(
                        f"literal {lit} exceeds declared num_vars={num_vars}"
                    )
                current.append(lit)

    if num_vars is None:
        raise MissingHeader("no problem line found")
    if current:
        raise MalformedToken("unterminated clause at end of input")
    if len(clauses) != declared_clauses:
        raise HeaderMismatch(
            f"header declares {declared_clauses} clauses, parsed {len(clauses)}"
        )
    return CnfFormula(num_vars=num_vars, clauses=clauses, source_id=source_id)


def write_dimacs(formula: CnfFormula) -> str:
    """Serialize a formula; parse_dimacs(write_dimacs(f)) reproduces f."""
    lines = [f"p cnf {formula.num_vars} {formula.num_clauses}"]
    for clause in formula.clauses:
        lines.append(" ".join(str(lit) for lit in clause) + " 0")
    return "\n".join(lines) + "\n"


def read_dimacs_file(path) -> CnfFormula:
    from pathlib import Path

    p = Path(path)
    return parse_dimacs(p.read_text(), source_id=p.stem)
