import random

import pytest

from zfolio.cnf import CnfFormula

# collected by the acceptance suite; echoed after the run so the
# per-criterion lines show even under output capture
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_3cnf(num_vars: int, num_clauses: int, rng: random.Random) -> CnfFormula:
    """Uniform random 3-CNF with distinct variables per clause."""
    clauses = []
    for _ in range(num_clauses):
        vs = rng.sample(range(1, num_vars + 1), 3)
        clauses.append([v if rng.random() < 0.5 else -v for v in vs])
    return CnfFormula(num_vars=num_vars, clauses=clauses)


@pytest.fixture
def rng():
    return random.Random(20240817)
