"""Parse a DIMACS instance and walk through its 48 features.

The static features come straight from the formula structure; the dynamic
ones run short DPLL dives and local-search probes, so they depend on the
seed (but are reproducible for a fixed one).
"""

import random

from zfolio import (
    Assignment,
    ProbeBudget,
    base_features,
    extract_all,
    parse_dimacs,
    unit_propagate,
    write_dimacs,
)

text = """\
c a tiny pigeonhole-flavoured example
p cnf 4 6
1 2 0
3 4 0
-1 -3 0
-1 -4 0
-2 -3 0
-2 -4 0
"""

formula = parse_dimacs(text, source_id="demo")
print(f"parsed {formula.num_vars} variables, {formula.num_clauses} clauses")
print("round trip is exact:", parse_dimacs(write_dimacs(formula)) == formula)

# unit propagation: assign variable 1 false and watch the consequences
a = Assignment(formula.num_vars)
a.set(1, False)
after, forced, conflict = unit_propagate(formula, a)
print(f"\nafter setting x1=false: {forced} forced assignment(s), conflict={conflict}")
print("x2 is now", after.value(2))

# the static feature block
static = base_features(formula)
for name in ("f01_nclauses", "f03_clause_var_ratio", "f26_binary_frac",
             "f28_horn_frac", "f18_pos_ratio_cls_mean"):
    print(f"{name:28s} {static[name]:.4f}")

# full extraction including the probing features; small budgets keep this
# instant, deterministic mode makes it reproducible
budget = ProbeBudget(max_ls_steps=2000, ls_runs=8, dpll_runs=20, deterministic=True)
fv = extract_all(formula, budget, seed=42)
print(f"\nextracted all {len(fv.values)} features in {fv.feature_time_seconds * 1000:.1f} ms")
for name in ("f39_dpll_mean_depth", "f40_dpll_log_nodes",
             "f41_saps_beststep_mean", "f47_gsat_first_lm_frac"):
    print(f"{name:28s} {fv.get(name):.4f}")

again = extract_all(formula, budget, seed=42)
print("same seed reproduces every value:",
      all(fv.values == again.values))
