"""
How many model evaluations does an estimate need?
-------------------------------------------------

Runs the quick version of the convergence benchmark on the sparse scenario:
a depth-4 tree over 100 features that only ever looks at features 0, 1, 2.
The lasso-selected kernel regression finds the three relevant features and
leaves the other 97 at exactly zero, while permutation sampling needs at
least 101 evaluations for a single ordering.
"""

import os

from esv.bench import export_report, make_scenario, run_convergence

scenario = make_scenario("sparse3of100", seed=0, fast=True)
report = run_convergence(scenario)
print(report.summary())

out = os.path.join(os.path.dirname(os.path.abspath(__file__)), "convergence-out")
for path in export_report(report, out):
    print("wrote", path)
