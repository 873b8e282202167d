"""
Explaining one prediction of a tree ensemble
--------------------------------------------

Build a small random forest-like model, pick an instance, and compare the
exact Shapley values with the three sampling estimators at a modest budget.
Writes ``force.svg`` next to this script.
"""

import os

import numpy as np

from esv.bench import random_tree
from esv.estimators import (
    exact_shapley,
    kernel_shap_solve,
    lime_baseline_solve,
    permutation_estimate,
    sample_coalitions,
)
from esv.masking import SetFunctionCache
from esv.models import TreeEnsemble
from esv.viz import ForcePlotSpec, render_force_plot

rng = np.random.default_rng(0)
M = 8
trees = [t for _ in range(3) for t in random_tree(rng, 4, np.arange(M), M).trees]
model = TreeEnsemble(trees, M)

x = rng.normal(size=M)
background = rng.normal(size=(50, M))  # absent features are filled in from these rows
v = SetFunctionCache(model, x, background)
print("f(x) =", v.full_value, " E[f] =", v.empty_value)

# %% the reference: all 2**8 coalitions
exact = exact_shapley(v)

# %% three estimators, each allowed roughly 100 model-expectation evaluations
sample = sample_coalitions(M, 98, seed=1)
estimates = {
    "kernel": kernel_shap_solve(v, sample),
    "kernel-lasso": kernel_shap_solve(v, sample, "auto"),
    "permutation": permutation_estimate(v, 14, seed=1),
    "lime": lime_baseline_solve(v, sample),
}

print(f"{'feature':>8} {'exact':>9}" + "".join(f"{k:>14}" for k in estimates))
for i in range(M):
    print(f"{i:>8} {exact.phi[i]:>9.4f}" + "".join(f"{e.phi[i]:>14.4f}" for e in estimates.values()))
print(f"{'sum':>8} {exact.phi.sum():>9.4f}" + "".join(f"{e.phi.sum():>14.4f}" for e in estimates.values()))

# LIME has no efficiency constraint, so its attributions need not add up to f(x) - E[f]

# %% force plot of the exact explanation
path = os.path.join(os.path.dirname(os.path.abspath(__file__)), "force.svg")
with open(path, "w") as fh:
    fh.write(render_force_plot(ForcePlotSpec(exact, feature_values=list(np.round(x, 2)))))
print("wrote", path)
