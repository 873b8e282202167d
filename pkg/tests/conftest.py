import numpy as np
import pytest

from esv.bench import random_tree
from esv.models import AnalyticModel, LinearModel, TreeEnsemble


def random_ensemble(rng, M, n_trees=2, depth=3):
    """Small additive ensemble that splits on every one of its ``M`` features."""
    trees = []
    for k in range(n_trees):
        d = max(depth, int(np.ceil(np.log2(M + 1))))
        feats = np.arange(M) if k == 0 else rng.choice(M, size=min(M, 2 ** d - 1), replace=False)
        trees.extend(random_tree(rng, d, feats, M).trees)
    return TreeEnsemble(trees, M, float(rng.normal()))


@pytest.fixture
def max_model():
    return AnalyticModel("max", (0, 1), 2)


@pytest.fixture
def linear_model():
    return LinearModel([2.0, -1.0], 0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
