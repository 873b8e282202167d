"""Convergence benchmark: estimator accuracy versus evaluation budget.

A scenario fixes a model, an instance, a background set and a few tracked
features. For every budget and replicate each estimator is run on a fresh
set-function cache, and the tracked attributions are summarized by their
mean and 10th/90th percentiles next to the exact Shapley values.

Two scenarios are generated on demand:

``dense10``
    one depth-6 tree splitting on all 10 features;
``sparse3of100``
    one depth-4 tree over 100 features that only splits on features 0, 1, 2.
"""

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetRefusedError, DomainError, ModelParseError, SingularSystemError
from .estimators import (
    EXACT_MAX_PLAYERS,
    exact_shapley,
    kernel_shap_solve,
    lime_baseline_solve,
    permutation_estimate,
    sample_coalitions,
)
from .masking import FeatureGrouping, SetFunctionCache
from .models import Tree, TreeEnsemble, load_model, model_from_dict

__all__ = [
    "SCENARIOS",
    "ESTIMATORS",
    "DEFAULT_BUDGETS",
    "BenchScenario",
    "Cell",
    "ConvergenceReport",
    "generate_scenario_models",
    "make_scenario",
    "load_scenario",
    "exact_truth",
    "run_convergence",
    "export_report",
]

SCENARIOS = ("dense10", "sparse3of100")
ESTIMATORS = ("kernel-lasso", "permutation", "lime")
DEFAULT_BUDGETS = (32, 64, 128, 256, 512, 1024)
FAST_BUDGETS = DEFAULT_BUDGETS[:-1]
DEFAULT_REPLICATES = 200
FAST_REPLICATES = 20
BACKGROUND_ROWS = 100
CSV_HEADER = "estimator,feature,budget,mean,p10,p90,truth"


def random_tree(rng, depth, features, n_features):
    """Complete binary tree of ``depth`` splits using every entry of ``features``.

    Split features are drawn uniformly from ``features`` and then a random
    set of internal nodes is overwritten with a permutation of ``features``
    so each appears at least once. Thresholds and leaf values are standard
    normal.
    """
    features = np.asarray(features, dtype=np.int64)
    n_internal = 2**depth - 1
    if features.size > n_internal:
        raise DomainError(f"a depth-{depth} tree cannot split on {features.size} features")
    n = 2 ** (depth + 1) - 1
    feat = np.full(n, -1, dtype=np.int64)
    split = rng.choice(features, size=n_internal)
    split[rng.permutation(n_internal)[:features.size]] = rng.permutation(features)
    feat[:n_internal] = split
    threshold = np.zeros(n)
    threshold[:n_internal] = rng.normal(size=n_internal)
    left = np.zeros(n, dtype=np.int64)
    right = np.zeros(n, dtype=np.int64)
    left[:n_internal] = 2 * np.arange(n_internal) + 1
    right[:n_internal] = 2 * np.arange(n_internal) + 2
    value = np.zeros(n)
    value[n_internal:] = rng.normal(size=n - n_internal)
    return TreeEnsemble([Tree(feat, threshold, left, right, value)], n_features)


def generate_scenario_models(kind, seed=0):
    """The benchmark tree for ``kind`` in :data:`SCENARIOS`; deterministic per seed."""
    if kind not in SCENARIOS:
        raise DomainError(f"unknown scenario {kind!r}; expected one of {SCENARIOS}")
    rng = np.random.default_rng([seed, SCENARIOS.index(kind)])
    if kind == "dense10":
        return random_tree(rng, 6, np.arange(10), 10)
    return random_tree(rng, 4, np.arange(3), 100)


@dataclass
class BenchScenario:
    name: str
    model: object
    x: np.ndarray
    background: np.ndarray
    tracked: tuple
    budgets: tuple = DEFAULT_BUDGETS
    replicates: int = DEFAULT_REPLICATES
    seed: int = 0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.background = np.atleast_2d(np.asarray(self.background, dtype=float))
        self.tracked = tuple(int(t) for t in self.tracked)
        self.budgets = tuple(int(b) for b in self.budgets)
        if any(b2 <= b1 for b1, b2 in zip(self.budgets, self.budgets[1:])) or not self.budgets:
            raise DomainError("budgets must be non-empty and strictly increasing")
        if self.replicates < 2:
            raise DomainError("replicates must be at least 2")
        if any(not 0 <= t < self.model.n_features for t in self.tracked):
            raise DomainError("tracked feature index out of range")

    @property
    def M(self):
        return self.model.n_features


def make_scenario(kind, seed=0, fast=False):
    """Generated scenario with default budgets, replicates and tracked features."""
    model = generate_scenario_models(kind, seed)
    rng = np.random.default_rng([seed, 1000 + SCENARIOS.index(kind)])
    P = model.n_features
    x = rng.normal(size=P)
    background = rng.normal(size=(BACKGROUND_ROWS, P))
    # sparse: two used features and one the tree never reads
    tracked = (0, 1, 2) if kind == "dense10" else (0, 1, 50)
    return BenchScenario(
        kind, model, x, background, tracked,
        FAST_BUDGETS if fast else DEFAULT_BUDGETS,
        FAST_REPLICATES if fast else DEFAULT_REPLICATES,
        seed,
    )


def load_scenario(path, fast=False):
    """Read a scenario JSON file.

    Either ``{"scenario": "dense10" | "sparse3of100", "seed": ...}`` or a full
    description ``{"model": <path or model object>, "instance": [...],
    "background": [[...], ...], "tracked": [...], "budgets": [...],
    "replicates": int, "seed": int}``.
    """
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelParseError(exc.msg, f"{path}: line {exc.lineno} column {exc.colno}") from None
    if not isinstance(doc, dict):
        raise ModelParseError("expected a JSON object", str(path))
    seed = int(doc.get("seed", 0))
    if "scenario" in doc:
        base = make_scenario(doc["scenario"], seed, fast)
        for key in ("budgets", "replicates", "tracked"):
            if key in doc:
                setattr(base, key, doc[key])
        return BenchScenario(base.name, base.model, base.x, base.background, base.tracked,
                             base.budgets, base.replicates, seed)
    for key in ("model", "instance", "background", "tracked"):
        if key not in doc:
            raise ModelParseError(f"missing required field {key!r}", str(path))
    model = doc["model"]
    if isinstance(model, str):
        model = load_model(os.path.join(os.path.dirname(os.path.abspath(path)), model))
    else:
        model = model_from_dict(model)
    budgets = doc.get("budgets", FAST_BUDGETS if fast else DEFAULT_BUDGETS)
    replicates = doc.get("replicates", FAST_REPLICATES if fast else DEFAULT_REPLICATES)
    name = doc.get("name", os.path.splitext(os.path.basename(path))[0])
    return BenchScenario(name, model, doc["instance"], doc["background"], doc["tracked"],
                         budgets, replicates, seed)


def exact_truth(scenario):
    """Exact Shapley values of the tracked features.

    Small models are enumerated directly. For a tree ensemble that reads
    only a few of many features, the unread features are merged into one
    group: they never change the model output, so they are dummies with
    value 0 and merging them leaves every other feature's value unchanged.
    """
    model, M = scenario.model, scenario.M
    if M <= EXACT_MAX_PLAYERS:
        phi = exact_shapley(SetFunctionCache(model, scenario.x, scenario.background)).phi
        return {t: float(phi[t]) for t in scenario.tracked}
    if not isinstance(model, TreeEnsemble):
        raise BudgetRefusedError(f"no exact reference for a {model.kind} model with {M} features")
    used = model.used_features()
    unused = [j for j in range(M) if j not in set(used)]
    if len(used) + (1 if unused else 0) > EXACT_MAX_PLAYERS:
        raise BudgetRefusedError(f"model reads {len(used)} features; exact reference is capped")
    groups = [[j] for j in used] + ([unused] if unused else [])
    grouping = FeatureGrouping(groups, M)
    phi = exact_shapley(SetFunctionCache(model, scenario.x, scenario.background, grouping)).phi
    value = {j: float(phi[g]) for g, j in enumerate(used)}
    return {t: value.get(t, 0.0) for t in scenario.tracked}


def minimum_budget(estimator, M):
    """Fewest distinct evaluations an estimator can run with."""
    if estimator == "kernel-lasso":
        return 4
    if estimator == "permutation":
        return M + 1
    if estimator == "lime":
        # M + 1 free coefficients need M + 1 coalitions, plus the two endpoints
        return M + 3
    raise DomainError(f"unknown estimator {estimator!r}")


# largest M whose M! orderings are enumerated when all coalitions fit the budget
ENUMERATE_ORDERINGS_MAX_M = 8


def orderings_for_budget(budget, M):
    """Orderings whose prefixes fit in ``budget`` distinct evaluations.

    Each ordering adds at most ``M - 1`` new coalitions beyond the two
    endpoints. When every coalition fits in the budget and ``M!`` is small,
    all orderings are used, which touches only ``2**M`` coalitions.
    """
    if M == 1:
        return 1
    if M <= ENUMERATE_ORDERINGS_MAX_M and 2**M <= budget:
        return math.factorial(M)
    return max(1, (budget - 2) // (M - 1))


def _replicate_seed(seed, replicate, budget_index):
    return int(np.random.SeedSequence([seed, replicate, budget_index]).generate_state(1)[0])


def _run_replicate(scenario, estimators, replicate):
    """Tracked estimates for one replicate: ``{(estimator, budget): array or exception}``."""
    out = {}
    tracked = list(scenario.tracked)
    M = scenario.M
    for bi, budget in enumerate(scenario.budgets):
        seed = _replicate_seed(scenario.seed, replicate, bi)
        cache = SetFunctionCache(scenario.model, scenario.x, scenario.background)
        sample = None
        for name in estimators:
            if budget < minimum_budget(name, M):
                continue
            try:
                if name == "permutation":
                    e = permutation_estimate(cache, orderings_for_budget(budget, M), seed)
                else:
                    if sample is None:
                        sample = sample_coalitions(M, budget - 2, seed)
                    if name == "kernel-lasso":
                        e = kernel_shap_solve(cache, sample, "auto")
                    else:
                        e = lime_baseline_solve(cache, sample)
            except SingularSystemError as exc:
                out[(name, budget)] = exc
                continue
            out[(name, budget)] = (e.phi[tracked], e.budget)
    return out


@dataclass(frozen=True)
class Cell:
    estimator: str
    feature: int
    budget: int
    mean: float
    p10: float
    p90: float
    truth: float
    evaluations: int
    replicates: int


@dataclass
class ConvergenceReport:
    scenario: str
    tracked: tuple
    budgets: tuple
    estimators: tuple
    truth: dict
    cells: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    def cell(self, estimator, feature, budget):
        for c in self.cells:
            if (c.estimator, c.feature, c.budget) == (estimator, feature, budget):
                return c
        return None

    def band(self, estimator, feature, budget):
        c = self.cell(estimator, feature, budget)
        return None if c is None else c.p90 - c.p10

    def to_csv(self):
        lines = [CSV_HEADER]
        for c in self.cells:
            lines.append(f"{c.estimator},{c.feature},{c.budget},{c.mean!r},{c.p10!r},{c.p90!r},{c.truth!r}")
        return "\n".join(lines) + "\n"

    def summary(self):
        lines = [f"scenario {self.scenario}: {len(self.cells)} cells, {len(self.skipped)} skipped"]
        top = self.budgets[-1]
        for f in self.tracked:
            lines.append(f"  feature {f}: exact {self.truth[f]:.6g}")
            for est in self.estimators:
                c = self.cell(est, f, top)
                if c is None:
                    continue
                lines.append(f"    {est:>13} @ {top}: mean {c.mean:+.6f}  band [{c.p10:+.6f}, {c.p90:+.6f}]")
        for est, budget, reason in self.skipped:
            lines.append(f"  skipped {est} @ {budget}: {reason}")
        return "\n".join(lines)


def run_convergence(scenario, estimators=ESTIMATORS, threads=None):
    """Run every estimator at every budget for ``scenario.replicates`` seeds.

    Replicates may run on up to ``threads`` worker threads; the report does
    not depend on the thread count.
    """
    truth = exact_truth(scenario)
    threads = threads or os.cpu_count() or 1
    reps = range(scenario.replicates)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(lambda r: _run_replicate(scenario, estimators, r), reps))
    else:
        results = [_run_replicate(scenario, estimators, r) for r in reps]

    report = ConvergenceReport(scenario.name, scenario.tracked, scenario.budgets,
                               tuple(estimators), truth)
    for name in estimators:
        for budget in scenario.budgets:
            if budget < minimum_budget(name, scenario.M):
                report.skipped.append((name, budget, f"below minimum budget {minimum_budget(name, scenario.M)}"))
                continue
            outcomes = [res[(name, budget)] for res in results]
            failed = [o for o in outcomes if isinstance(o, Exception)]
            if failed:
                report.skipped.append((name, budget, f"{len(failed)} replicates singular"))
                continue
            est = np.array([o[0] for o in outcomes])
            used = max(o[1] for o in outcomes)
            for k, f in enumerate(scenario.tracked):
                vals = np.sort(est[:, k])
                p10, p90 = np.percentile(vals, [10, 90])
                report.cells.append(Cell(name, f, budget, float(np.mean(vals)), float(p10),
                                         float(p90), truth[f], int(used), len(vals)))
    return report


# -- export ----------------------------------------------------------------

_COLORS = {"kernel-lasso": "#ff0d57", "permutation": "#1e88e5", "lime": "#2e7d32"}


def _fmt(v):
    s = f"{v:.3f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def convergence_svg(report, feature, width=640, height=360):
    """Line plot of mean and percentile band per estimator against log budget."""
    cells = [c for c in report.cells if c.feature == feature]
    truth = report.truth[feature]
    margin = 50.0
    budgets = [b for b in report.budgets]
    lx = [math.log2(b) for b in budgets]
    x_lo, x_hi = min(lx), max(lx) if len(lx) > 1 else min(lx) + 1
    vals = [truth] + [v for c in cells for v in (c.p10, c.p90, c.mean)]
    y_lo, y_hi = min(vals), max(vals)
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 1, y_hi + 1
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad
    px = lambda b: margin + (math.log2(b) - x_lo) / (x_hi - x_lo) * (width - 2 * margin)  # noqa: E731
    py = lambda v: height - margin - (v - y_lo) / (y_hi - y_lo) * (height - 2 * margin)  # noqa: E731

    parts = [
        "<?xml version='1.0' encoding='UTF-8'?>",
        f"<svg xmlns='http://www.w3.org/2000/svg' version='1.1' width='{width}' height='{height}' "
        f"viewBox='0 0 {width} {height}'>",
        f"<rect x='0' y='0' width='{width}' height='{height}' fill='white'/>",
        f"<text x='{width / 2}' y='20' text-anchor='middle' font-size='14'>"
        f"{report.scenario}: feature {feature}</text>",
        f"<line class='truth' x1='{margin}' x2='{width - margin}' y1='{_fmt(py(truth))}' "
        f"y2='{_fmt(py(truth))}' stroke='black' stroke-dasharray='4,3'/>",
    ]
    for b in budgets:
        parts.append(f"<text x='{_fmt(px(b))}' y='{height - margin + 16}' text-anchor='middle' "
                     f"font-size='10'>{b}</text>")
    for k, est in enumerate(report.estimators):
        ec = sorted((c for c in cells if c.estimator == est), key=lambda c: c.budget)
        if not ec:
            continue
        color = _COLORS.get(est, "#555555")
        upper = [f"{_fmt(px(c.budget))},{_fmt(py(c.p90))}" for c in ec]
        lower = [f"{_fmt(px(c.budget))},{_fmt(py(c.p10))}" for c in reversed(ec)]
        parts.append(f"<polygon class='band {est}' points='{' '.join(upper + lower)}' "
                     f"fill='{color}' fill-opacity='0.2' stroke='none'/>")
        mean = [f"{_fmt(px(c.budget))},{_fmt(py(c.mean))}" for c in ec]
        parts.append(f"<polyline class='mean {est}' points='{' '.join(mean)}' fill='none' "
                     f"stroke='{color}' stroke-width='1.5'/>")
        parts.append(f"<text x='{width - margin}' y='{40 + 14 * k}' text-anchor='end' font-size='11' "
                     f"fill='{color}'>{est}</text>")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def export_report(report, path):
    """Write ``report.csv`` and ``feature_<j>.svg`` per tracked feature into ``path``.

    Returns the list of written file paths.
    """
    os.makedirs(path, exist_ok=True)
    written = []
    csv_path = os.path.join(path, "report.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(report.to_csv())
    written.append(csv_path)
    for f in report.tracked:
        svg_path = os.path.join(path, f"feature_{f}.svg")
        with open(svg_path, "w", encoding="utf-8") as fh:
            fh.write(convergence_svg(report, f))
        written.append(svg_path)
    return written
