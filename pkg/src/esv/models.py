"""Black-box models with a uniform evaluation interface.

Three kinds are bundled: additive tree ensembles, linear models and a small
closed catalog of analytic functions (max, product, sum of two inputs).
All models are immutable once built and map a real feature vector of length
``n_features`` to a single float.

Model files are UTF-8 JSON::

    {"kind": "linear", "n_features": 2, "weights": [2, -1], "intercept": 0.5}
    {"kind": "tree_ensemble", "n_features": 1, "base_score": 0.0,
     "trees": [{"nodes": [{"feature": 0, "threshold": 0.5, "left": 1, "right": 2},
                          {"leaf": 0.0}, {"leaf": 1.0}]}]}
    {"kind": "analytic", "n_features": 2, "expr": "max", "args": [0, 1]}
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputDomainError, InputShapeError, ModelParseError, UnsupportedModelError

__all__ = [
    "Model",
    "LinearModel",
    "Tree",
    "TreeEnsemble",
    "AnalyticModel",
    "evaluate",
    "load_model",
    "loads_model",
    "model_to_dict",
    "save_model",
    "check_matrix",
]

ANALYTIC_EXPRESSIONS = ("max", "product", "sum")


def check_matrix(X, n_features):
    """Validate and return ``X`` as a 2-d float array with ``n_features`` columns."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != n_features:
        raise InputShapeError(
            f"expected input with {n_features} features, got shape {np.shape(X)}"
        )
    if not np.all(np.isfinite(X)):
        raise InputDomainError("input contains non-finite values")
    return X


class Model:
    """Base class: subclasses implement ``_predict`` on a validated 2-d array."""

    kind = None
    n_features = 0

    def predict(self, X):
        """Evaluate the model on each row of ``X``; returns a 1-d float array."""
        return self._predict(check_matrix(X, self.n_features))

    def _predict(self, X):
        raise NotImplementedError

    def __call__(self, x):
        return evaluate(self, x)


def evaluate(model, x):
    """Evaluate ``model`` on one feature vector ``x``.

    Raises :class:`InputShapeError` when ``len(x)`` differs from
    ``model.n_features`` and :class:`InputDomainError` on non-finite entries.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InputShapeError(f"expected a 1-d feature vector, got shape {x.shape}")
    return float(model.predict(x[None, :])[0])


@dataclass(frozen=True, eq=False)
class LinearModel(Model):
    weights: np.ndarray
    intercept: float = 0.0
    kind = "linear"

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).ravel()
        if w.size < 1:
            raise InputShapeError("a linear model needs at least one weight")
        if not np.all(np.isfinite(w)) or not math.isfinite(self.intercept):
            raise InputDomainError("linear model parameters must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "intercept", float(self.intercept))

    @property
    def n_features(self):
        return self.weights.size

    def _predict(self, X):
        # row-wise reduction: a row's output does not depend on its batch
        return self.intercept + (X * self.weights).sum(axis=1)


@dataclass(frozen=True, eq=False)
class Tree:
    """One binary regression tree stored as parallel node arrays.

    ``feature[i] == -1`` marks a leaf whose output is ``value[i]``. Internal
    nodes route a row to ``left[i]`` when ``x[feature[i]] < threshold[i]``
    and to ``right[i]`` otherwise (ties go right). Node 0 is the root.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def __post_init__(self):
        for name, dtype in (("feature", np.int64), ("threshold", float),
                            ("left", np.int64), ("right", np.int64), ("value", float)):
            arr = np.array(getattr(self, name), dtype=dtype).ravel()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = self.feature.size
        if n == 0:
            raise InputShapeError("a tree needs at least one node")
        if any(getattr(self, a).size != n for a in ("threshold", "left", "right", "value")):
            raise InputShapeError("tree node arrays differ in length")
        _check_tree_structure(self.feature, self.left, self.right)

    @property
    def n_nodes(self):
        return self.feature.size

    def max_feature(self):
        return int(self.feature.max())

    def leaf_paths(self):
        """Yield ``(leaf_index, [(feature, threshold, goes_left), ...])`` per leaf."""
        stack = [(0, [])]
        while stack:
            node, path = stack.pop()
            if self.feature[node] < 0:
                yield node, path
                continue
            f, t = int(self.feature[node]), float(self.threshold[node])
            stack.append((int(self.right[node]), path + [(f, t, False)]))
            stack.append((int(self.left[node]), path + [(f, t, True)]))

    def predict(self, X):
        idx = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        active = self.feature[idx] >= 0
        while active.any():
            r = rows[active]
            node = idx[r]
            go_left = X[r, self.feature[node]] < self.threshold[node]
            idx[r] = np.where(go_left, self.left[node], self.right[node])
            active[r] = self.feature[idx[r]] >= 0
        return self.value[idx]


def _check_tree_structure(feature, left, right):
    n = feature.size
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    while stack:
        node = stack.pop()
        if seen[node]:
            raise InputShapeError(f"node {node} is reachable twice; tree contains a cycle or shared child")
        seen[node] = True
        if feature[node] >= 0:
            for child in (left[node], right[node]):
                if not 0 < child < n:
                    raise InputShapeError(f"node {node} has child index {child} out of range")
                stack.append(int(child))
    if not seen.all():
        unreachable = np.flatnonzero(~seen).tolist()
        raise InputShapeError(f"nodes {unreachable} are not reachable from the root")


@dataclass(frozen=True, eq=False)
class TreeEnsemble(Model):
    """Sum of regression trees plus a constant ``base_score``."""

    trees: tuple
    n_features: int
    base_score: float = 0.0
    kind = "tree_ensemble"

    def __post_init__(self):
        object.__setattr__(self, "trees", tuple(self.trees))
        object.__setattr__(self, "base_score", float(self.base_score))
        object.__setattr__(self, "n_features", int(self.n_features))
        if self.n_features < 1:
            raise InputShapeError("n_features must be at least 1")
        if not math.isfinite(self.base_score):
            raise InputDomainError("base_score must be finite")
        for i, tree in enumerate(self.trees):
            if tree.max_feature() >= self.n_features:
                raise InputShapeError(
                    f"tree {i} splits on feature {tree.max_feature()} but n_features={self.n_features}"
                )

    def _predict(self, X):
        out = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            out = out + tree.predict(X)
        return out

    def used_features(self):
        """Sorted list of feature indices referenced by at least one split."""
        used = set()
        for tree in self.trees:
            used.update(int(f) for f in tree.feature if f >= 0)
        return sorted(used)


@dataclass(frozen=True, eq=False)
class AnalyticModel(Model):
    """``expr(x[args[0]], x[args[1]])`` for ``expr`` in {max, product, sum}."""

    expr: str
    args: tuple
    n_features: int
    kind = "analytic"

    def __post_init__(self):
        if self.expr not in ANALYTIC_EXPRESSIONS:
            raise UnsupportedModelError(
                f"unknown analytic expression {self.expr!r}; expected one of {ANALYTIC_EXPRESSIONS}"
            )
        args = tuple(int(a) for a in self.args)
        if len(args) != 2:
            raise InputShapeError("analytic expressions take exactly two feature indices")
        if any(not 0 <= a < self.n_features for a in args):
            raise InputShapeError(f"argument indices {args} out of range for n_features={self.n_features}")
        object.__setattr__(self, "args", args)

    def _predict(self, X):
        a, b = X[:, self.args[0]], X[:, self.args[1]]
        if self.expr == "max":
            return np.maximum(a, b)
        if self.expr == "product":
            return a * b
        return a + b


# -- serialization ---------------------------------------------------------


def _require(doc, key, where, types=None):
    if not isinstance(doc, dict):
        raise ModelParseError("expected a JSON object", where or "$")
    if key not in doc:
        raise ModelParseError(f"missing required field {key!r}", where or "$")
    value = doc[key]
    if types is not None and (not isinstance(value, types) or isinstance(value, bool)):
        raise ModelParseError(f"field {key!r} has the wrong type", f"{where}.{key}" if where else key)
    return value


def _real(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ModelParseError("expected a number", where)
    if not math.isfinite(value):
        raise ModelParseError("expected a finite number", where)
    return float(value)


def _parse_tree(doc, where):
    nodes = _require(doc, "nodes", where, list)
    n = len(nodes)
    feature = np.full(n, -1, dtype=np.int64)
    threshold = np.zeros(n)
    left = np.zeros(n, dtype=np.int64)
    right = np.zeros(n, dtype=np.int64)
    value = np.zeros(n)
    for i, node in enumerate(nodes):
        loc = f"{where}.nodes[{i}]"
        if not isinstance(node, dict):
            raise ModelParseError("expected a JSON object", loc)
        if "leaf" in node:
            value[i] = _real(node["leaf"], f"{loc}.leaf")
            continue
        feature[i] = _require(node, "feature", loc, int)
        if feature[i] < 0:
            raise ModelParseError("feature index must be non-negative", f"{loc}.feature")
        threshold[i] = _real(_require(node, "threshold", loc), f"{loc}.threshold")
        left[i] = _require(node, "left", loc, int)
        right[i] = _require(node, "right", loc, int)
    try:
        return Tree(feature, threshold, left, right, value)
    except InputShapeError as exc:
        raise ModelParseError(str(exc), where) from exc


def model_from_dict(doc):
    """Build a :class:`Model` from an already-decoded JSON document."""
    kind = _require(doc, "kind", "", str)
    n_features = _require(doc, "n_features", "", int)
    if n_features < 1:
        raise ModelParseError("n_features must be at least 1", "n_features")
    if kind == "linear":
        weights = _require(doc, "weights", "", list)
        w = [_real(v, f"weights[{i}]") for i, v in enumerate(weights)]
        if len(w) != n_features:
            raise ModelParseError(f"expected {n_features} weights, got {len(w)}", "weights")
        return LinearModel(w, _real(_require(doc, "intercept", ""), "intercept"))
    if kind == "tree_ensemble":
        trees = _require(doc, "trees", "", list)
        parsed = [_parse_tree(t, f"trees[{i}]") for i, t in enumerate(trees)]
        for i, tree in enumerate(parsed):
            if tree.max_feature() >= n_features:
                raise ModelParseError(
                    f"split on feature {tree.max_feature()} but n_features={n_features}", f"trees[{i}]"
                )
        return TreeEnsemble(parsed, n_features, _real(doc.get("base_score", 0.0), "base_score"))
    if kind == "analytic":
        expr = _require(doc, "expr", "", str)
        args = _require(doc, "args", "", list)
        if len(args) != 2 or not all(isinstance(a, int) and not isinstance(a, bool) for a in args):
            raise ModelParseError("expected two integer feature indices", "args")
        try:
            return AnalyticModel(expr, args, n_features)
        except InputShapeError as exc:
            raise ModelParseError(str(exc), "args") from exc
    raise UnsupportedModelError(f"unsupported model kind {kind!r}", "kind")


def loads_model(text):
    """Parse a model document given as a JSON string."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelParseError(exc.msg, f"line {exc.lineno} column {exc.colno}") from exc
    return model_from_dict(doc)


def load_model(path):
    """Read a model file from ``path``."""
    with open(path, encoding="utf-8") as fh:
        return loads_model(fh.read())


def model_to_dict(model):
    """Inverse of :func:`model_from_dict`."""
    if isinstance(model, LinearModel):
        return {"kind": "linear", "n_features": model.n_features,
                "weights": model.weights.tolist(), "intercept": model.intercept}
    if isinstance(model, AnalyticModel):
        return {"kind": "analytic", "n_features": model.n_features,
                "expr": model.expr, "args": list(model.args)}
    if isinstance(model, TreeEnsemble):
        trees = []
        for tree in model.trees:
            nodes = []
            for i in range(tree.n_nodes):
                if tree.feature[i] < 0:
                    nodes.append({"leaf": float(tree.value[i])})
                else:
                    nodes.append({"feature": int(tree.feature[i]),
                                  "threshold": float(tree.threshold[i]),
                                  "left": int(tree.left[i]), "right": int(tree.right[i])})
            trees.append({"nodes": nodes})
        return {"kind": "tree_ensemble", "n_features": model.n_features,
                "base_score": model.base_score, "trees": trees}
    raise UnsupportedModelError(f"cannot serialize {type(model).__name__}")


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=1)
        fh.write("\n")
