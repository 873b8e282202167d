"""DeepLIFT-style attribution on small compositional functions.

A :class:`MicroDag` is a topologically ordered list of nodes (inputs, affine
maps, pairwise max, sums) with one output. :func:`deeplift_attribute`
propagates differences from a reference input through the graph, linearizing
each max node by handing its whole change to the argument that is maximal at
``x``. :func:`es_attribute_dag` computes exact Shapley values of the same
graph treated as a black box with the reference as the only background row,
and :func:`compare_rules` lines the two up.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ModelParseError, StructureError
from .estimators import exact_shapley
from .masking import SetFunctionCache
from .models import Model, check_matrix

__all__ = [
    "Node",
    "MicroDag",
    "ContributionVector",
    "Comparison",
    "deeplift_attribute",
    "es_attribute_dag",
    "compare_rules",
    "load_dag",
]

OPS = ("input", "linear", "max", "sum")


@dataclass(frozen=True)
class Node:
    op: str
    parents: tuple = ()
    weights: tuple = ()
    bias: float = 0.0


class MicroDag(Model):
    """Small feed-forward graph evaluated as a scalar model.

    Input nodes take the model's features in the order they appear.

    >>> dag = MicroDag([Node("input"), Node("input"), Node("max", (0, 1))], output=2)
    >>> dag([1.0, 3.0])
    3.0
    """

    kind = "dag"

    def __init__(self, nodes, output=None):
        self.nodes = tuple(n if isinstance(n, Node) else Node(**n) for n in nodes)
        self.output = len(self.nodes) - 1 if output is None else int(output)
        self._validate()
        self.inputs = tuple(i for i, n in enumerate(self.nodes) if n.op == "input")
        self.n_features = len(self.inputs)
        self._input_pos = {node: j for j, node in enumerate(self.inputs)}
        self._ancestors = self._input_ancestors()

    def _validate(self):
        if not self.nodes:
            raise StructureError("a DAG needs at least one node")
        if not 0 <= self.output < len(self.nodes):
            raise StructureError(f"output index {self.output} out of range")
        if not any(n.op == "input" for n in self.nodes):
            raise StructureError("a DAG needs at least one input node")
        for i, n in enumerate(self.nodes):
            if n.op not in OPS:
                raise StructureError(f"node {i}: unknown op {n.op!r}")
            if any(not 0 <= p < i for p in n.parents):
                raise StructureError(f"node {i}: parents must precede the node (got {list(n.parents)})")
            if n.op == "input" and n.parents:
                raise StructureError(f"node {i}: input nodes take no parents")
            if n.op == "max" and len(n.parents) != 2:
                raise StructureError(f"node {i}: max takes exactly two parents")
            if n.op in ("linear", "sum") and not n.parents:
                raise StructureError(f"node {i}: {n.op} needs at least one parent")
            if n.op == "linear" and len(n.weights) != len(n.parents):
                raise StructureError(f"node {i}: {len(n.weights)} weights for {len(n.parents)} parents")
            if not all(math.isfinite(v) for v in (*n.weights, n.bias)):
                raise StructureError(f"node {i}: parameters must be finite")

    def _input_ancestors(self):
        anc = []
        for i, n in enumerate(self.nodes):
            if n.op == "input":
                anc.append(frozenset([self._input_pos[i]]))
            else:
                anc.append(frozenset().union(*(anc[p] for p in n.parents)))
        return anc

    def activations(self, X):
        """All node activations for each row of ``X``; shape ``(n_nodes, n_rows)``."""
        X = check_matrix(X, self.n_features)
        acts = np.empty((len(self.nodes), X.shape[0]))
        for i, n in enumerate(self.nodes):
            if n.op == "input":
                acts[i] = X[:, self._input_pos[i]]
            elif n.op == "linear":
                acts[i] = n.bias + sum(w * acts[p] for w, p in zip(n.weights, n.parents))
            elif n.op == "max":
                acts[i] = np.maximum(acts[n.parents[0]], acts[n.parents[1]])
            else:
                acts[i] = sum(acts[p] for p in n.parents)
        return acts

    def _predict(self, X):
        return self.activations(X)[self.output]

    def has_max(self):
        return any(n.op == "max" for n in self.nodes)

    def to_dict(self):
        nodes = []
        for n in self.nodes:
            d = {"op": n.op, "parents": list(n.parents)}
            if n.op == "linear":
                d.update(weights=list(n.weights), bias=n.bias)
            nodes.append(d)
        return {"nodes": nodes, "output": self.output}


@dataclass(frozen=True, eq=False)
class ContributionVector:
    """Per-input contributions ``C`` with ``f(reference) + sum(C) == f(x)``."""

    C: np.ndarray
    reference: np.ndarray
    output: float
    reference_output: float

    @property
    def residual(self):
        return self.output - self.reference_output - float(np.sum(self.C))


def _check_pair(dag, x, reference):
    x = check_matrix(x, dag.n_features)
    reference = check_matrix(reference, dag.n_features)
    if x.shape[0] != 1 or reference.shape[0] != 1:
        raise StructureError("x and reference must be single feature vectors")
    return x[0], reference[0]


def deeplift_attribute(dag, x, reference):
    """Propagate ``f(x) - f(reference)`` back to the inputs.

    Linear and sum nodes split their change exactly along their parents. A
    max node gives its entire change to the parent that attains the max at
    ``x`` (split equally on ties); that parent's own input contributions are
    rescaled to carry it. If that parent did not move from its reference
    value the change is spread equally over the inputs it depends on.
    """
    x, reference = _check_pair(dag, x, reference)
    acts = dag.activations(np.vstack([x, reference]))
    a, a0 = acts[:, 0], acts[:, 1]
    delta = a - a0
    P = dag.n_features
    contrib = np.zeros((len(dag.nodes), P))
    for i, n in enumerate(dag.nodes):
        if n.op == "input":
            contrib[i, dag._input_pos[i]] = delta[i]
        elif n.op == "linear":
            for w, p in zip(n.weights, n.parents):
                contrib[i] += w * contrib[p]
        elif n.op == "sum":
            for p in n.parents:
                contrib[i] += contrib[p]
        else:
            winners = [p for p in n.parents if a[p] == a[i]]
            share = delta[i] / len(winners)
            for p in winners:
                if delta[p] != 0.0:
                    contrib[i] += contrib[p] * (share / delta[p])
                else:
                    anc = sorted(dag._ancestors[p])
                    contrib[i, anc] += share / len(anc)
    return ContributionVector(contrib[dag.output], reference, float(a[dag.output]),
                              float(a0[dag.output]))


def es_attribute_dag(dag, x, reference):
    """Exact expectation Shapley values of ``dag`` with ``reference`` as background."""
    x, reference = _check_pair(dag, x, reference)
    explanation = exact_shapley(SetFunctionCache(dag, x, reference[None, :]))
    return explanation


@dataclass(frozen=True, eq=False)
class Comparison:
    """Side-by-side DeepLIFT and Shapley attributions for one input pair."""

    deeplift: np.ndarray
    es: np.ndarray
    output: float
    reference_output: float
    zero_reference: bool
    names: list = field(default_factory=list)

    @property
    def diff(self):
        return self.deeplift - self.es

    @property
    def residual(self):
        """``f(x) - f(reference)``, the total both methods must distribute."""
        return self.output - self.reference_output

    def rows(self):
        return [
            {"input": j, "deeplift": float(d), "es": float(e), "diff": float(d - e)}
            for j, (d, e) in enumerate(zip(self.deeplift, self.es))
        ]

    def dumps(self):
        return json.dumps(self.rows(), indent=2) + "\n"

    def table(self):
        lines = [f"{'input':>8} {'deeplift':>12} {'es':>12} {'diff':>12}"]
        for name, r in zip(self.names, self.rows()):
            lines.append(f"{name:>8} {r['deeplift']:>12.6g} {r['es']:>12.6g} {r['diff']:>12.6g}")
        lines.append(f"{'sum':>8} {self.deeplift.sum():>12.6g} {self.es.sum():>12.6g}"
                     f"   f(x) - f(ref) = {self.residual:.6g}")
        if self.zero_reference:
            lines.append("reference is all zeros: DeepLIFT here coincides with the "
                         "layer-wise relevance propagation setting")
        return "\n".join(lines)


def compare_rules(dag, x, reference):
    """Run both attribution methods and report their per-input differences."""
    x, reference = _check_pair(dag, x, reference)
    dl = deeplift_attribute(dag, x, reference)
    es = es_attribute_dag(dag, x, reference)
    names = [f"x{j}" for j in range(dag.n_features)]
    return Comparison(dl.C, es.phi, dl.output, dl.reference_output,
                      bool(np.all(reference == 0)), names)


def load_dag(path):
    """Read a DAG file: ``{"nodes": [{"op", "parents", "weights", "bias"}], "output": int}``."""
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelParseError(exc.msg, f"{path}: line {exc.lineno} column {exc.colno}") from None
    return dag_from_dict(doc)


def dag_from_dict(doc):
    if not isinstance(doc, dict) or not isinstance(doc.get("nodes"), list):
        raise StructureError("expected an object with a 'nodes' list")
    nodes = []
    for i, d in enumerate(doc["nodes"]):
        if not isinstance(d, dict) or "op" not in d:
            raise StructureError(f"node {i}: expected an object with an 'op' field")
        try:
            nodes.append(Node(str(d["op"]), tuple(int(p) for p in d.get("parents", [])),
                              tuple(float(w) for w in d.get("weights", [])),
                              float(d.get("bias", 0.0))))
        except (TypeError, ValueError) as exc:
            raise StructureError(f"node {i}: {exc}") from None
    output = doc.get("output")
    if output is not None and (isinstance(output, bool) or not isinstance(output, int)):
        raise StructureError("'output' must be a node index")
    return MicroDag(nodes, output)
