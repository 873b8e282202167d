"""The additive explanation of one prediction and its JSON file format."""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputShapeError, ModelParseError

__all__ = ["Explanation", "load_explanation"]


@dataclass(frozen=True, eq=False)
class Explanation:
    """Base value plus one attribution per interpretable feature.

    The explained output is approximated by ``base_value + sum(phi)``.
    ``budget`` counts the distinct set-function evaluations the estimator
    consumed. ``extra`` holds estimator-specific settings such as the chosen
    lasso penalty or LIME kernel width.
    """

    base_value: float
    phi: np.ndarray
    estimator: str = ""
    budget: int = 0
    seed: int = 0
    feature_names: tuple = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float)
        if phi.ndim != 1:
            raise InputShapeError(f"phi must be one-dimensional, got shape {phi.shape}")
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "base_value", float(self.base_value))
        if self.feature_names is not None:
            names = tuple(str(n) for n in self.feature_names)
            if len(names) != phi.size:
                raise InputShapeError(f"{len(names)} feature names for {phi.size} attributions")
            object.__setattr__(self, "feature_names", names)

    @property
    def M(self):
        return self.phi.size

    @property
    def output(self):
        """``base_value + sum(phi)``: the prediction the explanation accounts for."""
        return self.base_value + float(np.sum(self.phi))

    def names(self):
        if self.feature_names is not None:
            return list(self.feature_names)
        return [f"x{i}" for i in range(self.M)]

    def with_names(self, names):
        return Explanation(self.base_value, self.phi, self.estimator, self.budget,
                           self.seed, names, dict(self.extra))

    def to_dict(self):
        return {
            "base_value": self.base_value,
            "phi": self.phi.tolist(),
            "feature_names": self.names(),
            "estimator": self.estimator,
            "budget": int(self.budget),
            "seed": int(self.seed),
        }

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ModelParseError("expected a JSON object", "$")
        for key in ("base_value", "phi"):
            if key not in doc:
                raise ModelParseError(f"missing required field {key!r}", "$")
        phi = doc["phi"]
        if not isinstance(phi, list):
            raise ModelParseError("expected a list of numbers", "phi")
        values = [doc["base_value"], *phi]
        for i, v in enumerate(values):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ModelParseError("expected a finite number", "base_value" if i == 0 else f"phi[{i - 1}]")
        names = doc.get("feature_names")
        if names is not None and (not isinstance(names, list) or len(names) != len(phi)):
            raise ModelParseError("feature_names must list one name per attribution", "feature_names")
        return cls(doc["base_value"], phi, str(doc.get("estimator", "")),
                   int(doc.get("budget", 0)), int(doc.get("seed", 0)), names)


def load_explanation(path):
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelParseError(exc.msg, f"{path}: line {exc.lineno} column {exc.colno}") from None
    return Explanation.from_dict(doc)
