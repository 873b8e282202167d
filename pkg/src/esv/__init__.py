"""Expectation Shapley values for explaining individual model predictions."""

__version__ = "0.1.0"

from .errors import (
    BudgetRefusedError,
    DomainError,
    EsvError,
    InputDomainError,
    InputShapeError,
    ModelParseError,
    RenderInputError,
    SingularSystemError,
    StructureError,
    UnsupportedModelError,
)
from .estimators import (
    exact_shapley,
    kernel_shap_solve,
    lime_baseline_solve,
    permutation_estimate,
    sample_coalitions,
    shapley_kernel_weight,
)
from .explanation import Explanation, load_explanation
from .masking import FeatureGrouping, SetFunctionCache, TableSetFunction
from .models import AnalyticModel, LinearModel, Tree, TreeEnsemble, load_model, model_from_dict

__all__ = [
    "__version__",
    "AnalyticModel",
    "BudgetRefusedError",
    "DomainError",
    "EsvError",
    "Explanation",
    "FeatureGrouping",
    "InputDomainError",
    "InputShapeError",
    "LinearModel",
    "ModelParseError",
    "RenderInputError",
    "SetFunctionCache",
    "SingularSystemError",
    "StructureError",
    "TableSetFunction",
    "Tree",
    "TreeEnsemble",
    "UnsupportedModelError",
    "exact_shapley",
    "kernel_shap_solve",
    "lime_baseline_solve",
    "load_explanation",
    "load_model",
    "model_from_dict",
    "permutation_estimate",
    "sample_coalitions",
    "shapley_kernel_weight",
]
