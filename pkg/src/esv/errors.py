"""Exception types raised across the package."""


class EsvError(Exception):
    """Base class for all errors raised by esv."""


class InputShapeError(EsvError, ValueError):
    """An array or vector has the wrong length or shape."""


class InputDomainError(EsvError, ValueError):
    """An input value lies outside the allowed domain (e.g. NaN or inf)."""


class ModelParseError(EsvError, ValueError):
    """A model, DAG or explanation document could not be parsed.

    ``location`` points into the document (a JSON path such as
    ``trees[0].nodes[3]`` or ``line 4 column 7``).
    """

    def __init__(self, message, location=None):
        self.location = location
        if location:
            message = f"{location}: {message}"
        super().__init__(message)


class UnsupportedModelError(ModelParseError):
    """The document declares a model kind this package cannot evaluate."""


class DomainError(EsvError, ValueError):
    """A numeric argument is out of its valid range."""


class BudgetRefusedError(EsvError):
    """A computation would exceed a hard evaluation cap."""


class SingularSystemError(EsvError, ArithmeticError):
    """Regression normal equations are rank deficient.

    ``columns`` lists the feature indices found to be collinear.
    """

    def __init__(self, message, columns=()):
        self.columns = tuple(c if isinstance(c, str) else int(c) for c in columns)
        super().__init__(f"{message} (collinear columns: {list(self.columns)})")


class StructureError(EsvError, ValueError):
    """A compositional DAG is malformed."""


class RenderInputError(EsvError, ValueError):
    """Values passed to a renderer cannot be drawn."""
