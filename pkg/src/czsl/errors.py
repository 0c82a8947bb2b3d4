"""Exception types shared across the package."""


class CzslError(Exception):
    """Base class for all errors raised by this package."""


class SplitError(CzslError):
    """Malformed or inconsistent split files / split specification."""


class FeatureFileError(CzslError):
    """Malformed sample feature file."""


class GraphError(CzslError):
    """Graph construction or normalization failure."""


class EmbeddingError(CzslError):
    """Word-vector loading or lookup failure."""


class ModelError(CzslError):
    """Inconsistent model configuration or shapes."""


class EvalError(CzslError):
    """Degenerate or inconsistent evaluation input."""
