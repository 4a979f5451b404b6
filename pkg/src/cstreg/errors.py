"""Exception types shared across the package."""


class CstError(Exception):
    """Base class for numerical/statistical failures raised by cstreg."""


class DegenerateWindow(CstError):
    """A local fit has fewer than two positively weighted distinct covariates."""


class NonPositiveThreshold(CstError):
    """The tail threshold order statistic is not strictly positive."""


class BelowThresholdLevel(CstError):
    """A tail prediction was requested below the fitted threshold level."""


class NonPositiveQuantile(CstError):
    """A fitted quantile is non-positive where a logarithm or scaling is required."""


class SeparationSuspected(CstError):
    """Logistic fitting failed to converge, typically due to separation."""


class UndefinedSkill(CstError):
    """Skill score undefined because the reference score is zero."""


class EvaluationError(CstError):
    """A user-supplied function returned a non-finite value."""


class SchemaError(ValueError):
    """Input data or configuration violates the documented schema."""


class ModelFormatError(ValueError):
    """A serialized model document cannot be parsed or fails validation."""
