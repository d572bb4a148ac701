"""Exception types raised across the package.

Every error that callers are expected to branch on subclasses
:class:`SplitSenseError`, so ``except SplitSenseError`` catches any
validation failure while leaving programming errors (TypeError etc.)
alone.
"""


class SplitSenseError(ValueError):
    """Base class for all validation and precondition failures."""


# --- dataset ---------------------------------------------------------------

class MissingUnitError(SplitSenseError):
    """A pair id does not have exactly two unit rows."""


class TreatmentViolationError(SplitSenseError):
    """Treatment indicators within a pair do not sum to one."""


class NonNumericOutcomeError(SplitSenseError):
    """An outcome column contains a non-numeric or missing value."""


class EmptyFileError(SplitSenseError):
    """The input file has a header but no data rows, or no content at all."""


class DegenerateSplitError(SplitSenseError):
    """A split fraction leaves the planning or analysis part empty."""


# --- senswilcox ------------------------------------------------------------

class EmptyInputError(SplitSenseError):
    """A difference vector with no entries was supplied."""


class NonFiniteValueError(SplitSenseError):
    """NaN or infinity encountered where finite values are required."""


class ExactLimitExceededError(SplitSenseError):
    """Too many pairs for the exact tail distribution; use the normal one."""


class InvalidGammaError(SplitSenseError):
    """Bias bound must satisfy gamma >= 1."""


class InvalidAlphaError(SplitSenseError):
    """Significance level must lie strictly between 0 and 1."""


class TooFewPairsError(SplitSenseError):
    """At least three pairs are required for the power approximation."""


class NonPositiveVarianceError(SplitSenseError):
    """Asymptotic variance of the statistic came out negative."""


class BoundaryP1Error(SplitSenseError):
    """Concordance probability of 0 or 1 has no finite sensitivity value."""


# --- splitopt --------------------------------------------------------------

class DegenerateEtaError(SplitSenseError):
    """The affected fraction rounds down to zero outcomes."""


class ZeroVarianceError(SplitSenseError):
    """Not enough positive-variance outcomes to place synthetic effects on."""


class EmptyGridError(SplitSenseError):
    """An empty candidate grid of split fractions was supplied."""


class AllDegenerateError(SplitSenseError):
    """Every grid fraction violates the split preconditions for this size."""


# --- simbench --------------------------------------------------------------

class InsufficientUnitsError(SplitSenseError):
    """Fewer treated or control units than the requested number of pairs."""


class ConfigInvalidError(SplitSenseError):
    """A configuration field is out of range or inconsistent."""
