"""Exception types shared across the package."""


class HflError(Exception):
    """Base class for all package errors."""


class ConfigError(HflError):
    """Invalid or malformed configuration."""


class GeometryInfeasible(HflError):
    """Requested room count cannot tile the footprint under the parameters."""


class SchemaMismatch(HflError):
    """Dataset directory does not match the expected schema."""


class DegenerateImage(HflError):
    """Image has no content pixels to operate on."""


class PgmFormatError(HflError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NonPositiveTarget(HflError):
    """Target value must be strictly positive before the log transform."""


class UnknownVariable(HflError):
    """Variable name not present in the listing schema."""


class SingularDesign(HflError):
    def __init__(self, columns):
        super().__init__(f"design matrix is singular; offending columns: {sorted(columns)}")
        self.columns = list(columns)


class ConstantColumn(HflError):
    """Column has zero variance where variation is required."""


class ColumnMismatch(HflError):
    """Prediction frame columns do not match the fitted columns."""


class EmptyInput(HflError):
    """Operation requires a nonempty input."""


class NonPositiveBase(HflError):
    """Baseline error must be strictly positive."""


class ShapeMismatch(HflError):
    """Tensor shape incompatible with the model specification."""


class DivergenceDetected(HflError):
    def __init__(self, epoch):
        super().__init__(f"training loss became non-finite at epoch {epoch}")
        self.epoch = epoch


class TooFewListings(HflError):
    """Not enough listings to build the requested fold plan."""


class CollinearSentiment(HflError):
    """Sentiment scores are constant and cannot enter the regression."""


class MisalignedPredictions(HflError):
    """Prediction maps do not cover the same listing ids."""


class SubsetTooSmall(HflError):
    """Subset predicate selected fewer listings than the viable minimum."""
