"""Exception types shared across the package."""
from __future__ import annotations


class PrepSearchError(Exception):
    """Base class for every package-specific failure."""


class ConfigError(PrepSearchError):
    """A config file or config value is malformed or inconsistent."""


class DataError(PrepSearchError):
    """A dataset violates an ingestion invariant."""


class MissingLabelColumn(DataError):
    pass


class EmptyDataset(DataError):
    pass


class UnparseableRow(DataError):
    def __init__(self, row_index: int, message: str):
        super().__init__(f"data row {row_index}: {message}")
        self.row_index = row_index


class DegenerateSplit(DataError):
    """A split would leave the train or validation side empty."""


class SchemaMismatch(PrepSearchError):
    """A fitted operator was applied to data with a different column layout."""


class PipelineExecutionFailure(PrepSearchError):
    """A pipeline step produced non-finite (inf) numeric cells."""


class NonFiniteInput(PrepSearchError):
    """The learner received a design matrix with non-finite entries."""


class SearchSpaceTooLarge(PrepSearchError):
    """An exhaustive sweep would exceed its evaluation cap."""


class TooManyPlayers(PrepSearchError):
    """Exact Shapley requested for a game too large to enumerate."""


class EmptyCategory(PrepSearchError):
    """A bandit was requested for a category with no member operators."""


class UnknownArm(PrepSearchError):
    """A bandit update referenced an operator outside the category."""


class ZeroVariance(PrepSearchError):
    """Correlation requested for a constant sequence."""


class InsufficientData(PrepSearchError):
    """Too few points to support the requested statistic."""


class UnknownVariant(PrepSearchError):
    """An ablation or method name is not recognized."""
