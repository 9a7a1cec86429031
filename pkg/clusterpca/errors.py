"""Exceptions raised by ClusterPCA."""


class ClusterPcaError(Exception):
    """Base class for every error raised on purpose by the package."""


class ValidationError(ClusterPcaError, ValueError):
    """A precondition on the inputs does not hold."""


class RankDeficiencyError(ValidationError):
    """A regression design has linearly dependent columns."""

    def __init__(self, message: str, columns: list[int]):
        super().__init__(message)
        self.columns = list(columns)
