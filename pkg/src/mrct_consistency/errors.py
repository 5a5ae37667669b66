"""Exception types shared across the package."""

from __future__ import annotations


class AnalysisError(ValueError):
    """Base class for structured errors.

    ``stage`` names the pipeline stage that failed (``"data"``, ``"one_step"``,
    ``"loop"``, ``"interaction"``, ``"step2"``, ...). The CLI renders it in
    front of the message.
    """

    def __init__(self, message: str, stage: str | None = None):
        super().__init__(message)
        self.stage = stage

    def with_stage(self, stage: str) -> "AnalysisError":
        if self.stage is None:
            self.stage = stage
        return self

    def __str__(self) -> str:
        msg = super().__str__()
        return f"[{self.stage}] {msg}" if self.stage else msg


class DataError(AnalysisError):
    """Invalid or unparseable trial data."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None,
                 stage: str | None = "data"):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message, stage)
        self.row = row
        self.column = column


class RankDeficiencyError(AnalysisError):
    """Design matrix column linearly dependent on the preceding ones."""

    def __init__(self, column: int, stage: str | None = None):
        super().__init__(f"design matrix is rank deficient at column {column}", stage)
        self.column = column


class LeverageError(AnalysisError):
    """Observations that the fit interpolates exactly (leverage 1)."""

    def __init__(self, indices, stage: str | None = None):
        self.indices = tuple(int(i) for i in indices)
        super().__init__(f"leave-one-out undefined at indices {list(self.indices)} "
                         "(hat diagonal equals 1)", stage)


class DegenerateModelError(AnalysisError):
    """A statistic cannot be computed (zero variance, singular block, ...)."""
