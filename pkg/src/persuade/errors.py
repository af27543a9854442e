"""Exception types shared across the toolkit."""


class PersuadeError(Exception):
    """Base class for all toolkit errors."""


class SchemaError(PersuadeError):
    """An input file is missing required columns or is structurally broken."""


class LinkError(PersuadeError):
    """A dialogue references participants that have no profile row.

    Carries the list of broken (dialogue_id, role) links and, when available,
    the row-level ingest report so parse failures that caused the broken link
    stay visible.
    """

    def __init__(self, missing, report=None):
        self.missing = list(missing)
        self.report = report
        lines = [f"dialogue {d!r}: no profile for role {r!r}" for d, r in self.missing]
        if report is not None and report.errors:
            lines += [str(issue) for issue in report.errors]
        super().__init__("unresolved participant links:\n  " + "\n  ".join(lines))


class EmptyAnnotationError(PersuadeError):
    """An operation that needs labeled sentences found none."""


class DegenerateGroupError(PersuadeError):
    """A group comparison was requested but one group is empty."""


class UndefinedVarianceError(PersuadeError):
    """Agreement is undefined because expected disagreement is zero."""


class FormatError(PersuadeError):
    """A resource file (embeddings, lexicon) violates its line format."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(PersuadeError):
    """A model or run configuration is inconsistent."""


class NumericError(PersuadeError):
    """A numeric computation produced non-finite values."""


class SplitError(PersuadeError):
    """Not enough units to build the requested cross-validation folds."""


class TrainingDivergedError(PersuadeError):
    """Training hit a non-finite loss; carries diagnostics for the step."""

    def __init__(self, step, lr, batch_indices):
        self.step = step
        self.lr = lr
        self.batch_indices = list(batch_indices)
        super().__init__(
            f"non-finite loss at step {step} (lr={lr:g}, "
            f"batch indices {self.batch_indices})"
        )
