"""Exception hierarchy. Each class carries the CLI exit code it maps to."""
from __future__ import annotations


class PsikitError(Exception):
    exit_code = 1
    code = "error"


class PreconditionError(PsikitError):
    """An operation was called outside its documented preconditions."""

    exit_code = 6
    code = "precondition"


class InputValidationError(PreconditionError):
    code = "invalid_input"


class EmptySubapertureError(PreconditionError):
    code = "empty_subaperture"


class NoVesselsError(PreconditionError):
    code = "no_vessels"


class ResolutionError(PreconditionError):
    code = "unresolvable"


class UnknownPresetError(PsikitError):
    exit_code = 3
    code = "unknown_preset"


class DatasetFormatError(PsikitError):
    exit_code = 4
    code = "malformed_dataset"


class DimensionMismatchError(PsikitError):
    exit_code = 5
    code = "dimension_mismatch"


class NumericalError(PsikitError):
    exit_code = 7
    code = "numerical"

    def __init__(self, message: str, apod: int | None = None) -> None:
        super().__init__(message)
        self.apod = apod


EXIT_CODES = {
    0: "success",
    1: "unexpected internal error",
    2: "usage error (bad flags)",
    UnknownPresetError.exit_code: "unknown preset",
    DatasetFormatError.exit_code: "malformed dataset (magic/version/kind/size)",
    DimensionMismatchError.exit_code: "dimension mismatch between inputs",
    PreconditionError.exit_code: "precondition or input validation failure (e.g. no frame pairs)",
    NumericalError.exit_code: "numerical failure (e.g. SVD did not converge)",
}
