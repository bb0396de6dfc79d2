"""Exception hierarchy shared across the package."""

from __future__ import annotations


class JengaError(Exception):
    """Base class for all package errors."""


class EmptyMask(JengaError):
    pass


class DimensionMismatch(JengaError):
    pass


class SlotMismatch(JengaError):
    pass


class EmptySampleSet(JengaError):
    pass


class BackendUnavailable(JengaError):
    pass


class MalformedResponse(JengaError):
    pass


class PartialBatch(JengaError):
    """An inpainting backend returned fewer images than requested.

    The images that did arrive are kept on ``images`` so callers can decide
    whether to score with a smaller sample.
    """

    def __init__(self, images, requested: int):
        self.images = list(images)
        self.requested = requested
        super().__init__(f"inpainting returned {len(self.images)} of {requested} images")


class InfeasibleSpec(JengaError):
    pass


class UnknownBlock(JengaError):
    pass


class NotAPermutation(JengaError):
    pass


class ManifestError(JengaError):
    def __init__(self, message: str, case_id: str | None = None, field: str | None = None):
        self.case_id = case_id
        self.field = field
        where = ""
        if case_id is not None:
            where = f"case {case_id!r}"
            if field is not None:
                where += f", field {field!r}"
            where += ": "
        super().__init__(where + message)


class MethodFailure(JengaError):
    pass
