"""Exception hierarchy.

``InputError`` subclasses describe bad user input (CLI exit code 2);
``InternalError`` subclasses signal a broken invariant inside the
toolkit itself (CLI exit code 1).
"""


class VsdError(Exception):
    pass


class InputError(VsdError, ValueError):
    pass


class InternalError(VsdError, RuntimeError):
    pass


class FileTooShort(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class MissingField(InputError):
    pass


class InvariantViolation(InputError):
    pass


class EmptyDataset(InputError):
    pass


class TooFewRecords(InputError):
    pass


class CorruptModel(InputError):
    pass


class CoordOutOfBounds(InternalError):
    pass


class PipelineMismatch(InternalError):
    pass
