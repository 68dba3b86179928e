"""Exception types shared across the package.

Everything raised on bad user input or violated preconditions derives from
KilnloopError so the CLI can map it to a user-error exit code; anything else
escaping is a bug.
"""

from __future__ import annotations


class KilnloopError(Exception):
    """Base class for all expected failures."""


class InvalidArgument(KilnloopError):
    pass


class UnknownParameter(KilnloopError):
    pass


class UnknownLevel(KilnloopError):
    pass


class GridTooLarge(KilnloopError):
    def __init__(self, cardinality: int, limit: int):
        super().__init__(f"grid has {cardinality} points, exceeds limit {limit}")
        self.cardinality = cardinality
        self.limit = limit


class SchemaMismatch(KilnloopError):
    pass


class ParseError(KilnloopError):
    def __init__(self, row: int, column: str, detail: str = ""):
        msg = f"row {row}, column {column!r}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.row = row
        self.column = column


class EmptyDataset(KilnloopError):
    pass


class InsufficientData(KilnloopError):
    pass


class LengthMismatch(KilnloopError):
    pass


class EmptyInput(KilnloopError):
    pass


class InvalidHyperparams(KilnloopError):
    pass


class SpaceMismatch(KilnloopError):
    pass


class InfeasibleSpace(KilnloopError):
    pass


class OpenIterationExists(KilnloopError):
    pass


class NoOpenIteration(KilnloopError):
    pass


class UnknownProposal(KilnloopError):
    pass


class DuplicateResult(KilnloopError):
    pass


class MissingResult(KilnloopError):
    def __init__(self, missing_ranks):
        ranks = sorted(missing_ranks)
        super().__init__(f"no result row for rank(s) {ranks}")
        self.missing_ranks = ranks


class NoClosedIterations(KilnloopError):
    pass


class StateLocked(KilnloopError):
    pass
