"""Exception types raised across the package."""


class PosetreeError(Exception):
    """Base class for all package errors."""


class IncompatibleSplits(PosetreeError):
    """Two splits offered for one tree cannot coexist in a tree."""


class LeafAbsent(PosetreeError, KeyError):
    pass


class SplitAbsent(PosetreeError, KeyError):
    pass


class UniverseTooLarge(PosetreeError):
    """An exhaustive routine was asked to run beyond its size guard."""


class NotCoveringPair(PosetreeError):
    pass


class StepLimitExceeded(PosetreeError):
    """The greedy estimator hit its round cap before terminating.

    The partial result is attached as ``.partial`` so callers can still
    inspect where the walk stopped.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class EmptySample(PosetreeError):
    pass


class DuplicateLeaf(PosetreeError):
    pass


class ParseError(PosetreeError):
    """Malformed Newick text.

    ``offset`` is the byte offset into the statement where parsing failed;
    ``line`` is set when the error came from a multi-line sample file.
    """

    def __init__(self, message, offset=None, line=None, errors=None):
        self.offset = offset
        self.line = line
        self.errors = errors or []
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"offset {offset}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.message = message
