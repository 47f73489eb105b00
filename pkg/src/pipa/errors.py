"""Exception hierarchy shared by all pipa modules."""


class PipaError(Exception):
    """Root of every error raised by this package."""


class ParseError(PipaError):
    """Malformed concrete syntax; carries a 1-based line/column."""

    def __init__(self, message: str, line: int, col: int):
        self.message = message
        self.line = line
        self.col = col
        super().__init__(f"line {line}, column {col}: {message}")


class SemanticError(ParseError):
    """Syntactically valid text that violates a term invariant."""


class SumNotNormalized(SemanticError):
    pass


class UnguardedRecursion(SemanticError):
    pass


class LiteralMisuse(SemanticError):
    pass


class StuckConditional(PipaError):
    """An ``if`` reached head position with a non-boolean condition."""


class BudgetExceeded(PipaError):
    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


class AdversaryRangeError(PipaError):
    pass


class UnknownAdversary(PipaError):
    pass


class NotDisjoint(PipaError):
    def __init__(self, first, second):
        super().__init__(f"cones are not disjoint: {first!r} / {second!r}")
        self.pair = (first, second)
