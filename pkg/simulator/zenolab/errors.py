"""Exception hierarchy shared by the numerical core and the runners."""


class ZenolabError(Exception):
    """Base class for every error raised by the simulator."""


class RejectedInputError(ZenolabError, ValueError):
    """Input violates a precondition (shape, dimension, Hermiticity, zero norm...)."""


class BranchCapError(ZenolabError):
    """An enumeration would exceed its configured cap."""

    def __init__(self, what: str, count: int, cap: int):
        self.what = what
        self.count = count
        self.cap = cap
        super().__init__(f"{what}: {count} exceeds cap {cap}")


class NumericFailure(ZenolabError):
    """An internal numeric invariant broke."""
