"""Exception hierarchy shared by all drise modules."""


class DriseError(Exception):
    """Base class for every error raised by this package."""


class NotSymmetric(DriseError, ValueError):
    pass


class NotPsd(DriseError, ValueError):
    pass


class SingularMatrix(DriseError, ValueError):
    pass


class RankDeficient(DriseError, ValueError):
    """Raised when rank(C_k G_{k-1}) < p, i.e. the unknown input is not observable."""

    def __init__(self, actual_rank: int, required_rank: int):
        self.actual_rank = actual_rank
        self.required_rank = required_rank
        super().__init__(
            f"rank(C G) = {actual_rank}, but the unknown input has dimension {required_rank}"
        )


class InvalidParams(DriseError, ValueError):
    """A robustness parameter violates its admissible range."""

    def __init__(self, field: str, reason: str):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")


class DomainError(DriseError, ValueError):
    pass


class LengthMismatch(DriseError, ValueError):
    pass
