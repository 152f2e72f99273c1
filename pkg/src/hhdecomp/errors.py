"""Exception hierarchy shared by all modules."""


class HHDError(Exception):
    """Base class for all errors raised by this package."""


class ShapeMismatch(HHDError, ValueError):
    pass


class ZeroEntry(HHDError, ValueError):
    """An entry that must be nonzero is (numerically) zero.

    ``index`` is the offending 1-based multi-index.
    """

    def __init__(self, index, message=None):
        self.index = tuple(int(i) for i in index)
        super().__init__(message or f"zero entry at index {self.index}")


class InvalidPartition(HHDError, ValueError):
    pass


class EmptyInput(HHDError, ValueError):
    pass


class ZeroReference(HHDError, ValueError):
    pass


class ZeroTensor(HHDError, ValueError):
    pass


class IndexOutOfRange(HHDError, IndexError):
    pass


class RankMismatch(HHDError, ValueError):
    pass


# cpd
class NoFeasibleGrouping(HHDError):
    pass


class DegeneratePencil(HHDError):
    pass


class RankDeficient(HHDError):
    pass


class SingularSubproblem(HHDError, RuntimeWarning):
    """Emitted as a warning when an ALS subproblem is numerically singular."""


# rank-1 permutations
class UnsortedInput(HHDError, ValueError):
    pass


class ZeroLeadingEntry(HHDError, ValueError):
    pass


class NotAdmissible(HHDError):
    pass


class AmbiguousMagnitudes(HHDError):
    pass


class VerificationFailed(HHDError):
    pass


class TooLarge(HHDError, ValueError):
    pass


# hhd
class ZeroAnchor(HHDError):
    pass


# identifiability
class IneffectivePartition(HHDError, ValueError):
    pass


class OrderTooSmall(HHDError, ValueError):
    pass


class TooManyModes(HHDError, ValueError):
    pass


class IoError(HHDError, OSError):
    """Unreadable, missing or malformed input file."""
