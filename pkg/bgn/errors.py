"""Exception hierarchy for the BGN engine"""


class BgnError(Exception):
    """Base class for every error raised by the engine"""


class DimMismatchError(BgnError, ValueError):
    """Operand dimensions do not agree"""


class ShapeMismatchError(BgnError, ValueError):
    """Array shapes do not match what the operation expects"""


class EntryNotBinaryError(BgnError, ValueError):
    """A value to pack is neither +1.0 nor -1.0"""


class NonFiniteError(BgnError, ValueError):
    """NaN or infinity where finite values are required"""


class UninitializedStateError(BgnError, RuntimeError):
    """Estimator state queried before it holds a usable baseline"""


class GraphParseError(BgnError, ValueError):
    """Malformed line in a graph input file"""

    def __init__(self, path, line_no: int, message: str):
        self.path = path
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")


class InconsistentDimsError(BgnError, ValueError):
    """Feature vectors of different lengths in one graph"""


class UnknownNodeError(BgnError, KeyError):
    """Edge endpoint that is not declared in the node list"""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class InsufficientClassMembersError(BgnError, ValueError):
    """A class has fewer members than the split asks for"""


class BadParamError(BgnError, ValueError):
    """Parameter outside its allowed range"""


class StaleCacheError(BgnError, RuntimeError):
    """Backward requested without a matching forward pass"""


class IndexOutOfRangeError(BgnError, IndexError):
    """Node index outside the graph"""


class DivergedLossError(BgnError, ArithmeticError):
    """Training loss became NaN or infinite"""


class InfeasibleSubstitutionError(BgnError, RuntimeError):
    """Edge substitution impossible after the allowed retries"""


class CheckpointFormatError(BgnError, ValueError):
    """Serialized blob has the wrong magic, version or length"""
