"""
Error types - Exceptions raised by the analysis library
"""
from typing import Any, Dict, List, Optional


class PafError(Exception):
    """Base class for all analysis errors"""


class ParseError(PafError):
    """Syntax error in an expression or a system file"""

    def __init__(self, message: str, position: int = -1, line: Optional[int] = None,
                 column: Optional[int] = None):
        self.position = position
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}, column {column})"
        elif position >= 0:
            where = f" (position {position})"
        super().__init__(f"{message}{where}")


class UnknownIdentifierError(ParseError):
    """Identifier is neither a chart variable, a parameter nor a known function"""

    def __init__(self, name: str, position: int = -1):
        self.name = name
        super().__init__(f"Unknown identifier '{name}'", position)


class DomainError(PafError):
    """Evaluation left the domain of a subexpression"""

    def __init__(self, message: str, subexpr: str = ""):
        self.subexpr = subexpr
        super().__init__(f"{message}: {subexpr}" if subexpr else message)


class SamplingExhaustedError(PafError):
    """No valid sample point was found within the retry cap"""

    def __init__(self, message: str, attempts: int = 0):
        self.attempts = attempts
        super().__init__(f"{message} after {attempts} attempts")


class ChartMismatchError(PafError):
    """Objects living on different charts were combined"""


class DimensionMismatchError(PafError):
    """Component count, form degree or arity does not match"""


class SingularFrameError(PafError):
    """Frame or coframe matrix is not invertible"""

    def __init__(self, message: str, witness: Optional[Dict[str, float]] = None):
        self.witness = witness
        super().__init__(message)


class MapInconsistencyError(PafError):
    """Forward and inverse of a map do not compose to the identity"""

    def __init__(self, message: str, witness: Optional[Dict[str, float]] = None,
                 residual: float = 0.0):
        self.witness = witness
        self.residual = residual
        super().__init__(message)


class NonConstantTypeError(PafError):
    """A quantity that must be constant on the box changes between samples"""

    def __init__(self, message: str, witnesses: Optional[List[Dict[str, Any]]] = None):
        self.witnesses = witnesses or []
        super().__init__(message)


class ClassificationRejected(PafError):
    """Input lies outside the classes handled by a reduction"""

    def __init__(self, message: str, bracket_class: str = ""):
        self.bracket_class = bracket_class
        super().__init__(message)


class UnsupportedSystemError(PafError):
    """No reduction is available for this (n, s) pair"""


class MissingPfaffCoordinatesError(PafError):
    """Invariant extraction needs Pfaff coordinates that were not supplied"""
