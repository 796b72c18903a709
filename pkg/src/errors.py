"""
Exception types raised across the training lab
"""
from typing import Optional, Sequence, Tuple


class LabError(Exception):
    """Base class for every error the lab raises on purpose"""


class ConfigurationError(LabError):
    """Invalid settings, presets, schedules or sizes"""


class ParseError(LabError):
    """Malformed input text"""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class DecodeError(LabError):
    """Token id outside the (extended) vocabulary"""


class ShapeError(LabError):
    """Operands of a primitive have incompatible shapes"""

    def __init__(self, tag: str, shapes: Sequence[Tuple[int, ...]], detail: str = ""):
        self.tag = tag
        self.shapes = [tuple(s) for s in shapes]
        message = f"{tag}: incompatible shapes {self.shapes}"
        if detail:
            message += f" ({detail})"
        super().__init__(message)


class ContractError(LabError):
    """A precondition of an operation was violated"""


class NumericError(LabError):
    """Non-finite gradient or parameter update"""


class FormatError(LabError):
    """Checkpoint or dump file does not match the expected format"""
