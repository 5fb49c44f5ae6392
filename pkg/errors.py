"""
Fehlerklassen des FALQON-Surrogats
Jede Klasse trägt ihre Fehlerart und den Exit-Code der Kommandozeile.
"""

from typing import Optional

from config import EXIT_CODES


class FalqonError(Exception):
    """Basisklasse aller fachlichen Fehler"""
    kind = "error"
    exit_code = EXIT_CODES["numeric"]


class InvalidArgumentError(FalqonError, ValueError):
    kind = "invalid-argument"
    exit_code = EXIT_CODES["invalid-argument"]


class UnsupportedError(FalqonError, ValueError):
    """Gültige, aber nicht unterstützte Anfrage (z.B. exhaustive n > 12)"""
    kind = "unsupported"
    exit_code = EXIT_CODES["invalid-argument"]


class ResourceLimitError(FalqonError, MemoryError):
    kind = "resource-limit"
    exit_code = EXIT_CODES["numeric"]


class DegenerateSpectrumError(FalqonError, ArithmeticError):
    kind = "degenerate-spectrum"
    exit_code = EXIT_CODES["numeric"]


class NumericError(FalqonError, FloatingPointError):
    """Numerischer Fehlschlag; optional mit Residuum oder betroffenem Tensor"""
    kind = "numeric"
    exit_code = EXIT_CODES["numeric"]

    def __init__(self, message: str, residual: Optional[float] = None, tensor: Optional[str] = None):
        super().__init__(message)
        self.residual = residual
        self.tensor = tensor


class DatasetIOError(FalqonError, OSError):
    kind = "io"
    exit_code = EXIT_CODES["io"]
