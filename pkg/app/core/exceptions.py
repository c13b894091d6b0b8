"""
Error hierarchy.

Every error raised on purpose by the toolkit derives from SptError and
carries the exit code the command line reports for it:

    2  configuration / input document problems
    3  numerical failures (non-convergence, eigensolver, missing bound state)
    4  output I/O
"""

from typing import List, Optional


class SptError(Exception):
    """Base class for toolkit errors."""

    exit_code: int = 1
    category: str = "error"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


# ============================================================================
# Configuration / input errors (exit 2)
# ============================================================================

class ConfigError(SptError):
    exit_code = 2
    category = "config"


class UnknownMaterial(ConfigError):
    def __init__(self, name: str):
        super().__init__(f"Unknown material '{name}'")
        self.name = name


class StackParseError(ConfigError):
    """Device-description document failed validation."""

    category = "parse"

    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        location = []
        if line is not None:
            location.append(f"line {line}")
        if field:
            location.append(f"field '{field}'")
        prefix = f"[{', '.join(location)}] " if location else ""
        super().__init__(f"{prefix}{message}")
        self.line = line
        self.field = field


class EmptyStack(StackParseError):
    def __init__(self, line: Optional[int] = None):
        super().__init__("Device stack has no layers", line=line, field="layers")


class GridTooCoarse(ConfigError):
    def __init__(self, dz: float, thinnest: float):
        super().__init__(
            f"Grid spacing {dz} nm is too coarse: must be <= {thinnest / 4:g} nm "
            f"(thinnest layer {thinnest} nm / 4)"
        )
        self.dz = dz
        self.thinnest = thinnest


class ScheduleError(ConfigError):
    pass


# ============================================================================
# Numerical errors (exit 3)
# ============================================================================

class NumericalError(SptError):
    exit_code = 3
    category = "numerical"


class ConvergenceError(NumericalError):
    def __init__(self, message: str, residual_history: Optional[List[float]] = None):
        super().__init__(message)
        self.residual_history = list(residual_history or [])


class EigenSolveError(NumericalError):
    def __init__(self, message: str, diagnostics: Optional[dict] = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class NoBoundState(NumericalError):
    pass


# ============================================================================
# Output errors (exit 4)
# ============================================================================

class OutputError(SptError):
    exit_code = 4
    category = "io"
