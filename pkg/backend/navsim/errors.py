"""
Exception types raised across the navigation stack
"""
from typing import Any, Dict, List, Optional


class NavsimError(Exception):
    """Base class for all navsim errors"""


class ConfigError(NavsimError, ValueError):
    """Invalid or incomplete run configuration"""


class ScenarioParseError(NavsimError, ValueError):
    """A world file line could not be parsed"""

    def __init__(self, line: int, message: str):
        self.line = line
        self.message = message
        super().__init__(f"line {line}: {message}")


class ScenarioValidationError(NavsimError, ValueError):
    """A parsed scenario violates one or more invariants"""

    def __init__(self, errors: List[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class ShapeMismatchError(NavsimError, ValueError):
    """Operands have incompatible shapes"""


class NonFiniteGradientError(NavsimError, ValueError):
    """A gradient contains NaN or infinite values"""

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"non-finite gradient for parameter '{name}'")


class CheckpointError(NavsimError):
    """Checkpoint file is missing, corrupt or incompatible"""


class TrainingDivergedError(NavsimError):
    """Training produced a non-finite loss"""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)
