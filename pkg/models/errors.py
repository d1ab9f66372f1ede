"""
DMBN Toolkit - Error Types
Exception hierarchy shared by the models, services and command-line layer.
Each error carries a machine-readable code and the process exit code used by main.py.
"""

from typing import Any, Dict, Optional


class DMBNError(Exception):
    """Base exception for all toolkit errors"""

    exit_code: int = 1

    def __init__(self, message: str, code: Optional[str] = None, details: Optional[Dict[str, Any]] = None):
        self.message = message
        self.code = code
        self.details = details or {}
        super().__init__(message)

    def __str__(self) -> str:
        if not self.details:
            return self.message
        extras = ", ".join(f"{key}={value}" for key, value in self.details.items())
        return f"{self.message} ({extras})"


class NumericalError(DMBNError):
    """Raised when a factorization, sampler or probability row breaks down"""

    exit_code = 3


class ConfigError(DMBNError):
    """Raised for inconsistent run configuration (e.g. kernel mismatch)"""

    exit_code = 2


class EvaluationError(DMBNError):
    """Raised when a metric is undefined for the supplied inputs"""

    exit_code = 2
