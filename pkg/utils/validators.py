"""
DMBN Toolkit - Data Validation Functions
Validation helpers for tensor dimensions, time grids, block assignments and
configuration values used throughout the toolkit.
"""

from typing import Any, Dict, List, Optional, Sequence
import logging

import numpy as np

from models.errors import DMBNError

logger = logging.getLogger(__name__)


class ValidationError(DMBNError):
    """Custom exception for validation errors"""

    exit_code = 2

    def __init__(self, message: str, field: Optional[str] = None, code: Optional[str] = None,
                 details: Optional[Dict[str, Any]] = None):
        self.field = field
        super().__init__(message, code=code, details=details)


class ValidationResult:
    """Result of validation operation"""

    def __init__(self) -> None:
        self.is_valid = True
        self.errors: List[Dict[str, Any]] = []
        self.warnings: List[Dict[str, Any]] = []

    def add_error(self, message: str, field: Optional[str] = None, code: Optional[str] = None,
                  row_number: Optional[int] = None) -> None:
        """Add validation error"""
        self.is_valid = False
        self.errors.append({
            'message': message,
            'field': field or "",
            'code': code or "",
            'row_number': row_number,
        })

    def add_warning(self, message: str, field: Optional[str] = None, code: Optional[str] = None,
                    row_number: Optional[int] = None) -> None:
        """Add validation warning"""
        self.warnings.append({
            'message': message,
            'field': field or "",
            'code': code or "",
            'row_number': row_number,
        })

    def merge(self, other: "ValidationResult") -> None:
        """Merge another result into this one"""
        self.errors.extend(other.errors)
        self.warnings.extend(other.warnings)
        self.is_valid = self.is_valid and other.is_valid

    def get_first_error(self) -> Optional[str]:
        """Get first error message"""
        return self.errors[0]['message'] if self.errors else None

    def raise_if_invalid(self) -> None:
        """Raise a ValidationError carrying every collected error"""
        if self.is_valid:
            return
        first = self.errors[0]
        raise ValidationError(
            "; ".join(error['message'] for error in self.errors),
            field=first['field'] or None,
            code=first['code'] or None,
            details={'error_count': len(self.errors)},
        )


# ========== BASIC VALIDATORS ==========

def validate_positive_real(value: Any, field_name: str) -> ValidationResult:
    """Validate a strictly positive finite real"""
    result = ValidationResult()
    try:
        number = float(value)
    except (TypeError, ValueError):
        result.add_error(f"{field_name} must be a number", field_name, "invalid_number")
        return result
    if not np.isfinite(number) or number <= 0:
        result.add_error(f"{field_name} must be positive and finite", field_name, "not_positive")
    return result


# ========== NETWORK VALIDATORS ==========

def validate_times(times: Sequence[float], expected_length: Optional[int] = None,
                   field_name: str = "times") -> ValidationResult:
    """Validate a strictly increasing grid of time stamps"""
    result = ValidationResult()
    stamps = np.asarray(times, dtype=float)

    if stamps.ndim != 1 or stamps.size == 0:
        result.add_error(f"{field_name} must be a non-empty vector", field_name, "invalid_shape")
        return result
    if expected_length is not None and stamps.size != expected_length:
        result.add_error(
            f"{field_name} has {stamps.size} stamps, expected {expected_length}",
            field_name, "length_mismatch"
        )
    if not np.all(np.isfinite(stamps)):
        result.add_error(f"{field_name} must be finite", field_name, "not_finite")
    elif np.any(np.diff(stamps) <= 0):
        result.add_error(f"{field_name} must be strictly increasing", field_name, "not_increasing")
    return result


def validate_assignments(z: Sequence[int], n_nodes: int, n_blocks: int,
                         field_name: str = "z") -> ValidationResult:
    """Validate 0-based block assignments of length n_nodes"""
    result = ValidationResult()
    labels = np.asarray(z)

    if labels.shape != (n_nodes,):
        result.add_error(
            f"{field_name} must have length {n_nodes}, got shape {labels.shape}",
            field_name, "invalid_shape"
        )
        return result
    if not np.issubdtype(labels.dtype, np.integer):
        result.add_error(f"{field_name} must contain integers", field_name, "invalid_type")
        return result
    if labels.size and (labels.min() < 0 or labels.max() >= n_blocks):
        result.add_error(
            f"{field_name} entries must lie in 1..{n_blocks}", field_name, "out_of_range"
        )
    return result


def validate_adjacency(A: np.ndarray) -> ValidationResult:
    """Validate a binary, symmetric, loop-free tensor indexed [t][k][i][j]"""
    result = ValidationResult()

    if A.ndim != 4 or A.shape[2] != A.shape[3]:
        result.add_error(f"adjacency must have shape (T, K, N, N), got {A.shape}", "A", "invalid_shape")
        return result
    if not np.all((A == 0) | (A == 1)):
        result.add_error("adjacency entries must be 0 or 1", "A", "not_binary")
    if not np.array_equal(A, np.swapaxes(A, 2, 3)):
        result.add_error("adjacency must be symmetric in (i, j)", "A", "not_symmetric")
    if np.any(np.diagonal(A, axis1=2, axis2=3)):
        result.add_error("adjacency must not contain self-loops", "A", "self_loop")
    return result
