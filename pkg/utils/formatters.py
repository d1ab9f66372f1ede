"""
DMBN Toolkit - Data Formatting Functions
Formatting functions for numbers written to CSV, run identifiers and durations.
"""

import uuid
from datetime import datetime
from typing import Iterable, List
import logging

logger = logging.getLogger(__name__)

# Seventeen significant digits round-trip every IEEE double.
FLOAT_FORMAT = "%.17g"

# ========== NUMBER FORMATTERS ==========

def index_labels(prefix: str, *dims: int) -> List[str]:
    """Column labels like 'p1_k2_t3' for a flattened C-order tensor"""
    labels = [""]
    for letter, size in zip(prefix, dims):
        labels = [f"{label}_{letter}{i + 1}" if label else f"{letter}{i + 1}" for label in labels for i in range(size)]
    return labels

# ========== IDENTIFIERS ==========

def generate_run_id() -> str:
    """Generate run ID for fit/simulate outputs"""
    timestamp = datetime.now().strftime('%Y%m%d_%H%M%S')
    short_uuid = str(uuid.uuid4())[:8]
    return f"RUN_{timestamp}_{short_uuid}"

# ========== TIME FORMATTERS ==========

def format_duration(seconds: float) -> str:
    """Format duration in human readable format"""
    if seconds < 60:
        return f"{seconds:.1f}s"
    elif seconds < 3600:
        minutes, rest = divmod(seconds, 60)
        return f"{int(minutes)}m {int(rest)}s"
    else:
        hours, rest = divmod(seconds, 3600)
        return f"{int(hours)}h {int(rest // 60)}m"


def format_validation_errors(errors: Iterable[dict]) -> str:
    """Format validation errors for display"""
    lines = []
    for error in errors:
        row = error.get('row_number')
        prefix = f"row {row}: " if row is not None else ""
        lines.append(f"• {prefix}{error['message']}")
    return "\n".join(lines)
