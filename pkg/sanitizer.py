"""
Validation of command-line parameters for sta-kit.

Every check returns the cleaned value or None, so callers can turn a
rejection into a usage error.
"""

import math
import re
from typing import List, Optional, Tuple

NUMBER_RE = re.compile(r'^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$')
RANGE_RE = re.compile(r'^([^:]+):([^:]+):(\d+)$')
OUTPUT_RE = re.compile(r'^[\w./\\:-]+$')
MAX_SCAN_POINTS = 10000
MAX_GRID_POINTS = 1 << 16
MIN_GRID_POINTS = 64
MAX_TRAJECTORIES = 10_000_000
MAX_PATH_LENGTH = 4096
MAX_ROOTS = 3


def check_real(value) -> Optional[float]:
    """Finite float from a number or a plain decimal string."""
    if isinstance(value, bool):
        return None
    if isinstance(value, str):
        value = value.strip()
        if not NUMBER_RE.match(value):
            return None
    try:
        out = float(value)
    except (TypeError, ValueError):
        return None
    if not math.isfinite(out):
        return None
    return out


def check_positive(value) -> Optional[float]:
    out = check_real(value)
    if out is None or out <= 0:
        return None
    return out


def check_nonnegative(value) -> Optional[float]:
    out = check_real(value)
    if out is None or out < 0:
        return None
    return out


def check_count(value, lo: int = 1, hi: int = MAX_TRAJECTORIES) -> Optional[int]:
    """Integer within [lo, hi]; floats must be integral."""
    out = check_real(value)
    if out is None or out != int(out):
        return None
    n = int(out)
    if not lo <= n <= hi:
        return None
    return n


def check_grid(value) -> Optional[int]:
    """Grid sizes are even and between MIN_GRID_POINTS and MAX_GRID_POINTS."""
    n = check_count(value, MIN_GRID_POINTS, MAX_GRID_POINTS)
    if n is None or n % 2:
        return None
    return n


def check_seed(value) -> Optional[int]:
    return check_count(value, 0, 2**63 - 1)


def check_roots(value) -> Optional[List[float]]:
    """Comma-separated positive frequencies, at most MAX_ROOTS of them."""
    if isinstance(value, (list, tuple)):
        parts = list(value)
    elif isinstance(value, str):
        parts = [p for p in value.split(',') if p.strip()]
    else:
        return None
    if not 1 <= len(parts) <= MAX_ROOTS:
        return None
    roots = [check_positive(p) for p in parts]
    if any(r is None for r in roots):
        return None
    return [float(r) for r in roots if r is not None]


def check_range(value) -> Optional[Tuple[float, float, int]]:
    """'start:stop:num' with finite bounds and 2..MAX_SCAN_POINTS points."""
    if not value or not isinstance(value, str):
        return None
    m = RANGE_RE.match(value.strip())
    if not m:
        return None
    start, stop = check_real(m.group(1)), check_real(m.group(2))
    num = check_count(m.group(3), 2, MAX_SCAN_POINTS)
    if start is None or stop is None or num is None or start == stop:
        return None
    return start, stop, num


def check_choice(value, choices) -> Optional[str]:
    if not isinstance(value, str):
        return None
    value = value.strip().lower()
    return value if value in choices else None


def check_output_path(path) -> Optional[str]:
    """Strip control characters; reject empty or unusual paths."""
    if not path or not isinstance(path, str):
        return None
    path = ''.join(c for c in path.strip() if c.isprintable())
    if not path or len(path) > MAX_PATH_LENGTH or not OUTPUT_RE.match(path):
        return None
    if path.endswith(('/', '\\')):
        return None
    return path
