"""Helpers for diff-stable JSON reports."""

import json
import math
import os
from typing import Any, Dict

import numpy as np

SIGNIFICANT_DIGITS = 12


def round_significant(value: float, digits: int = SIGNIFICANT_DIGITS) -> float:
    if value == 0 or not math.isfinite(value):
        return value
    return float(f"{value:.{digits}g}")


def stable(value: Any) -> Any:
    """Round every float to 12 significant digits and make containers JSON-safe."""
    if isinstance(value, dict):
        return {str(k): stable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [stable(v) for v in value]
    if isinstance(value, np.ndarray):
        return stable(value.tolist())
    if isinstance(value, (complex, np.complexfloating)):
        return {'re': round_significant(float(value.real)), 'im': round_significant(float(value.imag))}
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return round_significant(float(value))
    return value


def write_json(path: str, payload: Dict[str, Any]) -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w') as f:
        json.dump(stable(payload), f, indent=2, sort_keys=True)
    return path
