"""Strict-JSON serialization helpers.

Python's json module emits bare Infinity/NaN tokens, which strict parsers
(including the figure renderer) reject; artifact JSON therefore maps
non-finite floats to null, with numpy scalars/arrays coerced to plain types.
"""

import json

import numpy as np


def sanitize(obj):
    if isinstance(obj, dict):
        return {str(k): sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return sanitize(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def dump_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(sanitize(obj), fh, indent=2, sort_keys=True, allow_nan=False)
