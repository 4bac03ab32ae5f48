import copy
import hashlib
import json
import math
from typing import Any, Dict, Optional

import numpy as np

from utils.errors import ConfigError


def clean_number(value: Any) -> Optional[float]:
    """
    Convert numeric values to plain floats for reports.

    Args:
        value: Python or numpy number

    Returns:
        float: The value, or None when it is missing or not finite
    """
    if value is None:
        return None
    number = float(value)
    return number if math.isfinite(number) else None


def json_safe(data: Any) -> Any:
    """
    Recursively turn report data into JSON-ready builtins.

    numpy scalars and arrays become floats and lists, complex numbers become
    {"re", "im"} pairs and non-finite floats become None.

    Args:
        data: Nested dicts, lists, tuples and numbers

    Returns:
        Any: Structure accepted by json.dumps(allow_nan=False)
    """
    if isinstance(data, dict):
        return {str(key): json_safe(value) for key, value in data.items()}
    if isinstance(data, (list, tuple)):
        return [json_safe(value) for value in data]
    if isinstance(data, np.ndarray):
        return [json_safe(value) for value in data.tolist()]
    if isinstance(data, (bool, np.bool_)):
        return bool(data)
    if isinstance(data, (int, np.integer)):
        return int(data)
    if isinstance(data, (complex, np.complexfloating)):
        return {"re": clean_number(data.real), "im": clean_number(data.imag)}
    if isinstance(data, (float, np.floating)):
        return clean_number(data)
    return data


def canonical_json(data: Any) -> str:
    """Sorted-key, two-space JSON text with a trailing newline"""
    return json.dumps(json_safe(data), sort_keys=True, indent=2, allow_nan=False) + "\n"


def config_sha256(config: Dict) -> str:
    """
    Hash a run configuration for report provenance.

    Args:
        config: Fully merged configuration dict

    Returns:
        str: Hex digest of the canonical JSON text
    """
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def deep_merge(base: Dict, override: Dict, path: str = "") -> Dict:
    """
    Merge override into a copy of base, rejecting keys base does not know.

    Args:
        base: Reference dict holding every allowed key
        override: Partial dict from a config file
        path: Dotted prefix used in error messages

    Returns:
        Dict: New merged dict
    """
    merged = copy.deepcopy(base)
    for key, value in override.items():
        field = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(field, "unknown key")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(field, f"expected an object, got {type(value).__name__}")
            merged[key] = deep_merge(base[key], value, field)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def parse_complex(text: str) -> complex:
    """
    Parse "re,im" (or a bare real part) into a complex number.

    Args:
        text: Command-line value such as "-1,0.5"

    Returns:
        complex: Parsed spectral parameter
    """
    parts = [part.strip() for part in str(text).split(",")]
    if len(parts) not in (1, 2) or not all(parts):
        raise ConfigError("lambda", f"expected re,im, got {text!r}")
    try:
        values = [float(part) for part in parts]
    except ValueError as exc:
        raise ConfigError("lambda", f"expected re,im, got {text!r}") from exc
    if not all(math.isfinite(value) for value in values):
        raise ConfigError("lambda", f"components must be finite, got {text!r}")
    return complex(values[0], values[1] if len(values) == 2 else 0.0)


def format_rate(value: Optional[float], digits: int = 6) -> str:
    """
    Format a rate or norm for console summaries.

    Args:
        value: Number to format
        digits: Significant digits

    Returns:
        str: Formatted value or 'N/A' when missing
    """
    value = clean_number(value) if not isinstance(value, str) else None
    if value is None:
        return "N/A"
    return f"{value:.{digits}g}"
