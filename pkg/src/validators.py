"""
Input validation for nonga.

Provides validation including:
- Finite-value checks for state arrays
- Weight vector checks
- Choice and range checks for settings
"""

from typing import Any, Iterable, Optional

import numpy as np

from .exceptions import ConfigurationError, ValidationError

# Tolerance on the total mass of a normalized weight vector
WEIGHT_SUM_TOL = 1e-12


def validate_finite(values: Any, field: str) -> np.ndarray:
    """
    Validate that an array contains only finite numbers.

    Args:
        values: Array-like of numbers
        field: Name used in error messages

    Returns:
        The values as a float ndarray

    Raises:
        ValidationError: If any entry is NaN or infinite
    """
    array = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(array)):
        bad = int(np.count_nonzero(~np.isfinite(array)))
        raise ValidationError(
            f"{bad} non-finite entries",
            field=field
        )
    return array


def validate_weights(weights: Any, field: str = "weights", tol: float = WEIGHT_SUM_TOL) -> np.ndarray:
    """
    Validate a normalized weight vector.

    Args:
        weights: 1D array-like of weights
        field: Name used in error messages
        tol: Allowed deviation of the sum from 1

    Returns:
        The weights as a float ndarray

    Raises:
        ValidationError: If weights are negative, non-finite or do not sum to 1
    """
    w = validate_finite(weights, field)
    if w.ndim != 1 or w.size == 0:
        raise ValidationError("must be a non-empty 1D vector", field=field)
    if np.any(w < 0):
        raise ValidationError("negative weights", field=field)
    total = float(w.sum())
    if abs(total - 1.0) > tol:
        raise ValidationError(
            f"weights sum to {total!r}, expected 1",
            field=field
        )
    return w


def validate_choice(value: Any, choices: Iterable[Any], setting: str) -> Any:
    """
    Validate that a setting is one of a fixed set of values.

    Raises:
        ConfigurationError: If value is not among choices
    """
    choices = tuple(choices)
    if value not in choices:
        raise ConfigurationError(
            f"Must be one of: {', '.join(str(c) for c in choices)}",
            setting=setting,
            details=f"got {value!r}"
        )
    return value


def validate_positive(
    value: Any,
    setting: str,
    allow_zero: bool = False,
    upper: Optional[float] = None
) -> Any:
    """
    Validate a positive (or nonnegative) numeric setting.

    Raises:
        ConfigurationError: If value is not a number in range
    """
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError("Must be a number", setting=setting, details=f"got {value!r}")
    if not np.isfinite(value):
        raise ConfigurationError("Must be finite", setting=setting)
    if allow_zero:
        if value < 0:
            raise ConfigurationError("Must be greater than or equal to 0", setting=setting)
    elif value <= 0:
        raise ConfigurationError("Must be greater than 0", setting=setting)
    if upper is not None and value > upper:
        raise ConfigurationError(f"Must be at most {upper}", setting=setting)
    return value
