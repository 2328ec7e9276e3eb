"""
Custom exception hierarchy for nonga.

Provides specific exception types for different error categories,
enabling targeted error handling and informative error messages.
"""

from typing import Optional


class AppError(Exception):
    """
    Base exception for all application errors.

    All custom exceptions inherit from this class, allowing for
    broad exception catching when needed.

    Attributes:
        message: Human-readable error description
        details: Optional additional context for debugging
    """

    def __init__(self, message: str, details: Optional[str] = None):
        self.message = message
        self.details = details
        super().__init__(self.message)

    def __str__(self) -> str:
        if self.details:
            return f"{self.message} | Details: {self.details}"
        return self.message


class ValidationError(AppError):
    """
    Raised when input validation fails.

    This includes:
    - Non-finite state values
    - Negative or unnormalized weights
    - Out-of-range arguments

    Attributes:
        field: The field that failed validation
        reason: Specific reason for validation failure
    """

    def __init__(self, reason: str, field: Optional[str] = None, details: Optional[str] = None):
        self.field = field
        self.reason = reason
        if field:
            message = f"Validation failed for '{field}': {reason}"
        else:
            message = f"Validation failed: {reason}"
        super().__init__(message, details)


class InvalidEnsembleError(ValidationError):
    """
    Raised when a weighted ensemble violates its invariants.

    Attributes:
        size: Number of members, if known
        dimension: State dimension, if known
    """

    def __init__(
        self,
        reason: str,
        size: Optional[int] = None,
        dimension: Optional[int] = None,
        details: Optional[str] = None
    ):
        self.size = size
        self.dimension = dimension
        shape = []
        if size is not None:
            shape.append(f"N={size}")
        if dimension is not None:
            shape.append(f"m={dimension}")
        field = f"ensemble({', '.join(shape)})" if shape else "ensemble"
        super().__init__(reason, field=field, details=details)


class SingularCovarianceError(AppError):
    """
    Raised when a covariance that must be inverted is not positive definite.

    Covers both the data-error covariance R and the innovation
    covariance HQH^T + R.

    Attributes:
        matrix: Name of the offending matrix
    """

    def __init__(self, reason: str, matrix: Optional[str] = None, details: Optional[str] = None):
        self.matrix = matrix
        if matrix:
            message = f"Singular covariance '{matrix}': {reason}"
        else:
            message = f"Singular covariance: {reason}"
        super().__init__(message, details)


class DegenerateWeightsError(AppError):
    """
    Raised when importance weights sum to zero and cannot be normalized.

    Attributes:
        count: Number of weights involved
    """

    def __init__(self, reason: str, count: Optional[int] = None, details: Optional[str] = None):
        self.count = count
        message = f"Degenerate weights: {reason}"
        if count is not None:
            message += f" ({count} weights)"
        super().__init__(message, details)


class DegeneratePosteriorError(AppError):
    """
    Raised when a grid posterior integrates to zero.

    Happens when the data lies far outside the density grid.

    Attributes:
        data: The observed value
    """

    def __init__(self, reason: str, data: Optional[float] = None, details: Optional[str] = None):
        self.data = data
        message = f"Degenerate posterior: {reason}"
        if data is not None:
            message += f" (data={data})"
        super().__init__(message, details)


class ConfigurationError(AppError):
    """
    Raised when configuration is invalid or missing.

    This includes:
    - Unreadable config file
    - Unknown config keys
    - Invalid config values
    - Type mismatches

    Attributes:
        setting: The configuration setting that caused the error
    """

    def __init__(
        self,
        reason: str,
        setting: Optional[str] = None,
        details: Optional[str] = None
    ):
        self.setting = setting

        if setting:
            message = f"Configuration error for '{setting}': {reason}"
        else:
            message = f"Configuration error: {reason}"

        super().__init__(message, details)


class ExperimentError(AppError):
    """
    Raised when an experiment cannot be completed.

    Attributes:
        experiment: Experiment name
        stage: The stage that failed (e.g., 'prior', 'analysis', 'write')
    """

    def __init__(
        self,
        reason: str,
        experiment: Optional[str] = None,
        stage: Optional[str] = None,
        details: Optional[str] = None
    ):
        self.experiment = experiment
        self.stage = stage

        context_parts = []
        if experiment:
            context_parts.append(f"experiment '{experiment}'")
        if stage:
            context_parts.append(f"stage '{stage}'")

        if context_parts:
            context = " during " + ", ".join(context_parts)
        else:
            context = ""

        message = f"Experiment error{context}: {reason}"
        super().__init__(message, details)
