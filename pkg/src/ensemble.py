"""
Weighted ensembles for nonga.

Provides the data model shared by every filter:
- WeightedEnsemble: N members of dimension m with normalized weights
- GaussianObservation: data d, linear operator H, data-error covariance R
- RngStream: reproducible random streams keyed by (seed, stream_id)

and the weighted statistics, likelihoods and resampling built on them.
Weights are handled in log space wherever likelihoods are involved.
"""

from dataclasses import dataclass, field
from typing import Any, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import logsumexp

from .exceptions import (
    DegenerateWeightsError,
    InvalidEnsembleError,
    SingularCovarianceError,
    ValidationError,
)
from .logging_config import get_logger
from .validators import validate_finite, validate_weights

logger = get_logger(__name__)


class RngStream:
    """
    Reproducible random stream.

    Draws depend only on (seed, stream_id). Each stream owns one numpy
    Generator which its consumers advance; child streams from spawn()
    are independent of how far the parent has been advanced.

    Usage:
        rng = RngStream(seed=7)
        z = rng.generator().standard_normal(10)
        member_rng = rng.spawn(3)
    """

    def __init__(self, seed: int, stream_id: int = 0):
        if seed < 0 or stream_id < 0:
            raise ValidationError("seed and stream_id must be nonnegative", field="RngStream")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self._generator: Optional[np.random.Generator] = None

    def generator(self) -> np.random.Generator:
        """The stream's generator, created on first use."""
        if self._generator is None:
            sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
            self._generator = np.random.default_rng(sequence)
        return self._generator

    def spawn(self, index: int) -> "RngStream":
        """Derive the child stream for an index (member, analysis, chunk...)."""
        child_id = np.random.SeedSequence([self.stream_id, int(index)]).generate_state(1, dtype=np.uint64)[0]
        return RngStream(self.seed, int(child_id))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def _readonly(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class WeightedEnsemble:
    """
    Weighted ensemble (u_k, w_k), k = 1..N.

    Attributes:
        members: (N, m) array, one state vector per row
        weights: (N,) nonnegative weights summing to 1
    """
    members: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        members = np.asarray(self.members, dtype=float)
        if members.ndim == 1:
            members = members[:, None]
        if members.ndim != 2 or members.shape[0] < 1:
            raise InvalidEnsembleError("members must form a non-empty (N, m) array")
        try:
            validate_finite(members, "members")
        except ValidationError as e:
            raise InvalidEnsembleError(e.reason, size=members.shape[0], dimension=members.shape[1])
        weights = np.asarray(self.weights, dtype=float)
        if weights.shape != (members.shape[0],):
            raise InvalidEnsembleError(
                f"expected {members.shape[0]} weights, got shape {weights.shape}",
                size=members.shape[0], dimension=members.shape[1]
            )
        try:
            validate_weights(weights)
        except ValidationError as e:
            raise InvalidEnsembleError(e.reason, size=members.shape[0], dimension=members.shape[1])
        object.__setattr__(self, "members", _readonly(members))
        object.__setattr__(self, "weights", _readonly(weights))

    @classmethod
    def uniform(cls, members: Any) -> "WeightedEnsemble":
        """Ensemble with equal weights 1/N."""
        members = np.asarray(members, dtype=float)
        n = members.shape[0]
        return cls(members, np.full(n, 1.0 / n))

    @classmethod
    def from_members(cls, members: Sequence[Any], weights: Optional[Sequence[float]] = None) -> "WeightedEnsemble":
        """
        Build from a list of state vectors.

        Raises:
            InvalidEnsembleError: If members differ in dimension
        """
        vectors = [np.atleast_1d(np.asarray(u, dtype=float)) for u in members]
        if not vectors:
            raise InvalidEnsembleError("no members")
        dims = {v.shape for v in vectors}
        if len(dims) != 1:
            raise InvalidEnsembleError(
                "members differ in dimension",
                size=len(vectors),
                details=f"shapes: {sorted(dims)}"
            )
        stacked = np.vstack(vectors)
        if weights is None:
            return cls.uniform(stacked)
        return cls(stacked, np.asarray(weights, dtype=float))

    @property
    def size(self) -> int:
        return self.members.shape[0]

    @property
    def dim(self) -> int:
        return self.members.shape[1]

    def with_weights(self, weights: Any) -> "WeightedEnsemble":
        return WeightedEnsemble(self.members, weights)

    def with_members(self, members: Any) -> "WeightedEnsemble":
        return WeightedEnsemble(members, self.weights)


@dataclass(frozen=True, eq=False)
class GaussianObservation:
    """
    Linear observation with Gaussian data error.

    Attributes:
        data: (p,) data vector d
        operator: (p, m) observation matrix H
        noise_cov: (p, p) symmetric positive definite covariance R
    """
    data: np.ndarray
    operator: np.ndarray
    noise_cov: np.ndarray
    _factor: Tuple[np.ndarray, bool] = field(init=False, repr=False, compare=False)
    _chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        data = np.atleast_1d(validate_finite(self.data, "data"))
        operator = np.atleast_2d(validate_finite(self.operator, "operator"))
        noise_cov = np.atleast_2d(validate_finite(self.noise_cov, "noise_cov"))
        p = data.shape[0]
        if operator.shape[0] != p:
            raise ValidationError(
                f"operator has {operator.shape[0]} rows for {p} data values",
                field="operator"
            )
        if noise_cov.shape != (p, p):
            raise ValidationError(f"expected shape {(p, p)}, got {noise_cov.shape}", field="noise_cov")
        if not np.allclose(noise_cov, noise_cov.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(noise_cov).max())):
            raise SingularCovarianceError("not symmetric", matrix="R")
        try:
            factor = cho_factor(noise_cov, lower=True)
            chol = np.linalg.cholesky(noise_cov)
        except (LinAlgError, np.linalg.LinAlgError) as e:
            raise SingularCovarianceError("not positive definite", matrix="R", details=str(e))
        object.__setattr__(self, "data", _readonly(data))
        object.__setattr__(self, "operator", _readonly(operator))
        object.__setattr__(self, "noise_cov", _readonly(noise_cov))
        object.__setattr__(self, "_factor", factor)
        object.__setattr__(self, "_chol", chol)

    @classmethod
    def scalar(cls, data: float, var: float) -> "GaussianObservation":
        """Direct observation of a scalar state, d ~ N(u, var)."""
        return cls(np.array([data]), np.array([[1.0]]), np.array([[var]]))

    @classmethod
    def point(cls, mesh: np.ndarray, x: float, data: float, var: float) -> "GaussianObservation":
        """Point evaluation u(x) on a mesh, linearly interpolated between nodes."""
        return cls(np.array([data]), point_evaluation_row(mesh, x)[None, :], np.array([[var]]))

    @property
    def size(self) -> int:
        return self.data.shape[0]

    def with_noise_cov(self, noise_cov: Any) -> "GaussianObservation":
        return GaussianObservation(self.data, self.operator, noise_cov)

    def apply(self, members: np.ndarray) -> np.ndarray:
        """H applied to each row of members, shape (N, p)."""
        return np.atleast_2d(members) @ self.operator.T

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """R^{-1} rhs using the stored factorization."""
        return cho_solve(self._factor, rhs)

    def log_likelihoods(self, members: np.ndarray) -> np.ndarray:
        """
        Unnormalized Gaussian log-likelihood of every member.

        Returns -1/2 (d - Hu)^T R^{-1} (d - Hu) per row; the normalizing
        constant is dropped.
        """
        residuals = self.data[None, :] - self.apply(members)
        solved = self.solve(residuals.T).T
        return -0.5 * np.einsum("ij,ij->i", residuals, solved)

    def sample_data(self, count: int, rng: RngStream) -> np.ndarray:
        """Draw count perturbed data vectors d_k ~ N(d, R), shape (count, p)."""
        z = rng.generator().standard_normal((count, self.size))
        return self.data[None, :] + z @ self._chol.T


def point_evaluation_row(mesh: np.ndarray, x: float) -> np.ndarray:
    """
    Row vector evaluating a grid function at x by linear interpolation.

    Raises:
        ValidationError: If x lies outside the mesh
    """
    mesh = np.asarray(mesh, dtype=float)
    if x < mesh[0] or x > mesh[-1]:
        raise ValidationError(f"x={x} outside mesh [{mesh[0]}, {mesh[-1]}]", field="x")
    row = np.zeros(mesh.shape[0])
    j = int(np.searchsorted(mesh, x))
    if j < mesh.shape[0] and mesh[j] == x:
        row[j] = 1.0
        return row
    left = j - 1
    theta = (x - mesh[left]) / (mesh[j] - mesh[left])
    row[left] = 1.0 - theta
    row[j] = theta
    return row


def weighted_mean(ens: WeightedEnsemble) -> np.ndarray:
    """Weighted mean sum_k w_k u_k, shape (m,)."""
    return ens.weights @ ens.members


def weighted_anomalies(ens: WeightedEnsemble) -> np.ndarray:
    """Rows sqrt(w_k) (u_k - mean); A^T A is the weighted covariance Q."""
    return np.sqrt(ens.weights)[:, None] * (ens.members - weighted_mean(ens)[None, :])


def covariance_action(ens: WeightedEnsemble, operator: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    QH^T and HQH^T for the weighted covariance Q, without forming Q.

    Args:
        ens: Forecast ensemble
        operator: (p, m) observation matrix H

    Returns:
        (QHt of shape (m, p), HQHt of shape (p, p))

    Raises:
        InvalidEnsembleError: If H is not conformable with the ensemble
    """
    operator = np.atleast_2d(np.asarray(operator, dtype=float))
    if operator.shape[1] != ens.dim:
        raise InvalidEnsembleError(
            f"operator has {operator.shape[1]} columns",
            size=ens.size, dimension=ens.dim
        )
    anomalies = weighted_anomalies(ens)
    projected = anomalies @ operator.T
    qht = anomalies.T @ projected
    hqht = projected.T @ projected
    return qht, 0.5 * (hqht + hqht.T)


def gaussian_loglikelihood(obs: GaussianObservation, u: Any) -> float:
    """Unnormalized log p(d|u) = -1/2 (d - Hu)^T R^{-1} (d - Hu)."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return float(obs.log_likelihoods(u[None, :])[0])


def normalize_weights(raw: Any) -> np.ndarray:
    """
    Scale nonnegative raw weights to sum to 1.

    Raises:
        ValidationError: If any raw weight is negative
        DegenerateWeightsError: If all raw weights are zero
    """
    raw = validate_finite(raw, "raw weights")
    if np.any(raw < 0):
        raise ValidationError("negative raw weights", field="raw weights")
    total = raw.sum()
    if total <= 0:
        raise DegenerateWeightsError("raw weights sum to zero", count=raw.size)
    return raw / total


def normalize_log_weights(log_weights: Any) -> np.ndarray:
    """
    Normalize weights given as logs, subtracting the maximum first.

    Entries of -inf stand for zero weights.

    Raises:
        DegenerateWeightsError: If every entry is -inf
    """
    log_weights = np.asarray(log_weights, dtype=float)
    if np.any(np.isnan(log_weights)) or np.any(log_weights == np.inf):
        raise ValidationError("log weights must be finite or -inf", field="log weights")
    if not np.any(np.isfinite(log_weights)):
        raise DegenerateWeightsError("all log weights are -inf", count=log_weights.size)
    weights = np.exp(log_weights - logsumexp(log_weights))
    return weights / weights.sum()


def multinomial_resample(ens: WeightedEnsemble, target_size: int, rng: RngStream) -> WeightedEnsemble:
    """
    Draw target_size members i.i.d. with probabilities equal to the weights.

    Returns:
        Ensemble of the drawn members with uniform weights 1/target_size
    """
    if target_size < 1:
        raise ValidationError("must be at least 1", field="target_size")
    probabilities = normalize_weights(ens.weights)
    indices = rng.generator().choice(ens.size, size=target_size, replace=True, p=probabilities)
    return WeightedEnsemble.uniform(ens.members[indices])


def effective_sample_size(weights: Any) -> float:
    """1 / sum w_k^2 for normalized weights; lies in [1, N]."""
    weights = np.asarray(weights, dtype=float)
    return float(1.0 / np.sum(weights ** 2))


def maybe_resample(ens: WeightedEnsemble, threshold: float, rng: RngStream) -> WeightedEnsemble:
    """
    Resample to the same size when ESS < threshold * N.

    A threshold of 0 disables resampling.
    """
    if threshold <= 0:
        return ens
    ess = effective_sample_size(ens.weights)
    if ess >= threshold * ens.size:
        return ens
    logger.debug(f"ESS {ess:.1f} below {threshold:.2f}*N, resampling {ens.size} members")
    return multinomial_resample(ens, ens.size, rng)
