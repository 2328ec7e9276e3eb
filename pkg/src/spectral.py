"""
Sine-basis machinery for function-valued states.

States on [0, pi] are stored as values on a uniform interior mesh. The
basis functions sin(nx) are scaled to unit length under the trapezoid
inner product of that mesh, which makes the (square) basis matrix exactly
invertible and analysis/synthesis exact for any grid function.
"""

from dataclasses import dataclass
from typing import Any, Optional

import numpy as np
from scipy.spatial.distance import cdist

from .ensemble import RngStream, WeightedEnsemble, point_evaluation_row
from .exceptions import ValidationError
from .validators import validate_finite


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """
    Orthonormal sine modes sampled on a mesh.

    Attributes:
        mesh: (M,) strictly increasing nodes in (0, pi)
        quadrature: (M,) trapezoid weights of the mesh
        basis_matrix: (M, mode_count) matrix with entries phi_n(x_j)
    """
    mesh: np.ndarray
    quadrature: np.ndarray
    basis_matrix: np.ndarray

    @property
    def mode_count(self) -> int:
        return self.basis_matrix.shape[1]

    @property
    def size(self) -> int:
        return self.mesh.shape[0]

    def gram(self) -> np.ndarray:
        """Discrete Gram matrix Phi^T W Phi; identity for an orthonormal basis."""
        return self.basis_matrix.T @ (self.quadrature[:, None] * self.basis_matrix)

    def node_index(self, x: float) -> int:
        """Index of the mesh node nearest to x."""
        return int(np.argmin(np.abs(self.mesh - x)))


def sine_basis(state_dim: int, mode_count: Optional[int] = None) -> SpectralBasis:
    """
    Build the sine basis on state_dim interior nodes x_j = j*pi/(M+1).

    The end values u(0) = u(pi) = 0 are implied, so every trapezoid weight
    equals the mesh step.
    """
    if state_dim < 1:
        raise ValidationError("must be at least 1", field="state_dim")
    mode_count = state_dim if mode_count is None else mode_count
    if not 1 <= mode_count <= state_dim:
        raise ValidationError(f"must lie in [1, {state_dim}]", field="mode_count")

    step = np.pi / (state_dim + 1)
    mesh = step * np.arange(1, state_dim + 1)
    quadrature = np.full(state_dim, step)
    modes = np.arange(1, mode_count + 1)
    raw = np.sin(np.outer(mesh, modes))
    norms = np.sqrt(quadrature @ raw ** 2)
    return SpectralBasis(mesh=mesh, quadrature=quadrature, basis_matrix=raw / norms[None, :])


@dataclass(frozen=True, eq=False)
class DecaySpec:
    """
    Mode scalings.

    Attributes:
        lam: initialization amplitudes lambda_n >= 0
        kappa: U-norm scalings kappa_n > 0
    """
    lam: np.ndarray
    kappa: np.ndarray

    def __post_init__(self):
        lam = validate_finite(self.lam, "lambda")
        kappa = validate_finite(self.kappa, "kappa")
        if lam.shape != kappa.shape or lam.ndim != 1:
            raise ValidationError("lambda and kappa must be vectors of equal length", field="DecaySpec")
        if np.any(lam < 0):
            raise ValidationError("amplitudes must be nonnegative", field="lambda")
        if np.any(kappa <= 0):
            raise ValidationError("scalings must be strictly positive", field="kappa")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "kappa", kappa)

    @classmethod
    def power_law(cls, mode_count: int, lambda_exponent: float = 3.0, kappa_exponent: float = 2.0) -> "DecaySpec":
        """lambda_n = n^-a, kappa_n = n^-b."""
        n = np.arange(1, mode_count + 1, dtype=float)
        return cls(lam=n ** -lambda_exponent, kappa=n ** -kappa_exponent)


def sample_initial_ensemble(
    basis: SpectralBasis,
    decay: DecaySpec,
    size: int,
    rng: RngStream
) -> WeightedEnsemble:
    """
    Random smooth fields u = sum_n lambda_n d_n phi_n, d_n ~ N(0, 1).

    Returns:
        size members with equal weights
    """
    if decay.lam.shape[0] != basis.mode_count:
        raise ValidationError(
            f"{decay.lam.shape[0]} amplitudes for {basis.mode_count} modes",
            field="lambda"
        )
    draws = rng.generator().standard_normal((size, basis.mode_count))
    return WeightedEnsemble.uniform(synthesize(basis, draws * decay.lam[None, :]))


def analyze(basis: SpectralBasis, u: Any) -> np.ndarray:
    """
    Coefficients c = Phi^T W u of one grid function or of each row.
    """
    u = np.asarray(u, dtype=float)
    return u @ (basis.quadrature[:, None] * basis.basis_matrix)


def synthesize(basis: SpectralBasis, c: Any) -> np.ndarray:
    """Grid values Phi c of one coefficient vector or of each row."""
    return np.asarray(c, dtype=float) @ basis.basis_matrix.T


def u_norm(decay: DecaySpec, c: Any) -> float:
    """sqrt(sum_n c_n^2 / kappa_n^2)."""
    c = np.asarray(c, dtype=float)
    if c.shape != decay.kappa.shape:
        raise ValidationError(f"expected {decay.kappa.shape[0]} coefficients", field="c")
    return float(np.sqrt(np.sum((c / decay.kappa) ** 2)))


def pointwise_variance(basis: SpectralBasis, decay: DecaySpec, x: float) -> float:
    """Variance of u(x) under the prior: sum_n lambda_n^2 phi_n(x)^2."""
    values = point_evaluation_row(basis.mesh, x) @ basis.basis_matrix
    return float(np.sum((decay.lam * values) ** 2))


class EnsembleNorm:
    """
    Norm used for nearest-neighbor distances between ensemble members.

    Subclasses map members to coordinates in which the norm is Euclidean.
    """

    def transform(self, members: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def distances(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Matrix of distances ||a_i - b_j||, shape (len(a), len(b))."""
        return cdist(self.transform(np.atleast_2d(a)), self.transform(np.atleast_2d(b)))


class EuclideanNorm(EnsembleNorm):
    """Plain Euclidean norm, used for scalar states."""

    def transform(self, members: np.ndarray) -> np.ndarray:
        return np.asarray(members, dtype=float)


class UNorm(EnsembleNorm):
    """
    ||u||_U^2 = sum_n c_n^2 / kappa_n^2 with c = analyze(u).

    With kappa_n = 1 this is the discrete L2 norm of the grid function.
    """

    def __init__(self, basis: SpectralBasis, decay: DecaySpec):
        if decay.kappa.shape[0] != basis.mode_count:
            raise ValidationError(
                f"{decay.kappa.shape[0]} scalings for {basis.mode_count} modes",
                field="kappa"
            )
        self.basis = basis
        self.decay = decay

    def transform(self, members: np.ndarray) -> np.ndarray:
        return analyze(self.basis, members) / self.decay.kappa[None, :]
