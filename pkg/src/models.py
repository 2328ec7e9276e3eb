"""
Forward models advancing ensemble members between analyses.

The double-well model du/dt = 4u - 4u^3 + kappa*eta is stepped with the
explicit Euler method plus a random perturbation per step.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .config import NOISE_EULER_MARUYAMA, NOISE_LITERAL
from .ensemble import RngStream, WeightedEnsemble
from .exceptions import ConfigurationError, ValidationError
from .logging_config import get_logger
from .validators import validate_choice

logger = get_logger(__name__)

# Larger steps leave the explicit scheme's stability region near |u| = 3
MAX_DT = 0.01

# Distance past the barrier at which a trajectory counts as switched
SWITCH_THRESHOLD = 0.5


def drift(u):
    """-f'(u) = 4u - 4u^3 for the potential f(u) = -2u^2 + u^4."""
    return 4.0 * u - 4.0 * u ** 3


def potential(u):
    """f(u) = -2u^2 + u^4; minima at +-1, barrier at 0."""
    return -2.0 * u ** 2 + u ** 4


@dataclass(frozen=True)
class DoubleWellModel:
    """
    Stochastic double-well model.

    Attributes:
        kappa: Noise magnitude
        dt: Euler step
        noise_convention: 'euler_maruyama' adds kappa*sqrt(dt)*xi per step;
            'literal' adds a N(0, sqrt(dt)) draw to the right-hand side before
            scaling by dt
    """
    kappa: float = 1.0
    dt: float = 0.01
    noise_convention: str = NOISE_EULER_MARUYAMA

    def __post_init__(self):
        if self.kappa < 0:
            raise ValidationError("must be nonnegative", field="kappa")
        if not 0 < self.dt <= MAX_DT:
            raise ValidationError(f"must lie in (0, {MAX_DT}]", field="dt")
        validate_choice(self.noise_convention, (NOISE_EULER_MARUYAMA, NOISE_LITERAL), "noise_convention")

    @property
    def noise_scale(self) -> float:
        """Standard deviation of the random part of one step."""
        if self.noise_convention == NOISE_LITERAL:
            return self.kappa * self.dt * self.dt ** 0.25
        return self.kappa * np.sqrt(self.dt)

    def increment(self, u, xi):
        """One step from u given standard normal draws xi."""
        return u + self.dt * drift(u) + self.noise_scale * xi

    def steps_in(self, t_span: float) -> int:
        """
        Number of steps covering t_span.

        Raises:
            ConfigurationError: If t_span is negative or not on the step grid
        """
        if t_span < 0:
            raise ConfigurationError("Must be nonnegative", setting="t_span", details=f"got {t_span}")
        steps = t_span / self.dt
        n = int(round(steps))
        if abs(steps - n) > 1e-9 * max(1.0, steps):
            raise ConfigurationError(
                "Must be a multiple of dt",
                setting="t_span",
                details=f"t_span={t_span}, dt={self.dt}"
            )
        return n


def step(model: DoubleWellModel, u: float, rng: RngStream) -> float:
    """Advance a scalar state by one Euler step."""
    xi = rng.generator().standard_normal()
    return float(model.increment(u, xi))


@dataclass(frozen=True, eq=False)
class ReferenceRun:
    """
    Twin-experiment truth and its synthetic observations.

    Attributes:
        times: (n_steps + 1,) step times from 0 to t_end
        trajectory: (n_steps + 1,) reference states
        obs_times: observation times
        observations: state at each obs time plus N(0, obs_var) noise
    """
    times: np.ndarray
    trajectory: np.ndarray
    obs_times: np.ndarray
    observations: np.ndarray


def _reference_path(model: DoubleWellModel, u0: float, n_steps: int, rng: RngStream) -> np.ndarray:
    draws = rng.generator().standard_normal(n_steps)
    path = np.empty(n_steps + 1)
    path[0] = u0
    for i in range(n_steps):
        path[i + 1] = model.increment(path[i], draws[i])
    return path


def simulate_reference(
    model: DoubleWellModel,
    u0: float,
    t_end: float,
    obs_times: Sequence[float],
    obs_var: float,
    rng: RngStream
) -> ReferenceRun:
    """
    One reference trajectory and noisy observations of it.

    Path noise and observation noise come from separate child streams, so
    the path does not depend on how many observations are taken.

    Raises:
        ConfigurationError: If an observation time is outside [0, t_end] or off the step grid
    """
    n_steps = model.steps_in(t_end)
    obs_times = np.asarray(obs_times, dtype=float)
    indices = []
    for t in obs_times:
        if t < 0 or t > t_end + 1e-12:
            raise ConfigurationError("Must lie in [0, t_end]", setting="obs_times", details=f"got {t}")
        indices.append(model.steps_in(t))

    path = _reference_path(model, u0, n_steps, rng.spawn(0))
    noise = rng.spawn(1).generator().standard_normal(len(indices)) * np.sqrt(obs_var)
    observations = path[indices] + noise
    times = model.dt * np.arange(n_steps + 1)
    return ReferenceRun(times=times, trajectory=path, obs_times=obs_times, observations=observations)


def switch_time(times: np.ndarray, trajectory: np.ndarray, u0: float) -> Optional[float]:
    """
    First time the trajectory commits to the well opposite to u0.

    Committed means |u| >= SWITCH_THRESHOLD on the other side of the barrier.
    """
    side = 1.0 if u0 >= 0 else -1.0
    crossed = np.flatnonzero(side * np.asarray(trajectory) <= -SWITCH_THRESHOLD)
    if crossed.size == 0:
        return None
    return float(times[crossed[0]])


def find_switching_reference(
    model: DoubleWellModel,
    u0: float,
    t_end: float,
    target_time: float,
    tolerance: float,
    search_limit: int,
    stream_id: int,
    start_seed: int = 0
) -> Optional[int]:
    """
    Scan reference seeds for a path that switches wells near target_time.

    Returns:
        The first matching seed, or None when the scan limit is exhausted
    """
    n_steps = model.steps_in(t_end)
    times = model.dt * np.arange(n_steps + 1)
    for seed in range(start_seed, start_seed + search_limit):
        path = _reference_path(model, u0, n_steps, RngStream(seed, stream_id).spawn(0))
        t_switch = switch_time(times, path, u0)
        if t_switch is not None and abs(t_switch - target_time) <= tolerance:
            logger.info(f"Reference seed {seed} switches wells at t={t_switch:.2f}")
            return seed
    logger.warning(
        f"No reference among seeds {start_seed}..{start_seed + search_limit - 1} "
        f"switches within {tolerance} of t={target_time}"
    )
    return None


def advance_ensemble(
    model: DoubleWellModel,
    ens: WeightedEnsemble,
    t_span: float,
    rng: RngStream
) -> WeightedEnsemble:
    """
    Advance every member independently over t_span; weights unchanged.

    Member k draws its noise from rng.spawn(k), so the result does not
    depend on evaluation order.
    """
    n_steps = model.steps_in(t_span)
    if n_steps == 0:
        return ens
    draws = np.stack([
        rng.spawn(k).generator().standard_normal((n_steps, ens.dim))
        for k in range(ens.size)
    ])
    state = np.array(ens.members)
    for i in range(n_steps):
        state = model.increment(state, draws[:, i, :])
    return WeightedEnsemble(state, ens.weights)
