"""AR(1) ground-truth dynamics of the mismatch parameters.

Each sub-ADC's state vector [alpha, beta, phi] evolves once per pilot
instant as ``theta_t = psi * theta_{t-1} + sqrt(1 - psi^2) * e_t`` with
``e_t ~ N(0, Q')``, so the stationary covariance equals Q' for any
psi < 1 and the process freezes at psi = 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

# Initial mismatch vectors of the four default sub-ADCs (alpha, beta, phi).
DEFAULT_ALPHA0 = (-0.03, 0.05, -0.08, -0.02)
DEFAULT_BETA0 = (0.05, -0.04, 0.02, -0.09)
DEFAULT_PHI0 = (-0.01, -0.05, 0.04, -0.03)


def default_initial_states(M: int = 4) -> np.ndarray:
    """Default (M, 3) initial mismatch matrix; cycles the 4-channel set for M != 4."""
    cols = np.array([DEFAULT_ALPHA0, DEFAULT_BETA0, DEFAULT_PHI0], dtype=float).T
    idx = np.arange(M) % 4
    return cols[idx].copy()


def q_prime_for_uniform_halfwidth(a: float) -> np.ndarray:
    """Stationary covariance matching a uniform draw on [-a, a] per parameter."""
    if a <= 0:
        raise ValueError(f"half-width must be positive, got {a}")
    return np.diag(np.full(3, a * a / 3.0))


@dataclass(frozen=True, eq=False)
class Ar1Model:
    """First-order autoregressive mismatch dynamics."""

    psi: float
    q_prime: np.ndarray = field(default_factory=lambda: q_prime_for_uniform_halfwidth(0.05))
    seed: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.psi <= 1.0:
            raise ConfigError(f"autoregressive coefficient must lie in [0, 1], got {self.psi}")
        qp = np.asarray(self.q_prime, dtype=float)
        if qp.shape != (3, 3):
            raise ConfigError(f"q_prime must be 3x3, got shape {qp.shape}")
        if not np.array_equal(qp, np.diag(np.diag(qp))):
            raise ConfigError("q_prime must be diagonal")
        if np.any(np.diag(qp) < 0):
            raise ConfigError("q_prime diagonal entries must be nonnegative")
        object.__setattr__(self, "q_prime", qp)

    @property
    def process_noise(self) -> np.ndarray:
        """Per-step process covariance Q = (1 - psi^2) * Q'."""
        return (1.0 - self.psi**2) * self.q_prime


def evolve(theta_prev, model: Ar1Model, rng: np.random.Generator) -> np.ndarray:
    """One AR(1) step; ``theta_prev`` is (..., 3), batched over leading axes."""
    theta_prev = np.asarray(theta_prev, dtype=float)
    noise = rng.normal(size=theta_prev.shape) * np.sqrt(np.diag(model.q_prime))
    return model.psi * theta_prev + np.sqrt(1.0 - model.psi**2) * noise


def m_step_transition(model: Ar1Model, steps: int) -> tuple[float, np.ndarray]:
    """Closed-form k-step transition: mean map psi^k, noise covariance (1 - psi^2k) Q'."""
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    gain = model.psi**steps
    return gain, (1.0 - gain * gain) * model.q_prime


def simulate_trajectories(
    model: Ar1Model, theta0, n_steps: int, rng: np.random.Generator
) -> np.ndarray:
    """Evolve all channels jointly for ``n_steps`` pilot instants.

    Returns an (n_steps, M, 3) array with row 0 equal to ``theta0``; every
    channel receives fresh process noise at every instant.
    """
    theta0 = np.atleast_2d(np.asarray(theta0, dtype=float))
    if theta0.shape[1] != 3:
        raise ValueError(f"theta0 must be (M, 3), got shape {theta0.shape}")
    out = np.empty((n_steps,) + theta0.shape, dtype=float)
    out[0] = theta0
    for i in range(1, n_steps):
        out[i] = evolve(out[i - 1], model, rng)
    return out


def states_in_force(traj: np.ndarray, n_samples: int, M_h: int) -> np.ndarray:
    """Per-sample (n_samples, 3) states: value most recently evolved at or
    before each full-rate sample, routed to the sample's sub-ADC."""
    n_steps, M, _ = traj.shape
    j = np.arange(n_samples)
    step = np.minimum(j // M_h, n_steps - 1)
    return traj[step, j % M, :]
