"""Per-channel extended Kalman filter tracking [alpha, beta, phi].

One filter per sub-ADC observes that channel's pilot samples.  Under the
scalar transition ``theta_t = psi * theta_{t-1} + e_t`` the k-step
prediction has the closed form ``psi^k * theta`` with covariance
``psi^2k * Sigma + (1 - psi^2k)/(1 - psi^2) * Q``, so each filter runs a
single prediction per observation instead of k explicit ones.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ConfigError, NumericalDegeneracyError
from .evolution import Ar1Model
from .signal_model import TiAdcConfig


@dataclass(frozen=True, eq=False)
class EkfConfig:
    """Known model quantities supplied to the filter."""

    psi: float
    Q: np.ndarray
    R: float
    sigma0: np.ndarray = field(default_factory=lambda: np.diag(np.full(3, 1e-2)))
    theta0: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        q = np.asarray(self.Q, dtype=float)
        s0 = np.asarray(self.sigma0, dtype=float)
        t0 = np.asarray(self.theta0, dtype=float)
        if q.shape != (3, 3) or s0.shape != (3, 3) or t0.shape != (3,):
            raise ConfigError("Q and sigma0 must be 3x3, theta0 must be length 3")
        if self.R <= 0:
            raise ConfigError(f"observation noise variance must satisfy R > 0, got R={self.R}")
        object.__setattr__(self, "Q", q)
        object.__setattr__(self, "sigma0", s0)
        object.__setattr__(self, "theta0", t0)

    @classmethod
    def from_ar1(cls, model: Ar1Model, R: float, sigma0_diag: float = 1e-2) -> "EkfConfig":
        return cls(psi=model.psi, Q=model.process_noise, R=R,
                   sigma0=np.diag(np.full(3, sigma0_diag)))


@dataclass
class EkfState:
    theta_hat: np.ndarray
    sigma: np.ndarray
    t: int = 0


def _geometric_factor(psi: float, steps: int) -> float:
    # sum_{j=0}^{k-1} psi^(2j); the k=0 case makes prediction the identity
    if psi == 1.0:
        return float(steps)
    return (1.0 - psi ** (2 * steps)) / (1.0 - psi**2)


def predict_state(theta_hat, sigma, psi: float, Q, steps: int = 1):
    """k-step prior mean and covariance under the scalar AR(1) transition."""
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    gain = psi**steps
    theta_prior = gain * np.asarray(theta_hat, dtype=float)
    sigma_prior = gain * gain * np.asarray(sigma, dtype=float) + _geometric_factor(psi, steps) * Q
    return theta_prior, sigma_prior


def pilot_phase(n, cfg: TiAdcConfig, phi_hat):
    return cfg.omega_h * (cfg.M_h * np.asarray(n, dtype=float) - np.asarray(phi_hat, dtype=float))


def pilot_jacobian(theta_hat, n, cfg: TiAdcConfig) -> np.ndarray:
    """Row gradient of the pilot observation w.r.t. (alpha, beta, phi).

    ``theta_hat`` may be a single 3-vector or an (..., 3) batch.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    a = cfg.pilot_amplitude
    phase = pilot_phase(n, cfg, theta_hat[..., 2])
    d_alpha = np.ones_like(phase)
    d_beta = a * np.cos(phase)
    d_phi = cfg.omega_h * (1.0 + theta_hat[..., 1]) * a * np.sin(phase)
    return np.stack([d_alpha, d_beta, d_phi], axis=-1)


def observe_prediction(theta_prior, sigma_prior, n: int, adc: TiAdcConfig, R: float):
    """Predicted pilot observation, its Jacobian row and innovation variance."""
    theta_prior = np.asarray(theta_prior, dtype=float)
    phase = float(pilot_phase(n, adc, theta_prior[2]))
    y_hat = theta_prior[0] + (1.0 + theta_prior[1]) * adc.pilot_amplitude * math.cos(phase)
    H = pilot_jacobian(theta_prior, n, adc)
    S = float(H @ sigma_prior @ H) + R
    return y_hat, H, S


def update_state(theta_prior, sigma_prior, H, S: float, innovation: float):
    """Measurement update; covariance is symmetrized after the subtraction."""
    if S <= 0.0:
        raise NumericalDegeneracyError(
            f"innovation variance S={S:.3e} is not positive; covariance degenerated"
        )
    K = (sigma_prior @ H) / S
    theta_post = theta_prior + K * innovation
    sigma_post = sigma_prior - S * np.outer(K, K)
    sigma_post = 0.5 * (sigma_post + sigma_post.T)
    return theta_post, sigma_post, K


class ExtendedKalmanFilter:
    """Tracks one sub-ADC; one predict/update cycle per own pilot observation."""

    def __init__(self, adc: TiAdcConfig, cfg: EkfConfig):
        self.adc = adc
        self.cfg = cfg
        self.state = EkfState(cfg.theta0.copy(), cfg.sigma0.copy(), t=0)

    def step(self, y: float, n: int, steps: int):
        """Absorb observation ``y`` taken at pilot instant ``n``, ``steps``
        evolution intervals after the previous absorbed observation."""
        theta_p, sigma_p = predict_state(
            self.state.theta_hat, self.state.sigma, self.cfg.psi, self.cfg.Q, steps
        )
        y_hat, H, S = observe_prediction(theta_p, sigma_p, n, self.adc, self.cfg.R)
        innovation = y - y_hat
        theta, sigma, _ = update_state(theta_p, sigma_p, H, S, innovation)
        self.state = EkfState(theta, sigma, self.state.t + 1)
        return innovation, S


@dataclass
class EkfBankResult:
    """Trajectories of a full filter bank run over one pilot stream."""

    n: np.ndarray            # pilot instant of each observation
    m: np.ndarray            # 1-based sub-ADC index
    theta_post: np.ndarray   # (N, 3) posterior of the updated filter
    innovation: np.ndarray
    s: np.ndarray            # innovation variance per step
    snapshots: np.ndarray    # (N, M, 3) all posteriors after each instant

    def estimates_in_force(self, n_samples: int, M_h: int) -> np.ndarray:
        """Most recent posterior per full-rate sample, causal (see evolution)."""
        n_steps, M, _ = self.snapshots.shape
        j = np.arange(n_samples)
        step = np.minimum(j // M_h, n_steps - 1)
        return self.snapshots[step, j % M, :]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "m", "alpha_hat", "beta_hat", "phi_hat", "innovation", "S"])
            for i in range(len(self.n)):
                w.writerow([
                    int(self.n[i]), int(self.m[i]),
                    repr(self.theta_post[i, 0]), repr(self.theta_post[i, 1]),
                    repr(self.theta_post[i, 2]),
                    repr(self.innovation[i]), repr(self.s[i]),
                ])


@njit(cache=True)
def _bank_kernel(y, M, psi, Q, R, sigma0, theta0, omega_h, M_h, amp):
    N = y.size
    theta = np.empty((M, 3))
    sigma = np.empty((M, 3, 3))
    for m in range(M):
        for i in range(3):
            theta[m, i] = theta0[i]
            for j in range(3):
                sigma[m, i, j] = sigma0[i, j]
    last_n = np.zeros(M, dtype=np.int64)
    seen = np.zeros(M, dtype=np.uint8)
    theta_post = np.empty((N, 3))
    innov = np.empty(N)
    svals = np.empty(N)
    snaps = np.empty((N, M, 3))
    sp = np.empty((3, 3))

    for n in range(N):
        f = n % M
        steps = n - last_n[f] if seen[f] else n
        gain = psi**steps
        geom = float(steps) if psi == 1.0 else (1.0 - psi ** (2 * steps)) / (1.0 - psi * psi)
        g2 = gain * gain
        tp0 = gain * theta[f, 0]
        tp1 = gain * theta[f, 1]
        tp2 = gain * theta[f, 2]
        for i in range(3):
            for j in range(3):
                sp[i, j] = g2 * sigma[f, i, j] + geom * Q[i, j]

        phase = omega_h * (M_h * n - tp2)
        c = math.cos(phase)
        h1 = amp * c
        h2 = omega_h * (1.0 + tp1) * amp * math.sin(phase)
        y_hat = tp0 + (1.0 + tp1) * amp * c
        sh0 = sp[0, 0] + sp[0, 1] * h1 + sp[0, 2] * h2
        sh1 = sp[1, 0] + sp[1, 1] * h1 + sp[1, 2] * h2
        sh2 = sp[2, 0] + sp[2, 1] * h1 + sp[2, 2] * h2
        S = sh0 + h1 * sh1 + h2 * sh2 + R
        if S <= 0.0:
            return theta_post, innov, svals, snaps, n
        dy = y[n] - y_hat
        k0 = sh0 / S
        k1 = sh1 / S
        k2 = sh2 / S
        theta[f, 0] = tp0 + k0 * dy
        theta[f, 1] = tp1 + k1 * dy
        theta[f, 2] = tp2 + k2 * dy
        sp[0, 0] -= S * k0 * k0
        sp[0, 1] -= S * k0 * k1
        sp[0, 2] -= S * k0 * k2
        sp[1, 0] -= S * k1 * k0
        sp[1, 1] -= S * k1 * k1
        sp[1, 2] -= S * k1 * k2
        sp[2, 0] -= S * k2 * k0
        sp[2, 1] -= S * k2 * k1
        sp[2, 2] -= S * k2 * k2
        for i in range(3):
            for j in range(3):
                sigma[f, i, j] = 0.5 * (sp[i, j] + sp[j, i])

        last_n[f] = n
        seen[f] = 1
        innov[n] = dy
        svals[n] = S
        for i in range(3):
            theta_post[n, i] = theta[f, i]
        for m in range(M):
            for i in range(3):
                snaps[n, m, i] = theta[m, i]
    return theta_post, innov, svals, snaps, -1


def run_bank(y, adc: TiAdcConfig, cfg: EkfConfig) -> EkfBankResult:
    """Route a pilot stream through M independent filters.

    Observation at pilot instant n goes to filter ``mod(n, M)``; each filter
    predicts over the instants elapsed since its previous observation (n
    itself for its first one) and then updates.  The loop is a compiled
    transliteration of :class:`ExtendedKalmanFilter`; the two are held
    together by an equivalence test.
    """
    y = np.ascontiguousarray(y, dtype=float)
    theta_post, innov, svals, snaps, bad = _bank_kernel(
        y, adc.M, cfg.psi, cfg.Q, cfg.R, cfg.sigma0, cfg.theta0,
        adc.omega_h, adc.M_h, adc.pilot_amplitude,
    )
    if bad >= 0:
        raise NumericalDegeneracyError(
            f"innovation variance not positive at pilot instant {bad}"
        )
    N = len(y)
    return EkfBankResult(
        n=np.arange(N), m=np.arange(N) % adc.M + 1, theta_post=theta_post,
        innovation=innov, s=svals, snapshots=snaps,
    )
