"""Sampling model of a time-interleaved ADC with per-channel mismatches.

All times are normalized to the aggregate sample period (T = 1), so
frequencies are carried as normalized angular frequencies in rad/sample.
Continuous-time signals are evaluated analytically; timing mismatch is an
exact fractional shift of the evaluation instant, never an interpolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


def default_pilot_omega(M: int, M_h: int) -> float:
    """Default pilot tone frequency: 80% of the per-channel alias limit."""
    return 0.8 * math.pi / (M * M_h)


@dataclass(frozen=True)
class TiAdcConfig:
    """Static parameters of the interleaved converter and pilot schedule.

    M sub-ADCs sample in rotation at unit period; every ``M_h``-th sample
    is taken from the receiver-generated pilot tone instead of the input,
    leaving a missing sample in the desired-signal stream.  ``tau`` is the
    occupied fraction of the digital band of the desired signal; missing
    samples are recoverable only while ``1 - tau >= 1/M_h``.

    Note: pilot instants are assigned to sub-ADC ``mod(n, M) + 1`` by pilot
    index n, while full-rate samples are assigned by sample index.  The two
    agree exactly when ``M_h == 1 (mod M)``, which holds for the defaults.
    """

    M: int = 4
    M_h: int = 17
    tau: float = 0.8
    N: int = 10_000
    omega_h: float = field(default=0.0)
    pilot_amplitude: float = 1.0
    T: float = 1.0

    def __post_init__(self):
        if self.M < 2:
            raise ConfigError(f"need M >= 2 sub-ADCs, got M={self.M}")
        if self.M_h < 2:
            raise ConfigError(f"need pilot period M_h >= 2, got M_h={self.M_h}")
        if self.N < 1:
            raise ConfigError(f"need N >= 1 pilot instants, got N={self.N}")
        if not 0.0 < self.tau < 1.0:
            raise ConfigError(f"band fraction tau must lie in (0, 1), got tau={self.tau}")
        if self.T != 1.0:
            raise ConfigError("sample period is normalized; T must be 1")
        if not check_feasibility(self.tau, self.M_h):
            raise ConfigError(
                "infeasible pilot schedule: requires 1 - tau >= 1/M_h "
                f"(got tau={self.tau}, M_h={self.M_h})"
            )
        if self.omega_h == 0.0:
            object.__setattr__(self, "omega_h", default_pilot_omega(self.M, self.M_h))
        limit = math.pi / (self.M * self.M_h)
        if not 0.0 < self.omega_h <= limit:
            raise ConfigError(
                "pilot tone violates the per-channel alias limit: requires "
                f"0 < omega_h <= pi/(M*M_h) = {limit:.6g}, got omega_h={self.omega_h:.6g}"
            )


@dataclass(frozen=True)
class MismatchState:
    """Offset, gain deviation and timing fraction of one sub-ADC.

    The effective channel maps x(t) to ``alpha + (1 + beta) * x(t - phi)``
    with phi measured in sample periods.
    """

    alpha: float = 0.0
    beta: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        if not abs(self.phi) < 0.5:
            raise ConfigError(f"timing fraction must satisfy |phi| < 0.5, got phi={self.phi}")
        if self.beta == -1.0:
            raise ConfigError("gain 1 + beta must be nonzero")

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.phi], dtype=float)


@dataclass(frozen=True)
class MultitoneSignal:
    """Real multitone signal sum_i a_i * cos(omega_i * t + p_i)."""

    amplitudes: tuple
    omegas: tuple
    phases: tuple

    def __post_init__(self):
        if not len(self.amplitudes) == len(self.omegas) == len(self.phases):
            raise ConfigError("amplitudes, omegas and phases must have equal length")

    @property
    def max_omega(self) -> float:
        return max(self.omegas)

    def eval(self, t):
        """Evaluate the signal at (possibly fractional) times ``t``."""
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for a, w, p in zip(self.amplitudes, self.omegas, self.phases):
            out += a * np.cos(w * t + p)
        return out

    def check_band(self, tau: float) -> None:
        if self.max_omega > tau * math.pi + 1e-12:
            raise ConfigError(
                f"signal exceeds the reconstruction band: max omega {self.max_omega:.6g} "
                f"> tau*pi = {tau * math.pi:.6g}"
            )


def ten_tone_signal() -> MultitoneSignal:
    """Ten equal-amplitude cosines at omega_i = 2*pi*i/25, i = 1..10."""
    omegas = tuple(2.0 * math.pi * i / 25.0 for i in range(1, 11))
    return MultitoneSignal(amplitudes=(1.0,) * 10, omegas=omegas, phases=(0.0,) * 10)


def check_feasibility(tau: float, M_h: int) -> bool:
    """True when missing samples are recoverable: 1 - tau >= 1/M_h."""
    return 1.0 - tau >= 1.0 / M_h


def sub_adc_index(n: int, M: int) -> int:
    """1-based sub-ADC index serving pilot instant (or sample) ``n``."""
    if n < 0:
        raise ValueError(f"index must be nonnegative, got {n}")
    return n % M + 1


def sample_pilot(n: int, theta: MismatchState, cfg: TiAdcConfig) -> float:
    """Noise-free converter output of the pilot tone at pilot instant ``n``.

    Observation noise is the caller's responsibility.
    """
    t = cfg.M_h * n - theta.phi
    h = cfg.pilot_amplitude * math.cos(cfg.omega_h * t)
    return theta.alpha + (1.0 + theta.beta) * h


def pilot_reference(n, cfg: TiAdcConfig):
    """Mismatch-free pilot samples h[n] = A*cos(omega_h * M_h * n)."""
    n = np.asarray(n, dtype=float)
    return cfg.pilot_amplitude * np.cos(cfg.omega_h * cfg.M_h * n)


def sample_desired(n: int, theta: MismatchState, signal: MultitoneSignal) -> float:
    """Converter output of the desired signal at full-rate sample index ``n``."""
    return theta.alpha + (1.0 + theta.beta) * float(signal.eval(n - theta.phi))


def insert_missing_samples(x, M_h: int) -> np.ndarray:
    """Zero every ``M_h``-th sample (the pilot slots), n = 0, M_h, 2*M_h, ..."""
    if M_h < 2:
        raise ValueError(f"pilot period must be >= 2, got M_h={M_h}")
    out = np.array(x, dtype=float, copy=True)
    out[::M_h] = 0.0
    return out
