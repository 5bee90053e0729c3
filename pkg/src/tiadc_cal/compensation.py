"""Offset/gain correction, reconstruction filters and Gauss-Seidel solver.

The reconstruction treats the corrected stream as the output of a row
system ``sum_k g_n[k] * x[n - k] = x_comp[n]`` where row n carries a
fractional-delay filter (timing mismatch) off the pilot slots and a
high-pass filter (band-limit constraint) on them.  The system is solved
in place by forward Gauss-Seidel sweeps; indices outside the stream
contribute zero.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ConfigError, GainDegeneracyError, SingularRowError

CENTER_TAP_FLOOR = 1e-9
GAIN_FLOOR = 1e-6


@dataclass(frozen=True, eq=False)
class FirFilter:
    """Odd-length real FIR filter; ``taps[half_length + k]`` holds tap k."""

    taps: np.ndarray

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=float)
        if taps.ndim != 1 or taps.size % 2 == 0:
            raise ConfigError(f"taps must be a 1-D odd-length vector, got shape {taps.shape}")
        object.__setattr__(self, "taps", taps)

    @property
    def half_length(self) -> int:
        return self.taps.size // 2

    @property
    def center(self) -> float:
        return float(self.taps[self.half_length])

    def apply(self, x) -> np.ndarray:
        """y[n] = sum_k taps[k] * x[n - k], zero-padded ('same' length)."""
        return np.convolve(np.asarray(x, dtype=float), self.taps, mode="same")

    def write_csv(self, path) -> None:
        L = self.half_length
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "tap"])
            for k in range(-L, L + 1):
                w.writerow([k, repr(float(self.taps[L + k]))])


@dataclass(frozen=True)
class ReconstructionConfig:
    """Half-lengths of the two reconstruction filters and sweep count.

    ``stopband_margin`` lifts the annihilation rows' cutoff above tau*pi so
    that signal content at the band edge falls in the stopband instead of
    the transition center; None selects half the Hamming transition width.
    """

    N_g: int = 20
    N_w: int = 51
    iterations: int = 4
    tau: float = 0.8
    stopband_margin: float | None = None

    def __post_init__(self):
        if self.N_g < 1 or self.N_w < 1:
            raise ConfigError("filter half-lengths must be >= 1")
        if self.iterations < 1:
            raise ConfigError(f"need iterations >= 1, got {self.iterations}")
        if not 0.0 < self.tau < 1.0:
            raise ConfigError(f"tau must lie in (0, 1), got {self.tau}")
        if self.annihilation_cutoff >= 1.0:
            raise ConfigError(
                f"annihilation cutoff {self.annihilation_cutoff:.4g} reaches the "
                "Nyquist edge; reduce tau or the stopband margin"
            )

    @property
    def annihilation_cutoff(self) -> float:
        margin = self.stopband_margin
        if margin is None:
            margin = 3.3 / (2 * self.N_w + 1)
        return self.tau + margin


def compensate_offset_gain(x_tilde, alpha_hat, beta_hat, M_h: int) -> np.ndarray:
    """Invert offset and gain per sample: (x - alpha) / (1 + beta), pilots stay zero.

    ``alpha_hat``/``beta_hat`` are the per-sample estimates in force.
    """
    x_tilde = np.asarray(x_tilde, dtype=float)
    alpha_hat = np.broadcast_to(np.asarray(alpha_hat, dtype=float), x_tilde.shape)
    beta_hat = np.broadcast_to(np.asarray(beta_hat, dtype=float), x_tilde.shape)
    gain = 1.0 + beta_hat
    live = np.ones_like(x_tilde, dtype=bool)
    live[::M_h] = False
    if np.any(np.abs(gain[live]) < GAIN_FLOOR):
        worst = float(np.min(np.abs(gain[live])))
        raise GainDegeneracyError(
            f"estimated gain magnitude {worst:.3e} below {GAIN_FLOOR:.0e}; cannot invert"
        )
    out = np.zeros_like(x_tilde)
    out[live] = (x_tilde[live] - alpha_hat[live]) / gain[live]
    return out


def design_fractional_delay(phi_hat: float, N_g: int) -> FirFilter:
    """Truncated sinc filter realizing a delay of ``phi_hat`` samples."""
    if not abs(phi_hat) <= 0.5:
        raise ValueError(f"fractional delay requires |phi| <= 0.5, got {phi_hat}")
    k = np.arange(-N_g, N_g + 1, dtype=float)
    return FirFilter(np.sinc(k - phi_hat))


def design_highpass(tau: float, N_w: int) -> FirFilter:
    """Hamming-windowed high-pass with cutoff tau*pi (type I linear phase).

    Built from the ideal response ``delta[k] - tau*sinc(tau*k)``; taps are
    computed on |k| so the symmetry is exact.
    """
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    k = np.abs(np.arange(-N_w, N_w + 1))
    ideal = -tau * np.sinc(tau * k)
    ideal[N_w] += 1.0
    window = 0.54 + 0.46 * np.cos(np.pi * k / N_w)
    return FirFilter(ideal * window)


def combined_filter(n: int, phi_by_subadc, M: int, M_h: int,
                    cfg: ReconstructionConfig) -> FirFilter:
    """Row filter for sample ``n``: high-pass on pilot slots, fractional
    delay of that sample's sub-ADC otherwise."""
    if n % M_h == 0:
        return design_highpass(cfg.annihilation_cutoff, cfg.N_w)
    return design_fractional_delay(float(phi_by_subadc[n % M]), cfg.N_g)


@dataclass(eq=False)
class RowBank:
    """Compact per-sample row filters: a bank of unique filters plus an index.

    ``taps`` is zero-padded to a common width with the center tap at column
    ``taps.shape[1] // 2``; ``half[i]`` is filter i's true half-length and
    ``row_of[n]`` selects the filter of row n.
    """

    taps: np.ndarray
    half: np.ndarray
    row_of: np.ndarray

    @classmethod
    def build(cls, phi_hat_per_sample, M_h: int, cfg: ReconstructionConfig) -> "RowBank":
        phi = np.asarray(phi_hat_per_sample, dtype=float)
        n_samples = phi.size
        width = 2 * max(cfg.N_g, cfg.N_w) + 1
        center = width // 2

        pilot = np.zeros(n_samples, dtype=bool)
        pilot[::M_h] = True
        unique_phi, inverse = np.unique(phi[~pilot], return_inverse=True)
        if np.any(np.abs(unique_phi) > 0.5):
            raise ValueError("fractional-delay rows require |phi| <= 0.5")

        taps = np.zeros((1 + unique_phi.size, width), dtype=float)
        half = np.empty(1 + unique_phi.size, dtype=np.int64)
        hp = design_highpass(cfg.annihilation_cutoff, cfg.N_w)
        taps[0, center - cfg.N_w: center + cfg.N_w + 1] = hp.taps
        half[0] = cfg.N_w
        k = np.arange(-cfg.N_g, cfg.N_g + 1, dtype=float)
        taps[1:, center - cfg.N_g: center + cfg.N_g + 1] = np.sinc(k[None, :] - unique_phi[:, None])
        half[1:] = cfg.N_g

        row_of = np.zeros(n_samples, dtype=np.int64)
        row_of[~pilot] = 1 + inverse
        return cls(taps=taps, half=half, row_of=row_of)

    @property
    def n_samples(self) -> int:
        return self.row_of.size

    def center_taps(self) -> np.ndarray:
        return self.taps[:, self.taps.shape[1] // 2]

    def apply(self, x) -> np.ndarray:
        """Matrix-vector product of the row system (zero outside the stream)."""
        x = np.asarray(x, dtype=float)
        return _row_apply(x, self.taps, self.half, self.row_of)

    def to_dense(self) -> np.ndarray:
        """Materialize the banded row system (oracle/inspection use only)."""
        n = self.n_samples
        center = self.taps.shape[1] // 2
        G = np.zeros((n, n), dtype=float)
        for i in range(n):
            r = self.row_of[i]
            L = int(self.half[r])
            for k in range(-L, L + 1):
                j = i - k
                if 0 <= j < n:
                    G[i, j] = self.taps[r, center + k]
        return G


@njit(cache=True)
def _row_apply(x, taps, half, row_of):
    n = x.size
    center = taps.shape[1] // 2
    out = np.zeros(n, dtype=np.float64)
    for i in range(n):
        r = row_of[i]
        L = half[r]
        lo = i - L if i - L > 0 else 0
        hi = i + L if i + L < n - 1 else n - 1
        acc = 0.0
        for j in range(lo, hi + 1):
            acc += taps[r, center + (i - j)] * x[j]
        out[i] = acc
    return out


@njit(cache=True)
def _gsi_sweeps(x, rhs, taps, half, row_of, iterations):
    n = x.size
    center = taps.shape[1] // 2
    for _ in range(iterations):
        for i in range(n):
            r = row_of[i]
            L = half[r]
            lo = i - L if i - L > 0 else 0
            hi = i + L if i + L < n - 1 else n - 1
            acc = 0.0
            for j in range(lo, hi + 1):
                if j != i:
                    acc += taps[r, center + (i - j)] * x[j]
            x[i] = (rhs[i] - acc) / taps[r, center]
    return x


def gsi_reconstruct(x_comp, rows: RowBank, iterations: int) -> np.ndarray:
    """Gauss-Seidel sweeps over the row system, ascending n, in place.

    The iterate starts from ``x_comp`` itself; values already updated in
    the current sweep feed the k >= 1 terms, the previous iterate feeds
    the k <= -1 terms.
    """
    if iterations < 1:
        raise ValueError(f"need iterations >= 1, got {iterations}")
    x_comp = np.asarray(x_comp, dtype=float)
    if x_comp.size != rows.n_samples:
        raise ValueError("row bank and stream lengths disagree")
    centers = rows.center_taps()
    if np.any(np.abs(centers) < CENTER_TAP_FLOOR):
        worst = float(np.min(np.abs(centers)))
        raise SingularRowError(
            f"row center tap magnitude {worst:.3e} below {CENTER_TAP_FLOOR:.0e}"
        )
    x = x_comp.copy()
    return _gsi_sweeps(x, x_comp, rows.taps, rows.half, rows.row_of, iterations)
