"""QPSK chain over AWGN sampled by two mismatched interleaved converters.

Symbols are upsampled by an integer factor L and pulse-shaped with a
root-raised-cosine kernel (nominal cutoff pi/L, rolloff 0.25), so the
waveform is band-limited to (1 + rolloff) * pi / L and can be evaluated
analytically at fractional sampling instants (which is how converter
timing mismatch is applied).  The receiver applies the matched filter and
downsamples; the cascade is Nyquist, so symbol recovery is exact up to
kernel truncation.  Noise per sample is calibrated from Eb/N0 at the
information-bit level: with code rate r, kernel energy E_p and per-rail
symbol amplitude 1/sqrt(2), the per-rail white-noise variance is
E_p / (4 * r * EbN0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.signal import fftconvolve

from .compensation import ReconstructionConfig, RowBank, compensate_offset_gain, gsi_reconstruct
from .ekf import EkfConfig, run_bank
from .errors import ConfigError
from .evolution import Ar1Model, default_initial_states, q_prime_for_uniform_halfwidth, \
    simulate_trajectories, states_in_force
from .signal_model import TiAdcConfig, insert_missing_samples


# ---------------------------------------------------------------------------
# convolutional code


@dataclass(frozen=True)
class ConvCode:
    """Rate-1/2 feed-forward convolutional code, zero-state terminated.

    Generators are octal; the most significant generator bit multiplies the
    current input bit.  Two coded bits per input bit, generator order as
    listed.
    """

    generators: tuple = (0o6, 0o7)
    constraint_length: int = 3
    block_length: int = 1000

    def __post_init__(self):
        if len(self.generators) != 2:
            raise ConfigError("exactly two generators (rate 1/2)")
        if any(g >= (1 << self.constraint_length) for g in self.generators):
            raise ConfigError("generator wider than the constraint length")
        if self.block_length < 1:
            raise ConfigError("block_length must be positive")

    @property
    def n_states(self) -> int:
        return 1 << (self.constraint_length - 1)


def _parity(x: int) -> int:
    return bin(x).count("1") & 1


def conv_encode(bits, code: ConvCode = ConvCode()) -> np.ndarray:
    """Encode and terminate: appends K-1 zero tail bits, returns 2*(n+K-1) bits."""
    bits = np.asarray(bits, dtype=np.int64)
    K = code.constraint_length
    g1, g2 = code.generators
    out = np.empty(2 * (bits.size + K - 1), dtype=np.int64)
    state = 0
    pos = 0
    for b in list(bits) + [0] * (K - 1):
        reg = (int(b) << (K - 1)) | state
        out[pos] = _parity(reg & g1)
        out[pos + 1] = _parity(reg & g2)
        state = reg >> 1
        pos += 2
    return out


def _trellis(code: ConvCode):
    K = code.constraint_length
    g1, g2 = code.generators
    ns = code.n_states
    next_state = np.empty((ns, 2), dtype=np.int64)
    out_bits = np.empty((ns, 2, 2), dtype=np.int64)
    for s in range(ns):
        for b in (0, 1):
            reg = (b << (K - 1)) | s
            next_state[s, b] = reg >> 1
            out_bits[s, b, 0] = _parity(reg & g1)
            out_bits[s, b, 1] = _parity(reg & g2)
    return next_state, out_bits


@njit(cache=True)
def _viterbi_kernel(coded, next_state, out_bits):
    n_steps = coded.size // 2
    ns = next_state.shape[0]
    INF = 1 << 40
    metric = np.full(ns, INF, dtype=np.int64)
    metric[0] = 0
    new_metric = np.empty(ns, dtype=np.int64)
    prev_state = np.zeros((n_steps, ns), dtype=np.int64)
    prev_bit = np.zeros((n_steps, ns), dtype=np.int64)

    for t in range(n_steps):
        r0 = coded[2 * t]
        r1 = coded[2 * t + 1]
        new_metric[:] = INF
        # ascending predecessor order + strict improvement = ties keep the
        # lowest predecessor state
        for s in range(ns):
            ms = metric[s]
            if ms >= INF:
                continue
            for b in range(2):
                cost = ms
                if out_bits[s, b, 0] != r0:
                    cost += 1
                if out_bits[s, b, 1] != r1:
                    cost += 1
                nxt = next_state[s, b]
                if cost < new_metric[nxt]:
                    new_metric[nxt] = cost
                    prev_state[t, nxt] = s
                    prev_bit[t, nxt] = b
        metric[:] = new_metric

    decoded = np.empty(n_steps, dtype=np.int64)
    state = 0
    for t in range(n_steps - 1, -1, -1):
        decoded[t] = prev_bit[t, state]
        state = prev_state[t, state]
    return decoded


def viterbi_decode_hard(coded, code: ConvCode = ConvCode()) -> np.ndarray:
    """Hamming-metric Viterbi over the terminated trellis.

    Path starts and ends in state zero; metric ties keep the branch from
    the lowest predecessor state.  Returns the information bits (tail
    stripped).
    """
    coded = np.ascontiguousarray(coded, dtype=np.int64)
    if coded.size % 2 != 0:
        raise ValueError("coded stream must contain bit pairs")
    n_info = coded.size // 2 - (code.constraint_length - 1)
    if n_info < 1:
        raise ValueError("coded stream shorter than the termination tail")
    next_state, out_bits = _trellis(code)
    return _viterbi_kernel(coded, next_state, out_bits)[:n_info]


# ---------------------------------------------------------------------------
# modulation and pulse shaping


def qpsk_map(bits):
    """Gray-map bit pairs to unit-energy symbols; bit 0 -> +1/sqrt(2).

    Even-position bits drive the in-phase rail, odd-position bits the
    quadrature rail.
    """
    bits = np.asarray(bits, dtype=np.int64)
    if bits.size % 2 != 0:
        raise ValueError("bit count must be even")
    scale = 1.0 / math.sqrt(2.0)
    i_sym = scale * (1.0 - 2.0 * bits[0::2])
    q_sym = scale * (1.0 - 2.0 * bits[1::2])
    return i_sym, q_sym


def qpsk_demap(i_sym, q_sym) -> np.ndarray:
    """Per-rail sign slicing back to the interleaved bit stream."""
    i_bits = (np.asarray(i_sym) < 0).astype(np.int64)
    q_bits = (np.asarray(q_sym) < 0).astype(np.int64)
    out = np.empty(i_bits.size + q_bits.size, dtype=np.int64)
    out[0::2] = i_bits
    out[1::2] = q_bits
    return out


ROLLOFF = 0.25


def _rrc_shape(tau, beta: float = ROLLOFF):
    """Root-raised-cosine impulse response at times ``tau`` (symbol units)."""
    tau = np.asarray(tau, dtype=float)
    num = np.sin(np.pi * tau * (1.0 - beta)) + 4.0 * beta * tau * np.cos(
        np.pi * tau * (1.0 + beta))
    den = np.pi * tau * (1.0 - (4.0 * beta * tau) ** 2)
    at_zero = 1.0 - beta + 4.0 * beta / np.pi
    s = np.pi / (4.0 * beta)
    at_pole = (beta / math.sqrt(2.0)) * (
        (1.0 + 2.0 / np.pi) * np.sin(s) + (1.0 - 2.0 / np.pi) * np.cos(s))
    safe = np.abs(den) > 1e-8
    out = np.where(safe, num / np.where(safe, den, 1.0), 0.0)
    out = np.where(np.abs(tau) <= 1e-8, at_zero, out)
    pole = np.abs(np.abs(4.0 * beta * tau) - 1.0) <= 1e-8
    return np.where(pole, at_pole, out)


def interp_taps(L: int, half_width: int) -> np.ndarray:
    """Pulse-shaping kernel: RRC scaled for exact unit DC gain at symbol level."""
    j = np.arange(-half_width, half_width + 1)
    taps = _rrc_shape(j / L)
    return taps * (L / taps.sum())


def _kernel_scale(L: int, half_width: int) -> float:
    j = np.arange(-half_width, half_width + 1)
    return L / _rrc_shape(j / L).sum()


def kernel_energy(L: int, half_width: int = 64) -> float:
    """Sum of squared kernel taps (waveform energy per unit symbol)."""
    taps = interp_taps(L, half_width)
    return float(np.sum(taps * taps))


def shape_and_transmit(symbols, L: int, half_width: int = 64) -> np.ndarray:
    """Upsample by L and pulse-shape; symbols reappear after the matched filter."""
    if L < 2:
        raise ValueError(f"oversampling factor must be >= 2, got {L}")
    symbols = np.asarray(symbols, dtype=float)
    up = np.zeros(symbols.size * L, dtype=float)
    up[::L] = symbols
    return fftconvolve(up, interp_taps(L, half_width), mode="same")


def receive_symbols(waveform, L: int, half_width: int = 64) -> np.ndarray:
    """Matched filter (cascade gain one at symbol instants) then downsample."""
    taps = interp_taps(L, half_width)
    taps = taps / float(np.sum(taps * taps))
    return fftconvolve(np.asarray(waveform, dtype=float), taps, mode="same")[::L]


@njit(cache=True)
def _rrc_scalar(tau, beta):
    at = abs(tau)
    if at <= 1e-8:
        return 1.0 - beta + 4.0 * beta / math.pi
    if abs(4.0 * beta * at - 1.0) <= 1e-8:
        s = math.pi / (4.0 * beta)
        return (beta / math.sqrt(2.0)) * (
            (1.0 + 2.0 / math.pi) * math.sin(s) + (1.0 - 2.0 / math.pi) * math.cos(s))
    num = math.sin(math.pi * tau * (1.0 - beta)) + 4.0 * beta * tau * math.cos(
        math.pi * tau * (1.0 + beta))
    return num / (math.pi * tau * (1.0 - (4.0 * beta * tau) ** 2))


@njit(cache=True)
def _waveform_kernel(symbols, L, t, half_width, scale, beta):
    n_sym = symbols.size
    out = np.zeros(t.size)
    for i in range(t.size):
        ti = t[i]
        k_lo = int(math.ceil((ti - half_width) / L))
        k_hi = int(math.floor((ti + half_width) / L))
        if k_lo < 0:
            k_lo = 0
        if k_hi > n_sym - 1:
            k_hi = n_sym - 1
        acc = 0.0
        for k in range(k_lo, k_hi + 1):
            acc += symbols[k] * _rrc_scalar((ti - k * L) / L, beta)
        out[i] = scale * acc
    return out


def waveform_at(symbols, L: int, t, half_width: int = 64) -> np.ndarray:
    """Evaluate the pulse-shaped waveform at fractional sample instants ``t``.

    Exact continuous-time counterpart of :func:`shape_and_transmit` (the
    kernel formula is shared), used to model timing-mismatched sampling.
    """
    symbols = np.ascontiguousarray(symbols, dtype=float)
    t = np.ascontiguousarray(t, dtype=float)
    scale = _kernel_scale(L, half_width)
    return _waveform_kernel(symbols, L, t, half_width, scale, ROLLOFF)


def noise_std_for_ebno(ebno_db: float, L: int, code_rate: float = 1.0,
                       half_width: int = 64) -> float:
    """Per-rail white-noise standard deviation realizing the target Eb/N0."""
    gamma = 10.0 ** (ebno_db / 10.0)
    return math.sqrt(kernel_energy(L, half_width) / (4.0 * code_rate * gamma))


def qpsk_ber_theory(ebno_db: float) -> float:
    """Uncoded QPSK over AWGN: Q(sqrt(2 Eb/N0))."""
    gamma = 10.0 ** (ebno_db / 10.0)
    return 0.5 * math.erfc(math.sqrt(gamma))


# ---------------------------------------------------------------------------
# end-to-end chain


@dataclass(frozen=True, eq=False)
class ChainConfig:
    """Full configuration of one BER measurement chain."""

    ebno_db: float
    oversampling: int = 2
    coded: bool = False
    calibration: bool = True
    adc_enabled: bool = True
    mismatch_free: bool = False
    adc: TiAdcConfig = field(default_factory=TiAdcConfig)
    psi2: float = 0.99
    qprime_halfwidth: float = 0.05
    R: float = 5e-5
    sigma0: float = 1e-2
    recon: ReconstructionConfig = field(default_factory=ReconstructionConfig)
    code: ConvCode = field(default_factory=ConvCode)
    kernel_half: int = 64
    guard_symbols: int = 160

    def __post_init__(self):
        occupied = (1.0 + ROLLOFF) * math.pi / self.oversampling
        if occupied > self.adc.tau * math.pi + 1e-12:
            raise ConfigError(
                f"occupied band (1+rolloff)*pi/L = {occupied:.4g} exceeds the "
                f"reconstruction band tau*pi with tau={self.adc.tau}"
            )

    @property
    def code_rate(self) -> float:
        return 0.5 if self.coded else 1.0


@dataclass
class BerPoint:
    bits: int
    errors: int

    @property
    def ber(self) -> float:
        return self.errors / self.bits if self.bits else 0.0


def _sample_with_adc(symbols, cfg: ChainConfig, rng: np.random.Generator):
    """One converter front end: mismatch sampling, pilot slots, AWGN.

    Returns the zero-stuffed stream, the pilot observations and the truth
    trajectory used (for diagnostics).
    """
    L = cfg.oversampling
    n_samples = symbols.size * L
    M_h = cfg.adc.M_h
    n_pilots = (n_samples + M_h - 1) // M_h

    if cfg.mismatch_free:
        traj = np.zeros((n_pilots, cfg.adc.M, 3))
    else:
        model = Ar1Model(psi=math.sqrt(cfg.psi2),
                         q_prime=q_prime_for_uniform_halfwidth(cfg.qprime_halfwidth))
        traj = simulate_trajectories(model, default_initial_states(cfg.adc.M),
                                     n_pilots, rng)

    theta_j = states_in_force(traj, n_samples, M_h)
    j = np.arange(n_samples, dtype=float)
    x_frac = waveform_at(symbols, L, j - theta_j[:, 2], half_width=cfg.kernel_half)
    noise = rng.normal(size=n_samples) * noise_std_for_ebno(
        cfg.ebno_db, L, cfg.code_rate, cfg.kernel_half)
    x_bar = theta_j[:, 0] + (1.0 + theta_j[:, 1]) * (x_frac + noise)
    x_tilde = insert_missing_samples(x_bar, M_h)

    # pilot observations: receiver-injected tone, converter noise variance R
    n_p = np.arange(n_pilots)
    theta_p = traj[n_p, n_p % cfg.adc.M, :]
    phase = cfg.adc.omega_h * (cfg.adc.M_h * n_p - theta_p[:, 2])
    y = theta_p[:, 0] + (1.0 + theta_p[:, 1]) * cfg.adc.pilot_amplitude * np.cos(phase)
    y = y + rng.normal(size=n_pilots) * math.sqrt(cfg.R)
    return x_tilde, y, traj


def _reconstruct_rail(x_tilde, y_pilot, cfg: ChainConfig):
    """Estimate mismatches (or assume none) and rebuild the waveform."""
    n_samples = x_tilde.size
    M_h = cfg.adc.M_h
    if cfg.calibration:
        model = Ar1Model(psi=math.sqrt(cfg.psi2),
                         q_prime=q_prime_for_uniform_halfwidth(cfg.qprime_halfwidth))
        ekf_cfg = EkfConfig.from_ar1(model, R=cfg.R, sigma0_diag=cfg.sigma0)
        bank = run_bank(y_pilot, cfg.adc, ekf_cfg)
        est = bank.estimates_in_force(n_samples, M_h)
    else:
        est = np.zeros((n_samples, 3))
    x_comp = compensate_offset_gain(x_tilde, est[:, 0], est[:, 1], M_h)
    phi = np.clip(est[:, 2], -0.499, 0.499)
    rows = RowBank.build(phi, M_h, cfg.recon)
    return gsi_reconstruct(x_comp, rows, cfg.recon.iterations)


def run_ber_point(cfg: ChainConfig, nbits: int, rng: np.random.Generator) -> BerPoint:
    """Run the full chain on ``nbits`` information bits and count errors."""
    if cfg.coded:
        if nbits % cfg.code.block_length != 0:
            raise ValueError("coded runs need nbits to be a multiple of the block length")
        payload = rng.integers(0, 2, size=nbits)
        blocks = payload.reshape(-1, cfg.code.block_length)
        tx_bits = np.concatenate([conv_encode(b, cfg.code) for b in blocks])
    else:
        if nbits % 2 != 0:
            raise ValueError("uncoded runs need an even bit count")
        payload = rng.integers(0, 2, size=nbits)
        tx_bits = payload

    i_sym, q_sym = qpsk_map(tx_bits)
    g = cfg.guard_symbols
    scale = 1.0 / math.sqrt(2.0)
    guards = scale * (1.0 - 2.0 * rng.integers(0, 2, size=(4, g)))
    i_all = np.concatenate([guards[0], i_sym, guards[1]])
    q_all = np.concatenate([guards[2], q_sym, guards[3]])

    L = cfg.oversampling
    rails = []
    for sym in (i_all, q_all):
        if cfg.adc_enabled:
            x_tilde, y_pilot, _ = _sample_with_adc(sym, cfg, rng)
            x_hat = _reconstruct_rail(x_tilde, y_pilot, cfg)
        else:
            x_hat = shape_and_transmit(sym, L, cfg.kernel_half)
            x_hat = x_hat + rng.normal(size=x_hat.size) * noise_std_for_ebno(
                cfg.ebno_db, L, cfg.code_rate, cfg.kernel_half)
        rails.append(receive_symbols(x_hat, L, cfg.kernel_half))

    i_rx = rails[0][g: g + i_sym.size]
    q_rx = rails[1][g: g + q_sym.size]
    rx_bits = qpsk_demap(i_rx, q_rx)

    if cfg.coded:
        n_coded = 2 * (cfg.code.block_length + cfg.code.constraint_length - 1)
        decoded = np.concatenate([
            viterbi_decode_hard(rx_bits[k * n_coded: (k + 1) * n_coded], cfg.code)
            for k in range(nbits // cfg.code.block_length)
        ])
        errors = int(np.sum(decoded != payload))
    else:
        errors = int(np.sum(rx_bits != payload))
    return BerPoint(bits=nbits, errors=errors)
