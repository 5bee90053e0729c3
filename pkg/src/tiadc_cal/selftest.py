"""Built-in oracle checks runnable from the command line.

Each check pits a production path against an independent reference
(finite differences, dense linear solve, closed forms, Monte Carlo) and
prints one PASS/FAIL line.
"""

from __future__ import annotations

import math

import numpy as np

from .comm import ConvCode, conv_encode, interp_taps, noise_std_for_ebno, viterbi_decode_hard
from .compensation import ReconstructionConfig, RowBank, design_fractional_delay, \
    design_highpass, gsi_reconstruct
from .ekf import predict_state, pilot_jacobian
from .evolution import Ar1Model, evolve, q_prime_for_uniform_halfwidth
from .signal_model import MismatchState, TiAdcConfig, sample_pilot


def _check_jacobian(rng):
    adc = TiAdcConfig()
    eps = 1e-6
    worst = 0.0
    for _ in range(300):
        theta = rng.uniform(-0.3, 0.3, size=3)
        theta[2] = rng.uniform(-0.4, 0.4)
        n = int(rng.integers(0, 10_000))
        state = MismatchState(*theta)
        H = pilot_jacobian(theta, n, adc)
        fd = np.empty(3)
        for p in range(3):
            d = np.zeros(3)
            d[p] = eps
            hi = sample_pilot(n, MismatchState(*(theta + d)), adc)
            lo = sample_pilot(n, MismatchState(*(theta - d)), adc)
            fd[p] = (hi - lo) / (2 * eps)
        ref = max(1.0, float(np.max(np.abs(fd))))
        worst = max(worst, float(np.max(np.abs(H - fd))) / ref)
        del state
    return worst < 1e-6, f"max relative deviation {worst:.2e}"


def _check_predict_composition(rng):
    q = q_prime_for_uniform_halfwidth(0.05)
    psi = math.sqrt(0.99)
    Q = (1 - psi**2) * q
    theta = rng.normal(size=3)
    sigma = np.diag(rng.uniform(0.5, 2.0, size=3))
    t1, s1 = theta.copy(), sigma.copy()
    for _ in range(4):
        t1, s1 = predict_state(t1, s1, psi, Q, 1)
    t4, s4 = predict_state(theta, sigma, psi, Q, 4)
    err = max(float(np.max(np.abs(t1 - t4))), float(np.max(np.abs(s1 - s4))))
    return err < 1e-12, f"4 chained vs closed-form deviation {err:.2e}"


def _check_viterbi(rng):
    code = ConvCode()
    for _ in range(20):
        bits = rng.integers(0, 2, size=code.block_length)
        cw = conv_encode(bits, code)
        if not np.array_equal(viterbi_decode_hard(cw, code), bits):
            return False, "error-free round trip failed"
        cw[int(rng.integers(0, cw.size))] ^= 1
        if not np.array_equal(viterbi_decode_hard(cw, code), bits):
            return False, "single-error correction failed"
    return True, "20 blocks round-tripped, random single errors corrected"


def _check_gsi_dense(rng):
    cfg = ReconstructionConfig(N_g=10, N_w=21, iterations=4, tau=0.5)
    phi = rng.uniform(-0.1, 0.1, size=64)
    rows = RowBank.build(phi, 8, cfg)
    G = rows.to_dense()
    x = np.cos(0.3 * np.pi * np.arange(64))
    rhs = G @ x
    xd = np.linalg.solve(G, rhs)
    xg = gsi_reconstruct(rhs, rows, 100)
    err = float(np.max(np.abs(xg - xd)))
    return err < 1e-6, f"max deviation from dense solve {err:.2e}"


def _check_fractional_delay(rng):
    omega = 0.5 * np.pi
    n = np.arange(2048, dtype=float)
    x = np.cos(omega * n)
    errs = []
    for half in (5, 10, 20):
        filt = design_fractional_delay(0.25, half)
        y = filt.apply(x)
        truth = np.cos(omega * (n - 0.25))
        errs.append(float(np.max(np.abs(y - truth)[64:-64])))
    ok = errs[2] < 1e-2 and errs[0] > errs[1] > errs[2]
    return ok, f"max interior errors N_g=5/10/20: {errs[0]:.1e}/{errs[1]:.1e}/{errs[2]:.1e}"


def _check_highpass(rng):
    filt = design_highpass(0.8, 51)
    n = np.arange(8192, dtype=float)
    x = sum(np.cos(w * np.pi * n + p) for w, p in
            zip((0.1, 0.3, 0.5, 0.7), (0.0, 1.0, 2.0, 3.0)))
    y = filt.apply(x)[128:-128]
    ratio_db = 10 * math.log10(float(np.mean(y**2)) / float(np.mean(x**2)))
    return ratio_db <= -40.0, f"in-band rejection {ratio_db:.1f} dB"


def _check_noise_calibration(rng):
    sigma = noise_std_for_ebno(6.0, 2, 1.0)
    draws = rng.normal(size=1_000_000) * sigma
    rel = abs(float(np.var(draws)) - sigma**2) / sigma**2
    taps = interp_taps(2, 64)
    expected = float(np.sum(taps * taps)) / (4.0 * 10 ** 0.6)
    model_rel = abs(sigma**2 - expected) / expected
    return rel < 0.01 and model_rel < 1e-12, f"empirical variance off by {rel:.3%}"


def _check_ar1_stationarity(rng):
    model = Ar1Model(psi=math.sqrt(0.99), q_prime=q_prime_for_uniform_halfwidth(0.05))
    theta = rng.normal(size=(2000, 3)) * math.sqrt(0.05**2 / 3)
    acc = np.zeros(3)
    steps = 50
    for _ in range(steps):
        theta = evolve(theta, model, rng)
        acc += np.mean(theta**2, axis=0)
    var = acc / steps
    target = 0.05**2 / 3
    rel = float(np.max(np.abs(var - target))) / target
    return rel < 0.05, f"stationary variance off by {rel:.3%}"


CHECKS = [
    ("observation-jacobian-vs-finite-differences", _check_jacobian),
    ("k-step-predict-vs-chained-predicts", _check_predict_composition),
    ("viterbi-roundtrip-and-single-error", _check_viterbi),
    ("gsi-vs-dense-solve", _check_gsi_dense),
    ("fractional-delay-vs-delayed-cosine", _check_fractional_delay),
    ("highpass-in-band-annihilation", _check_highpass),
    ("awgn-variance-calibration", _check_noise_calibration),
    ("ar1-stationary-variance", _check_ar1_stationarity),
]


def run_selftest(seed: int = 0, out=print) -> int:
    """Run all checks; returns the number of failures."""
    failures = 0
    for name, fn in CHECKS:
        ok, detail = fn(np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(99,))))
        out(f"{'PASS' if ok else 'FAIL'} {name} ({detail})")
        failures += 0 if ok else 1
    return failures
