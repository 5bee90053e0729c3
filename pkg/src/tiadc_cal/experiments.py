"""Monte Carlo sweeps: estimation/reconstruction NMSE grids and BER curves.

NMSE convention: error energy divided by the energy of the reference,
pooled over time and sub-ADCs, in dB.  A predictor that always outputs
zero therefore lands at exactly 0 dB on the estimation metric.  Values
below the floor are clamped to -150 dB.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__ as _version
from .comm import ChainConfig, run_ber_point
from .compensation import ReconstructionConfig, RowBank, compensate_offset_gain, gsi_reconstruct
from .ekf import EkfBankResult, EkfConfig, run_bank
from .errors import ConfigError, NmseUndefinedError
from .evolution import Ar1Model, default_initial_states, q_prime_for_uniform_halfwidth, \
    simulate_trajectories, states_in_force
from .signal_model import MultitoneSignal, TiAdcConfig, insert_missing_samples, ten_tone_signal

DB_FLOOR = -150.0


def _to_db(num: float, den: float) -> float:
    if den == 0.0:
        raise NmseUndefinedError("NMSE reference has zero energy")
    if num == 0.0:
        return DB_FLOOR
    return max(10.0 * math.log10(num / den), DB_FLOOR)


def nmse_estimation(truth, estimates, warmup_fraction: float = 0.1) -> dict:
    """Per-parameter NMSE of aligned (N, M, 3) trajectories, in dB.

    Returns both the warm-up-excluded values (first ``warmup_fraction`` of
    pilot instants dropped) and the full-trajectory values.
    """
    truth = np.asarray(truth, dtype=float)
    estimates = np.asarray(estimates, dtype=float)
    if truth.shape != estimates.shape:
        raise ValueError(f"trajectory shapes disagree: {truth.shape} vs {estimates.shape}")
    start = int(round(truth.shape[0] * warmup_fraction))
    out = {}
    for label, sl in (("excluded", slice(start, None)), ("full", slice(None))):
        err = estimates[sl] - truth[sl]
        ref = truth[sl]
        for p, name in enumerate(("alpha", "beta", "phi")):
            out[f"nmse_{name}_db_{label}"] = _to_db(
                float(np.sum(err[..., p] ** 2)), float(np.sum(ref[..., p] ** 2)))
    return out


def nmse_reconstruction(x_true, x_hat, edge_exclude: int) -> float:
    """Reconstruction NMSE in dB with ``edge_exclude`` samples dropped per end."""
    x_true = np.asarray(x_true, dtype=float)
    x_hat = np.asarray(x_hat, dtype=float)
    sl = slice(edge_exclude, x_true.size - edge_exclude)
    err = x_hat[sl] - x_true[sl]
    return _to_db(float(np.sum(err**2)), float(np.sum(x_true[sl] ** 2)))


@dataclass(frozen=True)
class SweepSpec:
    """Grid and repetition plan for the NMSE sweeps."""

    psi2_grid: tuple = (0.9, 0.95, 0.99, 0.999, 1.0)
    qprime_pcts: tuple = (5, 10, 15)
    trials: int = 10
    N: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if not self.psi2_grid or not self.qprime_pcts:
            raise ConfigError("sweep grids must be non-empty")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if any(p not in (5, 10, 15) for p in self.qprime_pcts):
            raise ConfigError("qprime percentages must be among 5, 10, 15")


@dataclass
class TrialResult:
    """All artifacts of one estimation-plus-reconstruction run."""

    truth: np.ndarray
    bank: EkfBankResult
    x_true: np.ndarray
    x_tilde: np.ndarray
    x_hat: np.ndarray
    nmse: dict


def run_estimation_trial(
    adc: TiAdcConfig,
    model: Ar1Model,
    ekf_cfg: EkfConfig,
    recon_cfg: ReconstructionConfig,
    signal: MultitoneSignal,
    rng: np.random.Generator,
    theta0=None,
    oracle_estimates: bool = False,
) -> TrialResult:
    """Simulate one pilot/desired-signal run and reconstruct the signal.

    ``oracle_estimates`` bypasses the filter bank and compensates with the
    true mismatch states (used by reference measurements).
    """
    if adc.M_h % adc.M != 1:
        raise ConfigError(
            "pilot routing requires M_h == 1 (mod M) so pilot-index and "
            f"sample-index sub-ADC assignments agree; got M={adc.M}, M_h={adc.M_h}"
        )
    signal.check_band(adc.tau)
    if theta0 is None:
        theta0 = default_initial_states(adc.M)

    truth = simulate_trajectories(model, theta0, adc.N, rng)
    n_pilot = np.arange(adc.N)
    theta_p = truth[n_pilot, n_pilot % adc.M, :]
    phase = adc.omega_h * (adc.M_h * n_pilot - theta_p[:, 2])
    y = theta_p[:, 0] + (1.0 + theta_p[:, 1]) * adc.pilot_amplitude * np.cos(phase)
    y = y + rng.normal(size=adc.N) * math.sqrt(ekf_cfg.R)

    bank = run_bank(y, adc, ekf_cfg)

    n_samples = adc.N * adc.M_h
    j = np.arange(n_samples, dtype=float)
    theta_j = states_in_force(truth, n_samples, adc.M_h)
    x_true = signal.eval(j)
    x_bar = theta_j[:, 0] + (1.0 + theta_j[:, 1]) * signal.eval(j - theta_j[:, 2])
    x_tilde = insert_missing_samples(x_bar, adc.M_h)

    est = theta_j if oracle_estimates else bank.estimates_in_force(n_samples, adc.M_h)
    x_comp = compensate_offset_gain(x_tilde, est[:, 0], est[:, 1], adc.M_h)
    rows = RowBank.build(np.clip(est[:, 2], -0.499, 0.499), adc.M_h, recon_cfg)
    x_hat = gsi_reconstruct(x_comp, rows, recon_cfg.iterations)

    nmse = nmse_estimation(truth, bank.snapshots)
    nmse["nmse_recon_db"] = nmse_reconstruction(x_true, x_hat, recon_cfg.N_w)
    nmse["nmse_uncompensated_db"] = nmse_reconstruction(x_true, x_tilde, recon_cfg.N_w)
    return TrialResult(truth=truth, bank=bank, x_true=x_true, x_tilde=x_tilde,
                       x_hat=x_hat, nmse=nmse)


def _fig2_trial(args):
    psi2, pct, trial, spec, adc_args, ekf_args, recon_args = args
    adc = TiAdcConfig(**adc_args)
    model = Ar1Model(psi=math.sqrt(psi2),
                     q_prime=q_prime_for_uniform_halfwidth(pct / 100.0))
    ekf_cfg = EkfConfig.from_ar1(model, R=ekf_args["R"], sigma0_diag=ekf_args["sigma0"])
    recon_cfg = ReconstructionConfig(**recon_args)
    rng = np.random.default_rng(
        np.random.SeedSequence(spec.seed, spawn_key=(1, int(round(psi2 * 1000)), pct, trial)))
    res = run_estimation_trial(adc, model, ekf_cfg, recon_cfg, ten_tone_signal(), rng)
    return res.nmse


def run_fig2_sweep(spec: SweepSpec, adc: TiAdcConfig, R: float = 5e-5,
                   sigma0: float = 1e-2, recon: ReconstructionConfig | None = None,
                   parallel: int = 1) -> list[dict]:
    """NMSE of estimation and reconstruction over the (psi^2, Q') grid.

    Each record averages ``spec.trials`` runs on the ten-tone test signal.
    """
    recon = recon or ReconstructionConfig(tau=adc.tau)
    adc_args = dict(M=adc.M, M_h=adc.M_h, tau=adc.tau, N=spec.N,
                    omega_h=adc.omega_h, pilot_amplitude=adc.pilot_amplitude)
    ekf_args = {"R": R, "sigma0": sigma0}
    recon_args = dict(N_g=recon.N_g, N_w=recon.N_w, iterations=recon.iterations,
                      tau=recon.tau)
    tasks = [
        (psi2, pct, trial, spec, adc_args, ekf_args, recon_args)
        for psi2 in spec.psi2_grid
        for pct in spec.qprime_pcts
        for trial in range(spec.trials)
    ]
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(_fig2_trial, tasks, chunksize=1))
    else:
        results = [_fig2_trial(t) for t in tasks]

    records = []
    per_point = spec.trials
    for i, psi2 in enumerate(spec.psi2_grid):
        for k, pct in enumerate(spec.qprime_pcts):
            base = (i * len(spec.qprime_pcts) + k) * per_point
            chunk = results[base: base + per_point]
            rec = {"psi2": psi2, "qprime_pct": pct, "trials": spec.trials}
            for key in chunk[0]:
                rec[key] = float(np.mean([c[key] for c in chunk]))
            records.append(rec)
    return records


FIG2_COLUMNS = ["psi2", "qprime_pct", "trials", "nmse_alpha_db", "nmse_beta_db",
                "nmse_phi_db", "nmse_recon_db", "warmup_excluded"]


def write_fig2_csv(records: list[dict], path, warmup_excluded: bool) -> None:
    suffix = "excluded" if warmup_excluded else "full"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FIG2_COLUMNS)
        for rec in records:
            w.writerow([
                repr(rec["psi2"]), rec["qprime_pct"], rec["trials"],
                repr(rec[f"nmse_alpha_db_{suffix}"]),
                repr(rec[f"nmse_beta_db_{suffix}"]),
                repr(rec[f"nmse_phi_db_{suffix}"]),
                repr(rec["nmse_recon_db"]),
                str(warmup_excluded).lower(),
            ])


def run_fig3_sweep(
    ebno_grid,
    modes,
    chain_template: ChainConfig,
    seed: int = 0,
    target_errors: int = 100,
    max_bits: int = 2_000_000,
    chunk_bits: int = 200_000,
) -> list[dict]:
    """BER per (Eb/N0, mode) with an error-count stopping rule.

    ``modes`` is an iterable of "uncoded"/"coded".  Chunks accumulate until
    ``target_errors`` errors are seen or ``max_bits`` is reached.
    """
    records = []
    for gi, ebno in enumerate(ebno_grid):
        for mode in modes:
            coded = mode == "coded"
            cfg = ChainConfig(
                ebno_db=float(ebno), oversampling=chain_template.oversampling,
                coded=coded, calibration=chain_template.calibration,
                adc_enabled=chain_template.adc_enabled,
                mismatch_free=chain_template.mismatch_free,
                adc=chain_template.adc, psi2=chain_template.psi2,
                qprime_halfwidth=chain_template.qprime_halfwidth,
                R=chain_template.R, sigma0=chain_template.sigma0,
                recon=chain_template.recon, code=chain_template.code,
                kernel_half=chain_template.kernel_half,
                guard_symbols=chain_template.guard_symbols,
            )
            block = cfg.code.block_length if coded else 2
            chunk = max(chunk_bits // block, 1) * block
            bits = errors = 0
            ci = 0
            while bits < max_bits and errors < target_errors:
                n = min(chunk, max_bits - bits)
                n = max(n // block, 1) * block
                rng = np.random.default_rng(
                    np.random.SeedSequence(seed, spawn_key=(3, gi, int(coded), ci)))
                pt = run_ber_point(cfg, n, rng)
                bits += pt.bits
                errors += pt.errors
                ci += 1
            records.append({
                "ebno_db": float(ebno), "mode": mode,
                "calibration": "on" if cfg.calibration else "off",
                "bits": bits, "errors": errors,
                "ber": errors / bits if bits else 0.0, "seed": seed,
            })
    return records


FIG3_COLUMNS = ["ebno_db", "mode", "calibration", "bits", "errors", "ber", "seed"]


def write_fig3_csv(records: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FIG3_COLUMNS)
        for rec in records:
            w.writerow([repr(rec["ebno_db"]), rec["mode"], rec["calibration"],
                        rec["bits"], rec["errors"], repr(rec["ber"]), rec["seed"]])


def detect_flattening(records: list[dict], factor: float = 2.0) -> bool:
    """True when the two highest-Eb/N0 points of any mode agree within
    ``factor`` (both measuring zero errors also counts as flat)."""
    by_mode: dict = {}
    for rec in records:
        by_mode.setdefault(rec["mode"], []).append(rec)
    for recs in by_mode.values():
        recs = sorted(recs, key=lambda r: r["ebno_db"])
        if len(recs) < 2:
            continue
        a, b = recs[-2], recs[-1]
        if a["ber"] == 0.0 and b["ber"] == 0.0:
            return True
        if a["ber"] > 0.0 and b["ber"] > 0.0 and \
                max(a["ber"], b["ber"]) <= factor * min(a["ber"], b["ber"]):
            return True
    return False


def write_sidecar(path, payload: dict) -> None:
    """Deterministic JSON metadata describing an output file."""
    payload = dict(payload)
    payload["artifact_version"] = _version
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    raise TypeError(f"not JSON-serializable: {type(obj)}")
