"""Command-line front end: config loading, subcommand dispatch, CSV emission."""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import numpy as np

from .comm import ChainConfig
from .config import RunConfig, parse_config, parse_grid
from .ekf import EkfConfig
from .errors import TiAdcError
from .evolution import Ar1Model, default_initial_states, q_prime_for_uniform_halfwidth, \
    simulate_trajectories
from .experiments import SweepSpec, detect_flattening, run_estimation_trial, run_fig2_sweep, \
    run_fig3_sweep, write_fig2_csv, write_fig3_csv, write_sidecar
from .selftest import run_selftest
from .signal_model import ten_tone_signal


def _knobs(cfg: RunConfig) -> dict:
    """Design-decision knobs recorded next to every output."""
    return {
        "window": "hamming",
        "pulse_shape": "root-raised-cosine",
        "rolloff": 0.25,
        "oversampling": cfg.oversampling,
        "kernel_half": cfg.kernel_half,
        "guard_symbols": cfg.guard_symbols,
        "sigma0": cfg.sigma0,
        "boundary_policy": "zero outside stream",
        "estimate_freshness": "latest posterior, causal",
        "gsi_order": "ascending, in place",
        "annihilation_cutoff": cfg.recon_config().annihilation_cutoff,
        "signal_band_touches_cutoff": ten_tone_signal().max_omega >= cfg.tau * math.pi - 1e-12,
        "nmse_convention": "error energy over reference energy, dB, -150 floor",
    }


def _sidecar(cfg: RunConfig, subcommand: str, extra: dict | None = None) -> dict:
    payload = {"subcommand": subcommand, "config": cfg.as_dict(), "knobs": _knobs(cfg)}
    if extra:
        payload.update(extra)
    return payload


def _ar1(cfg: RunConfig) -> Ar1Model:
    return Ar1Model(psi=cfg.psi(), q_prime=q_prime_for_uniform_halfwidth(cfg.qprime_halfwidth()))


def cmd_estimate(cfg: RunConfig, out_dir: Path) -> None:
    adc = cfg.adc_config()
    model = _ar1(cfg)
    ekf_cfg = EkfConfig.from_ar1(model, R=cfg.R, sigma0_diag=cfg.sigma0)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(10,)))
    truth = simulate_trajectories(model, default_initial_states(adc.M), adc.N, rng)
    n = np.arange(adc.N)
    tp = truth[n, n % adc.M, :]
    phase = adc.omega_h * (adc.M_h * n - tp[:, 2])
    y = tp[:, 0] + (1.0 + tp[:, 1]) * adc.pilot_amplitude * np.cos(phase)
    y = y + rng.normal(size=adc.N) * math.sqrt(cfg.R)
    from .ekf import run_bank

    bank = run_bank(y, adc, ekf_cfg)
    path = out_dir / "estimate.csv"
    bank.write_csv(path)
    write_sidecar(out_dir / "estimate.meta.json", _sidecar(cfg, "estimate"))
    print(f"wrote {path}")


def cmd_reconstruct(cfg: RunConfig, out_dir: Path, dump_waveform: bool) -> None:
    adc = cfg.adc_config()
    model = _ar1(cfg)
    ekf_cfg = EkfConfig.from_ar1(model, R=cfg.R, sigma0_diag=cfg.sigma0)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(11,)))
    res = run_estimation_trial(adc, model, ekf_cfg, cfg.recon_config(),
                               ten_tone_signal(), rng)
    path = out_dir / "reconstruct.csv"
    keys = sorted(res.nmse)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        w.writerow([repr(res.nmse[k]) for k in keys])
    if dump_waveform:
        wpath = out_dir / "waveform.csv"
        with open(wpath, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "x", "x_tilde", "x_hat"])
            for i in range(res.x_true.size):
                w.writerow([i, repr(res.x_true[i]), repr(res.x_tilde[i]),
                            repr(res.x_hat[i])])
        print(f"wrote {wpath}")
    write_sidecar(out_dir / "reconstruct.meta.json", _sidecar(cfg, "reconstruct"))
    print(f"wrote {path}")


def cmd_fig2(cfg: RunConfig, out_dir: Path) -> None:
    spec = SweepSpec(psi2_grid=cfg.psi2_grid, qprime_pcts=cfg.qprime_pcts,
                     trials=cfg.trials, N=cfg.N, seed=cfg.seed)
    records = run_fig2_sweep(spec, cfg.adc_config(), R=cfg.R, sigma0=cfg.sigma0,
                             recon=cfg.recon_config(), parallel=cfg.parallel)
    path = out_dir / "fig2.csv"
    write_fig2_csv(records, path, warmup_excluded=True)
    write_fig2_csv(records, out_dir / "fig2_warmup_included.csv", warmup_excluded=False)
    write_sidecar(out_dir / "fig2.meta.json", _sidecar(cfg, "fig2"))
    print(f"wrote {path}")


def cmd_ber(cfg: RunConfig, out_dir: Path) -> None:
    template = ChainConfig(
        ebno_db=0.0, oversampling=cfg.oversampling, coded=cfg.coded,
        calibration=cfg.calibration, adc_enabled=cfg.adc_enabled,
        mismatch_free=cfg.mismatch_free, adc=cfg.adc_config(), psi2=cfg.psi2,
        qprime_halfwidth=cfg.qprime_halfwidth(), R=cfg.R, sigma0=cfg.sigma0,
        recon=cfg.recon_config(), kernel_half=cfg.kernel_half,
        guard_symbols=cfg.guard_symbols,
    )
    modes = ("coded",) if cfg.coded else ("uncoded",)
    records = run_fig3_sweep(cfg.ebno_grid, modes, template, seed=cfg.seed,
                             target_errors=cfg.target_errors, max_bits=cfg.max_bits)
    path = out_dir / "ber.csv"
    write_fig3_csv(records, path)
    write_sidecar(out_dir / "ber.meta.json", _sidecar(
        cfg, "ber", {"flattening_detected": detect_flattening(records)}))
    print(f"wrote {path}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="base RNG seed")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--trials", type=int, help="Monte Carlo repetitions")
    common.add_argument("--parallel", type=int, help="worker processes for sweeps")

    parser = argparse.ArgumentParser(
        prog="tiadc-cal",
        description="Interleaved-ADC mismatch tracking and reconstruction experiments",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    sub.add_parser("estimate", parents=[common],
                   help="track mismatches on a pilot stream, dump the trajectory")
    p = sub.add_parser("reconstruct", parents=[common],
                       help="full estimation + reconstruction run, dump NMSE")
    p.add_argument("--dump-waveform", action="store_true")
    p = sub.add_parser("fig2", parents=[common], help="NMSE sweep over (psi^2, Q')")
    p.add_argument("--psi2", help="grid: comma list or start:step:stop")
    p.add_argument("--qprime", help="comma list among 5,10,15")
    p.add_argument("--pilots", type=int, help="pilot instants per trial")
    p = sub.add_parser("ber", parents=[common], help="BER sweep over Eb/N0")
    p.add_argument("--ebno", help="grid: comma list or start:step:stop")
    p.add_argument("--coded", action="store_true", help="rate-1/2 coded chain")
    p.add_argument("--calibration", choices=["on", "off"])
    p.add_argument("--max-bits", type=int)
    sub.add_parser("selftest", parents=[common], help="run built-in oracle checks")
    return parser


def _overrides(args) -> dict:
    over: dict = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.trials is not None:
        over["trials"] = args.trials
    if args.parallel is not None:
        over["parallel"] = args.parallel
    if getattr(args, "psi2", None):
        over["psi2_grid"] = parse_grid(args.psi2)
    if getattr(args, "qprime", None):
        over["qprime_pcts"] = tuple(int(v) for v in parse_grid(args.qprime))
    if getattr(args, "pilots", None):
        over["N"] = args.pilots
    if getattr(args, "ebno", None):
        over["ebno_grid"] = parse_grid(args.ebno)
    if getattr(args, "coded", False):
        over["coded"] = True
    if getattr(args, "calibration", None):
        over["calibration"] = args.calibration == "on"
    if getattr(args, "max_bits", None):
        over["max_bits"] = args.max_bits
    return over


def dispatch(args) -> int:
    cfg = parse_config(args.config, _overrides(args))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.subcommand == "estimate":
        cmd_estimate(cfg, out_dir)
    elif args.subcommand == "reconstruct":
        cmd_reconstruct(cfg, out_dir, args.dump_waveform)
    elif args.subcommand == "fig2":
        cmd_fig2(cfg, out_dir)
    elif args.subcommand == "ber":
        cmd_ber(cfg, out_dir)
    elif args.subcommand == "selftest":
        return 1 if run_selftest(cfg.seed) else 0
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return dispatch(args)
    except TiAdcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
