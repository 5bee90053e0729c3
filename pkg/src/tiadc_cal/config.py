"""Run configuration: defaults, JSON loading, strict validation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields

from .compensation import ReconstructionConfig
from .errors import ConfigError
from .signal_model import TiAdcConfig


@dataclass
class RunConfig:
    """Union of all knobs, defaulting to the reference experiment setup."""

    M: int = 4
    M_h: int = 17
    tau: float = 0.8
    N: int = 10_000
    omega_h: float | None = None
    pilot_amplitude: float = 1.0

    psi2: float = 0.99
    qprime_pct: int = 5

    R: float = 5e-5
    sigma0: float = 1e-2

    N_g: int = 20
    N_w: int = 51
    gsi_iterations: int = 4
    stopband_margin: float | None = None

    oversampling: int = 2
    block_length: int = 1000
    guard_symbols: int = 160
    kernel_half: int = 64
    coded: bool = False
    calibration: bool = True
    adc_enabled: bool = True
    mismatch_free: bool = False

    psi2_grid: tuple = (0.9, 0.95, 0.99, 0.999, 1.0)
    qprime_pcts: tuple = (5, 10, 15)
    trials: int = 10

    ebno_grid: tuple = (0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0)
    target_errors: int = 100
    max_bits: int = 2_000_000

    seed: int = 0
    parallel: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        # component invariants are re-checked by constructing the components
        self.adc_config()
        self.recon_config()
        if not 0.0 <= self.psi2 <= 1.0:
            raise ConfigError(f"psi2 must lie in [0, 1], got {self.psi2}")
        if self.qprime_pct not in (5, 10, 15):
            raise ConfigError(f"qprime_pct must be 5, 10 or 15, got {self.qprime_pct}")
        if self.R <= 0:
            raise ConfigError(f"observation noise variance must satisfy R > 0, got {self.R}")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if self.parallel < 1:
            raise ConfigError(f"parallel must be >= 1, got {self.parallel}")
        if any(not 0.0 <= p <= 1.0 for p in self.psi2_grid):
            raise ConfigError("psi2_grid entries must lie in [0, 1]")
        if any(p not in (5, 10, 15) for p in self.qprime_pcts):
            raise ConfigError("qprime_pcts entries must be among 5, 10, 15")

    def adc_config(self) -> TiAdcConfig:
        return TiAdcConfig(
            M=self.M, M_h=self.M_h, tau=self.tau, N=self.N,
            omega_h=0.0 if self.omega_h is None else self.omega_h,
            pilot_amplitude=self.pilot_amplitude,
        )

    def recon_config(self) -> ReconstructionConfig:
        return ReconstructionConfig(
            N_g=self.N_g, N_w=self.N_w, iterations=self.gsi_iterations,
            tau=self.tau, stopband_margin=self.stopband_margin,
        )

    def qprime_halfwidth(self) -> float:
        return self.qprime_pct / 100.0

    def psi(self) -> float:
        return math.sqrt(self.psi2)

    def as_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out


_FIELD_NAMES = {f.name for f in fields(RunConfig)}
_TUPLE_FIELDS = {"psi2_grid", "qprime_pcts", "ebno_grid"}


def parse_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from an optional JSON file plus overrides.

    Unknown keys are rejected by name; all component invariants are
    re-validated on construction.
    """
    values: dict = {}
    if path is not None:
        try:
            with open(path) as fh:
                loaded = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed config file {path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        values.update(loaded)
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})

    unknown = sorted(set(values) - _FIELD_NAMES)
    if unknown:
        raise ConfigError(f"unknown config key: {unknown[0]!r}")
    for key in _TUPLE_FIELDS & set(values):
        values[key] = tuple(values[key])
    return RunConfig(**values)


def parse_grid(text: str) -> tuple:
    """Parse ``start:step:stop`` (inclusive) or a comma list into a tuple."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"grid ranges use start:step:stop, got {text!r}")
        start, step, stop = (float(p) for p in parts)
        if step <= 0:
            raise ConfigError(f"grid step must be positive, got {step}")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(start + i * step for i in range(max(n, 0)))
    try:
        return tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError as exc:
        raise ConfigError(f"cannot parse grid {text!r}: {exc}") from exc
