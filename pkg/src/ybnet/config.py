"""Strict TOML run configuration.

Top-level keys are ``seed``, ``out``, ``plots`` and ``workers``; each
subcommand reads its own ``[section]``. Unknown sections or keys are errors,
and every default that is applied is logged.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field
from typing import Any, get_type_hints

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid configuration."""


@dataclass
class MagicRabiConfig:
    b_gauss: float = 120.0
    m: int = 1


@dataclass
class RegMapConfig:
    b_values_gauss: list[float] = field(default_factory=lambda: [120.0])
    omega_min_mhz: float = 10.0
    omega_max_mhz: float = 60.0
    omega_step_mhz: float = 2.0
    pulse_shape: str = "square"


@dataclass
class RamanMapConfig:
    b_gauss: float = 120.0
    detuning_mhz: float = 612.0
    omega_min_mhz: float = 40.0
    omega_max_mhz: float = 100.0
    n_omega: int = 40
    theta_min: float = 0.3
    theta_max: float = 1.2
    n_theta: int = 40
    ramp_ns: float = 5.0


@dataclass
class MotionConfig:
    delta_t_us: list[float] = field(default_factory=lambda: [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 2.8, 3.5, 4.0, 5.0])
    temperatures_uk: list[float] = field(default_factory=lambda: [1.0, 2.33, 3.5])
    omega_radial_khz: float = 32.0
    omega_axial_khz: float = 3.0
    n_max: int = 400


@dataclass
class AttemptLoopConfig:
    trials: int = 100_000
    n_attempts: int = 128
    depump_loss: float = 0.026
    basis: str = "ZZ"
    collection_efficiency_zz: float = 0.003
    collection_efficiency_xx: float = 0.0006
    dark_rate_hz: float = 11.0
    window_ns: float = 520.0
    dark_probability: float = 3e-6
    binary_log: bool = False


@dataclass
class CrosstalkConfig:
    trials: int = 50_000
    n_sites: int = 3
    load_probability: float = 0.5
    crosstalk: float = 0.01
    collection_efficiency: float = 0.05
    dark_probability: float = 3e-6


@dataclass
class TomographyConfig:
    zz_error: float = 0.03
    coherence: float = 0.924
    shots_zz: int = 3000
    shots_per_phase: int = 500
    n_phases: int = 12
    clock_pi_fidelity: float = 0.985
    random_states: int = 1000
    samples_per_state: int = 100_000
    arrival_trials: int = 20_000


@dataclass
class SpamCorrectConfig:
    draws: int = 10_000
    dataset: str = ""


@dataclass
class CavityRateConfig:
    R_c_mm: float = 8.0
    g_cav: float = -0.9
    T_in_ppm: float = 20.0
    L_ppm: float = 100.0
    eta_det: float = 0.8
    N_a: int = 204
    T_move_us: float = 100.0
    T_init_us: float = 5.3
    T_depump_us: float = 6.1
    T_REG_us: float = 1.752
    m_max: int = 50


@dataclass
class ParallelSimConfig:
    n_channels: int = 5
    per_attempt_success: float = 0.01
    attempt_period_us: float = 10.0
    duration_s: float = 10.0


@dataclass
class ErrorBudgetConfig:
    visibility: float = 0.967
    delta_t_us: float = 2.8
    b_gauss: float = 120.0
    reg_rabi_mhz: float = 30.0
    raman_delay_us: float = 1.2
    raman_pi_us: float = 0.7


SECTIONS: dict[str, type] = {
    "magic_rabi": MagicRabiConfig,
    "reg_map": RegMapConfig,
    "raman_map": RamanMapConfig,
    "motion": MotionConfig,
    "attempt_loop": AttemptLoopConfig,
    "crosstalk": CrosstalkConfig,
    "tomography": TomographyConfig,
    "spam_correct": SpamCorrectConfig,
    "cavity_rate": CavityRateConfig,
    "parallel_sim": ParallelSimConfig,
    "error_budget": ErrorBudgetConfig,
}

#: Keys that do not influence results and are left out of the config hash.
_UNHASHED = ("out", "plots", "workers")


@dataclass
class RunConfig:
    seed: int = 0
    out: str = "out"
    plots: bool = False
    workers: int = 1
    sections: dict[str, Any] = field(default_factory=lambda: {k: v() for k, v in SECTIONS.items()})

    def section(self, name: str):
        return self.sections[name]

    def as_dict(self, hashed_only: bool = False) -> dict:
        top = {"seed": self.seed, "out": self.out, "plots": self.plots, "workers": self.workers}
        if hashed_only:
            top = {k: v for k, v in top.items() if k not in _UNHASHED}
        return top | {k: dataclasses.asdict(v) for k, v in sorted(self.sections.items())}

    def digest(self) -> str:
        """SHA-256 of the canonical JSON of all result-relevant settings."""
        text = json.dumps(self.as_dict(hashed_only=True), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _check_type(value: Any, hint: Any, where: str) -> Any:
    origin = getattr(hint, "__origin__", None)
    if origin is list:
        (inner,) = hint.__args__
        if not isinstance(value, list):
            raise ConfigError(f"type mismatch at {where}: expected list, got {type(value).__name__}")
        return [_check_type(v, inner, f"{where}[{i}]") for i, v in enumerate(value)]
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"type mismatch at {where}: expected float, got {type(value).__name__}")
        return float(value)
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"type mismatch at {where}: expected int, got {type(value).__name__}")
        return value
    if not isinstance(value, hint):
        raise ConfigError(f"type mismatch at {where}: expected {hint.__name__}, got {type(value).__name__}")
    return value


def _fill(cls: type, values: dict, prefix: str) -> Any:
    hints = get_type_hints(cls)
    names = [f.name for f in dataclasses.fields(cls)]
    for key in values:
        if key not in names:
            raise ConfigError(f"unknown key {prefix}{key!r}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in values:
            kwargs[f.name] = _check_type(values[f.name], hints[f.name], prefix + f.name)
        else:
            default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
            log.info("default applied: %s%s = %r", prefix, f.name, default)
    return cls(**kwargs)


def parse_config(text: str) -> RunConfig:
    """Parse TOML text into a validated :class:`RunConfig`.

    Raises:
        ConfigError: On syntax errors, unknown keys or type mismatches.
    """
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    top = {k: v for k, v in data.items() if not isinstance(v, dict)}
    tables = {k: v for k, v in data.items() if isinstance(v, dict)}
    for name in tables:
        if name not in SECTIONS:
            raise ConfigError(f"unknown key {name!r}")
    base = {k: v for k, v in top.items()}
    for key in base:
        if key not in ("seed", "out", "plots", "workers"):
            raise ConfigError(f"unknown key {key!r}")
    cfg = RunConfig(
        seed=_check_type(base["seed"], int, "seed") if "seed" in base else 0,
        out=_check_type(base["out"], str, "out") if "out" in base else "out",
        plots=_check_type(base["plots"], bool, "plots") if "plots" in base else False,
        workers=_check_type(base["workers"], int, "workers") if "workers" in base else 1,
        sections={name: _fill(cls, tables.get(name, {}), f"{name}.") for name, cls in SECTIONS.items()},
    )
    for key in ("seed", "out", "plots", "workers"):
        if key not in base:
            log.info("default applied: %s = %r", key, getattr(cfg, key))
    if cfg.seed < 0 or cfg.seed >= 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if cfg.workers < 1:
        raise ConfigError("workers must be at least 1")
    return cfg


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return parse_config("")
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
