"""Flat TOML run configuration with explicit units in key names."""

from __future__ import annotations

import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .event_sim import ConfigError, ExperimentConfig, Scenario, ScenarioKind

__all__ = ["RunConfig", "load_config", "OUTPUT_DIR_ENV"]

OUTPUT_DIR_ENV = "HOMFB_OUTPUT_DIR"


def _pair(v):
    return tuple(float(x) for x in v) if isinstance(v, (list, tuple)) else float(v)


@dataclass(frozen=True)
class RunConfig:
    scenario: str = "a"
    mu: float = 1.0
    phi_rad: float | None = None
    delta_t_ns: float = 450.0
    latency_ns: float = 97.0
    repetition_period_ns: float = 1000.0
    photon_window_ns: float = 450.0
    repump_window_ns: float = 550.0
    repump_light_delay_ns: float = 50.0
    repump_light_rate_hz: float | tuple = 20_000.0
    delay_transmission: float = 0.7
    emission_probability: float = 0.5
    detector_efficiency: float | tuple = 0.6
    dark_rate_hz: float | tuple = 30_000.0
    tdc_resolution_ps: float = 81.0
    seed: int = 0
    n_cycles: int = 1_000_000
    output_dir: str = "out"
    output_format: str = "csv"
    stream_format: str = "csv"
    hist_width_ns: float = 50.0
    hist_step_ns: float = 10.0
    n_tau: int = 801
    chi2_per_dof_max: float = 2.0

    def __post_init__(self):
        ScenarioKind.from_panel(self.scenario)
        if self.output_format not in ("csv", "json"):
            raise ConfigError(f"output_format must be csv or json, got {self.output_format!r}")
        if self.stream_format not in ("csv", "binary"):
            raise ConfigError(f"stream_format must be csv or binary, got {self.stream_format!r}")
        if int(self.n_cycles) < 1:
            raise ConfigError("n_cycles must be >= 1")
        for name in ("delta_t_ns", "photon_window_ns", "repump_window_ns", "repetition_period_ns",
                     "tdc_resolution_ps", "hist_width_ns", "hist_step_ns"):
            if not float(getattr(self, name)) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        clean = {}
        for k, v in data.items():
            if isinstance(v, list):
                v = tuple(v)
            clean[k] = v
        try:
            return cls(**clean)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def with_overrides(self, **kw) -> "RunConfig":
        return self.from_dict({**asdict(self), **{k: v for k, v in kw.items() if v is not None}})

    @property
    def kind(self) -> ScenarioKind:
        return ScenarioKind.from_panel(self.scenario)

    def scenario_obj(self, panel: str | None = None) -> Scenario:
        kind = ScenarioKind.from_panel(panel or self.scenario)
        phi = self.phi_rad if kind in (ScenarioKind.PARALLEL_PHI0, ScenarioKind.PARALLEL_PHIPI) else None
        if panel is not None and panel != self.scenario:
            phi = None
        return Scenario(kind, phi, float(self.mu), self.delta_t_ns * 1e-9)

    def experiment(self, panel: str | None = None) -> ExperimentConfig:
        try:
            return ExperimentConfig(
                repetition_period=self.repetition_period_ns * 1e-9,
                photon_window=self.photon_window_ns * 1e-9,
                repump_window=self.repump_window_ns * 1e-9,
                delay_transmission=float(self.delay_transmission),
                emission_probability=float(self.emission_probability),
                detector_efficiency=_pair(self.detector_efficiency),
                dark_rate=_pair(self.dark_rate_hz),
                tdc_resolution=self.tdc_resolution_ps * 1e-12,
                rng_seed=int(self.seed),
                scenario=self.scenario_obj(panel),
                feedback_latency=self.latency_ns * 1e-9,
                repump_light_delay=self.repump_light_delay_ns * 1e-9,
                repump_light_rate=_pair(self.repump_light_rate_hz),
            )
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def resolved_output_dir(self, cli_value: str | None = None) -> Path:
        """Command-line flag, then environment variable, then config value."""
        return Path(cli_value or os.environ.get(OUTPUT_DIR_ENV) or self.output_dir)


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    nested = [k for k, v in data.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"config must be flat; found table(s): {', '.join(nested)}")
    return RunConfig.from_dict(data)
