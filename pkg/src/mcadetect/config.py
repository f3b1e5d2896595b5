"""Experiment configuration models and TOML loading."""
from __future__ import annotations

import os
from importlib import resources
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

SWEEP_AXES = ("snr_db", "beta", "sigma_m", "olg_db", "k_users")


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ScenarioConfig(_Section):
    R: int = Field(64, ge=1)
    K: int = Field(4, ge=1)
    mode: Literal["snr", "cell"] = "snr"
    snr_db: float = 20.0
    snr_definition: Literal["matched_filter", "receive"] = "receive"
    qam_order: Literal[4, 16, 64] = 64
    sigma_g2: float = Field(0.5, gt=0)
    cell_radius: float = Field(150.0, gt=0)
    tx_power_dbm: float = 20.0
    carrier_freq: float = Field(2e9, gt=0)
    bandwidth: float = Field(25e6, gt=0)
    noise_figure_db: float = 7.0
    pathloss_exponent: float = 3.76
    pathloss_ref_db: float = 38.46
    min_distance: float = Field(1.0, gt=0)
    freeze_lsfc: bool = False

    @model_validator(mode="after")
    def _antennas(self):
        if self.R < self.K:
            raise ValueError("need R >= K")
        return self


class DetectorConfig(_Section):
    variant: Literal["ZF", "MMSE"] = "MMSE"


class MappingConfig(_Section):
    scheme: Literal["AMF", "FMF"] = "AMF"
    beta: float = Field(3.0, gt=0)
    c_overflow: Literal["parallel", "cap_alpha", "clip", "strict"] = "parallel"
    c_slots: int = Field(32, ge=1)
    theta_placement: Literal["max", "mid"] = "max"


class DeviceConfig(_Section):
    omega_min: float = Field(0.1e-6, gt=0)
    omega_max: float = Field(30e-6, gt=0)
    sigma_m: float = Field(0.0, ge=0, description="deviation std as a fraction of omega")
    deviate_theta: bool = True

    @model_validator(mode="after")
    def _window(self):
        if self.omega_min >= self.omega_max:
            raise ValueError("omega_min must be below omega_max")
        return self


class OaConfig(_Section):
    olg_db: Optional[float] = None  # None: ideal virtual ground
    gbp: float = Field(500e6, gt=0)
    ideal_inverters: bool = True
    ideal_followers: bool = True
    dac_bits: Optional[int] = Field(None, ge=1)
    adc_bits: Optional[int] = Field(None, ge=1)
    adc_full_scale: float = Field(1.0, gt=0)


class SweepConfig(_Section):
    axis: Literal["snr_db", "beta", "sigma_m", "olg_db", "k_users"] = "snr_db"
    values: list[float] = Field(default_factory=lambda: [20.0])

    @field_validator("values")
    @classmethod
    def _non_empty(cls, v):
        if not v:
            raise ValueError("sweep needs at least one value")
        return v


class StopConfig(_Section):
    max_frames: int = Field(100_000, ge=1)
    target_bit_errors: int = Field(500, ge=0)
    batch_frames: int = Field(1000, ge=1)


class MetricsConfig(_Section):
    power: bool = True
    metric_frames: int = Field(8, ge=1)
    transient: bool = False
    settle_tol: float = Field(0.01, gt=0)
    t_compute: float = Field(110e-9, gt=0)
    p_oa: float = Field(50e-6, ge=0)
    p_dac: float = Field(1e-3, ge=0)
    p_adc: float = Field(2e-3, ge=0)
    include_array_static: bool = True
    gpu_tops_per_watt: float = Field(0.059, gt=0)


class ExperimentConfig(_Section):
    name: str = "experiment"
    topology: Literal["proposed", "conventional", "digital"] = "proposed"
    seed: int = Field(1, ge=0)
    out_path: str = "results.csv"
    threads: int = Field(1, ge=1)
    scenario: ScenarioConfig = ScenarioConfig()
    detector: DetectorConfig = DetectorConfig()
    mapping: MappingConfig = MappingConfig()
    device: DeviceConfig = DeviceConfig()
    oa: OaConfig = OaConfig()
    sweep: SweepConfig = SweepConfig()
    stop: StopConfig = StopConfig()
    metrics: MetricsConfig = MetricsConfig()

    def with_overrides(self, **dotted) -> "ExperimentConfig":
        """Copy with ``"section.field"`` style overrides applied and re-validated."""
        data = self.model_dump()
        for key, value in dotted.items():
            _set_dotted(data, key, value)
        return ExperimentConfig.model_validate(data)


def _set_dotted(data: dict, key: str, value):
    parts = key.split(".")
    cur = data
    for p in parts[:-1]:
        cur = cur.setdefault(p, {})
    cur[parts[-1]] = value


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def defaults_text() -> str:
    return resources.files("mcadetect").joinpath("defaults.toml").read_text()


def parse_config(text: str = "", base: dict | None = None) -> ExperimentConfig:
    """Parse TOML text layered over the shipped defaults."""
    try:
        data = _merge(tomllib.loads(defaults_text()), base or {})
        data = _merge(data, tomllib.loads(text))
        return ExperimentConfig.model_validate(data)
    except (tomllib.TOMLDecodeError, ValidationError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | os.PathLike | None = None) -> ExperimentConfig:
    text = ""
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    cfg = parse_config(text)
    env_seed = os.environ.get("SIM_SEED")
    if env_seed is not None:
        try:
            cfg = cfg.model_copy(update={"seed": int(env_seed)})
        except ValueError as exc:
            raise ConfigError(f"SIM_SEED must be an integer, got {env_seed!r}") from exc
    return cfg
