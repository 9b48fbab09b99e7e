"""Experiment configuration: YAML file, presets and environment overrides.

Physical quantities carry their unit in the key name. Seeds left as null are
derived from the global seed, so one number pins the whole run.
"""

from __future__ import annotations

import copy
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .biphoton import DoubleGaussianState
from .detector import DetectorConfig
from .errors import ConfigError, SpecklePairError
from .medium import Geometry

SCENARIOS = ("slm_off", "center", "offset", "dual", "no_diffuser")
ENV_SEED = "SPECKLEPAIR_SEED"
ENV_OUTPUT = "SPECKLEPAIR_OUTPUT_DIR"


@dataclass(frozen=True)
class GeometryConfig:
    grid: int = 128
    pitch_mm: float = 0.0078125
    slm_roi: int = 64
    macropixel: int = 4
    camera_roi: int = 32
    wavelength_nm: float = 710.0
    focal_mm: float = 200.0

    def build(self) -> Geometry:
        return Geometry(**asdict(self))


@dataclass(frozen=True)
class StateConfig:
    """Either (sigma_sum_mm_inv, schmidt) or (sigma_position_mm, sigma_marginal_mm_inv)."""

    sigma_sum_mm_inv: tuple[float, float] | None = (0.89, 0.80)
    schmidt: tuple[float, float] | None = (20.0, 20.0)
    sigma_position_mm: tuple[float, float] | None = None
    sigma_marginal_mm_inv: tuple[float, float] | None = None
    n_modes: int | None = None

    def build(self) -> DoubleGaussianState:
        if self.sigma_position_mm is not None and self.sigma_marginal_mm_inv is not None:
            return DoubleGaussianState.from_widths(self.sigma_position_mm, self.sigma_marginal_mm_inv)
        if self.sigma_sum_mm_inv is not None and self.schmidt is not None:
            return DoubleGaussianState.from_schmidt(self.sigma_sum_mm_inv, self.schmidt)
        raise ConfigError("state needs sigma_sum_mm_inv + schmidt or sigma_position_mm + sigma_marginal_mm_inv")


@dataclass(frozen=True)
class MediumConfig:
    correlation_length_mm: float = 0.015625
    seed: int | None = None
    basis: str = "hadamard"
    reference_policy: str = "border"


@dataclass(frozen=True)
class DetectorSection:
    eta_signal: float = 0.48
    eta_idler: float = 0.48
    signal_transmission: float = 1.0
    fill: float = 0.15
    spurious_rate: float = 1e-3
    frames: int = 1000
    seed: int | None = None

    def build(self, seed: int) -> DetectorConfig:
        return DetectorConfig(
            eta_signal=self.eta_signal,
            eta_idler=self.eta_idler,
            mean_photons_per_pixel=self.fill,
            spurious_rate=self.spurious_rate,
            frames=self.frames,
            seed=seed,
            signal_transmission=self.signal_transmission,
        )


@dataclass(frozen=True)
class TargetsConfig:
    """Far-field focus targets (nu_x, nu_y) in mm^-1 per scenario."""

    center: tuple[tuple[float, float], ...] = ((0.0, 0.0),)
    offset: tuple[tuple[float, float], ...] = ((3.0, -3.0),)
    dual: tuple[tuple[float, float], ...] = ((-3.0, 3.0), (3.0, -3.0))


@dataclass(frozen=True)
class AnalysisConfig:
    window: int = 7
    guard: int = 2
    annulus: int = 6
    accidentals: str = "shift"
    normalization: str = "pair-rate"


@dataclass(frozen=True)
class ExperimentConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    state: StateConfig = field(default_factory=StateConfig)
    medium: MediumConfig = field(default_factory=MediumConfig)
    detector: DetectorSection = field(default_factory=DetectorSection)
    targets: TargetsConfig = field(default_factory=TargetsConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    output_dir: str = "runs"
    seed: int = 0
    workers: int = 1

    def derived_seed(self, stream: int) -> int:
        """Child seed for one stochastic stage (0 medium, 1 detector)."""
        ss = np.random.SeedSequence(self.seed, spawn_key=(stream,))
        return int(ss.generate_state(1, np.uint32)[0])

    @property
    def medium_seed(self) -> int:
        return self.medium.seed if self.medium.seed is not None else self.derived_seed(0)

    @property
    def detector_seed(self) -> int:
        return self.detector.seed if self.detector.seed is not None else self.derived_seed(1)

    def validate(self) -> "ExperimentConfig":
        """Build every sub-object once so that bad values surface as ConfigError."""
        try:
            g = self.geometry.build()
            self.state.build()
            self.detector.build(0)
        except ConfigError:
            raise
        except (SpecklePairError, ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        n_modes = self.state.n_modes
        if n_modes is not None and not 1 <= n_modes <= g.grid:
            raise ConfigError(f"state.n_modes must lie in [1, {g.grid}]")
        if self.medium.basis not in ("hadamard", "canonical"):
            raise ConfigError(f"unknown probe basis {self.medium.basis!r}")
        if self.medium.reference_policy not in ("border", "ideal"):
            raise ConfigError(f"unknown reference policy {self.medium.reference_policy!r}")
        if not self.medium.correlation_length_mm > 0:
            raise ConfigError("correlation_length_mm must be positive")
        if self.analysis.accidentals not in ("shift", "mean", "none"):
            raise ConfigError(f"unknown accidentals mode {self.analysis.accidentals!r}")
        if self.analysis.normalization not in ("pair-rate", "singles", "raw"):
            raise ConfigError(f"unknown normalization {self.analysis.normalization!r}")
        if self.analysis.window < 1 or self.analysis.window % 2 == 0:
            raise ConfigError("analysis.window must be a positive odd number")
        for name in ("center", "offset", "dual"):
            if not getattr(self.targets, name):
                raise ConfigError(f"targets.{name} is empty")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        return self

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        return _build(cls, data or {}, "config")

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def from_yaml(cls, text: str) -> "ExperimentConfig":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config is not valid YAML: {exc}") from exc
        if data is not None and not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        return cls.from_dict(data)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _tupled(value):
    if isinstance(value, list):
        return tuple(_tupled(v) for v in value)
    return value


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a mapping")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {', '.join(sorted(unknown))}")
    kwargs = {}
    for name, value in data.items():
        default = getattr(cls(), name)
        if hasattr(default, "__dataclass_fields__"):
            kwargs[name] = _build(type(default), value or {}, f"{where}.{name}")
        else:
            kwargs[name] = _tupled(value)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


PRESETS = {
    "desk": {},
    "paper": {
        "geometry": {"grid": 512, "pitch_mm": 0.009765625, "slm_roi": 256, "macropixel": 4, "camera_roi": 100},
        "state": {
            "sigma_sum_mm_inv": None,
            "schmidt": None,
            "sigma_position_mm": [0.707, 0.796],
            "sigma_marginal_mm_inv": [38.8, 37.0],
        },
        "detector": {"frames": 500},
    },
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path: str | os.PathLike | None = None, preset: str | None = None, env=None) -> ExperimentConfig:
    """Preset defaults, then the YAML file, then environment overrides."""
    env = os.environ if env is None else env
    data = ExperimentConfig().to_dict()
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
        data = _merge(data, PRESETS[preset])
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            user = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"config is not valid YAML: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config must be a mapping")
        data = _merge(data, user)
    if env.get(ENV_SEED):
        try:
            data["seed"] = int(env[ENV_SEED])
        except ValueError as exc:
            raise ConfigError(f"{ENV_SEED} must be an integer") from exc
    if env.get(ENV_OUTPUT):
        data["output_dir"] = env[ENV_OUTPUT]
    return ExperimentConfig.from_dict(data).validate()
