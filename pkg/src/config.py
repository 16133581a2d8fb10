# src/config.py
"""
Project constants (Config) and the typed experiment configuration loaded from
a single YAML file. Every section maps to a frozen dataclass whose defaults are
the documented design values; CLI flags override through `with_overrides`.
"""
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import yaml

from src.utils.exceptions import ConfigError
from src.utils.file_manager import canonical_hash


class Config:
    """Project-wide paths and file names."""

    # Project root (computed from this file's location)
    BASE_DIR = Path(__file__).resolve().parent.parent

    DEFAULT_CONFIG = BASE_DIR / "config.yaml"
    OUTPUT_DIR = BASE_DIR / "data" / "output"

    ENCODING = "utf-8"

    # Artifact layout inside an output directory
    RAW_DIR = "raw"
    LOADS_FILE = "loads.csv"
    WEATHER_FILE = "weather.csv"
    META_FILE = "meta.csv"
    HOLIDAYS_FILE = "holidays.txt"
    LABELS_FILE = "labels.csv"
    DAY_SUMMARY_FILE = "day_summary.csv"
    FEATURES_FILE = "features.csv"
    ASSIGNMENTS_FILE = "assignments.csv"
    ASSIGNMENTS_ALL_FILE = "assignments_all_pipelines.csv"
    PIPELINE_SCORES_FILE = "pipeline_scores.csv"
    MODELS_DIR = "models"
    PREDICTIONS_DIR = "predictions"
    REPORTS_DIR = "reports"


# ==========================================
# Section dataclasses
# ==========================================
@dataclass(frozen=True)
class ThermalConfig:
    rated_top_oil_rise: float = 55.0
    rated_hotspot_rise: float = 23.0
    loss_ratio: float = 5.0
    oil_exponent: float = 0.8
    winding_exponent: float = 0.8
    tau_oil: float = 180.0
    tau_winding: float = 7.0


@dataclass(frozen=True)
class WindowConfig:
    peak_start: str = "17:00"
    peak_end: str = "20:00"
    offpeak_hours: float = 12.0
    sample_minutes: int = 30


@dataclass(frozen=True)
class LabelerConfig:
    k_min: float = 0.5
    k_max: float = 2.5
    hotspot_limit: float = 140.0
    tolerance: float = 0.01


@dataclass(frozen=True)
class SyntheticConfig:
    n_transformers: int = 50
    n_days: int = 183
    start_date: str = "2024-09-01"
    rated_kva_choices: Tuple[float, ...] = (25.0, 50.0, 100.0, 200.0, 315.0, 500.0, 800.0, 1000.0)
    base_load_range: Tuple[float, float] = (0.45, 0.75)
    evening_peak_range: Tuple[float, float] = (0.25, 0.45)
    weekend_shift: float = 0.05
    unbalance: float = 0.15
    temperature_coupling: float = 0.01
    reference_temperature: float = 10.0
    noise_sigma: float = 0.03
    noise_phi: float = 0.9
    daily_noise_sigma: float = 0.04
    daily_noise_phi: float = 0.7
    seasonal_mean: float = 8.0
    seasonal_amplitude: float = 6.0
    coldest_day_of_year: int = 20
    site_noise_sigma: float = 2.0
    site_noise_phi: float = 0.7
    forecast_sigma: float = 1.12


@dataclass(frozen=True)
class SplitConfig:
    train_validation_days: int = 152
    holdout_days: int = 31


@dataclass(frozen=True)
class FeaturesConfig:
    ewma_alpha: float = 0.05
    prune: bool = True
    min_prune_rows: int = 100


@dataclass(frozen=True)
class ClusteringConfig:
    ridge_lambda: float = 1.0
    pca_variance: float = 0.90
    k_range: Tuple[int, int] = (2, 8)
    n_init: int = 10
    max_iter: int = 300
    pipelines: Tuple[str, ...] = ("ridge_raw", "ridge_pca", "scaled_raw", "scaled_pca")
    selection_rounds: int = 60


@dataclass(frozen=True)
class ForecasterConfig:
    percentiles: Tuple[float, ...] = (0.02, 0.05, 0.5, 0.95)
    learning_rate: float = 0.026
    max_leaves: int = 19
    feature_fraction: float = 0.93
    bagging_fraction: float = 0.87
    n_rounds: int = 300
    early_stopping_patience: int = 30
    validation_days: int = 21
    min_leaf_rows: int = 20
    max_bins: int = 64
    min_rows: int = 50
    incremental_rounds: int = 5
    multi_temp_replicas: int = 5
    multi_temp_radius: float = 2.0


@dataclass(frozen=True)
class MultistageConfig:
    enabled: bool = True


@dataclass(frozen=True)
class EvaluationConfig:
    noise_sigma: float = 1.12
    fixed_scale_factor: float = 1.05
    coverage_interval: Tuple[float, float] = (0.05, 0.95)
    sensitivity_grid: Tuple[float, float, float] = (-20.0, 40.0, 5.0)
    sensitivity_step: float = 2.5
    sensitivity_days: int = 3
    forecast_deviation: float = 2.0


@dataclass(frozen=True)
class PathsConfig:
    output_dir: str = "data/output"
    loads: Optional[str] = None
    weather: Optional[str] = None
    meta: Optional[str] = None
    holidays: Optional[str] = None


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 7
    thermal: ThermalConfig = field(default_factory=ThermalConfig)
    window: WindowConfig = field(default_factory=WindowConfig)
    labeler: LabelerConfig = field(default_factory=LabelerConfig)
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    features: FeaturesConfig = field(default_factory=FeaturesConfig)
    clustering: ClusteringConfig = field(default_factory=ClusteringConfig)
    forecaster: ForecasterConfig = field(default_factory=ForecasterConfig)
    multistage: MultistageConfig = field(default_factory=MultistageConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def as_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def config_hash(self) -> str:
        return canonical_hash(self.as_dict())

    def with_overrides(self, **sections: Dict[str, Any]) -> "ExperimentConfig":
        """Return a copy with `section={key: value}` overrides applied; `seed=` is top level."""
        updated = self
        for name, values in sections.items():
            if name == "seed":
                updated = replace(updated, seed=int(values))
                continue
            current = getattr(updated, name)
            updated = replace(updated, **{name: replace(current, **values)})
        _validate(updated)
        return updated


# ==========================================
# Loading / validation
# ==========================================
def _build_section(cls, raw: Any, section: str):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"Section '{section}' must be a mapping, got {type(raw).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"Unknown key(s) in section '{section}': {unknown}")

    kwargs = {}
    for key, value in raw.items():
        default = getattr(cls(), key)
        if isinstance(default, tuple) and isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigError(f"Invalid section '{section}': {e}") from e


def _validate(cfg: ExperimentConfig) -> None:
    t = cfg.thermal
    if min(t.rated_top_oil_rise, t.rated_hotspot_rise, t.loss_ratio, t.tau_oil, t.tau_winding) <= 0:
        raise ConfigError("thermal parameters must be strictly positive")
    if not (0 < t.oil_exponent <= 1 and 0 < t.winding_exponent <= 1):
        raise ConfigError("thermal exponents must lie in (0, 1]")
    if t.tau_winding >= t.tau_oil:
        raise ConfigError("thermal.tau_winding must be smaller than thermal.tau_oil")
    if cfg.window.offpeak_hours != 12:
        raise ConfigError("window.offpeak_hours is fixed at 12")
    if not (0 < cfg.labeler.k_min < cfg.labeler.k_max):
        raise ConfigError("labeler bounds must satisfy 0 < k_min < k_max")
    if cfg.split.train_validation_days <= 0 or cfg.split.holdout_days <= 0:
        raise ConfigError("split day counts must be positive")
    if not (0 < cfg.features.ewma_alpha <= 1):
        raise ConfigError("features.ewma_alpha must lie in (0, 1]")
    pct = cfg.forecaster.percentiles
    if any(not (0 < p < 1) for p in pct) or list(pct) != sorted(set(pct)):
        raise ConfigError("forecaster.percentiles must be strictly increasing values in (0, 1)")
    lo, hi = cfg.evaluation.coverage_interval
    if lo not in pct or hi not in pct:
        raise ConfigError("evaluation.coverage_interval percentiles must be in forecaster.percentiles")
    unknown = set(cfg.clustering.pipelines) - {"ridge_raw", "ridge_pca", "scaled_raw", "scaled_pca"}
    if unknown or not cfg.clustering.pipelines:
        raise ConfigError(f"Unknown clustering pipeline(s): {sorted(unknown)}")
    k_lo, k_hi = cfg.clustering.k_range
    if not (1 <= k_lo <= k_hi):
        raise ConfigError("clustering.k_range must satisfy 1 <= low <= high")


_SECTIONS = {
    "thermal": ThermalConfig,
    "window": WindowConfig,
    "labeler": LabelerConfig,
    "synthetic": SyntheticConfig,
    "split": SplitConfig,
    "features": FeaturesConfig,
    "clustering": ClusteringConfig,
    "forecaster": ForecasterConfig,
    "multistage": MultistageConfig,
    "evaluation": EvaluationConfig,
    "paths": PathsConfig,
}


def load_config(path: Optional[Path] = None) -> ExperimentConfig:
    """Read the YAML experiment file; a missing `path` yields the defaults."""
    if path is None:
        cfg = ExperimentConfig()
        _validate(cfg)
        return cfg

    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    try:
        with open(path, "r", encoding=Config.ENCODING) as f:
            raw = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"Config parsing failed ({path.name}): {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError("Config root must be a mapping")

    unknown = sorted(set(raw) - set(_SECTIONS) - {"seed"})
    if unknown:
        raise ConfigError(f"Unknown config section(s): {unknown}")

    sections = {name: _build_section(cls, raw.get(name), name) for name, cls in _SECTIONS.items()}
    try:
        seed = int(raw.get("seed", ExperimentConfig.seed))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"seed must be an integer: {e}") from e

    cfg = ExperimentConfig(seed=seed, **sections)
    _validate(cfg)
    return cfg