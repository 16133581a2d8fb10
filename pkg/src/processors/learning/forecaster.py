# src/processors/learning/forecaster.py
"""
Per-cluster quantile forecasters of the optimal scale factor.

One boosted ensemble per percentile, early-stopped on the most recent
validation days. The held-out residuals of those days calibrate each
percentile: a prediction is shifted by the q-quantile of the latest
out-of-sample residuals. During the holdout replay every day is predicted
from day-ahead features, its residuals join the calibration pool, and the
realised rows are folded back into the models with a few warm-start rounds.
"""
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.processors.learning.boosting import BoostingParams, QuantileBoostingEnsemble
from src.processors.learning.features import CATEGORICAL_COLUMNS, with_temperature
from src.utils import JsonHandler, Log, measure_time
from src.utils.exceptions import DataValidationError, InvariantViolation, MissingArtifactError, ParameterError

TEMPERATURE_MODES = ("true", "noisy", "forecast")


def _percentile_seed(seed: int, cluster_id: int, percentile: float) -> int:
    state = np.random.SeedSequence([int(seed), int(cluster_id), int(round(percentile * 10000))])
    return int(state.generate_state(1)[0])


@dataclass
class QuantileModelSet:
    cluster_id: int
    percentiles: Tuple[float, ...]
    ensembles: Dict[float, QuantileBoostingEnsemble]
    params: BoostingParams
    feature_names: List[str]
    target: str = "k_opt"
    training_rows: Optional[pd.DataFrame] = field(default=None, repr=False)
    fitted: Dict[float, np.ndarray] = field(default_factory=dict, repr=False)
    # out-of-sample residuals (y − raw prediction) per percentile, newest last
    calibration: Dict[float, np.ndarray] = field(default_factory=dict, repr=False)
    calibration_window: int = 0

    def __post_init__(self):
        pct = list(self.percentiles)
        if any(not (0 < p < 1) for p in pct) or pct != sorted(set(pct)):
            raise ParameterError(f"Percentiles must be strictly increasing in (0, 1): {pct}")
        hashes = {m.schema_hash for m in self.ensembles.values()}
        if len(hashes) > 1:
            raise InvariantViolation(f"Cluster {self.cluster_id}: ensembles trained on different feature schemas")

    def offsets(self) -> np.ndarray:
        """Shift per percentile: the q-quantile of its residual pool, 0 while the pool is empty."""
        out = np.zeros(len(self.percentiles))
        for i, q in enumerate(self.percentiles):
            pool = self.calibration.get(q)
            if pool is not None and len(pool):
                out[i] = float(np.quantile(pool, q))
        return out

    def record_residuals(self, residuals: np.ndarray) -> None:
        """Append (n_rows, n_percentiles) residuals; each pool keeps the latest `calibration_window`."""
        if self.calibration_window <= 0 or len(residuals) == 0:
            return
        residuals = np.asarray(residuals, dtype=float).reshape(-1, len(self.percentiles))
        for i, q in enumerate(self.percentiles):
            pool = np.concatenate([self.calibration.get(q, np.empty(0)), residuals[:, i]])
            self.calibration[q] = pool[-self.calibration_window:]

    def to_dict(self) -> Dict[str, object]:
        return {
            "cluster_id": self.cluster_id,
            "percentiles": list(self.percentiles),
            "target": self.target,
            "feature_names": self.feature_names,
            "calibration_window": self.calibration_window,
            "calibration": [self.calibration.get(p, np.empty(0)).tolist() for p in self.percentiles],
            "ensembles": [self.ensembles[p].to_dict() for p in self.percentiles],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "QuantileModelSet":
        ensembles = [QuantileBoostingEnsemble.from_dict(e) for e in data["ensembles"]]
        percentiles = tuple(float(p) for p in data["percentiles"])
        pools = data.get("calibration") or [[] for _ in percentiles]
        return cls(
            cluster_id=int(data["cluster_id"]),
            percentiles=percentiles,
            ensembles=dict(zip(percentiles, ensembles)),
            params=ensembles[0].params,
            feature_names=list(data["feature_names"]),
            target=str(data.get("target", "k_opt")),
            calibration={p: np.asarray(pool, dtype=float) for p, pool in zip(percentiles, pools) if len(pool)},
            calibration_window=int(data.get("calibration_window", 0)),
        )


@dataclass(frozen=True)
class PredictionSet:
    transformer_id: str
    date: date
    values: Dict[float, float]

    def __post_init__(self):
        ordered = [self.values[p] for p in sorted(self.values)]
        if any(b < a for a, b in zip(ordered, ordered[1:])):
            raise InvariantViolation(f"{self.transformer_id} {self.date}: crossing quantiles {self.values}")


# ==========================================
# Training
# ==========================================
def train(cluster_rows: pd.DataFrame, percentile: float, params: BoostingParams, seed: int,
          feature_names: Sequence[str], target: str = "k_opt", validation_days: int = 21,
          min_rows: int = 50, n_rounds: Optional[int] = None) -> QuantileBoostingEnsemble:
    """
    One quantile ensemble, early-stopped on the last `validation_days` dates
    and truncated to its best round. Those dates stay out of the fit and
    leave their residuals on the model for calibration; without enough
    dates the model trains on every row for the full round count.
    """
    if len(cluster_rows) < min_rows:
        raise DataValidationError(f"Training needs at least {min_rows} rows, got {len(cluster_rows)}")
    y = cluster_rows[target].to_numpy(dtype=float)
    categorical = [c for c in CATEGORICAL_COLUMNS if c in feature_names]
    rounds = n_rounds or params.n_rounds
    model = QuantileBoostingEnsemble(percentile, params, categorical, seed)

    days = sorted(pd.unique(cluster_rows["date"])) if "date" in cluster_rows else []
    if validation_days > 0 and len(days) > validation_days:
        cutoff = days[-validation_days]
        is_valid = (cluster_rows["date"] >= cutoff).to_numpy()
        fit_rows, valid_rows = cluster_rows[~is_valid], cluster_rows[is_valid]
        if len(fit_rows) >= min_rows:
            model.fit(fit_rows, y[~is_valid], feature_names, valid_rows, y[is_valid], n_rounds=rounds)
            model.validation_residuals = y[is_valid] - model.predict(valid_rows)
            return model
    return model.fit(cluster_rows, y, feature_names, n_rounds=rounds)


def train_model_set(cluster_id: int, cluster_rows: pd.DataFrame, percentiles: Sequence[float],
                    params: BoostingParams, feature_names: Sequence[str], seed: int,
                    target: str = "k_opt", validation_days: int = 21, min_rows: int = 50,
                    n_rounds: Optional[int] = None, calibrate: bool = True) -> QuantileModelSet:
    """
    Ensembles for every percentile of one cluster. With `calibrate`, the
    validation residuals seed the calibration pools and fix their window.
    """
    ensembles = {}
    for q in percentiles:
        ensembles[float(q)] = train(cluster_rows, q, params, _percentile_seed(seed, cluster_id, q),
                                    feature_names, target, validation_days, min_rows, n_rounds)
    rows = cluster_rows.reset_index(drop=True)
    model_set = QuantileModelSet(
        cluster_id=int(cluster_id),
        percentiles=tuple(float(q) for q in percentiles),
        ensembles=ensembles,
        params=params,
        feature_names=list(feature_names),
        target=target,
        training_rows=rows,
        fitted={q: m.predict(rows) for q, m in ensembles.items()},
    )
    residuals = [m.validation_residuals for m in ensembles.values()]
    if calibrate and residuals and all(r is not None for r in residuals):
        model_set.calibration_window = len(residuals[0])
        model_set.record_residuals(np.column_stack(residuals))
    return model_set


@measure_time
def train_clusters(table: pd.DataFrame, assignments: Dict[str, int], percentiles: Sequence[float],
                   params: BoostingParams, feature_names: Sequence[str], seed: int,
                   target: str = "k_opt", validation_days: int = 21, min_rows: int = 50,
                   n_rounds: Optional[int] = None, calibrate: bool = True) -> Dict[int, QuantileModelSet]:
    """One QuantileModelSet per cluster over the rows of its transformers."""
    clusters = table["transformer_id"].map(assignments)
    if clusters.isna().any():
        missing = sorted(table.loc[clusters.isna(), "transformer_id"].unique())
        raise DataValidationError(f"Transformers without a cluster assignment: {missing}")
    models = {}
    for cluster_id in tqdm(sorted(set(assignments.values())), desc=f"Training [{target}]",
                           disable=Log.progress_disabled()):
        rows = table[clusters == cluster_id]
        if rows.empty:
            continue
        models[cluster_id] = train_model_set(cluster_id, rows, percentiles, params, feature_names, seed,
                                             target, validation_days, min_rows, n_rounds, calibrate)
    return models


def expand_multi_temperature(training_rows: pd.DataFrame, n_replicas: int, radius: float = 2.0,
                             seed: int = 0, alpha: float = 0.05) -> pd.DataFrame:
    """
    The original rows plus `n_replicas − 1` copies whose peak_ambient is
    perturbed uniformly within ±radius; the EWMA feature follows the perturbed
    value and labels are unchanged.
    """
    if n_replicas < 1:
        raise ParameterError("n_replicas must be at least 1")
    if radius < 0:
        raise ParameterError("radius must be non-negative")
    rng = np.random.default_rng(seed)
    base = training_rows.reset_index(drop=True)
    truth = base["peak_ambient"].to_numpy(dtype=float)
    replicas = [base]
    for _ in range(n_replicas - 1):
        offsets = rng.uniform(-radius, radius, size=len(base)) if radius > 0 else np.zeros(len(base))
        replicas.append(with_temperature(base, truth + offsets, alpha))
    return pd.concat(replicas, ignore_index=True)


# ==========================================
# Prediction
# ==========================================
def raw_matrix(models: QuantileModelSet, rows: pd.DataFrame) -> np.ndarray:
    """Uncalibrated ensemble outputs, one column per percentile in model order."""
    missing = [c for c in models.feature_names if c not in rows.columns]
    if missing:
        raise DataValidationError(f"Cluster {models.cluster_id}: feature schema mismatch, missing {missing}")
    return np.column_stack([models.ensembles[p].predict(rows) for p in models.percentiles])


def calibrated(models: QuantileModelSet, raw: np.ndarray) -> np.ndarray:
    return np.sort(raw + models.offsets()[None, :], axis=1)


def predict_matrix(models: QuantileModelSet, rows: pd.DataFrame) -> np.ndarray:
    """Calibrated predictions of shape (n_rows, n_percentiles), sorted along the percentile axis."""
    return calibrated(models, raw_matrix(models, rows))


def predict_quantiles(models: QuantileModelSet, rows: pd.DataFrame,
                      preds: Optional[np.ndarray] = None) -> List[PredictionSet]:
    preds = predict_matrix(models, rows) if preds is None else preds
    dates = pd.to_datetime(rows["date"]).dt.date.to_numpy()
    return [
        PredictionSet(str(tid), d, dict(zip(models.percentiles, map(float, p))))
        for tid, d, p in zip(rows["transformer_id"].to_numpy(), dates, preds)
    ]


def predictions_frame(sets: Sequence[PredictionSet], method: str = "direct") -> pd.DataFrame:
    """Long layout: transformer_id, date, percentile, k_pred, method."""
    records = [
        {"transformer_id": s.transformer_id, "date": s.date.isoformat(), "percentile": p,
         "k_pred": s.values[p], "method": method}
        for s in sets for p in sorted(s.values)
    ]
    frame = pd.DataFrame(records, columns=["transformer_id", "date", "percentile", "k_pred", "method"])
    return frame.sort_values(["transformer_id", "date", "percentile"], kind="stable").reset_index(drop=True)


def incremental_update(models: QuantileModelSet, new_day_rows: pd.DataFrame, n_rounds: int = 5,
                       issued: Optional[np.ndarray] = None) -> QuantileModelSet:
    """
    Fold one realised day into the models: its residuals against `issued`
    (the raw predictions made before the day, or the current models' outputs
    on the rows) join the calibration pools, the rows are appended to the
    history and every ensemble gets `n_rounds` warm-start rounds on it.
    """
    if new_day_rows.empty:
        return models
    missing = [c for c in models.feature_names + [models.target] if c not in new_day_rows.columns]
    if missing:
        raise DataValidationError(f"Cluster {models.cluster_id}: update rows miss {missing}")
    current = raw_matrix(models, new_day_rows)
    issued = current if issued is None else np.asarray(issued, dtype=float)
    y_new = new_day_rows[models.target].to_numpy(dtype=float)
    models.record_residuals(y_new[:, None] - issued)
    if n_rounds <= 0:
        return models

    grown = new_day_rows if models.training_rows is None else pd.concat(
        [models.training_rows, new_day_rows], ignore_index=True)
    y = grown[models.target].to_numpy(dtype=float)
    for i, q in enumerate(models.percentiles):
        prior = models.fitted.get(q)
        init = None
        if prior is not None and models.training_rows is not None and len(prior) == len(models.training_rows):
            init = np.concatenate([prior, current[:, i]])
        models.fitted[q] = models.ensembles[q].continue_training(grown, y, n_rounds, init_pred=init)
    models.training_rows = grown
    return models


# ==========================================
# Holdout replay
# ==========================================
def prediction_temperatures(holdout: pd.DataFrame, mode: str, sigma: float = 1.12, seed: int = 0) -> np.ndarray:
    """
    Peak ambient used at prediction time: the truth, the truth plus
    N(0, σ²) noise (drawn once over the date/transformer-sorted holdout), or
    the forecast column with the truth filling gaps.
    """
    if mode not in TEMPERATURE_MODES:
        raise ParameterError(f"Unknown temperature mode '{mode}', expected one of {TEMPERATURE_MODES}")
    truth = holdout["peak_ambient"].to_numpy(dtype=float)
    if mode == "true":
        return truth.copy()
    if mode == "noisy":
        order = holdout.reset_index(drop=True).sort_values(["date", "transformer_id"], kind="mergesort").index.to_numpy()
        noise = np.zeros(len(holdout))
        if sigma > 0:
            noise[order] = np.random.default_rng(seed).normal(0.0, sigma, size=len(holdout))
        return truth + noise
    forecast = holdout["ambient_forecast"].to_numpy(dtype=float)
    if np.isnan(forecast).all():
        raise DataValidationError("No forecast temperatures available for the holdout")
    return np.where(np.isnan(forecast), truth, forecast)


class HoldoutReplay:
    """Day-by-day prediction over the holdout with one warm-start update per cluster and day."""

    def __init__(self, models: Dict[int, QuantileModelSet], assignments: Dict[str, int],
                 alpha: float = 0.05, incremental_rounds: int = 5):
        self.models = models
        self.assignments = assignments
        self.alpha = alpha
        self.incremental_rounds = incremental_rounds

    @measure_time
    def run(self, holdout: pd.DataFrame, temperatures: np.ndarray, method: str = "direct") -> pd.DataFrame:
        if len(temperatures) != len(holdout):
            raise DataValidationError("Temperature vector does not match the holdout rows")
        observed = holdout.reset_index(drop=True)
        predicted_inputs = with_temperature(observed, temperatures, self.alpha)
        realised = with_temperature(observed, observed["peak_ambient"].to_numpy(dtype=float), self.alpha)
        clusters = observed["transformer_id"].map(self.assignments)
        if clusters.isna().any():
            raise DataValidationError("Holdout contains transformers without a cluster assignment")

        sets: List[PredictionSet] = []
        for day in tqdm(sorted(observed["date"].unique()), desc=f"Holdout [{method}]",
                        disable=Log.progress_disabled()):
            on_day = (observed["date"] == day).to_numpy()
            for cluster_id, models in sorted(self.models.items()):
                mask = on_day & (clusters == cluster_id).to_numpy()
                if not mask.any():
                    continue
                # 1. 예측 시점 온도로 당일 예측
                rows = predicted_inputs[mask]
                raw = raw_matrix(models, rows)
                sets.extend(predict_quantiles(models, rows, calibrated(models, raw)))
                # 2. 실측 라벨 반영 (보정 잔차 + 추가 학습)
                incremental_update(models, realised[mask], self.incremental_rounds, issued=raw)
        return predictions_frame(sets, method)


# ==========================================
# Model store
# ==========================================
def save_model_sets(directory: Path, models: Dict[int, QuantileModelSet], prefix: str = "direct") -> List[Path]:
    directory = Path(directory)
    paths = []
    for cluster_id, model_set in sorted(models.items()):
        path = directory / f"{prefix}_cluster_{cluster_id}.json"
        JsonHandler.save_json(path, model_set.to_dict(), quiet=True)
        paths.append(path)
    Log.success(f"Saved {len(paths)} {prefix} model set(s) to {directory}")
    return paths


def load_model_sets(directory: Path, prefix: str = "direct") -> Dict[int, QuantileModelSet]:
    paths = sorted(Path(directory).glob(f"{prefix}_cluster_*.json"))
    if not paths:
        raise MissingArtifactError(f"No {prefix} models found in {directory}")
    models = {}
    for path in paths:
        model_set = QuantileModelSet.from_dict(JsonHandler.read_json(path))
        models[model_set.cluster_id] = model_set
    return models
