# src/processors/learning/multistage.py
"""
Load-first counterfactual: six quantile models per cluster (three phases x
peak/off-peak period means) whose outputs become the day's equivalent
currents, from which the labeler derives a scale factor. The k at percentile
p is built from loads at percentile 1 − p.
"""
from dataclasses import replace
from datetime import date
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.processors.learning.boosting import BoostingParams
from src.processors.learning.features import LOAD_MEAN_COLUMNS, PHASES, with_temperature
from src.processors.learning.forecaster import (
    PredictionSet,
    QuantileModelSet,
    incremental_update,
    predict_matrix,
    predictions_frame,
    train_model_set,
)
from src.processors.physics.labeler import DayInputs, SearchBounds, optimal_scale_factor
from src.processors.physics.thermal import PeriodEquivalents
from src.utils import Log, measure_time
from src.utils.exceptions import DataValidationError

LoadModels = Dict[str, QuantileModelSet]


def load_percentiles(percentiles: Sequence[float]) -> Tuple[float, ...]:
    """Load percentiles needed for the k percentiles: 1 − p for each p, ascending."""
    return tuple(sorted({round(1.0 - p, 10) for p in percentiles}))


def train_load_models(cluster_id: int, cluster_rows: pd.DataFrame, percentiles: Sequence[float],
                      params: BoostingParams, feature_names: Sequence[str], seed: int,
                      validation_days: int = 21, min_rows: int = 50) -> LoadModels:
    """
    One QuantileModelSet per period-mean target, at the inverted percentiles;
    load quantiles stay uncalibrated.
    """
    needed = load_percentiles(percentiles)
    return {
        target: train_model_set(cluster_id, cluster_rows, needed, params, feature_names, seed,
                                target=target, validation_days=validation_days, min_rows=min_rows,
                                calibrate=False)
        for target in LOAD_MEAN_COLUMNS
    }


@measure_time
def train_load_clusters(table: pd.DataFrame, assignments: Dict[str, int], percentiles: Sequence[float],
                        params: BoostingParams, feature_names: Sequence[str], seed: int,
                        validation_days: int = 21, min_rows: int = 50) -> Dict[int, LoadModels]:
    clusters = table["transformer_id"].map(assignments)
    if clusters.isna().any():
        raise DataValidationError("Transformers without a cluster assignment in the load-model table")
    models = {}
    for cluster_id in tqdm(sorted(set(assignments.values())), desc="Training [loads]",
                           disable=Log.progress_disabled()):
        rows = table[clusters == cluster_id]
        if rows.empty:
            continue
        models[cluster_id] = train_load_models(cluster_id, rows, percentiles, params, feature_names, seed,
                                               validation_days, min_rows)
    return models


def scale_factor_from_loads(load_predictions: Mapping[str, Mapping[float, float]], day_inputs: DayInputs,
                            percentiles: Sequence[float], bounds: SearchBounds = SearchBounds()) -> PredictionSet:
    """
    k at each percentile p from the per-phase period loads predicted at
    percentile 1 − p, treated directly as equivalent currents.
    """
    values = {}
    for p in percentiles:
        lp = round(1.0 - p, 10)
        try:
            offpeak = tuple(max(0.0, float(load_predictions[f"offpeak_mean_{ph}"][lp])) for ph in PHASES)
            peak = tuple(max(0.0, float(load_predictions[f"peak_mean_{ph}"][lp])) for ph in PHASES)
        except KeyError as e:
            raise DataValidationError(f"Missing load prediction {e} for percentile {p}") from None
        inputs = replace(day_inputs, equivalents=PeriodEquivalents(offpeak=offpeak, peak=peak))
        values[float(p)] = optimal_scale_factor(inputs, bounds).k_opt
    ordered = sorted(values.values())
    return PredictionSet(day_inputs.transformer_id, day_inputs.day, dict(zip(sorted(values), ordered)))


def predict_loads(models: LoadModels, rows: pd.DataFrame) -> List[Dict[str, Dict[float, float]]]:
    """Per row: target → {load percentile → predicted current}."""
    per_target = {target: predict_matrix(m, rows) for target, m in models.items()}
    out = []
    for i in range(len(rows)):
        out.append({target: dict(zip(models[target].percentiles, map(float, preds[i])))
                    for target, preds in per_target.items()})
    return out


class MultistageReplay:
    """Holdout replay of the load-first approach with one warm-start update per cluster and day."""

    def __init__(self, models: Dict[int, LoadModels], assignments: Dict[str, int],
                 day_inputs: Mapping[Tuple[str, date], DayInputs], percentiles: Sequence[float],
                 bounds: SearchBounds, alpha: float = 0.05, incremental_rounds: int = 5):
        self.models = models
        self.assignments = assignments
        self.day_inputs = day_inputs
        self.percentiles = tuple(percentiles)
        self.bounds = bounds
        self.alpha = alpha
        self.incremental_rounds = incremental_rounds

    @measure_time
    def run(self, holdout: pd.DataFrame, temperatures: np.ndarray) -> pd.DataFrame:
        observed = holdout.reset_index(drop=True)
        predicted_inputs = with_temperature(observed, temperatures, self.alpha)
        realised = with_temperature(observed, observed["peak_ambient"].to_numpy(dtype=float), self.alpha)
        clusters = observed["transformer_id"].map(self.assignments)
        dates = pd.to_datetime(observed["date"]).dt.date.to_numpy()

        sets: List[PredictionSet] = []
        skipped = 0
        for day in tqdm(sorted(observed["date"].unique()), desc="Holdout [multistage]",
                        disable=Log.progress_disabled()):
            on_day = (observed["date"] == day).to_numpy()
            for cluster_id, models in sorted(self.models.items()):
                mask = on_day & (clusters == cluster_id).to_numpy()
                if not mask.any():
                    continue
                rows = predicted_inputs[mask]
                positions = np.flatnonzero(mask)
                for pos, loads in zip(positions, predict_loads(models, rows)):
                    key = (str(observed.at[pos, "transformer_id"]), dates[pos])
                    inputs = self.day_inputs.get(key)
                    if inputs is None:
                        skipped += 1
                        continue
                    inputs = inputs.with_ambient(float(temperatures[pos]))
                    sets.append(scale_factor_from_loads(loads, inputs, self.percentiles, self.bounds))
                for target, model_set in models.items():
                    incremental_update(model_set, realised[mask], self.incremental_rounds)
        if skipped:
            Log.warning(f"Multistage replay skipped {skipped} row(s) without day inputs")
        return predictions_frame(sets, method="multistage")
