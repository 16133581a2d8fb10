# tests/test_multistage.py
from datetime import date, timedelta

import numpy as np
import pandas as pd
import pytest

from src.processors.learning.boosting import BoostingParams
from src.processors.learning.features import LOAD_MEAN_COLUMNS
from src.processors.learning.forecaster import predict_matrix
from src.processors.learning.multistage import (
    MultistageReplay,
    load_percentiles,
    scale_factor_from_loads,
    train_load_models,
)
from src.processors.physics.labeler import SearchBounds, optimal_scale_factor
from src.utils.exceptions import DataValidationError

PARAMS = BoostingParams(learning_rate=0.1, n_rounds=15, min_leaf_rows=10)
FEATURES = ["peak_ambient", "ewma_ambient"]
START = date(2025, 1, 6)


def load_table(n_transformers=2, n_days=25, seed=0, constant=False):
    rng = np.random.default_rng(seed)
    rows = []
    for t in range(n_transformers):
        for d in range(n_days):
            ambient = rng.uniform(-5, 15)
            prev = rng.uniform(0, 10)
            row = {
                "transformer_id": f"T{t + 1:03d}",
                "date": (START + timedelta(days=d)).isoformat(),
                "peak_ambient": ambient,
                "ewma_ambient_prev": prev,
                "ewma_ambient": prev + 0.05 * (ambient - prev),
                "k_opt": 1.5,
            }
            for col in LOAD_MEAN_COLUMNS:
                level = 100.0 if col.startswith("peak") else 80.0
                row[col] = level if constant else level - 0.5 * ambient + rng.normal(0, 2.0)
            rows.append(row)
    return pd.DataFrame(rows)


def loads_at(offpeak, peak):
    """Prediction mapping with the same per-phase values at every load percentile."""
    out = {}
    for ph, value in zip("abc", offpeak):
        out[f"offpeak_mean_{ph}"] = value
    for ph, value in zip("abc", peak):
        out[f"peak_mean_{ph}"] = value
    return out


def test_load_percentiles_are_inverted():
    assert load_percentiles((0.05, 0.5, 0.95)) == (0.05, 0.5, 0.95)
    assert load_percentiles((0.1,)) == (0.9,)
    assert load_percentiles((0.05, 0.95, 0.95)) == (0.05, 0.95)


def test_true_equivalents_reproduce_the_label(make_inputs):
    inputs = make_inputs(offpeak=(0.7, 0.8, 0.75), peak=(1.0, 0.9, 1.1), ambient=6.0)
    truth = optimal_scale_factor(inputs).k_opt
    per_phase = loads_at(inputs.equivalents.offpeak, inputs.equivalents.peak)
    predictions = {target: {0.05: v, 0.5: v, 0.95: v} for target, v in per_phase.items()}
    result = scale_factor_from_loads(predictions, inputs, (0.05, 0.5, 0.95))
    for p in (0.05, 0.5, 0.95):
        assert result.values[p] == pytest.approx(truth, rel=1e-12)


def test_low_k_percentile_comes_from_high_loads(make_inputs):
    inputs = make_inputs(offpeak=0.5, peak=1.0, ambient=5.0)
    light = loads_at((50.0,) * 3, (100.0,) * 3)
    heavy = loads_at((100.0,) * 3, (100.0,) * 3)
    predictions = {target: {0.05: light[target], 0.95: heavy[target]} for target in light}

    k_light = optimal_scale_factor(inputs).k_opt
    k_heavy = optimal_scale_factor(make_inputs(offpeak=1.0, peak=1.0, ambient=5.0)).k_opt
    assert k_heavy < k_light

    result = scale_factor_from_loads(predictions, inputs, (0.05, 0.95))
    assert result.values[0.05] == pytest.approx(k_heavy, rel=1e-12)
    assert result.values[0.95] == pytest.approx(k_light, rel=1e-12)


def test_missing_load_percentile(make_inputs):
    inputs = make_inputs()
    predictions = {target: {0.5: 80.0} for target in LOAD_MEAN_COLUMNS}
    with pytest.raises(DataValidationError):
        scale_factor_from_loads(predictions, inputs, (0.05, 0.95))


def test_load_models_need_enough_rows():
    with pytest.raises(DataValidationError):
        train_load_models(0, load_table(1, 30), (0.05, 0.95), PARAMS, FEATURES, seed=0, validation_days=0)


def test_constant_loads_give_constant_predictions():
    table = load_table(2, 30, constant=True)
    models = train_load_models(0, table, (0.05, 0.95), PARAMS, FEATURES, seed=0, validation_days=0, min_rows=20)
    assert set(models) == set(LOAD_MEAN_COLUMNS)
    for target, model_set in models.items():
        assert model_set.target == target
        assert model_set.percentiles == (0.05, 0.95)
        expected = 100.0 if target.startswith("peak") else 80.0
        np.testing.assert_allclose(predict_matrix(model_set, table), expected)


def test_balanced_phases_get_matching_peak_models():
    table = load_table(4, 40, seed=3)
    models = train_load_models(0, table, (0.5,), PARAMS, FEATURES, seed=0, validation_days=0, min_rows=20)
    peak = np.column_stack([predict_matrix(models[f"peak_mean_{ph}"], table)[:, 0] for ph in "abc"])
    gap = peak.max(axis=1) - peak.min(axis=1)
    assert (gap <= 0.05 * peak.mean(axis=1)).all()


def test_replay_labels_every_day_with_inputs(make_inputs):
    table = load_table(2, 25)
    cutoff = (START + timedelta(days=20)).isoformat()
    train_rows, holdout = table[table["date"] < cutoff], table[table["date"] >= cutoff]
    models = {0: train_load_models(0, train_rows, (0.05, 0.95), PARAMS, FEATURES, seed=0,
                                   validation_days=0, min_rows=20)}

    day_inputs = {}
    for tid, day in zip(holdout["transformer_id"], holdout["date"]):
        d = date.fromisoformat(day)
        day_inputs[(tid, d)] = make_inputs(offpeak=0.8, peak=1.0, tid=tid, day=d)
    dropped = ("T002", START + timedelta(days=24))
    del day_inputs[dropped]

    replay = MultistageReplay(models, {"T001": 0, "T002": 0}, day_inputs, (0.05, 0.95), SearchBounds())
    predictions = replay.run(holdout, holdout["peak_ambient"].to_numpy())

    assert len(predictions) == 2 * (len(holdout) - 1)
    assert (predictions["method"] == "multistage").all()
    assert (dropped[0], dropped[1].isoformat()) not in set(zip(predictions["transformer_id"], predictions["date"]))
    wide = predictions.pivot_table(index=["transformer_id", "date"], columns="percentile", values="k_pred")
    assert (wide[0.95] >= wide[0.05]).all()
    assert wide.stack().between(0.5, 2.5).all()
    for model_set in models[0].values():
        assert len(model_set.ensembles[0.05].trees) == PARAMS.n_rounds + 5 * 5
