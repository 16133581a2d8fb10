# tests/test_boosting.py
import json

import numpy as np
import pandas as pd
import pytest

from src.processors.learning.boosting import (
    BoostingParams,
    QuantileBoostingEnsemble,
    pinball_gradient,
    pinball_loss,
)
from src.utils.exceptions import DataValidationError, ParameterError

FAST = BoostingParams(learning_rate=0.1, n_rounds=60)


def regression_data(n=500, seed=0, noise=0.2):
    rng = np.random.default_rng(seed)
    frame = pd.DataFrame({"x": rng.uniform(0, 1, n), "z": rng.normal(size=n)})
    y = 2.0 * frame["x"].to_numpy() + rng.normal(0, noise, n)
    return frame, y


def test_pinball_identities():
    assert pinball_loss([1.0], [0.0], 0.9) == pytest.approx(0.9)
    assert pinball_loss([0.0], [1.0], 0.9) == pytest.approx(0.1)
    assert pinball_loss([2.0, 2.0], [2.0, 2.0], 0.3) == 0.0
    np.testing.assert_array_equal(
        pinball_gradient(np.array([1.0, 0.0, 0.5]), np.array([0.0, 1.0, 0.5]), 0.9), [-0.9, 0.1, 0.0]
    )
    with pytest.raises(ParameterError):
        pinball_loss([1.0], [0.0], 1.0)
    with pytest.raises(ParameterError):
        QuantileBoostingEnsemble(0.0)


def test_constant_target_predicts_the_constant():
    frame, _ = regression_data(200)
    model = QuantileBoostingEnsemble(0.9, FAST).fit(frame, np.full(200, 1.7), ["x", "z"])
    np.testing.assert_allclose(model.predict(frame), 1.7)


def test_step_function_is_learned():
    rng = np.random.default_rng(1)
    n = 400
    frame = pd.DataFrame({"x": rng.uniform(0, 1, n)})
    y = (frame["x"].to_numpy() > 0.5).astype(float) + rng.normal(0, 0.01, n)
    baseline = pinball_loss(y, np.full(n, np.median(y)), 0.5)
    model = QuantileBoostingEnsemble(0.5, BoostingParams(learning_rate=0.1, n_rounds=200)).fit(frame, y, ["x"])
    assert model.loss(frame, y) <= 0.1 * baseline


def test_upper_quantile_sits_above_lower():
    frame, y = regression_data(1000, seed=2)
    params = BoostingParams(learning_rate=0.1, n_rounds=150)
    low = QuantileBoostingEnsemble(0.1, params, seed=4).fit(frame, y, ["x", "z"])
    high = QuantileBoostingEnsemble(0.9, params, seed=4).fit(frame, y, ["x", "z"])
    assert high.predict(frame).mean() > low.predict(frame).mean()
    assert 0.8 <= np.mean(y <= high.predict(frame)) <= 0.97
    assert 0.03 <= np.mean(y <= low.predict(frame)) <= 0.2


def test_training_loss_decreases():
    frame, y = regression_data(400, seed=3)
    model = QuantileBoostingEnsemble(0.5, FAST, seed=1).fit(frame, y, ["x", "z"], n_rounds=1)
    losses = [model.loss(frame, y)]
    for _ in range(4):
        model.continue_training(frame, y, 10)
        losses.append(model.loss(frame, y))
    base = pinball_loss(y, np.full(len(y), np.quantile(y, 0.5)), 0.5)
    assert losses[-1] < losses[0] <= base * 1.01
    assert all(b <= a + 1e-3 for a, b in zip(losses, losses[1:]))


def test_fit_is_deterministic_and_order_free():
    frame, y = regression_data(300, seed=4)
    first = QuantileBoostingEnsemble(0.75, FAST, seed=9).fit(frame, y, ["x", "z"])
    second = QuantileBoostingEnsemble(0.75, FAST, seed=9).fit(frame, y, ["x", "z"])
    np.testing.assert_array_equal(first.predict(frame), second.predict(frame))

    perm = np.random.default_rng(0).permutation(len(frame))
    shuffled = QuantileBoostingEnsemble(0.75, FAST, seed=9).fit(frame.iloc[perm], y[perm], ["x", "z"])
    np.testing.assert_array_equal(first.predict(frame), shuffled.predict(frame))
    np.testing.assert_allclose(shuffled.training_predictions, shuffled.predict(frame.iloc[perm]), rtol=1e-12)


def test_serialised_model_predicts_identically():
    frame, y = regression_data(300, seed=5)
    frame["tid"] = np.where(frame["x"] > 0.5, "T001", "T002")
    model = QuantileBoostingEnsemble(0.9, FAST, categorical=["tid"], seed=2).fit(frame, y, ["x", "z", "tid"])
    restored = QuantileBoostingEnsemble.from_dict(json.loads(json.dumps(model.to_dict())))
    np.testing.assert_array_equal(model.predict(frame), restored.predict(frame))
    assert restored.schema_hash == model.schema_hash


def test_tampered_model_is_rejected():
    frame, y = regression_data(100, seed=6)
    data = QuantileBoostingEnsemble(0.5, FAST).fit(frame, y, ["x", "z"], n_rounds=3).to_dict()
    with pytest.raises(DataValidationError):
        QuantileBoostingEnsemble.from_dict({**data, "feature_names": ["z", "x"]})
    with pytest.raises(DataValidationError):
        QuantileBoostingEnsemble.from_dict({**data, "format_version": 2})


def test_prediction_needs_every_trained_feature():
    frame, y = regression_data(100, seed=7)
    model = QuantileBoostingEnsemble(0.5, FAST).fit(frame, y, ["x", "z"], n_rounds=3)
    with pytest.raises(DataValidationError):
        model.predict(frame[["x"]])


def test_continue_training_appends_rounds():
    frame, y = regression_data(300, seed=8)
    model = QuantileBoostingEnsemble(0.5, FAST).fit(frame, y, ["x", "z"], n_rounds=20)
    pred = model.continue_training(frame.head(100), y[:100], 5)
    assert len(model.trees) == 25
    np.testing.assert_allclose(pred, model.predict(frame.head(100)), rtol=1e-12)
    unchanged = model.continue_training(frame.head(0), y[:0], 5)
    assert len(unchanged) == 0 and len(model.trees) == 25


def test_unseen_category_falls_back_to_the_global_encoding():
    frame, y = regression_data(200, seed=9)
    frame["tid"] = np.where(np.arange(200) % 2 == 0, "T001", "T002")
    model = QuantileBoostingEnsemble(0.5, FAST, categorical=["tid"]).fit(frame, y, ["x", "tid"], n_rounds=10)
    assert model.encodings["tid"].keys() == {"T001", "T002"}
    probe = frame.head(5).assign(tid="T999")
    assert np.isfinite(model.predict(probe)).all()


def test_early_stopping_keeps_the_best_prefix():
    frame, y = regression_data(400, seed=10, noise=0.05)
    x = frame["x"].to_numpy()
    # validation target runs against the training signal: every round hurts
    hostile = QuantileBoostingEnsemble(0.5, BoostingParams(learning_rate=0.1, n_rounds=200, early_stopping_patience=30))
    hostile.fit(frame, y, ["x", "z"], valid_frame=frame, valid_y=2.0 - 2.0 * x)
    assert hostile.best_iteration < 30
    assert len(hostile.trees) == hostile.best_iteration

    friendly = QuantileBoostingEnsemble(0.5, BoostingParams(learning_rate=0.1, n_rounds=200, early_stopping_patience=30))
    friendly.fit(frame, y, ["x", "z"], valid_frame=frame, valid_y=2.0 * x)
    assert friendly.best_iteration > 30
    assert len(friendly.trees) == friendly.best_iteration
