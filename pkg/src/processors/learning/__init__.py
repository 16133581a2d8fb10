# src/processors/learning/__init__.py
"""
Learning Sub-package
====================
Features, transformer clustering and quantile forecasting of the optimal
scale factor, plus the load-first multistage counterfactual.

Modules:
--------
1. features.py
   - Day-ahead feature vectors (lags, unbalance, calendar, temperature, metadata)
   - Noise-based feature pruning

2. boosting.py
   - Histogram gradient-boosted trees on the pinball loss, warm start, JSON form

3. clustering.py
   - Ridge / scaled / PCA pipelines, k-means, silhouette + BIC cluster count

4. forecaster.py
   - Per-cluster quantile model sets, holdout replay with incremental updates

5. multistage.py
   - Six per-cluster load models and the load-to-scale-factor conversion
"""

from .features import FEATURE_COLUMNS, FeatureBuilder, build_features, ewma_temperature, prune_features
from .boosting import BoostingParams, QuantileBoostingEnsemble, pinball_loss
from .clustering import (
    ClusterAssignment,
    Pipeline,
    choose_pipeline,
    cluster_fleet,
    kmeans,
    pca_project,
    per_transformer_ridge_weights,
    select_n_clusters,
    zscore_normalise,
)
from .forecaster import (
    HoldoutReplay,
    PredictionSet,
    QuantileModelSet,
    expand_multi_temperature,
    incremental_update,
    predict_quantiles,
    train,
)
from .multistage import MultistageReplay, scale_factor_from_loads, train_load_models

__all__ = [
    "FEATURE_COLUMNS",
    "FeatureBuilder",
    "build_features",
    "ewma_temperature",
    "prune_features",
    "BoostingParams",
    "QuantileBoostingEnsemble",
    "pinball_loss",
    "ClusterAssignment",
    "Pipeline",
    "choose_pipeline",
    "cluster_fleet",
    "kmeans",
    "pca_project",
    "per_transformer_ridge_weights",
    "select_n_clusters",
    "zscore_normalise",
    "HoldoutReplay",
    "PredictionSet",
    "QuantileModelSet",
    "expand_multi_temperature",
    "incremental_update",
    "predict_quantiles",
    "train",
    "MultistageReplay",
    "scale_factor_from_loads",
    "train_load_models",
]
