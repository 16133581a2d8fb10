# src/processors/pipeline/batch_pipeline.py
from datetime import date
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import pandas as pd

from src.config import Config, ExperimentConfig
from src.processors.data import SplitSpec, export_fleet, generate_synthetic_fleet, load_fleet, split_dates
from src.processors.data.records import FleetData
from src.processors.evaluation.metrics import (
    evaluate_predictions,
    interval_frame,
    noisy_temperature_run,
    per_transformer_coverage,
    sensitivity_days,
    sensitivity_summary,
    temperature_sensitivity,
)
from src.processors.evaluation.reports import write_reports
from src.processors.learning.boosting import BoostingParams, pilot_importance
from src.processors.learning.clustering import ClusterAssignment, choose_pipeline, cluster_fleet
from src.processors.learning.features import (
    CATEGORICAL_COLUMNS,
    FEATURE_COLUMNS,
    LOAD_MEAN_COLUMNS,
    FeatureBuilder,
    prune_features,
    summarise_days,
)
from src.processors.learning.forecaster import (
    HoldoutReplay,
    QuantileModelSet,
    expand_multi_temperature,
    load_model_sets,
    predict_quantiles,
    prediction_temperatures,
    predictions_frame,
    save_model_sets,
    train_clusters,
)
from src.processors.learning.multistage import MultistageReplay, train_load_clusters
from src.processors.physics.labeler import DayInputs, FleetLabeler, SearchBounds, build_day_inputs
from src.processors.physics.thermal import DayWindow
from src.processors.pipeline.artifacts import ArtifactStore, derived_seed
from src.utils import CsvHandler, JsonHandler, Log, log_lifecycle, measure_time
from src.utils.exceptions import ConfigError, DataValidationError

PRIMARY_SCENARIO = "st_cp"
SELECTED_FEATURES_FILE = "selected_features.json"

# sub-seed tags
_PRUNE, _SELECTION, _REPLICAS, _TRAIN, _NOISE = range(1, 6)


class BatchPipeline:
    """
    스테이지 실행 관리자: synth → label → cluster → train → predict → evaluate.
    각 스테이지는 출력 디렉토리의 상위 산출물을 읽고, 결과를 원자적으로 저장한 뒤
    매니페스트를 남깁니다.
    """

    def __init__(self, config: ExperimentConfig, output_dir: Optional[Path] = None):
        self.config = config
        root = Path(output_dir) if output_dir else Path(config.paths.output_dir)
        if not root.is_absolute():
            root = Config.BASE_DIR / root
        self.store = ArtifactStore(root)
        self.window = DayWindow.from_config(config.window)
        self.bounds = SearchBounds.from_config(config.labeler)
        self.params = BoostingParams.from_config(config.forecaster)
        self.split_spec = SplitSpec(config.split.train_validation_days, config.split.holdout_days)
        self.config_hash = config.config_hash()

    # ==========================================
    # Artifact helpers
    # ==========================================
    def _fleet_paths(self) -> Dict[str, Optional[Path]]:
        paths = self.config.paths
        if paths.loads:
            if not (paths.weather and paths.meta):
                raise ConfigError("paths.loads requires paths.weather and paths.meta")
            return {"loads": Path(paths.loads), "weather": Path(paths.weather), "meta": Path(paths.meta),
                    "holidays": Path(paths.holidays) if paths.holidays else None}
        raw = self.store.raw_dir
        return {key: raw / name for key, name in self.store.raw_files().items()}

    def _load_fleet(self) -> Tuple[FleetData, List[Path]]:
        paths = self._fleet_paths()
        for key in ("loads", "weather", "meta"):
            ArtifactStore.require(paths[key], "synth")
        holidays = paths["holidays"] if paths["holidays"] is not None and paths["holidays"].exists() else None
        fleet = load_fleet(paths["loads"], paths["weather"], paths["meta"], holidays)
        return fleet, [p for p in paths.values() if p is not None and p.exists()]

    def _read_table(self, name: str, producer: str) -> pd.DataFrame:
        path = ArtifactStore.require(self.store.path(name), producer)
        return CsvHandler.read_csv(path, dtype={"transformer_id": str, "date": str})

    def _split(self, table: pd.DataFrame) -> Tuple[pd.DataFrame, pd.DataFrame]:
        """Train/holdout rows of a per-day table, split on the labeled calendar."""
        labels = self._read_table(Config.LABELS_FILE, "label")
        train_days, holdout_days = split_dates((date.fromisoformat(d) for d in labels["date"].unique()), self.split_spec)
        train_set = {d.isoformat() for d in train_days}
        holdout_set = {d.isoformat() for d in holdout_days}
        train = table[table["date"].isin(train_set)].reset_index(drop=True)
        holdout = table[table["date"].isin(holdout_set)].reset_index(drop=True)
        if train.empty or holdout.empty:
            raise DataValidationError("Feature table has no rows in the training or holdout period")
        return train, holdout

    def _selected_features(self) -> List[str]:
        data = JsonHandler.read_json(ArtifactStore.require(self.store.path(SELECTED_FEATURES_FILE), "cluster"))
        return list(data["features"])

    def _assignment(self) -> ClusterAssignment:
        return ClusterAssignment.from_frame(self._read_table(Config.ASSIGNMENTS_FILE, "cluster"))

    @staticmethod
    def _assigned(rows: pd.DataFrame, assignment: ClusterAssignment) -> pd.DataFrame:
        return rows[rows["transformer_id"].isin(assignment.assignments)].reset_index(drop=True)

    def _interval(self) -> Tuple[float, float]:
        lo, hi = self.config.evaluation.coverage_interval
        return float(lo), float(hi)

    def _training_rows(self, train_rows: pd.DataFrame, multi_temp: bool) -> pd.DataFrame:
        if not multi_temp:
            return train_rows
        fc = self.config.forecaster
        return expand_multi_temperature(train_rows, fc.multi_temp_replicas, fc.multi_temp_radius,
                                        derived_seed(self.config.seed, _REPLICAS), self.config.features.ewma_alpha)

    def _day_inputs(self, fleet: FleetData, rows: pd.DataFrame) -> Dict[Tuple[str, date], DayInputs]:
        out = {}
        for tid, day in rows[["transformer_id", "date"]].drop_duplicates().itertuples(index=False):
            d = date.fromisoformat(day)
            out[(tid, d)] = build_day_inputs(fleet, tid, d, self.window)
        return out

    # ==========================================
    # Stages
    # ==========================================
    @measure_time
    @log_lifecycle
    def synth(self, n_transformers: Optional[int] = None, n_days: Optional[int] = None) -> FleetData:
        Log.section("Stage: synth")
        syn = self.config.synthetic
        fleet = generate_synthetic_fleet(self.config.seed, n_transformers or syn.n_transformers,
                                         n_days or syn.n_days, syn, self.config.thermal)
        paths = export_fleet(fleet, self.store.raw_dir, self.store.raw_files())
        self.store.write_manifest("synth", self.config.seed, self.config_hash, [], paths.values())
        return fleet

    @measure_time
    @log_lifecycle
    def label(self) -> pd.DataFrame:
        Log.section("Stage: label")
        fleet, inputs = self._load_fleet()
        labels, _ = FleetLabeler(self.window, self.bounds).run(fleet)
        if labels.empty:
            raise DataValidationError("No labelable days in the fleet")
        summary = summarise_days(fleet, self.window)
        table = FeatureBuilder(fleet, self.config.features.ewma_alpha).build_table(labels, summary)

        outputs = [self.store.path(Config.LABELS_FILE), self.store.path(Config.DAY_SUMMARY_FILE),
                   self.store.path(Config.FEATURES_FILE)]
        for path, frame in zip(outputs, (labels, summary, table)):
            CsvHandler.save_csv(path, frame)
        self.store.write_manifest("label", self.config.seed, self.config_hash, inputs, outputs)
        return labels

    @measure_time
    @log_lifecycle
    def cluster(self) -> ClusterAssignment:
        Log.section("Stage: cluster")
        cfg = self.config
        table = self._read_table(Config.FEATURES_FILE, "label")
        train_rows, holdout_rows = self._split(table)

        features = list(FEATURE_COLUMNS)
        if cfg.features.prune and len(train_rows) >= cfg.features.min_prune_rows:
            def importance(frame, y, names):
                return pilot_importance(frame, y, names, CATEGORICAL_COLUMNS,
                                        BoostingParams.from_config(cfg.forecaster),
                                        seed=derived_seed(cfg.seed, _PRUNE))
            features = prune_features(train_rows, importance, FEATURE_COLUMNS,
                                      seed=derived_seed(cfg.seed, _PRUNE), min_rows=cfg.features.min_prune_rows)
        else:
            Log.info("Feature pruning skipped")
        features_path = self.store.path(SELECTED_FEATURES_FILE)
        JsonHandler.save_json(features_path, {"features": features})

        cc = cfg.clustering
        candidates = {
            name: cluster_fleet(train_rows, name, tuple(cc.k_range), cfg.seed, cc.ridge_lambda, cc.pca_variance,
                                cc.n_init, cc.max_iter)
            for name in cc.pipelines
        }
        all_path = self.store.path(Config.ASSIGNMENTS_ALL_FILE)
        CsvHandler.save_csv(all_path, pd.concat([c.to_frame() for c in candidates.values()], ignore_index=True))

        lo, hi = self._interval()
        # pipelines that agree on the partition share one evaluation
        evaluated: Dict[Tuple[Tuple[str, int], ...], float] = {}

        def holdout_eval(assignment: ClusterAssignment) -> float:
            key = tuple(sorted(assignment.assignments.items()))
            if key not in evaluated:
                evaluated[key] = self._selection_coverage(assignment, train_rows, holdout_rows, features)
            return evaluated[key]

        chosen, scores = choose_pipeline(candidates, holdout_eval, nominal=100.0 * (hi - lo))
        outputs = [features_path, all_path, self.store.path(Config.ASSIGNMENTS_FILE),
                   self.store.path(Config.PIPELINE_SCORES_FILE)]
        CsvHandler.save_csv(outputs[2], chosen.to_frame())
        CsvHandler.save_csv(outputs[3], scores)
        self.store.write_manifest("cluster", cfg.seed, self.config_hash,
                                  [self.store.path(Config.FEATURES_FILE), self.store.path(Config.LABELS_FILE)], outputs)
        return chosen

    def _selection_coverage(self, assignment: ClusterAssignment, train_rows: pd.DataFrame,
                            holdout_rows: pd.DataFrame, features: List[str]) -> float:
        """Holdout coverage of a reduced, calibrated model (interval percentiles only, no incremental updates)."""
        fc = self.config.forecaster
        train_rows = self._assigned(train_rows, assignment)
        holdout_rows = self._assigned(holdout_rows, assignment)
        models = train_clusters(train_rows, assignment.assignments, self._interval(), self.params, features,
                                derived_seed(self.config.seed, _SELECTION), validation_days=fc.validation_days,
                                min_rows=fc.min_rows, n_rounds=self.config.clustering.selection_rounds)
        clusters = holdout_rows["transformer_id"].map(assignment.assignments)
        sets = []
        for cluster_id, model_set in sorted(models.items()):
            rows = holdout_rows[clusters == cluster_id]
            if not rows.empty:
                sets.extend(predict_quantiles(model_set, rows))
        intervals = interval_frame(predictions_frame(sets), holdout_rows, *self._interval())
        return float(per_transformer_coverage(intervals).mean())

    @measure_time
    @log_lifecycle
    def train(self, multi_temp: bool = False, multistage: Optional[bool] = None) -> Dict[int, QuantileModelSet]:
        Log.section(f"Stage: train ({'multi' if multi_temp else 'single'}-temperature)")
        cfg = self.config
        fc = cfg.forecaster
        multistage = cfg.multistage.enabled if multistage is None else multistage

        table = self._read_table(Config.FEATURES_FILE, "label")
        train_rows, _ = self._split(table)
        assignment = self._assignment()
        train_rows = self._assigned(train_rows, assignment)
        features = self._selected_features()
        rows = self._training_rows(train_rows, multi_temp)

        prefix = "direct_mt" if multi_temp else "direct"
        models = train_clusters(rows, assignment.assignments, fc.percentiles, self.params, features,
                                derived_seed(cfg.seed, _TRAIN), validation_days=fc.validation_days,
                                min_rows=fc.min_rows)
        outputs = save_model_sets(self.store.models_dir, models, prefix)

        if multistage and not multi_temp:
            load_models = train_load_clusters(train_rows, assignment.assignments, self._interval(), self.params,
                                              features, derived_seed(cfg.seed, _TRAIN),
                                              validation_days=fc.validation_days, min_rows=fc.min_rows)
            for target in LOAD_MEAN_COLUMNS:
                per_cluster = {cid: sets[target] for cid, sets in load_models.items()}
                outputs += save_model_sets(self.store.models_dir, per_cluster, f"multistage_{target}")

        inputs = [self.store.path(Config.FEATURES_FILE), self.store.path(Config.ASSIGNMENTS_FILE),
                  self.store.path(SELECTED_FEATURES_FILE)]
        self.store.write_manifest(f"train_{prefix}", cfg.seed, self.config_hash, inputs, outputs)
        return models

    @measure_time
    @log_lifecycle
    def predict(self, noisy_temp: bool = False, forecast_temp: bool = False, multi_temp: bool = False,
                multistage: Optional[bool] = None) -> pd.DataFrame:
        if noisy_temp and forecast_temp:
            raise ConfigError("--noisy-temp and --forecast-temp are mutually exclusive")
        mode = "noisy" if noisy_temp else "forecast" if forecast_temp else "true"
        suffix = {"true": "cp", "noisy": "np", "forecast": "fp"}[mode]
        scenario = f"{'mt' if multi_temp else 'st'}_{suffix}"
        Log.section(f"Stage: predict ({scenario})")
        cfg = self.config
        fc = cfg.forecaster
        multistage = cfg.multistage.enabled if multistage is None else multistage

        table = self._read_table(Config.FEATURES_FILE, "label")
        train_rows, holdout_rows = self._split(table)
        assignment = self._assignment()
        train_rows = self._assigned(train_rows, assignment)
        holdout_rows = self._assigned(holdout_rows, assignment)
        prefix = "direct_mt" if multi_temp else "direct"
        models = load_model_sets(self.store.models_dir, prefix)
        history = self._training_rows(train_rows, multi_temp)
        for cluster_id, model_set in models.items():
            model_set.training_rows = history[history["transformer_id"].isin(assignment.members(cluster_id))].reset_index(drop=True)

        seed = derived_seed(cfg.seed, _NOISE)
        replay = HoldoutReplay(models, assignment.assignments, cfg.features.ewma_alpha, fc.incremental_rounds)
        if mode == "noisy":
            predictions = noisy_temperature_run(lambda t: replay.run(holdout_rows, t), holdout_rows,
                                                cfg.evaluation.noise_sigma, seed)
        else:
            predictions = replay.run(holdout_rows, prediction_temperatures(holdout_rows, mode))
        outputs = [self.store.prediction_path(scenario)]
        CsvHandler.save_csv(outputs[0], predictions)

        if multistage and not multi_temp:
            temperatures = prediction_temperatures(holdout_rows, mode, cfg.evaluation.noise_sigma, seed)
            outputs.append(self._predict_multistage(suffix, train_rows, holdout_rows, assignment, temperatures))

        inputs = [self.store.path(Config.FEATURES_FILE), self.store.path(Config.ASSIGNMENTS_FILE)]
        inputs += sorted(self.store.models_dir.glob("*.json"))
        self.store.write_manifest(f"predict_{scenario}", cfg.seed, self.config_hash, inputs, outputs)
        return predictions

    def _predict_multistage(self, suffix: str, train_rows: pd.DataFrame, holdout_rows: pd.DataFrame,
                            assignment: ClusterAssignment, temperatures) -> Path:
        cfg = self.config
        per_target = {target: load_model_sets(self.store.models_dir, f"multistage_{target}")
                      for target in LOAD_MEAN_COLUMNS}
        models: Dict[int, Dict[str, QuantileModelSet]] = {}
        for target, sets in per_target.items():
            for cluster_id, model_set in sets.items():
                model_set.training_rows = train_rows[
                    train_rows["transformer_id"].isin(assignment.members(cluster_id))].reset_index(drop=True)
                models.setdefault(cluster_id, {})[target] = model_set

        fleet, _ = self._load_fleet()
        replay = MultistageReplay(models, assignment.assignments, self._day_inputs(fleet, holdout_rows),
                                  self._interval(), self.bounds, cfg.features.ewma_alpha,
                                  cfg.forecaster.incremental_rounds)
        predictions = replay.run(holdout_rows, temperatures)
        path = self.store.prediction_path(f"multistage_{suffix}")
        CsvHandler.save_csv(path, predictions)
        return path

    @measure_time
    @log_lifecycle
    def evaluate(self) -> Dict[str, object]:
        Log.section("Stage: evaluate")
        cfg = self.config
        ev = cfg.evaluation
        primary_path = ArtifactStore.require(self.store.prediction_path(PRIMARY_SCENARIO), "predict")
        table = self._read_table(Config.FEATURES_FILE, "label")
        _, holdout_rows = self._split(table)
        holdout_rows = self._assigned(holdout_rows, self._assignment())
        fleet, fleet_inputs = self._load_fleet()
        day_inputs = self._day_inputs(fleet, holdout_rows)

        prediction_files = sorted(self.store.predictions_dir.glob("*.csv"))
        reports = {}
        for path in prediction_files:
            scenario = path.stem
            predictions = CsvHandler.read_csv(path, dtype={"transformer_id": str, "date": str})
            reports[scenario] = evaluate_predictions(
                scenario, predictions, holdout_rows, self._interval(),
                day_inputs if scenario == PRIMARY_SCENARIO else None,
                ev.fixed_scale_factor, self.bounds.hotspot_limit, self.bounds.tolerance,
            )

        sample = sensitivity_days(day_inputs, ev.sensitivity_days)
        sensitivity = temperature_sensitivity(sample, tuple(ev.sensitivity_grid), ev.sensitivity_step, self.bounds)
        reports[PRIMARY_SCENARIO].sensitivity = sensitivity_summary(sensitivity, ev.forecast_deviation)

        scores_path = self.store.path(Config.PIPELINE_SCORES_FILE)
        scores = CsvHandler.read_csv(scores_path) if scores_path.exists() else None
        outputs = write_reports(self.store.reports_dir, reports, PRIMARY_SCENARIO, sensitivity, scores)
        inputs = prediction_files + fleet_inputs + [self.store.path(Config.FEATURES_FILE), primary_path]
        self.store.write_manifest("evaluate", cfg.seed, self.config_hash, inputs, outputs)
        return {name: report.mean_coverage for name, report in reports.items()}

    @measure_time
    def reproduce(self) -> Dict[str, object]:
        """Every stage end to end, all four temperature scenarios and the multistage comparison."""
        # 1. 데이터 생성 및 라벨링, 클러스터링
        self.synth()
        self.label()
        self.cluster()
        # 2. 단일/다중 온도 학습
        self.train(multi_temp=False)
        self.train(multi_temp=True, multistage=False)
        # 3. 홀드아웃 재현 (네 가지 온도 시나리오 + multistage 비교)
        self.predict(multistage=True)
        self.predict(noisy_temp=True, multistage=False)
        self.predict(multi_temp=True, multistage=False)
        self.predict(noisy_temp=True, multi_temp=True, multistage=False)
        # 4. 평가 및 리포트
        return self.evaluate()
