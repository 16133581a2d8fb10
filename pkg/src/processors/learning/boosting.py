# src/processors/learning/boosting.py
"""
Gradient-boosted regression trees for quantile (pinball) loss.

Each round fits a leaf-limited tree to the pinball gradient on a bagged row
subset and a sampled feature subset, using histogram split search on
pre-binned features. Leaf outputs are re-estimated as the q-quantile of the
residuals in the leaf, then shrunk by the learning rate. Categorical columns
are target-encoded once, at the first fit, and the encoding stays fixed for
warm-started rounds.
"""
import hashlib
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.utils.exceptions import DataValidationError, ParameterError

FORMAT_VERSION = 1
MIN_SPLIT_GAIN = 1e-12
ENCODING_SMOOTHING = 10.0


def pinball_loss(y_true, y_pred, q: float) -> float:
    """Mean pinball loss; q·(y−ŷ) above the prediction, (1−q)·(ŷ−y) below."""
    if not (0.0 < q < 1.0):
        raise ParameterError(f"Quantile level must lie in (0, 1), got {q}")
    diff = np.asarray(y_true, dtype=float) - np.asarray(y_pred, dtype=float)
    return float(np.mean(np.where(diff >= 0, q * diff, (q - 1.0) * diff)))


def pinball_gradient(y_true: np.ndarray, y_pred: np.ndarray, q: float) -> np.ndarray:
    """d loss / d ŷ: −q where the prediction is below the truth, 1−q where above."""
    return np.where(y_pred < y_true, -q, np.where(y_pred > y_true, 1.0 - q, 0.0))


def schema_hash(feature_names: Sequence[str]) -> str:
    return hashlib.sha256("\x1f".join(feature_names).encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class BoostingParams:
    learning_rate: float = 0.026
    max_leaves: int = 19
    feature_fraction: float = 0.93
    bagging_fraction: float = 0.87
    n_rounds: int = 300
    min_leaf_rows: int = 20
    max_bins: int = 64
    early_stopping_patience: int = 30

    def __post_init__(self):
        if not (0 < self.learning_rate <= 1):
            raise ParameterError("learning_rate must lie in (0, 1]")
        if self.max_leaves < 2:
            raise ParameterError("max_leaves must be at least 2")
        if not (0 < self.feature_fraction <= 1 and 0 < self.bagging_fraction <= 1):
            raise ParameterError("feature/bagging fractions must lie in (0, 1]")
        if self.n_rounds < 1 or self.min_leaf_rows < 1 or self.max_bins < 2:
            raise ParameterError("n_rounds, min_leaf_rows and max_bins must be positive")

    @classmethod
    def from_config(cls, section) -> "BoostingParams":
        return cls(
            learning_rate=section.learning_rate,
            max_leaves=section.max_leaves,
            feature_fraction=section.feature_fraction,
            bagging_fraction=section.bagging_fraction,
            n_rounds=section.n_rounds,
            min_leaf_rows=section.min_leaf_rows,
            max_bins=section.max_bins,
            early_stopping_patience=section.early_stopping_patience,
        )


@dataclass
class QuantileTree:
    """Flat node arrays; leaves have feature == -1."""
    feature: List[int] = field(default_factory=list)
    split_bin: List[int] = field(default_factory=list)
    threshold: List[float] = field(default_factory=list)
    left: List[int] = field(default_factory=list)
    right: List[int] = field(default_factory=list)
    value: List[float] = field(default_factory=list)

    def add_node(self) -> int:
        self.feature.append(-1)
        self.split_bin.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def _route(self, matrix: np.ndarray, binned: bool) -> np.ndarray:
        feature = np.asarray(self.feature)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        cut = np.asarray(self.split_bin if binned else self.threshold)
        node = np.zeros(len(matrix), dtype=int)
        rows = np.arange(len(matrix))
        while True:
            internal = feature[node] >= 0
            if not internal.any():
                return node
            f = np.where(internal, feature[node], 0)
            go_left = matrix[rows, f] <= cut[node]
            node = np.where(internal, np.where(go_left, left[node], right[node]), node)

    def predict(self, matrix: np.ndarray, binned: bool = False) -> np.ndarray:
        return np.asarray(self.value)[self._route(matrix, binned)]

    def to_dict(self) -> Dict[str, list]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, list]) -> "QuantileTree":
        return cls(**{k: list(v) for k, v in data.items()})


def _bin_edges(column: np.ndarray, max_bins: int) -> np.ndarray:
    unique = np.unique(column)
    if len(unique) <= max_bins:
        return unique[:-1].astype(float)
    quantiles = np.quantile(column, np.linspace(0, 1, max_bins + 1)[1:-1])
    return np.unique(quantiles).astype(float)


class QuantileBoostingEnsemble:
    """One boosted ensemble for a single quantile level."""

    def __init__(self, quantile: float, params: BoostingParams = BoostingParams(),
                 categorical: Sequence[str] = (), seed: int = 0):
        if not (0.0 < quantile < 1.0):
            raise ParameterError(f"Quantile level must lie in (0, 1), got {quantile}")
        self.quantile = float(quantile)
        self.params = params
        self.categorical = list(categorical)
        self.seed = int(seed)

        self.feature_names: List[str] = []
        self.bin_edges: List[np.ndarray] = []
        self.encodings: Dict[str, Dict[str, float]] = {}
        self.encoding_default: Dict[str, float] = {}
        self.base_score: float = 0.0
        self.trees: List[QuantileTree] = []
        self.importance: Dict[str, float] = {}
        self.best_iteration: Optional[int] = None
        self.training_predictions: Optional[np.ndarray] = None
        # y − prediction on the early-stopping rows, which the model never fits
        self.validation_residuals: Optional[np.ndarray] = None

    # ---------- feature handling ----------
    @property
    def schema_hash(self) -> str:
        return schema_hash(self.feature_names)

    def _fit_encodings(self, frame: pd.DataFrame, y: np.ndarray) -> None:
        global_mean = float(np.mean(y))
        for col in self.categorical:
            stats = pd.DataFrame({"key": frame[col].astype(str).to_numpy(), "y": y}).groupby("key")["y"].agg(["sum", "count"])
            smoothed = (stats["sum"] + ENCODING_SMOOTHING * global_mean) / (stats["count"] + ENCODING_SMOOTHING)
            self.encodings[col] = {str(k): float(v) for k, v in smoothed.items()}
            self.encoding_default[col] = global_mean

    def _matrix(self, frame: pd.DataFrame) -> np.ndarray:
        missing = [c for c in self.feature_names if c not in frame.columns]
        if missing:
            raise DataValidationError(f"Feature schema mismatch: missing {missing}")
        columns = []
        for col in self.feature_names:
            if col in self.encodings:
                mapping = self.encodings[col]
                default = self.encoding_default[col]
                columns.append(frame[col].astype(str).map(mapping).fillna(default).to_numpy(dtype=float))
            else:
                columns.append(frame[col].to_numpy(dtype=float))
        return np.column_stack(columns) if columns else np.empty((len(frame), 0))

    def _binned(self, matrix: np.ndarray) -> np.ndarray:
        out = np.empty(matrix.shape, dtype=np.int32)
        for j, edges in enumerate(self.bin_edges):
            out[:, j] = np.searchsorted(edges, matrix[:, j], side="left")
        return out

    # ---------- training ----------
    def fit(self, frame: pd.DataFrame, y, feature_names: Sequence[str],
            valid_frame: Optional[pd.DataFrame] = None, valid_y=None,
            n_rounds: Optional[int] = None) -> "QuantileBoostingEnsemble":
        y = np.asarray(y, dtype=float)
        if len(frame) == 0 or len(frame) != len(y):
            raise DataValidationError("Training data is empty or misaligned")
        if not np.isfinite(y).all():
            raise DataValidationError("Training target contains non-finite values")

        self.feature_names = list(feature_names)
        self.categorical = [c for c in self.categorical if c in self.feature_names]
        order = self._canonical_order(frame, y)
        frame, y = frame.iloc[order].reset_index(drop=True), y[order]
        self._fit_encodings(frame, y)
        matrix = self._matrix(frame)
        if not np.isfinite(matrix).all():
            raise DataValidationError("Training features contain non-finite values")
        self.bin_edges = [_bin_edges(matrix[:, j], self.params.max_bins) for j in range(matrix.shape[1])]
        self.base_score = float(np.quantile(y, self.quantile))
        self.trees = []
        self.importance = {name: 0.0 for name in self.feature_names}

        rounds = n_rounds or self.params.n_rounds
        if valid_frame is not None and valid_y is not None and len(valid_frame):
            pred = self._boost_with_early_stopping(matrix, y, self._matrix(valid_frame),
                                                   np.asarray(valid_y, float), rounds)
        else:
            pred = self._boost(matrix, y, rounds)
        self.training_predictions = np.empty_like(pred)
        self.training_predictions[order] = pred
        return self

    def continue_training(self, frame: pd.DataFrame, y, n_rounds: int,
                          init_pred: Optional[np.ndarray] = None) -> np.ndarray:
        """
        Warm start: add `n_rounds` trees fitted on (frame, y); existing trees
        are kept. Returns the predictions on `frame` after the new rounds;
        `init_pred` skips re-scoring the frame with the existing trees.
        """
        matrix = self._matrix(frame)
        pred = self.predict_matrix(matrix) if init_pred is None else np.asarray(init_pred, dtype=float).copy()
        if n_rounds <= 0 or len(frame) == 0:
            return pred
        return self._boost(matrix, np.asarray(y, dtype=float), n_rounds, pred)

    def _canonical_order(self, frame: pd.DataFrame, y: np.ndarray) -> np.ndarray:
        """Row order sorted by content, so that the input row order does not change the ensemble."""
        keys = frame[self.feature_names].reset_index(drop=True).assign(__target__=y)
        return keys.sort_values(list(keys.columns), kind="mergesort").index.to_numpy()

    def _round_rng(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.seed, len(self.trees)]))

    def _boost(self, matrix: np.ndarray, y: np.ndarray, rounds: int,
               pred: Optional[np.ndarray] = None) -> np.ndarray:
        binned = self._binned(matrix)
        if pred is None:
            pred = self.predict_matrix(matrix)
        for _ in range(rounds):
            tree = self._fit_round(binned, y, pred)
            pred = pred + self.params.learning_rate * tree.predict(binned, binned=True)
            self.trees.append(tree)
        return pred

    def _boost_with_early_stopping(self, matrix, y, valid_matrix, valid_y, rounds: int) -> np.ndarray:
        binned = self._binned(matrix)
        pred = self.predict_matrix(matrix)
        valid_pred = self.predict_matrix(valid_matrix)
        best_loss = pinball_loss(valid_y, valid_pred, self.quantile)
        best_rounds = 0
        best_pred = pred
        best_importance = dict(self.importance)
        for i in range(rounds):
            tree = self._fit_round(binned, y, pred)
            pred = pred + self.params.learning_rate * tree.predict(binned, binned=True)
            valid_pred = valid_pred + self.params.learning_rate * tree.predict(valid_matrix)
            self.trees.append(tree)
            loss = pinball_loss(valid_y, valid_pred, self.quantile)
            if loss < best_loss - 1e-12:
                best_loss, best_rounds, best_pred = loss, i + 1, pred
                best_importance = dict(self.importance)
            elif i + 1 - best_rounds >= self.params.early_stopping_patience:
                break
        self.trees = self.trees[:best_rounds]
        self.importance = best_importance
        self.best_iteration = best_rounds
        return best_pred

    def _fit_round(self, binned: np.ndarray, y: np.ndarray, pred: np.ndarray) -> QuantileTree:
        rng = self._round_rng()
        n, n_features = binned.shape
        n_bag = max(1, int(round(n * self.params.bagging_fraction)))
        rows = np.sort(rng.choice(n, size=n_bag, replace=False)) if n_bag < n else np.arange(n)
        n_feat = max(1, int(round(n_features * self.params.feature_fraction)))
        feats = np.sort(rng.choice(n_features, size=n_feat, replace=False)) if n_feat < n_features else np.arange(n_features)

        grad = -pinball_gradient(y[rows], pred[rows], self.quantile)   # negative gradient
        residual = y[rows] - pred[rows]
        return self._grow_tree(binned[rows], grad, residual, feats)

    def _histogram(self, slots: np.ndarray, grad: np.ndarray, idx: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Gradient sums and row counts per (sampled feature, bin) for the rows `idx`."""
        n_feats = slots.shape[1]
        n_slots = self.params.max_bins + 1
        flat = slots[idx].ravel()
        g = np.repeat(grad[idx], n_feats)
        hist_g = np.bincount(flat, weights=g, minlength=n_feats * n_slots).reshape(n_feats, n_slots)
        hist_n = np.bincount(flat, minlength=n_feats * n_slots).reshape(n_feats, n_slots)
        return hist_g, hist_n

    def _best_split(self, hist_g: np.ndarray, hist_n: np.ndarray, feats: np.ndarray):
        n_total = int(hist_n[0].sum())
        if n_total < 2 * self.params.min_leaf_rows:
            return None
        g_total = float(hist_g[0].sum())
        g_left = np.cumsum(hist_g, axis=1)[:, :-1]
        n_left = np.cumsum(hist_n, axis=1)[:, :-1]
        g_right = g_total - g_left
        n_right = n_total - n_left

        valid = (n_left >= self.params.min_leaf_rows) & (n_right >= self.params.min_leaf_rows)
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = g_left ** 2 / n_left + g_right ** 2 / n_right - g_total ** 2 / n_total
        gain = np.where(valid, gain, -np.inf)
        best = int(np.argmax(gain))
        f_pos, bin_pos = divmod(best, gain.shape[1])
        best_gain = float(gain[f_pos, bin_pos])
        if not np.isfinite(best_gain) or best_gain <= MIN_SPLIT_GAIN:
            return None
        return best_gain, int(feats[f_pos]), int(bin_pos)

    def _grow_tree(self, binned: np.ndarray, grad: np.ndarray, residual: np.ndarray, feats: np.ndarray) -> QuantileTree:
        """Leaf-wise growth: always split the leaf with the largest gain, up to max_leaves."""
        tree = QuantileTree()
        root = tree.add_node()
        n_slots = self.params.max_bins + 1
        slots = binned[:, feats] + (np.arange(len(feats)) * n_slots)[None, :]

        all_rows = np.arange(len(binned))
        leaves = {root: all_rows}
        hists = {root: self._histogram(slots, grad, all_rows)}
        candidates = {root: self._best_split(*hists[root], feats)}

        while len(leaves) < self.params.max_leaves:
            splittable = {node: c for node, c in candidates.items() if c is not None}
            if not splittable:
                break
            node = max(splittable, key=lambda k: (splittable[k][0], -k))
            gain, feature, split_bin = splittable[node]
            idx = leaves.pop(node)
            parent_g, parent_n = hists.pop(node)
            candidates.pop(node)

            go_left = binned[idx, feature] <= split_bin
            left_id, right_id = tree.add_node(), tree.add_node()
            tree.feature[node] = feature
            tree.split_bin[node] = split_bin
            edges = self.bin_edges[feature]
            tree.threshold[node] = float(edges[split_bin]) if split_bin < len(edges) else float("inf")
            tree.left[node], tree.right[node] = left_id, right_id
            self.importance[self.feature_names[feature]] += gain

            left_rows, right_rows = idx[go_left], idx[~go_left]
            # histogram the smaller child; the larger one is the parent minus it
            if len(left_rows) <= len(right_rows):
                small_id, small_rows, large_id, large_rows = left_id, left_rows, right_id, right_rows
            else:
                small_id, small_rows, large_id, large_rows = right_id, right_rows, left_id, left_rows
            small_g, small_n = self._histogram(slots, grad, small_rows)
            hists[small_id] = (small_g, small_n)
            hists[large_id] = (parent_g - small_g, parent_n - small_n)
            for child, rows in ((small_id, small_rows), (large_id, large_rows)):
                leaves[child] = rows
                candidates[child] = self._best_split(*hists[child], feats)

        for node, idx in leaves.items():
            tree.value[node] = float(np.quantile(residual[idx], self.quantile)) if len(idx) else 0.0
        return tree

    # ---------- inference ----------
    def predict_matrix(self, matrix: np.ndarray) -> np.ndarray:
        pred = np.full(len(matrix), self.base_score)
        for tree in self.trees:
            pred += self.params.learning_rate * tree.predict(matrix)
        return pred

    def predict(self, frame: pd.DataFrame) -> np.ndarray:
        return self.predict_matrix(self._matrix(frame))

    def loss(self, frame: pd.DataFrame, y) -> float:
        return pinball_loss(y, self.predict(frame), self.quantile)

    # ---------- persistence ----------
    def to_dict(self) -> Dict[str, object]:
        return {
            "format_version": FORMAT_VERSION,
            "quantile": self.quantile,
            "params": asdict(self.params),
            "seed": self.seed,
            "categorical": self.categorical,
            "feature_names": self.feature_names,
            "schema_hash": self.schema_hash,
            "bin_edges": [e.tolist() for e in self.bin_edges],
            "encodings": self.encodings,
            "encoding_default": self.encoding_default,
            "base_score": self.base_score,
            "best_iteration": self.best_iteration,
            "importance": self.importance,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "QuantileBoostingEnsemble":
        if data.get("format_version") != FORMAT_VERSION:
            raise DataValidationError(f"Unsupported model format version {data.get('format_version')}")
        model = cls(float(data["quantile"]), BoostingParams(**data["params"]),
                    categorical=data["categorical"], seed=int(data["seed"]))
        model.feature_names = list(data["feature_names"])
        if schema_hash(model.feature_names) != data["schema_hash"]:
            raise DataValidationError("Model schema hash does not match its feature list")
        model.bin_edges = [np.asarray(e, dtype=float) for e in data["bin_edges"]]
        model.encodings = {k: dict(v) for k, v in data["encodings"].items()}
        model.encoding_default = dict(data["encoding_default"])
        model.base_score = float(data["base_score"])
        model.best_iteration = data.get("best_iteration")
        model.importance = dict(data["importance"])
        model.trees = [QuantileTree.from_dict(t) for t in data["trees"]]
        return model


def pilot_importance(frame: pd.DataFrame, y, feature_names: Sequence[str], categorical: Sequence[str] = (),
                     params: BoostingParams = BoostingParams(n_rounds=100), seed: int = 0) -> Dict[str, float]:
    """Total split gain per feature of a median pilot ensemble."""
    model = QuantileBoostingEnsemble(0.5, params, categorical=categorical, seed=seed)
    model.fit(frame, y, feature_names)
    return dict(model.importance)
