# src/processors/learning/clustering.py
"""
Transformer clustering under four pre-processing pipelines.

ridge_*  : per-transformer ridge weights of k* on the load/weather/calendar features
scaled_* : per-transformer feature means plus metadata, z-scored across the fleet
*_pca    : projection onto the leading components explaining the configured variance

The cluster count is chosen by the mean of min-max normalised silhouette and
spherical-Gaussian BIC scores; the pipeline by holdout coverage.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import linalg
from sklearn.cluster import KMeans
from sklearn.decomposition import PCA
from sklearn.metrics import silhouette_score
from sklearn.preprocessing import StandardScaler

from src.processors.learning.features import FEATURE_COLUMNS, LAG_K_COLUMNS, META_COLUMNS
from src.utils import Log, measure_time
from src.utils.exceptions import DataValidationError, ParameterError


class Pipeline(str, Enum):
    RIDGE_RAW = "ridge_raw"
    RIDGE_PCA = "ridge_pca"
    SCALED_RAW = "scaled_raw"
    SCALED_PCA = "scaled_pca"


PIPELINE_ORDER = [p.value for p in Pipeline]
RIDGE_FEATURES = [c for c in FEATURE_COLUMNS if c not in LAG_K_COLUMNS and c not in META_COLUMNS]
SCALED_FEATURES = [c for c in FEATURE_COLUMNS if c != "transformer_id"]
ASSIGNMENT_COLUMNS = ["transformer_id", "cluster_id", "pipeline", "n_clusters"]


@dataclass
class ClusterAssignment:
    pipeline: str
    assignments: Dict[str, int]
    n_clusters: int
    centroids: np.ndarray
    scores: Optional[pd.DataFrame] = field(default=None, repr=False)

    def __post_init__(self):
        if self.assignments and not (1 <= self.n_clusters <= len(self.assignments)):
            raise DataValidationError(f"{self.pipeline}: {self.n_clusters} clusters for {len(self.assignments)} transformers")

    def members(self, cluster_id: int) -> List[str]:
        return sorted(t for t, c in self.assignments.items() if c == cluster_id)

    def to_frame(self) -> pd.DataFrame:
        rows = [{"transformer_id": t, "cluster_id": c, "pipeline": self.pipeline, "n_clusters": self.n_clusters}
                for t, c in sorted(self.assignments.items())]
        return pd.DataFrame(rows, columns=ASSIGNMENT_COLUMNS)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "ClusterAssignment":
        if frame.empty:
            raise DataValidationError("Empty cluster assignment table")
        pipelines = frame["pipeline"].unique()
        if len(pipelines) != 1:
            raise DataValidationError(f"Assignment table mixes pipelines: {list(pipelines)}")
        assignments = dict(zip(frame["transformer_id"].astype(str), frame["cluster_id"].astype(int)))
        return cls(str(pipelines[0]), assignments, int(frame["n_clusters"].iloc[0]), np.empty((0, 0)))


# ==========================================
# Building blocks
# ==========================================
def ridge_solve(X: np.ndarray, y: np.ndarray, lam: float, center: bool = True) -> np.ndarray:
    """Closed-form ridge weights (XᵀX + λI)⁻¹Xᵀy; the intercept is left unpenalised via centering."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if lam < 0:
        raise ParameterError("Ridge lambda must be non-negative")
    if center:
        X = X - X.mean(axis=0)
        y = y - y.mean()
    gram = X.T @ X + lam * np.eye(X.shape[1])
    if lam == 0 and np.linalg.matrix_rank(gram) < X.shape[1]:
        raise ParameterError("Singular ridge system with lambda = 0")
    try:
        return linalg.solve(gram, X.T @ y, assume_a="pos")
    except linalg.LinAlgError as e:
        raise ParameterError(f"Singular ridge system: {e}") from e


def per_transformer_ridge_weights(table: pd.DataFrame, feature_columns: Sequence[str] = tuple(RIDGE_FEATURES),
                                  target: str = "k_opt", lam: float = 1.0) -> pd.DataFrame:
    """One ridge weight vector per transformer on fleet-standardised features."""
    columns = list(feature_columns)
    scaled = StandardScaler().fit_transform(table[columns].to_numpy(dtype=float))
    y = table[target].to_numpy(dtype=float)
    ids = table["transformer_id"].to_numpy()

    weights = {}
    for tid in sorted(pd.unique(ids)):
        mask = ids == tid
        if mask.sum() < 2 * len(columns):
            raise DataValidationError(
                f"{tid}: ridge needs at least {2 * len(columns)} rows for {len(columns)} features, got {mask.sum()}"
            )
        weights[tid] = ridge_solve(scaled[mask], y[mask], lam)
    return pd.DataFrame.from_dict(weights, orient="index", columns=columns)


def zscore_normalise(matrix) -> np.ndarray:
    """Column-wise (x − mean)/std with the population std; constant columns map to 0."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] < 2:
        raise ParameterError("z-scoring needs a 2-D matrix with at least two rows")
    return StandardScaler().fit_transform(matrix)


def pca_project(matrix, variance_threshold: float = 0.90) -> Tuple[np.ndarray, int]:
    """Coordinates on the fewest leading components whose cumulative explained variance reaches the threshold."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.shape[0] < 2:
        raise ParameterError("PCA needs at least two rows")
    if not (0 < variance_threshold <= 1):
        raise ParameterError("variance_threshold must lie in (0, 1]")
    centered = matrix - matrix.mean(axis=0)
    if not np.any(centered):
        return np.zeros((matrix.shape[0], 1)), 1

    pca = PCA(svd_solver="full").fit(matrix)
    cumulative = np.cumsum(pca.explained_variance_ratio_)
    n_components = int(np.searchsorted(cumulative, variance_threshold - 1e-12, side="left")) + 1
    n_components = min(n_components, len(cumulative))
    return pca.transform(matrix)[:, :n_components], n_components


@dataclass(frozen=True)
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float


def kmeans(points, k: int, seed: int, n_init: int = 10, max_iter: int = 300) -> KMeansResult:
    """Lloyd's algorithm, best inertia over `n_init` k-means++ restarts."""
    points = np.asarray(points, dtype=float)
    if k < 1 or k > len(points):
        raise ParameterError(f"k = {k} outside [1, {len(points)}]")
    model = KMeans(n_clusters=k, n_init=n_init, max_iter=max_iter, random_state=seed, algorithm="lloyd")
    labels = model.fit_predict(points)
    return KMeansResult(labels=labels, centroids=model.cluster_centers_, inertia=float(model.inertia_))


def lloyd_inertia_trace(points, k: int, seed: int, n_iter: int = 20) -> List[float]:
    """Inertia after each single Lloyd step from one k-means++ start."""
    points = np.asarray(points, dtype=float)
    model = KMeans(n_clusters=k, n_init=1, max_iter=1, random_state=seed, algorithm="lloyd").fit(points)
    trace = [float(model.inertia_)]
    for _ in range(n_iter - 1):
        model = KMeans(n_clusters=k, init=model.cluster_centers_, n_init=1, max_iter=1, algorithm="lloyd").fit(points)
        trace.append(float(model.inertia_))
    return trace


def spherical_bic(points: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> float:
    """BIC of a spherical Gaussian mixture with shared variance placed at the k-means solution (larger is better)."""
    n, d = points.shape
    k = len(centroids)
    sq = ((points - centroids[labels]) ** 2).sum()
    variance = sq / (d * max(n - k, 1))
    variance = max(variance, 1e-12)
    counts = np.bincount(labels, minlength=k).astype(float)
    counts = counts[counts > 0]
    loglik = float(np.sum(
        counts * np.log(counts) - counts * np.log(n)
        - counts * d / 2.0 * np.log(2 * np.pi * variance)
        - d * (counts - 1) / 2.0
    ))
    n_params = (k - 1) + k * d + 1
    return loglik - n_params / 2.0 * np.log(n)


def _minmax(values: np.ndarray) -> np.ndarray:
    spread = np.ptp(values)
    return np.zeros_like(values) if spread == 0 else (values - values.min()) / spread


def select_n_clusters(points, k_range: Tuple[int, int], seed: int, n_init: int = 10,
                      max_iter: int = 300) -> Tuple[int, pd.DataFrame]:
    """Cluster count maximising the mean of normalised silhouette and BIC; ties go to the smaller k."""
    points = np.asarray(points, dtype=float)
    lo, hi = max(2, k_range[0]), min(k_range[1], len(points) - 1)
    if lo > hi:
        raise ParameterError(f"Empty cluster range {k_range} for {len(points)} points")
    ks = list(range(lo, hi + 1))
    if len(np.unique(points, axis=0)) < 2:
        return lo, pd.DataFrame({"k": ks, "silhouette": 0.0, "bic": 0.0, "combined": 0.0})

    sil, bic = [], []
    for k in ks:
        result = kmeans(points, k, seed, n_init, max_iter)
        n_labels = len(np.unique(result.labels))
        sil.append(silhouette_score(points, result.labels) if 1 < n_labels < len(points) else 0.0)
        bic.append(spherical_bic(points, result.labels, result.centroids))
    sil, bic = np.asarray(sil), np.asarray(bic)
    combined = (_minmax(sil) + _minmax(bic)) / 2.0
    best = int(np.flatnonzero(combined >= combined.max() - 1e-12)[0])
    scores = pd.DataFrame({"k": ks, "silhouette": sil, "bic": bic, "combined": combined})
    return ks[best], scores


# ==========================================
# Pipelines
# ==========================================
def pipeline_inputs(table: pd.DataFrame, pipeline: str, ridge_lambda: float = 1.0,
                    pca_variance: float = 0.90) -> Tuple[List[str], np.ndarray]:
    """Per-transformer clustering coordinates for one pipeline, rows ordered by transformer id."""
    if pipeline not in PIPELINE_ORDER:
        raise ParameterError(f"Unknown clustering pipeline '{pipeline}'")
    if pipeline.startswith("ridge"):
        frame = per_transformer_ridge_weights(table, RIDGE_FEATURES, lam=ridge_lambda)
        matrix = frame.to_numpy(dtype=float)
    else:
        frame = table.groupby("transformer_id")[SCALED_FEATURES].mean().sort_index()
        matrix = zscore_normalise(frame.to_numpy(dtype=float)) if len(frame) >= 2 else frame.to_numpy(dtype=float)
    ids = [str(t) for t in frame.index]
    if pipeline.endswith("pca") and len(ids) >= 2:
        matrix, n_components = pca_project(zscore_normalise(matrix), pca_variance)
        Log.trace(f"{pipeline}: {n_components} principal component(s)")
    return ids, matrix


def _canonical_labels(ids: Sequence[str], labels: np.ndarray) -> np.ndarray:
    """Renumber clusters in order of their first member id."""
    mapping: Dict[int, int] = {}
    for label in labels[np.argsort(np.asarray(ids, dtype=object))]:
        mapping.setdefault(int(label), len(mapping))
    return np.array([mapping[int(label)] for label in labels])


@measure_time
def cluster_fleet(table: pd.DataFrame, pipeline: str, k_range: Tuple[int, int], seed: int,
                  ridge_lambda: float = 1.0, pca_variance: float = 0.90, n_init: int = 10,
                  max_iter: int = 300) -> ClusterAssignment:
    ids, points = pipeline_inputs(table, pipeline, ridge_lambda, pca_variance)
    if len(ids) < 3:
        Log.warning(f"{pipeline}: {len(ids)} transformer(s), using a single cluster")
        return ClusterAssignment(pipeline, {t: 0 for t in ids}, 1, points.mean(axis=0, keepdims=True))

    n_clusters, scores = select_n_clusters(points, k_range, seed, n_init, max_iter)
    result = kmeans(points, n_clusters, seed, n_init, max_iter)
    labels = _canonical_labels(ids, result.labels)
    centroids = np.vstack([points[labels == c].mean(axis=0) for c in range(n_clusters)])
    sizes = np.bincount(labels, minlength=n_clusters).tolist()
    Log.info(f"{pipeline}: {n_clusters} clusters, sizes {sizes}")
    return ClusterAssignment(pipeline, dict(zip(ids, labels.tolist())), n_clusters, centroids, scores)


def choose_pipeline(candidates: Mapping[str, ClusterAssignment],
                    holdout_eval: Callable[[ClusterAssignment], float],
                    nominal: float = 90.0) -> Tuple[ClusterAssignment, pd.DataFrame]:
    """
    Pipeline whose holdout fleet-mean coverage is closest to `nominal`;
    exact ties resolve in the fixed pipeline order.
    """
    if not candidates:
        raise ParameterError("No clustering candidates supplied")
    ordered = sorted(candidates, key=lambda p: PIPELINE_ORDER.index(p) if p in PIPELINE_ORDER else len(PIPELINE_ORDER))
    rows = []
    for name in ordered:
        coverage = float(holdout_eval(candidates[name]))
        rows.append({"pipeline": name, "n_clusters": candidates[name].n_clusters, "coverage": coverage,
                     "distance": abs(coverage - nominal)})
    scores = pd.DataFrame(rows)
    best = scores.iloc[int(np.argmin(scores["distance"].to_numpy()))]["pipeline"]
    Log.info(f"Selected clustering pipeline '{best}' (coverage {scores.set_index('pipeline').loc[best, 'coverage']:.1f}%)")
    return candidates[best], scores
