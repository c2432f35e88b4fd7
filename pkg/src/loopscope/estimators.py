"""Scikit-learn style wrappers around the trace analysis primitives.

These make the pipeline composable with the usual fit/transform/predict
vocabulary: a sampler that turns traces into fixed-length series, a
histogram featurizer that learns shared delay clusters, and a nearest
neighbor classifier under warping distance. The experiment drivers in
``classify`` call the same primitives directly where the estimator protocol
would get in the way (per-fold refits inside tuning loops).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.exceptions import NotFittedError

from . import traces as tr
from .dtw import DtwConfig, dtw_cost_matrix


def _as_trace_list(X) -> list:
    if isinstance(X, tr.DelayTrace):
        return [X]
    X = list(X)
    if not X:
        raise ValueError("expected at least one trace")
    for item in X:
        if not isinstance(item, tr.DelayTrace):
            raise TypeError(f"expected DelayTrace inputs, got {type(item).__name__}")
    return X


class TraceSampler(BaseEstimator, TransformerMixin):
    """Transform delay traces into fixed-rate time series rows.

    Parameters mirror :func:`loopscope.traces.sample`; ``duration_ms`` is
    required so every row has the same width.
    """

    def __init__(
        self,
        p_ms: float = 20.0,
        reducer: str = "sum",
        duration_ms: float = 2000.0,
        znormalize: bool = False,
    ):
        self.p_ms = p_ms
        self.reducer = reducer
        self.duration_ms = duration_ms
        self.znormalize = znormalize

    def fit(self, X, y=None):
        _as_trace_list(X)
        return self

    def transform(self, X) -> np.ndarray:
        rows = []
        for trace in _as_trace_list(X):
            series = tr.sample(trace, self.p_ms, self.reducer, self.duration_ms)
            if self.znormalize:
                series = series.znormalized()
            rows.append(series.values)
        return np.vstack(rows)


class DelayHistogramFeaturizer(BaseEstimator, TransformerMixin):
    """Count-vector features over delay clusters learned from training traces.

    ``fit`` pools the delays of all training traces and runs seeded k-means
    on the pooled values; ``transform`` counts how many of each trace's
    delays fall nearest to each learned center. Distances between the
    resulting count vectors are meaningful because every trace is binned
    against the same centers.
    """

    def __init__(
        self,
        n_centers: int = 8,
        seed: int = 0,
        normalize: bool = False,
        sample_cap: int | None = 100_000,
    ):
        self.n_centers = n_centers
        self.seed = seed
        self.normalize = normalize
        self.sample_cap = sample_cap

    def fit(self, X, y=None):
        pooled = np.concatenate([tr.delays(t) for t in _as_trace_list(X)])
        centers, _, _ = tr.kmeans1d(
            pooled, self.n_centers, seed=self.seed, sample_cap=self.sample_cap
        )
        self.centers_ = centers
        return self

    def transform(self, X) -> np.ndarray:
        if not hasattr(self, "centers_"):
            raise NotFittedError("DelayHistogramFeaturizer must be fitted before transform")
        boundaries = (self.centers_[1:] + self.centers_[:-1]) / 2.0
        rows = []
        for trace in _as_trace_list(X):
            assignment = np.searchsorted(boundaries, tr.delays(trace))
            counts = np.bincount(assignment, minlength=self.n_centers).astype(np.float64)
            if self.normalize:
                total = counts.sum()
                if total > 0:
                    counts /= total
            rows.append(counts)
        return np.vstack(rows)


class DtwKnnClassifier(BaseEstimator, ClassifierMixin):
    """Nearest neighbor classification under dynamic time warping.

    Inputs are 2-d arrays of equal-length series (one per row), as produced
    by :class:`TraceSampler`. Ties in cost are broken toward the
    lexicographically smaller label so predictions are deterministic.
    """

    def __init__(
        self,
        n_neighbors: int = 1,
        step_pattern: str = "symmetric1",
        window_type: str | None = "sakoechiba",
        window_size: int | None = 100,
        point_distance: str = "l1",
    ):
        self.n_neighbors = n_neighbors
        self.step_pattern = step_pattern
        self.window_type = window_type
        self.window_size = window_size
        self.point_distance = point_distance

    def _config(self) -> DtwConfig:
        return DtwConfig(
            step_pattern=self.step_pattern,
            window_type=self.window_type,
            window_size=self.window_size,
            point_distance=self.point_distance,
        ).validate()

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y)
        if X.ndim != 2:
            raise ValueError("X must be 2-d: one series per row")
        if y.shape[0] != X.shape[0]:
            raise ValueError(
                f"X has {X.shape[0]} rows but y has {y.shape[0]} labels"
            )
        self._config()
        self.X_ = X
        self.y_ = y
        self.classes_ = np.unique(y)
        return self

    def _check_fitted(self):
        if not hasattr(self, "X_"):
            raise NotFittedError("DtwKnnClassifier must be fitted before use")

    def kneighbors(self, X, n_neighbors: int | None = None):
        """Costs and training indices of the closest training series, ordered
        by (cost, label, index)."""
        self._check_fitted()
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError("X must be 2-d: one series per row")
        if X.shape[1] != self.X_.shape[1]:
            raise ValueError(
                f"dimension mismatch: query series have {X.shape[1]} points, "
                f"training series have {self.X_.shape[1]}"
            )
        k = n_neighbors or self.n_neighbors
        k = min(k, self.X_.shape[0])
        costs = dtw_cost_matrix(X, self.X_, self._config())
        all_costs = np.empty((X.shape[0], k), dtype=np.float64)
        all_idx = np.empty((X.shape[0], k), dtype=np.int64)
        for r in range(X.shape[0]):
            order = sorted(
                range(self.X_.shape[0]),
                key=lambda c: (costs[r, c], str(self.y_[c]), c),
            )[:k]
            all_idx[r] = order
            all_costs[r] = costs[r, order]
        return all_costs, all_idx

    def predict(self, X):
        _, idx = self.kneighbors(X, n_neighbors=1)
        return self.y_[idx[:, 0]]
