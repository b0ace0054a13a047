"""scikit-learn compatible wrappers.

``X`` is always a stack of grid functions, shape ``(n, J, K)`` or
``(n, J, K, p)``.
"""

import numpy as np
from sklearn.base import BaseEstimator, OutlierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .functional import (
    LCFO_OFFSET,
    AnalysisConfig,
    ao_fields,
    as_dataset_array,
    check_weights,
    fao,
    fom_from_fields,
    score_fields,
    vao,
)
from .preprocess import gradient_augment, impute_dataset
from .projection import DirectionConfig
from .trilinear import fit_trilinear, project_scores, residuals


class FunctionalOutlierDetector(OutlierMixin, BaseEstimator):
    """Flag outlying surfaces, images or frames from their AO fields.

    Parameters
    ----------
    n_directions : int or None
        Projection directions per grid point; ``None`` uses ``250 * p``.
    random_state : int
        Seed of the direction generator.
    quantile : float
        Normal quantile of the cutoff on the robust z-score of log CFO.
    ao_clamp : float
        Ceiling applied to infinite AO values before aggregation.
    weights : array of shape (J, K) or None
        Grid weights summing to one; uniform when ``None``.
    axis_fallback : bool
        Use coordinate axes for directions that stay degenerate.
    n_jobs : int or None
        Threads for the per-pixel scoring; results do not depend on it.

    Attributes
    ----------
    ao_fields_ : ndarray of shape (n, J, K)
    result_ : FomResult
        fAO, vAO, CFO, z-scores and flags of the training observations.
    labels_ : ndarray of shape (n,)
        -1 for flagged observations, 1 otherwise.
    """

    def __init__(self, n_directions=None, random_state=42, quantile=0.995, ao_clamp=1e6,
                 weights=None, axis_fallback=False, n_jobs=None):
        self.n_directions = n_directions
        self.random_state = random_state
        self.quantile = quantile
        self.ao_clamp = ao_clamp
        self.weights = weights
        self.axis_fallback = axis_fallback
        self.n_jobs = n_jobs

    def _config(self):
        directions = DirectionConfig(self.n_directions, int(self.random_state), axis_fallback=self.axis_fallback)
        return AnalysisConfig(directions, float(self.ao_clamp), float(self.quantile))

    def fit(self, X, y=None, ids=None):
        config = self._config()
        X = as_dataset_array(X)
        check_weights(self.weights, X.shape[1:3])
        self.reference_ = X
        self.ao_fields_ = ao_fields(X, config, n_jobs=self.n_jobs)
        self.result_ = fom_from_fields(self.ao_fields_, self.weights, self.quantile, ids)
        self.labels_ = np.where(self.result_.flagged, -1, 1)
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        return self

    def fit_predict(self, X, y=None, ids=None):
        return self.fit(X, ids=ids).labels_

    def score_fields(self, X):
        """AO fields of new observations relative to the training sample."""
        check_is_fitted(self, "result_")
        return score_fields(X, self.reference_, self._config(), n_jobs=self.n_jobs)

    def zscore(self, X):
        """Robust z-score of log CFO, normalised with the training statistics."""
        fields = self.score_fields(X)
        a = fao(fields, self.weights)
        v = vao(fields, a)
        cut = self.result_.cutoff
        ra = a / cut.fao_scale if cut.fao_scale > 0 else np.zeros_like(a)
        rv = v / cut.vao_scale if cut.vao_scale > 0 else np.zeros_like(v)
        lcfo = np.log(LCFO_OFFSET + np.sqrt(ra**2 + rv**2))
        if not cut.lcfo_scale > 0:
            return np.zeros_like(lcfo)
        return (lcfo - cut.lcfo_center) / cut.lcfo_scale

    def decision_function(self, X):
        """Positive for inliers, negative for outliers."""
        check_is_fitted(self, "result_")
        return self.result_.cutoff.threshold - self.zscore(X)

    def score_samples(self, X):
        return -self.zscore(X)

    def predict(self, X):
        return np.where(self.decision_function(X) < 0, -1, 1)


class GradientAugmenter(TransformerMixin, BaseEstimator):
    """Append j- and k-derivative channels to single-channel grids."""

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return gradient_augment(X)


class ProfileImputer(TransformerMixin, BaseEstimator):
    """Linear interpolation of NaN cells along rows (``axis="k"``) or columns."""

    def __init__(self, axis="k"):
        self.axis = axis

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return impute_dataset(X, self.axis)


class TrimmedParafac(TransformerMixin, BaseEstimator):
    """Trimmed trilinear model; ``transform`` returns residual surfaces.

    Attributes
    ----------
    model_ : TrilinearModel
    """

    def __init__(self, n_components=1, h=0.75, random_state=0, n_restarts=5, max_iter=500, tol=1e-8):
        self.n_components = n_components
        self.h = h
        self.random_state = random_state
        self.n_restarts = n_restarts
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y=None):
        self.model_ = fit_trilinear(X, self.n_components, self.h, self.random_state,
                                    self.n_restarts, self.max_iter, self.tol)
        return self

    def fit_transform(self, X, y=None):
        return residuals(X, self.fit(X).model_)

    def transform(self, X):
        check_is_fitted(self, "model_")
        return residuals(X, self.model_, project_scores(X, self.model_))

