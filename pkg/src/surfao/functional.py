"""Functional outlyingness of surfaces, images and frames.

Data layout: a dataset is an array of shape ``(n, J, K, p)`` (``(n, J, K)``
is read as ``p = 1``).  ``j`` indexes rows and ``k`` columns.  AO fields are
``(n, J, K)`` arrays.
"""

import contextlib
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from . import _kernels
from .exceptions import InsufficientDataError, InvalidInputError
from .projection import DirectionConfig, _directions, _score, _subset_table
from .robust import MAD_CONSISTENCY

LCFO_OFFSET = 0.1


@dataclass(frozen=True)
class AnalysisConfig:
    directions: DirectionConfig = field(default_factory=DirectionConfig)
    ao_clamp: float = 1e6
    cutoff_quantile: float = 0.995
    display_cap: float | None = None

    def __post_init__(self):
        if not self.ao_clamp > 0:
            raise InvalidInputError("ao_clamp must be positive")
        if not 0.5 < self.cutoff_quantile < 1:
            raise InvalidInputError("cutoff_quantile must lie in (0.5, 1)")
        if self.display_cap is not None and not self.display_cap > 0:
            raise InvalidInputError("display_cap must be positive")


def as_dataset_array(values, allow_missing=False, min_n=4):
    """Validate and normalise a dataset to a float64 ``(n, J, K, p)`` array."""
    x = np.asarray(values, dtype=np.float64)
    if x.ndim == 3:
        x = x[..., None]
    if x.ndim != 4:
        raise InvalidInputError(f"expected an (n, J, K[, p]) array, got shape {x.shape}")
    if min(x.shape[1:]) < 1:
        raise InvalidInputError(f"empty grid in shape {x.shape}")
    if x.shape[0] < min_n:
        raise InsufficientDataError(f"need at least {min_n} observations, got {x.shape[0]}")
    if not allow_missing:
        if np.isnan(x).any():
            raise InvalidInputError("dataset has missing cells; impute them first")
        if not np.all(np.isfinite(x)):
            raise InvalidInputError("dataset contains infinite values")
    return x


def uniform_weights(shape):
    j, k = shape
    return np.full((j, k), 1.0 / (j * k))


def check_weights(weights, shape):
    if weights is None:
        return None
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != tuple(shape):
        raise InvalidInputError(f"weights have shape {w.shape}, grid is {tuple(shape)}")
    if not np.all(np.isfinite(w)) or (w < 0).any():
        raise InvalidInputError("weights must be finite and nonnegative")
    if abs(w.sum() - 1.0) > 1e-12:
        raise InvalidInputError(f"weights must sum to 1, got {w.sum()!r}")
    return w


@contextlib.contextmanager
def numba_threads(n_jobs):
    """Temporarily limit the numba thread pool; ``None`` leaves it alone."""
    if n_jobs is None:
        yield
        return
    import numba

    old = numba.get_num_threads()
    n = numba.config.NUMBA_NUM_THREADS if n_jobs == -1 else max(1, min(int(n_jobs), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    try:
        yield
    finally:
        numba.set_num_threads(old)


def _grid_scores(reference, queries, config, n_jobs, self_scoring=False):
    """AO of ``queries`` (m, J, K, p) against the reference clouds (n, J, K, p)."""
    n, J, K, p = reference.shape
    m = queries.shape[0]
    clouds = np.ascontiguousarray(reference.transpose(1, 2, 0, 3).reshape(J * K, n, p))
    qs = np.ascontiguousarray(queries.transpose(1, 2, 0, 3).reshape(J * K, m, p))
    out = np.empty((J * K, m))
    dcfg = config.directions
    with numba_threads(n_jobs):
        if p == 1:
            _kernels._grid_univariate_ao(
                np.ascontiguousarray(clouds[..., 0]), np.ascontiguousarray(qs[..., 0]), out
            )
        else:
            if n <= p:
                raise InsufficientDataError(f"need more observations than channels, got n={n}, p={p}")
            subsets = _subset_table(int(dcfg.seed), n, p, dcfg.resolve(p))
            failed = np.zeros(J * K, dtype=np.bool_)
            _kernels._grid_ao(clouds, qs, self_scoring, subsets, out, failed)
            for g in np.flatnonzero(failed):
                dirs, members = _directions(clouds[g], dcfg, location=divmod(int(g), K))
                out[g] = _score(qs[g], clouds[g], dirs, members, self_scoring)
    np.minimum(out, config.ao_clamp, out=out)
    return out.T.reshape(m, J, K)


def ao_fields(values, config=None, n_jobs=None):
    """AO of every observation at every grid point, relative to the dataset.

    Returns an ``(n, J, K)`` array.  Infinite AO values are replaced by
    ``config.ao_clamp``.
    """
    config = config or AnalysisConfig()
    x = as_dataset_array(values)
    return _grid_scores(x, x, config, n_jobs, self_scoring=True)


def score_fields(queries, reference, config=None, n_jobs=None):
    """AO fields of new observations relative to a reference dataset."""
    config = config or AnalysisConfig()
    ref = as_dataset_array(reference)
    q = as_dataset_array(queries, min_n=1)
    if q.shape[1:] != ref.shape[1:]:
        raise InvalidInputError(f"query shape {q.shape[1:]} does not match reference {ref.shape[1:]}")
    return _grid_scores(ref, q, config, n_jobs)


def fao(fields, weights=None):
    """Weighted average of AO fields over the grid; uniform weights by default.

    Accepts one ``(J, K)`` field or a stack ``(n, J, K)``.
    """
    f = np.asarray(fields, dtype=np.float64)
    if f.ndim < 2:
        raise InvalidInputError("AO field must be at least 2-d")
    w = check_weights(weights, f.shape[-2:])
    if w is None:
        return f.mean(axis=(-2, -1))
    return np.tensordot(f, w, axes=([-2, -1], [0, 1]))


def vao(fields, fao_values):
    """Population standard deviation of the AO field over the grid, divided by ``1 + fAO``."""
    f = np.asarray(fields, dtype=np.float64)
    a = np.asarray(fao_values, dtype=np.float64)
    if (a < 0).any():
        raise InvalidInputError("fAO must be nonnegative")
    return f.std(axis=(-2, -1)) / (1.0 + a)


def normal_quantile(q):
    return NormalDist().inv_cdf(q)


def _median_scaled(x):
    m = float(np.median(x))
    if m > 0:
        return x / m, m
    # all-but-half zero: fall back to the mean as the scale
    mean = float(np.mean(x))
    if mean > 0:
        return x / mean, mean
    return np.zeros_like(x), 0.0


@dataclass(frozen=True)
class CutoffCurve:
    """Boundary ``CFO = cfo_star`` drawn in the (fAO, vAO) plane.

    The curve is the quarter ellipse ``(fao / fao_scale)^2 + (vao /
    vao_scale)^2 = cfo_star^2``.  ``cfo_star`` is infinite when nothing can
    be flagged.
    """

    fao_scale: float
    vao_scale: float
    cfo_star: float
    lcfo_center: float
    lcfo_scale: float
    threshold: float

    def polyline(self, num=181):
        if not np.isfinite(self.cfo_star):
            return np.empty(0), np.empty(0)
        t = np.linspace(0.0, np.pi / 2, num)
        return self.fao_scale * self.cfo_star * np.cos(t), self.vao_scale * self.cfo_star * np.sin(t)


@dataclass(frozen=True)
class FomRecord:
    id: str
    fao: float
    vao: float
    cfo: float
    lcfo: float
    zscore: float
    flagged: bool


@dataclass
class FomResult:
    ids: list
    fao: np.ndarray
    vao: np.ndarray
    cfo: np.ndarray
    lcfo: np.ndarray
    zscore: np.ndarray
    flagged: np.ndarray
    cutoff: CutoffCurve

    def records(self):
        return [
            FomRecord(str(i), float(a), float(v), float(c), float(l), float(z), bool(f))
            for i, a, v, c, l, z, f in zip(
                self.ids, self.fao, self.vao, self.cfo, self.lcfo, self.zscore, self.flagged
            )
        ]

    @property
    def flagged_ids(self):
        return [i for i, f in zip(self.ids, self.flagged) if f]

    def __len__(self):
        return len(self.ids)


def _lcfo_scale(lcfo, center):
    dev = np.abs(lcfo - center)
    scale = MAD_CONSISTENCY * float(np.median(dev))
    if scale > 0:
        return scale
    return MAD_CONSISTENCY * float(np.mean(dev))


def fom_from_scores(fao_values, vao_values, quantile=0.995, ids=None):
    """Combine per-observation fAO and vAO into CFO, z-scores and flags."""
    a = np.asarray(fao_values, dtype=np.float64).ravel()
    v = np.asarray(vao_values, dtype=np.float64).ravel()
    if a.shape != v.shape or a.size == 0:
        raise InvalidInputError("fAO and vAO must be non-empty and of equal length")
    if not 0.5 < quantile < 1:
        raise InvalidInputError("quantile must lie in (0.5, 1)")
    if ids is None:
        ids = [str(i + 1) for i in range(a.size)]
    ids = [str(i) for i in ids]
    if len(ids) != a.size:
        raise InvalidInputError("one id per observation is required")

    ra, fao_scale = _median_scaled(a)
    rv, vao_scale = _median_scaled(v)
    cfo = np.sqrt(ra**2 + rv**2)
    lcfo = np.log(LCFO_OFFSET + cfo)
    center = float(np.median(lcfo))
    scale = _lcfo_scale(lcfo, center)
    threshold = normal_quantile(quantile)
    if scale > 0:
        zscore = (lcfo - center) / scale
        flagged = zscore > threshold
        cfo_star = float(np.exp(center + threshold * scale) - LCFO_OFFSET)
    else:
        zscore = np.zeros_like(lcfo)
        flagged = np.zeros(lcfo.shape, dtype=bool)
        cfo_star = float("inf")
    curve = CutoffCurve(fao_scale, vao_scale, cfo_star, center, scale, threshold)
    return FomResult(ids, a, v, cfo, lcfo, zscore, flagged, curve)


def fom_from_fields(fields, weights=None, quantile=0.995, ids=None):
    f = np.asarray(fields, dtype=np.float64)
    a = fao(f, weights)
    return fom_from_scores(a, vao(f, a), quantile, ids)


def fom(values, config=None, weights=None, ids=None, n_jobs=None):
    """AO fields, fAO, vAO and the cutoff rule for a dataset.

    Returns ``(FomResult, fields)``.
    """
    config = config or AnalysisConfig()
    fields = ao_fields(values, config, n_jobs=n_jobs)
    return fom_from_fields(fields, weights, config.cutoff_quantile, ids), fields


def heatmap_export(field, cap=None):
    """Display copy of an AO field, capped at ``cap`` when given."""
    f = np.array(field, dtype=np.float64)
    if cap is None:
        return f
    if not cap > 0:
        raise InvalidInputError("cap must be positive")
    return np.minimum(f, cap)
