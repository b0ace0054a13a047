"""Univariate robust statistics: quartiles, medcouple, adjusted boxplot and AO.

All functions accept any 1-d array-like of finite reals.  Quartiles use
linear interpolation between order statistics at the 1-based position
``(n - 1) q + 1``.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .exceptions import InsufficientDataError, InvalidInputError

MAD_CONSISTENCY = 1.4826


@dataclass(frozen=True)
class FenceWhiskers:
    """Summary of an adjusted boxplot."""

    q1: float
    q3: float
    mc: float
    fence_lo: float
    fence_hi: float
    w1: float
    w2: float
    med: float

    @property
    def iqr(self):
        return self.q3 - self.q1


def _sorted_sample(values, min_n):
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1:
        x = x.ravel()
    if x.shape[0] < min_n:
        raise InsufficientDataError(f"need at least {min_n} values, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("sample contains non-finite values")
    return np.sort(x)


def quartiles(values):
    """First and third quartile of a sample with at least 4 values."""
    xs = _sorted_sample(values, 4)
    return float(_kernels._quantile_sorted(xs, 0.25)), float(_kernels._quantile_sorted(xs, 0.75))


def medcouple(values, method="auto"):
    """Medcouple of a sample, a robust skewness measure in [-1, 1].

    Parameters
    ----------
    values : array_like
        At least 3 finite values.
    method : {"auto", "naive", "fast"}
        ``"naive"`` evaluates every kernel pair; ``"fast"`` uses a selection
        search over the implicitly sorted kernel matrix.  Both return the
        same float.
    """
    xs = _sorted_sample(values, 3)
    if method == "naive":
        return float(_kernels._medcouple_naive_sorted(xs))
    if method == "fast":
        return float(_kernels._medcouple_fast_sorted(xs))
    if method == "auto":
        return float(_kernels._medcouple_sorted(xs))
    raise InvalidInputError(f"unknown medcouple method {method!r}")


def adjusted_fence(values):
    """Adjusted boxplot fence and whiskers of a sample with at least 4 values.

    For ``mc >= 0`` the fence is
    ``[q1 - 1.5 exp(-4 mc) iqr, q3 + 1.5 exp(3 mc) iqr]``; for ``mc < 0`` the
    exponents are mirrored.  The whiskers are the extreme sample values
    inside the fence.
    """
    xs = _sorted_sample(values, 4)
    return FenceWhiskers(*(float(v) for v in _kernels._fence_sorted(xs)))


def univariate_ao(x, values):
    """Adjusted outlyingness of ``x`` relative to ``values``.

    Distance to the median divided by the distance from the median to the
    whisker on the same side.  A zero-width side gives ``inf`` unless ``x``
    sits exactly at the median.
    """
    x = float(x)
    if not np.isfinite(x):
        raise InvalidInputError("x must be finite")
    xs = _sorted_sample(values, 4)
    med, w1, w2 = _kernels._whiskers_sorted(xs)
    return float(_kernels._ao_value(x, med, w1, w2))


def univariate_ao_many(x, values):
    """Vectorised :func:`univariate_ao` for an array of query points."""
    q = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(q)):
        raise InvalidInputError("query points must be finite")
    xs = _sorted_sample(values, 4)
    out = np.empty(q.size)
    _kernels._grid_univariate_ao(xs[None, :], q.reshape(1, -1), out.reshape(1, -1))
    return out.reshape(q.shape)


def mad(values):
    """Median absolute deviation scaled by 1.4826."""
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        raise InsufficientDataError("mad of an empty sample")
    return float(MAD_CONSISTENCY * np.median(np.abs(x - np.median(x))))
