"""Multivariate adjusted outlyingness by projection pursuit.

Directions are normals of hyperplanes through ``p`` data points drawn at
random, which makes the resulting AO affine invariant.  The draws come from
a counter-based generator keyed by ``(seed, direction index, attempt)``, so
the index subsets depend only on ``(seed, n, p)`` and never on evaluation
order or thread count.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels
from .exceptions import DegenerateDataError, InsufficientDataError, InvalidInputError

DIRECTIONS_PER_DIMENSION = 250


@dataclass(frozen=True)
class DirectionConfig:
    """How projection directions are drawn.

    ``num_directions=None`` means ``250 * p``.  ``axis_fallback`` replaces a
    direction that stays degenerate after ``max_retries`` redraws by a
    coordinate axis instead of raising.
    """

    num_directions: int | None = None
    seed: int = 42
    max_retries: int = 100
    axis_fallback: bool = False

    def __post_init__(self):
        if self.num_directions is not None and self.num_directions < 1:
            raise InvalidInputError("num_directions must be >= 1")
        if self.max_retries < 1:
            raise InvalidInputError("max_retries must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidInputError("seed must fit in an unsigned 64-bit integer")

    def resolve(self, p):
        return DIRECTIONS_PER_DIMENSION * p if self.num_directions is None else int(self.num_directions)


def _draw_subset(seed, n, p, index, attempt):
    bitgen = np.random.Philox(key=int(seed), counter=[0, index, attempt, 0])
    return np.random.Generator(bitgen).choice(n, size=p, replace=False)


@lru_cache(maxsize=64)
def _subset_table(seed, n, p, num, attempt=0):
    table = np.empty((num, p), dtype=np.int64)
    for d in range(num):
        table[d] = _draw_subset(seed, n, p, d, attempt)
    table.flags.writeable = False
    return table


def subset_indices(n, p, config=None):
    """Row-index subsets behind the first-attempt directions, shape (D, p)."""
    config = config or DirectionConfig()
    return np.array(_subset_table(int(config.seed), int(n), int(p), config.resolve(p)))


def _check_cloud(cloud):
    y = np.asarray(cloud, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if y.ndim != 2:
        raise InvalidInputError(f"point cloud must be 2-d, got shape {y.shape}")
    n, p = y.shape
    if p < 1:
        raise InvalidInputError("point cloud needs at least one column")
    if n <= p:
        raise InsufficientDataError(f"need more points than dimensions, got n={n}, p={p}")
    if not np.all(np.isfinite(y)):
        raise InvalidInputError("point cloud contains non-finite values")
    return np.ascontiguousarray(y)


def _repair_directions(cloud, dirs, members, ok, config, location=None):
    n, p = cloud.shape
    pts = np.empty((p, p))
    v = np.empty(p)
    for d in np.flatnonzero(~ok):
        for attempt in range(1, config.max_retries + 1):
            sub = _draw_subset(config.seed, n, p, int(d), attempt)
            pts[:] = cloud[sub]
            if _kernels._hyperplane_normal(pts, v):
                dirs[d] = v
                members[d] = sub
                break
        else:
            if not config.axis_fallback:
                raise DegenerateDataError(
                    f"direction {d}: no non-degenerate subset after {config.max_retries} draws",
                    location=location,
                )
            dirs[d] = 0.0
            dirs[d, d % p] = 1.0
            members[d] = -1
    return dirs, members


def _directions(cloud, config, location=None):
    """Directions and, per direction, the cloud rows spanning its hyperplane."""
    n, p = cloud.shape
    num = config.resolve(p)
    if p == 1:
        return np.ones((num, 1)), np.full((num, 1), -1, dtype=np.int64)
    members = np.array(_subset_table(int(config.seed), n, p, num))
    dirs = np.empty((num, p))
    ok = np.empty(num, dtype=np.bool_)
    _kernels._normals_from_subsets(cloud, members, dirs, ok)
    if not ok.all():
        _repair_directions(cloud, dirs, members, ok, config, location)
    return dirs, members


def generate_directions(cloud, config=None):
    """Unit directions orthogonal to hyperplanes through sampled data points.

    Returns an array of shape ``(num_directions, p)``.  For ``p = 1`` every
    direction is ``+1``.
    """
    return _directions(_check_cloud(cloud), config or DirectionConfig())[0]


def _score(points, cloud, dirs, members=None, self_scoring=False):
    if cloud.shape[1] == 1:
        dirs = dirs[:1]
        members = None
    if members is None:
        members = np.full((dirs.shape[0], 0), -1, dtype=np.int64)
    out = np.empty(points.shape[0])
    _kernels._max_ao(cloud, dirs, members, points, self_scoring, out)
    return out


def batch_ao(points, cloud, config=None, directions=None):
    """AO of each row of ``points`` relative to ``cloud``.

    Every point is scored against the same direction set.  Pass
    ``directions`` to score against an explicit set instead of generated
    ones.
    """
    y = _check_cloud(cloud)
    if y.shape[0] < 4:
        raise InsufficientDataError(f"AO needs at least 4 points, got {y.shape[0]}")
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, y.shape[1]) if y.shape[1] > 1 or x.size != 1 else x[:, None]
    if x.ndim != 2 or x.shape[1] != y.shape[1]:
        raise InvalidInputError(f"points must have {y.shape[1]} columns")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("points must be finite")
    if directions is None:
        dirs, members = _directions(y, config or DirectionConfig())
    else:
        dirs = np.ascontiguousarray(directions, dtype=np.float64).reshape(-1, y.shape[1])
        members = None
    return _score(np.ascontiguousarray(x), y, dirs, members)


def multivariate_ao(x, cloud, config=None):
    """AO of a single p-vector: max of univariate AO over the directions."""
    y = _check_cloud(cloud)
    point = np.asarray(x, dtype=np.float64).reshape(1, y.shape[1])
    return float(batch_ao(point, y, config)[0])
