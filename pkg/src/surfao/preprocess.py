"""Gradient augmentation and interpolation of missing cells."""

import numpy as np

from .exceptions import GridTooSmallError, ImputationError, InvalidInputError

_AXES = {"k": -1, "j": -2}


def _derivative(a, axis):
    """Second-order finite difference along ``axis``.

    Central differences inside, the three-point one-sided stencils on the
    first and last cell.
    """
    a = np.moveaxis(a, axis, -1)
    d = np.empty_like(a)
    d[..., 1:-1] = (a[..., 2:] - a[..., :-2]) / 2
    d[..., 0] = (-3 * a[..., 0] + 4 * a[..., 1] - a[..., 2]) / 2
    d[..., -1] = (a[..., -3] - 4 * a[..., -2] + 3 * a[..., -1]) / 2
    return np.moveaxis(d, -1, axis)


def gradient_augment(values):
    """Append the j- and k-derivatives of a single-channel dataset.

    ``values`` is ``(n, J, K)`` or ``(n, J, K, 1)``; the result is
    ``(n, J, K, 3)`` holding the value, d/dj and d/dk.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.ndim == 4:
        if x.shape[3] != 1:
            raise InvalidInputError(f"gradient augmentation needs p = 1, got p = {x.shape[3]}")
        x = x[..., 0]
    if x.ndim != 3:
        raise InvalidInputError(f"expected an (n, J, K) array, got shape {x.shape}")
    if x.shape[1] < 3 or x.shape[2] < 3:
        raise GridTooSmallError(f"gradients need J >= 3 and K >= 3, got {x.shape[1:]}")
    if np.isnan(x).any():
        raise InvalidInputError("dataset has missing cells; impute them first")
    return np.stack([x, _derivative(x, 1), _derivative(x, 2)], axis=-1)


def missing_cells(grid):
    """Boolean (J, K) mask of whole-cell missing values in a (J, K[, p]) grid.

    Raises if only some channels of a cell are missing.
    """
    g = np.asarray(grid, dtype=np.float64)
    if g.ndim == 2:
        return np.isnan(g)
    nan = np.isnan(g)
    mask = nan.all(axis=-1)
    if (nan.any(axis=-1) & ~mask).any():
        raise InvalidInputError("a cell may only be missing in all channels at once")
    return mask


def impute_missing(grid, axis="k"):
    """Fill missing cells of one grid function by linear interpolation.

    Each profile along ``axis`` (``"k"``: fixed row, varying column;
    ``"j"``: fixed column, varying row) is interpolated piecewise linearly
    between observed cells and extended with the nearest observed value past
    its ends.  Observed cells are returned unchanged.
    """
    if axis not in _AXES:
        raise InvalidInputError(f"axis must be 'k' or 'j', got {axis!r}")
    g = np.array(grid, dtype=np.float64)
    squeeze = g.ndim == 2
    if squeeze:
        g = g[..., None]
    if g.ndim != 3:
        raise InvalidInputError(f"expected a (J, K[, p]) grid, got shape {np.shape(grid)}")
    mask = missing_cells(g)
    if not mask.any():
        return g[..., 0] if squeeze else g
    if axis == "j":
        g = g.transpose(1, 0, 2)
        mask = mask.T
    pos = np.arange(g.shape[1], dtype=np.float64)
    for r in np.flatnonzero(mask.any(axis=1)):
        seen = ~mask[r]
        if seen.sum() < 2:
            raise ImputationError(f"profile {r} along {axis} has fewer than 2 observed cells", profile=int(r))
        for c in range(g.shape[2]):
            g[r, mask[r], c] = np.interp(pos[mask[r]], pos[seen], g[r, seen, c])
    if axis == "j":
        g = g.transpose(1, 0, 2)
    g = np.ascontiguousarray(g)
    return g[..., 0] if squeeze else g


def impute_dataset(values, axis="k"):
    """:func:`impute_missing` applied to every observation of ``(n, J, K[, p])`` data."""
    x = np.asarray(values, dtype=np.float64)
    if x.ndim not in (3, 4):
        raise InvalidInputError(f"expected an (n, J, K[, p]) array, got shape {x.shape}")
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        try:
            out[i] = impute_missing(x[i], axis)
        except ImputationError as exc:
            raise ImputationError(f"observation {i}: {exc}", profile=exc.profile) from exc
    return out
