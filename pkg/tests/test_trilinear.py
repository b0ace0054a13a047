import numpy as np
import pytest

from surfao.exceptions import InvalidInputError, SingularUpdateError
from surfao.trilinear import TrilinearModel, fit_trilinear, project_scores, residuals, subset_size

from .synthetic import corrupt, low_rank


def test_subset_size():
    assert subset_size(27, 0.75) == 21
    assert subset_size(20, 0.75) == 15
    assert subset_size(10, 1.0) == 10


def test_rank_one_exact():
    x, _ = low_rank(n=12, J=6, K=8, F=1)
    m = fit_trilinear(x, 1, h=1.0)
    assert np.max(np.abs(residuals(x, m))) < 1e-8
    assert m.converged and len(m.subset) == 12


def test_rank_three_exact():
    x, _ = low_rank()
    m = fit_trilinear(x, 3, h=1.0)
    r = residuals(x, m)
    assert np.linalg.norm(r) / np.linalg.norm(x) < 1e-8


def test_trimmed_fit_excludes_corrupted():
    x, _ = low_rank(F=2, seed=3)
    y, bad = corrupt(x, count=6)
    m = fit_trilinear(y, 2, h=0.75)
    assert len(m.subset) == 23
    assert not set(bad) & set(m.subset)
    clean = np.setdiff1d(np.arange(30), bad)
    res = residuals(y, m)
    rms = np.sqrt(np.mean(res**2, axis=(1, 2)))
    assert rms[clean].max() < 1e-6
    assert rms[bad].min() > rms[m.subset].max()


def test_loss_trace_non_increasing():
    x, _ = low_rank(seed=5)
    y, _ = corrupt(x, seed=2)
    m = fit_trilinear(y, 3, h=0.75)
    t = np.array(m.loss_trace)
    assert np.all(t[1:] <= t[:-1] * (1 + 1e-12))
    assert m.loss == t[-1]


def test_normalisation():
    x, _ = low_rank(seed=6)
    m = fit_trilinear(x, 3, h=1.0)
    assert np.allclose(np.linalg.norm(m.B, axis=0), 1.0)
    assert np.allclose(np.linalg.norm(m.C, axis=0), 1.0)
    for M in (m.B, m.C):
        idx = np.argmax(np.abs(M), axis=0)
        assert np.all(M[idx, np.arange(3)] > 0)
    norms = np.linalg.norm(m.A, axis=0)
    assert np.all(np.diff(norms) <= 0)


def test_deterministic():
    x, _ = low_rank(seed=7)
    y, _ = corrupt(x, seed=4)
    a, b = fit_trilinear(y, 3, random_state=9), fit_trilinear(y, 3, random_state=9)
    assert np.array_equal(a.A, b.A) and np.array_equal(a.subset, b.subset)
    assert a.restart_losses == b.restart_losses


def test_residuals_reconstruct():
    x, _ = low_rank(seed=8)
    y = x + 0.01 * np.random.default_rng(0).standard_normal(x.shape)
    m = fit_trilinear(y, 2, h=0.9)
    assert np.allclose(residuals(y, m) + m.fitted(), y, rtol=1e-12, atol=1e-12)


def test_zero_model_and_projection():
    x, (A, B, C) = low_rank(n=8, J=4, K=5, F=2)
    zero = TrilinearModel(np.zeros_like(A), B, C, 1.0, np.arange(8), 0, True, 0.0)
    assert np.array_equal(residuals(x, zero), x)
    exact = TrilinearModel(A, B, C, 1.0, np.arange(8), 0, True, 0.0)
    assert np.allclose(project_scores(x, exact), A)
    assert np.max(np.abs(residuals(x, exact, project_scores(x, exact)))) < 1e-10


def test_paper_settings_accepted():
    x, _ = low_rank(n=27, J=18, K=116, F=4, seed=1)
    m = fit_trilinear(x, 4, h=0.75, n_restarts=1, max_iter=50)
    assert len(m.subset) == 21 and m.n_components == 4


@pytest.mark.parametrize(
    "kwargs",
    [{"n_components": 0}, {"h": 0.5}, {"h": 1.2}, {"n_components": 12, "h": 0.75}, {"n_restarts": 0}],
)
def test_invalid_arguments(kwargs):
    x, _ = low_rank(n=12, J=4, K=5, F=1)
    args = {"n_components": 1, **kwargs}
    with pytest.raises(InvalidInputError):
        fit_trilinear(x, **args)


def test_rejects_multichannel_and_missing():
    with pytest.raises(InvalidInputError):
        fit_trilinear(np.zeros((6, 3, 3, 2)), 1)
    x = np.ones((6, 3, 3))
    x[0, 0, 0] = np.nan
    with pytest.raises(InvalidInputError):
        fit_trilinear(x, 1)


def test_singular_update():
    x = np.zeros((6, 3, 4))
    with pytest.raises(SingularUpdateError):
        fit_trilinear(x, 2, h=1.0, n_restarts=1)


def test_dimension_mismatch():
    x, _ = low_rank(n=8, J=4, K=5, F=1)
    m = fit_trilinear(x, 1, h=1.0)
    with pytest.raises(InvalidInputError):
        residuals(np.zeros((8, 5, 5)), m)
    with pytest.raises(InvalidInputError):
        project_scores(np.zeros((3, 4, 6)), m)
