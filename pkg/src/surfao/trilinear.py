"""Trimmed trilinear (PARAFAC) fit for stacks of surfaces.

Model: ``Y[i, j, k] ~ sum_f A[i, f] B[j, f] C[k, f]``.  The loadings B and
C are estimated from the ``ceil(h n)`` observations with the smallest
residual sum of squares, re-selected after every round of alternating least
squares.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidInputError, SingularUpdateError


@dataclass
class TrilinearModel:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    h: float
    subset: np.ndarray
    iterations: int
    converged: bool
    loss: float
    loss_trace: list = field(default_factory=list)
    restart: int = 0
    restart_losses: list = field(default_factory=list)

    @property
    def n_components(self):
        return self.A.shape[1]

    def fitted(self, scores=None):
        a = self.A if scores is None else scores
        return np.einsum("if,jf,kf->ijk", a, self.B, self.C)


def subset_size(n, h):
    # guard against h * n landing a hair above an integer
    return math.ceil(round(h * n, 9))


def _as_cube(values):
    x = np.asarray(values, dtype=np.float64)
    if x.ndim == 4:
        if x.shape[3] != 1:
            raise InvalidInputError(f"trilinear fit needs p = 1, got p = {x.shape[3]}")
        x = x[..., 0]
    if x.ndim != 3:
        raise InvalidInputError(f"expected an (n, J, K) array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("trilinear fit needs complete, finite data")
    return x


def _lstsq(design, rhs, what):
    sol, _, rank, _ = np.linalg.lstsq(design, rhs, rcond=None)
    if rank < design.shape[1]:
        raise SingularUpdateError(f"rank-deficient least squares update for {what}")
    return sol


def _khatri_rao(u, v):
    # column f is outer(u[:, f], v[:, f]).ravel()
    return (u[:, None, :] * v[None, :, :]).reshape(-1, u.shape[1])


def _solve_scores(x, B, C):
    n = x.shape[0]
    return _lstsq(_khatri_rao(B, C), x.reshape(n, -1).T, "A").T


def _solve_b(xs, A, C):
    J = xs.shape[1]
    rhs = xs.transpose(0, 2, 1).reshape(-1, J)
    return _lstsq(_khatri_rao(A, C), rhs, "B").T


def _solve_c(xs, A, B):
    K = xs.shape[2]
    rhs = xs.reshape(-1, K)
    return _lstsq(_khatri_rao(A, B), rhs, "C").T


def _unit_columns(M):
    norms = np.linalg.norm(M, axis=0)
    norms[norms == 0] = 1.0
    return M / norms


def _residual_ss(x, A, B, C):
    r = x - np.einsum("if,jf,kf->ijk", A, B, C)
    return np.einsum("ijk,ijk->i", r, r)


def _leading_vectors(unfolded, F, rng):
    u = np.linalg.svd(unfolded, full_matrices=False)[0][:, :F]
    if u.shape[1] < F:
        extra = rng.standard_normal((unfolded.shape[0], F - u.shape[1]))
        u = np.hstack([u, extra])
    return _unit_columns(u)


def _trim(res, m):
    subset = np.sort(np.argsort(res, kind="stable")[:m])
    return subset, float(res[subset].sum())


def _normalize(A, B, C):
    """Unit-norm B and C columns, scale in A, B and C largest entries positive,
    components ordered by decreasing score norm."""
    bn = np.linalg.norm(B, axis=0)
    cn = np.linalg.norm(C, axis=0)
    bn[bn == 0] = 1.0
    cn[cn == 0] = 1.0
    B = B / bn
    C = C / cn
    A = A * (bn * cn)
    for M in (B, C):
        idx = np.argmax(np.abs(M), axis=0)
        sign = np.sign(M[idx, np.arange(M.shape[1])])
        sign[sign == 0] = 1.0
        M *= sign
        A *= sign
    order = np.argsort(-np.linalg.norm(A, axis=0), kind="stable")
    return A[:, order], B[:, order], C[:, order]


def _single_fit(x, F, m, rng, max_iter, tol):
    n = x.shape[0]
    subset = np.sort(rng.choice(n, size=m, replace=False))
    xs = x[subset]
    B = _leading_vectors(xs.transpose(1, 0, 2).reshape(x.shape[1], -1), F, rng)
    C = _leading_vectors(xs.transpose(2, 0, 1).reshape(x.shape[2], -1), F, rng)
    A = _solve_scores(x, B, C)

    trace = []
    state = None
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        xs = x[subset]
        B = _unit_columns(_solve_b(xs, A[subset], C))
        C = _unit_columns(_solve_c(xs, A[subset], B))
        A = _solve_scores(x, B, C)
        new_subset, loss = _trim(_residual_ss(x, A, B, C), m)
        if trace and loss > trace[-1]:
            # roundoff floor: keep the last non-increasing state
            A, B, C, subset = state
            it -= 1
            converged = True
            break
        prev = trace[-1] if trace else None
        trace.append(loss)
        state = (A, B, C, new_subset)
        subset = new_subset
        if loss == 0.0 or (prev is not None and (prev - loss) <= tol * prev):
            converged = True
            break
    return A, B, C, subset, trace, it, converged


def fit_trilinear(values, n_components, h=0.75, random_state=0, n_restarts=5, max_iter=500, tol=1e-8):
    """Fit a trimmed rank-``n_components`` trilinear model.

    Each restart draws a random ``ceil(h n)`` subset, initialises B and C
    from the leading singular vectors of its mode unfoldings, then alternates
    least-squares updates of B and C on the subset, of A on every
    observation, and re-selection of the subset.  The restart with the
    lowest trimmed loss wins; ties go to the earlier restart.
    """
    x = _as_cube(values)
    n = x.shape[0]
    F = int(n_components)
    if F < 1:
        raise InvalidInputError("n_components must be >= 1")
    if not 0.5 < h <= 1:
        raise InvalidInputError(f"h must lie in (0.5, 1], got {h}")
    m = subset_size(n, h)
    if n < F + 1 or m < F + 1:
        raise InvalidInputError(f"need ceil(h n) >= F + 1 observations, got {m} for F = {F}")
    if n_restarts < 1 or max_iter < 1:
        raise InvalidInputError("n_restarts and max_iter must be >= 1")

    children = np.random.SeedSequence(random_state).spawn(n_restarts)
    best = None
    losses = []
    for r, child in enumerate(children):
        fit = _single_fit(x, F, m, np.random.default_rng(child), max_iter, tol)
        losses.append(fit[4][-1] if fit[4] else np.inf)
        if best is None or losses[-1] < losses[best[0]]:
            best = (r, fit)
    r, (A, B, C, subset, trace, it, converged) = best
    A, B, C = _normalize(A, B, C)
    return TrilinearModel(
        A=A,
        B=B,
        C=C,
        h=float(h),
        subset=subset,
        iterations=it,
        converged=converged,
        loss=losses[r],
        loss_trace=list(trace),
        restart=r,
        restart_losses=losses,
    )


def project_scores(values, model):
    """Least-squares scores of (possibly new) observations given B and C."""
    x = _as_cube(values)
    if x.shape[1:] != (model.B.shape[0], model.C.shape[0]):
        raise InvalidInputError(f"grid {x.shape[1:]} does not match the model")
    return _solve_scores(x, model.B, model.C)


def residuals(values, model, scores=None):
    """Observation-wise residual surfaces ``Y - fitted``, shape (n, J, K).

    Uses the model's own scores unless ``scores`` is given.
    """
    x = _as_cube(values)
    a = model.A if scores is None else np.asarray(scores, dtype=np.float64)
    if x.shape != (a.shape[0], model.B.shape[0], model.C.shape[0]):
        raise InvalidInputError(f"data shape {x.shape} does not match the model")
    return x - model.fitted(a)
