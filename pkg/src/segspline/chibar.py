"""Level probabilities (chi-bar-square weights) of a constraint cone.

``w(p, h)`` is the probability that the projection of a Gaussian vector
``z ~ N(0, gram^-1)`` onto the cone ``{theta : C theta >= 0}``, taken in
the ``gram`` metric, lands on a face of dimension ``k - p + h``.  Here
``p`` is the rank of ``C``; when its rows are independent (every cone
used by the test and the bands), ``p - h`` is simply the number of
constraints that hold with equality.  Submodel cones can carry dependent
rows, such as the opposite-sign pair that pins a coefficient at zero;
there ``h`` is the rank of all rows minus the rank of the active ones,
which keeps a pinned model's weights identical to those of the model
with the pinned term removed.  These weights drive the one-sided
information criterion, the screening test's null mixture and the
confidence-band quantile.

Whitening reduces everything to Euclidean geometry: with ``gram = L L'``
and ``phi = L' theta``, the draw becomes standard normal and the cone
becomes ``{phi : A phi >= 0}`` with ``A = C L^-T``.  Weights therefore
depend only on the angles between the rows of ``A``, which gives closed
forms for up to two constraints:

    p = 0:  w = (1)
    p = 1:  w = (1/2, 1/2)
    p = 2:  w(2,0) = arccos(rho) / (2 pi),   w(2,1) = 1/2,
            w(2,2) = 1/2 - arccos(rho) / (2 pi)

with ``rho`` the metric correlation of the two constraint normals.  Three
or more constraints are handled by Monte Carlo.  Rather than running the
active-set solver per draw, the Monte Carlo enumerates the faces of the
cone once (independent row subsets ``J``), projects every draw onto each
face's span ``{A_J phi = 0}`` with a precomputed matrix, and picks per
draw the feasible candidate of maximal norm, which is the projection:
the true projection always arises from one of these subsets and strictly
dominates every other feasible candidate in norm.  A literal
``project_cone`` loop over draws gives identical counts and is kept as a
test-time cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
import scipy.linalg

from .errors import DataError
from .solver import TOL_ACTIVE

EXACT_MAX_P = 2


@dataclass(frozen=True)
class ChibarWeights:
    """Weight vector ``w[h], h = 0..p`` plus provenance.

    ``p`` is the rank of the constraint matrix.  ``h`` counts
    unconstrained directions: ``h = p`` means no constraint binds,
    ``h = 0`` means the projection lies in the cone's lineality space.
    ``mc_se`` is the largest binomial standard error across entries
    (zero for exact weights).
    """

    p: int
    w: np.ndarray
    n_draws: int
    mc_se: float
    exact: bool

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.shape != (self.p + 1,):
            raise DataError(f"need {self.p + 1} weights, got shape {w.shape}")
        if np.any(w < -1e-12) or abs(w.sum() - 1.0) > 1e-9:
            raise DataError("weights must be non-negative and sum to one")
        object.__setattr__(self, "w", w)


def _whiten_rows(C, gram):
    """Rows of ``C L^-T`` normalised to unit length (cone unchanged)."""
    C = np.asarray(C, dtype=float)
    gram = np.asarray(gram, dtype=float)
    k = gram.shape[0]
    if C.size == 0:
        return np.zeros((0, k))
    L = scipy.linalg.cholesky(gram, lower=True, check_finite=False)
    A = scipy.linalg.solve_triangular(L, C.T, lower=True, check_finite=False).T
    norms = np.linalg.norm(A, axis=1)
    if np.any(norms <= 0.0):
        raise DataError("constraint rows must be nonzero")
    return A / norms[:, None]


_RANK_TOL = 1e-10


def weights_exact_small(C, gram) -> ChibarWeights:
    """Closed-form weights for at most two constraints.

    Degenerate pairs reduce to rank-one cones: duplicated rows act as a
    single half-space, an opposite-sign pair pins its direction to zero
    so the projection always lands in the lineality space.
    """
    A = _whiten_rows(C, gram)
    rows = A.shape[0]
    if rows > EXACT_MAX_P:
        raise DataError(f"closed forms cover p <= {EXACT_MAX_P}, got {rows} rows")
    if rows == 0:
        w = np.array([1.0])
    elif rows == 1:
        w = np.array([0.5, 0.5])
    else:
        rho = float(np.clip(A[0] @ A[1], -1.0, 1.0))
        if rho >= 1.0 - _RANK_TOL:
            w = np.array([0.5, 0.5])
        elif rho <= -1.0 + _RANK_TOL:
            w = np.array([1.0, 0.0])
        else:
            gamma = np.arccos(rho)
            w = np.array([gamma / (2 * np.pi), 0.5, 0.5 - gamma / (2 * np.pi)])
    return ChibarWeights(p=len(w) - 1, w=w, n_draws=0, mc_se=0.0, exact=True)


def _face_projectors(A):
    """Null-space projectors of every independent row subset of ``A``.

    Returns a list of (k, k) matrices; the empty subset contributes the
    identity.  Subsets whose rows are linearly dependent are skipped: a
    dependent subset's face is already represented by an independent one.
    """
    p, k = A.shape
    eye = np.eye(k)
    projectors = [eye]
    for size in range(1, p + 1):
        for J in combinations(range(p), size):
            AJ = A[list(J)]
            # Independence check via the singular values of the subset.
            sv = np.linalg.svd(AJ, compute_uv=False)
            if sv[-1] <= 1e-10:
                continue
            Q, _ = np.linalg.qr(AJ.T)
            projectors.append(eye - Q @ Q.T)
    return projectors


def _mc_face_dims(A, draws):
    """Mixture index ``h`` of the cone projection of each draw.

    ``draws`` is (N, k) standard normal.  Returns an (N,) int vector of
    ``h = rank(A) - rank(active rows at the projection)``; for
    independent rows this is the count of non-binding constraints.
    """
    N, k = draws.shape
    feas_tol = 1e-9
    best_norm2 = np.full(N, -1.0)
    best_phi = np.zeros_like(draws)
    for P in _face_projectors(A):
        Phi = draws @ P  # P is symmetric
        feas = np.all(Phi @ A.T >= -feas_tol, axis=1)
        norm2 = np.einsum("ij,ij->i", Phi, draws)  # = ||P u||^2
        better = feas & (norm2 > best_norm2 + 1e-12)
        if np.any(better):
            best_norm2[better] = norm2[better]
            best_phi[better] = Phi[better]
    active = np.abs(best_phi @ A.T) <= TOL_ACTIVE
    return active_pattern_dims(A, active)


def active_pattern_dims(A, active):
    """``h`` values from boolean active-row patterns, rank-aware."""
    rank_all = int(np.linalg.matrix_rank(A, tol=_RANK_TOL))
    patterns, inverse = np.unique(active, axis=0, return_inverse=True)
    pattern_h = np.empty(patterns.shape[0], dtype=int)
    for i, pat in enumerate(patterns):
        if not pat.any():
            pattern_h[i] = rank_all
        else:
            pattern_h[i] = rank_all - int(np.linalg.matrix_rank(A[pat], tol=_RANK_TOL))
    return pattern_h[inverse]


def weights_mc(C, gram, n_draws=10_000, seed=0) -> ChibarWeights:
    """Monte Carlo weights, bit-reproducible for a given seed.

    Draws ``z ~ N(0, gram^-1)``, projects each onto the cone in the
    ``gram`` metric and tallies ``h = rank(C) - rank(active rows)``.
    Internally the draws are whitened so projections are Euclidean; see
    the module docstring for why the face enumeration reproduces the
    projection.
    """
    A = _whiten_rows(C, gram)
    rows, k = A.shape
    if rows == 0:
        return ChibarWeights(p=0, w=np.array([1.0]), n_draws=0, mc_se=0.0, exact=True)
    if n_draws < 1:
        raise DataError(f"n_draws must be positive, got {n_draws}")
    rank = int(np.linalg.matrix_rank(A, tol=_RANK_TOL))
    rng = np.random.default_rng(seed)
    draws = rng.standard_normal((int(n_draws), k))
    h = _mc_face_dims(A, draws)
    w = np.bincount(h, minlength=rank + 1).astype(float) / len(draws)
    se = float(np.max(np.sqrt(w * (1.0 - w) / len(draws))))
    return ChibarWeights(p=rank, w=w, n_draws=int(n_draws), mc_se=se, exact=False)


def level_weights(C, gram, n_draws=10_000, seed=0) -> ChibarWeights:
    """Exact weights when available (p <= 2), Monte Carlo otherwise."""
    C = np.asarray(C, dtype=float)
    p = C.shape[0] if C.size else 0
    if p <= EXACT_MAX_P:
        return weights_exact_small(C, gram)
    return weights_mc(C, gram, n_draws=n_draws, seed=seed)
