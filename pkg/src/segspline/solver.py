"""Least squares under linear inequality or equality constraints.

Everything here reduces to one primitive: projecting a point onto the
polyhedral cone ``{theta : C theta >= 0}`` in a positive definite metric
``G``, solved by a primal active-set iteration.  The inequality-constrained
least squares fit is the projection of the unconstrained solution in the
``X'X`` metric, because

    ||y - X theta||^2 = ||y - X theta_hat||^2
                        + (theta - theta_hat)' X'X (theta - theta_hat).

Equality-constrained fits (``C theta = 0``) use a null-space
parameterisation instead.  All problems are tiny (at most 8 coefficients,
7 constraints), so dense factorisations are used throughout.

The active-set iteration starts from the cone apex (always feasible for a
homogeneous cone), takes the longest feasible step toward the equality-
constrained minimiser of the current working set, and adds the blocking
row with the smallest index on ties; working-set rows whose multiplier is
negative are released.  A cycling guard caps the iteration count at
``100 * k`` and raises rather than returning a silent wrong answer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DesignError, SolverError
from .model import DesignSystem

TOL_FEAS = 1e-9
TOL_ACTIVE = 1e-8
TOL_KKT = 1e-8


@dataclass(frozen=True)
class FitResult:
    """A solved least squares problem.

    Attributes
    ----------
    theta : array, shape (k,)
        Coefficients in canonical order of the submodel's retained terms.
    rss : float
        Residual sum of squares at ``theta``.
    active : tuple of int
        Indices of constraint rows active at the solution
        (``|C theta| <= TOL_ACTIVE`` scaled by the row norm).  Empty for
        unconstrained fits; all rows for equality fits.
    loglik : float
        Profile Gaussian log-likelihood
        ``-(n / 2) * (log(2 pi rss / n) + 1)``, infinite for an exact fit.
    kkt_residual : float
        Largest scaled violation among stationarity, primal and dual
        feasibility and complementary slackness.
    """

    theta: np.ndarray
    rss: float
    active: tuple
    loglik: float
    kkt_residual: float


def gaussian_loglik(rss: float, n: int) -> float:
    """Profile log-likelihood of a Gaussian fit with the variance solved out."""
    if rss <= 0.0:
        return math.inf
    return -(n / 2.0) * (math.log(2.0 * math.pi * rss / n) + 1.0)


def _row_scales(C: np.ndarray) -> np.ndarray:
    if C.shape[0] == 0:
        return np.zeros(0)
    return np.maximum(np.linalg.norm(C, axis=1), 1e-30)


def _chol_solve(G: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        c, low = scipy.linalg.cho_factor(G, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise DesignError(f"Gram matrix is not positive definite: {exc}") from exc
    return scipy.linalg.cho_solve((c, low), b, check_finite=False)


def _active_set_project(z, G, C, max_iter=None):
    """Minimise (theta - z)' G (theta - z) subject to C theta >= 0.

    Returns ``(theta, lams)`` where ``lams`` holds one multiplier per
    constraint row (zero off the final working set).  The working set is
    kept linearly independent: every constraint boundary passes through
    the origin, so a row dependent on the current set has zero rate in
    exact arithmetic and can never truly block; admitting its rounded
    rate would only make the KKT system singular.  After a streak of
    zero-length steps the release rule drops the Dantzig choice for the
    smallest negative-multiplier index, which cannot cycle on the
    degenerate vertex at the origin.
    """
    k = G.shape[0]
    q = C.shape[0]
    if max_iter is None:
        max_iter = 100 * max(k, 1)
    scales = _row_scales(C)

    slack = C @ z if q else np.zeros(0)
    if q == 0 or np.all(slack >= -TOL_FEAS * scales):
        return z.copy(), np.zeros(q)

    theta = np.zeros(k)
    work: list[int] = []
    stalled = 0
    for _ in range(max_iter):
        # Step to the optimum of the working-set equality problem; the
        # multipliers returned belong to that optimum, not to theta.
        g = 2.0 * (G @ (theta - z))
        if work:
            Cw = C[work]
            m = len(work)
            kkt = np.block([[2.0 * G, Cw.T], [Cw, np.zeros((m, m))]])
            rhs = np.concatenate([-g, np.zeros(m)])
            try:
                sol = np.linalg.solve(kkt, rhs)
            except np.linalg.LinAlgError as exc:
                raise SolverError(
                    f"singular working-set system (rows {work}): {exc}"
                ) from exc
            d = sol[:k]
            lam_work = -sol[k:]
            span, _ = np.linalg.qr(Cw.T)
        else:
            d = _chol_solve(G, -0.5 * g)
            lam_work = np.zeros(0)
            span = np.zeros((k, 0))

        # Longest feasible step; ascending scan keeps the smallest blocking
        # row index on ties.
        step = 1.0
        blocker = -1
        rates = C @ d
        for i in range(q):
            if i in work or rates[i] >= -1e-14 * scales[i]:
                continue
            resid = C[i] - span @ (span.T @ C[i])
            if float(np.linalg.norm(resid)) <= 1e-10 * scales[i]:
                continue
            room = float(C[i] @ theta)
            cand = max(room, 0.0) / (-rates[i])
            if cand < step - 1e-14:
                step = cand
                blocker = i
        moved = step * float(np.linalg.norm(d))
        stalled = stalled + 1 if moved <= 1e-13 * (1.0 + float(np.linalg.norm(theta))) else 0
        theta = theta + step * d
        if blocker >= 0:
            work.append(blocker)
            continue

        # Unblocked full step: theta now is the working-set optimum and
        # lam_work holds its multipliers.  Testing optimality here rather
        # than waiting for a zero direction next round keeps solve roundoff
        # in d from stalling the loop once the working set is full rank.
        if not work or np.all(lam_work >= -TOL_KKT):
            lams = np.zeros(q)
            if work:
                lams[work] = np.maximum(lam_work, 0.0)
            return theta, lams
        if stalled > 2 * (q + k):
            # Anti-cycling: smallest row with a negative multiplier.
            j = min(i for i, v in zip(work, lam_work) if v < -TOL_KKT)
        else:
            # Release the most negative multiplier, smallest row on ties.
            worst = np.min(lam_work)
            j = min(i for i, v in zip(work, lam_work) if v <= worst + 1e-15)
        work.remove(j)
    raise SolverError(
        f"active-set iteration exceeded {max_iter} steps "
        f"(k={k}, q={q}); problem too degenerate"
    )


def project_cone(z, gram, C):
    """Project ``z`` onto ``{theta : C theta >= 0}`` in the ``gram`` metric.

    Returns
    -------
    (point, n_active) : (array, int)
        The projection and how many constraint rows are active there.
    """
    z = np.asarray(z, dtype=float)
    gram = np.asarray(gram, dtype=float)
    C = np.asarray(C, dtype=float)
    if C.size == 0:
        C = C.reshape(0, len(z))
    theta, _ = _active_set_project(z, gram, C)
    return theta, _count_active(C, theta)


def _count_active(C, theta) -> int:
    if C.shape[0] == 0:
        return 0
    scales = _row_scales(C)
    return int(np.sum(np.abs(C @ theta) <= TOL_ACTIVE * scales))


def _active_rows(C, theta) -> tuple:
    if C.shape[0] == 0:
        return ()
    scales = _row_scales(C)
    return tuple(np.nonzero(np.abs(C @ theta) <= TOL_ACTIVE * scales)[0].tolist())


def _kkt_residual(design, y, theta, lams) -> float:
    """Scaled KKT residual of the inequality-constrained least squares fit."""
    X, C = design.X, design.C
    grad = 2.0 * (design.gram @ theta - X.T @ y)
    scale = 1.0 + float(np.max(np.abs(2.0 * (X.T @ y)), initial=0.0))
    if C.shape[0]:
        stat = np.max(np.abs(grad - C.T @ lams)) / scale
        slack = C @ theta
        scales = _row_scales(C)
        primal = max(0.0, float(np.max(-slack / scales)))
        dual = max(0.0, float(np.max(-lams)))
        comp = float(np.max(np.abs(lams * slack))) / scale
        return max(stat, primal, dual, comp)
    return float(np.max(np.abs(grad))) / scale


def fit_unconstrained(design: DesignSystem, y) -> FitResult:
    """Ordinary least squares via the normal equations (Cholesky)."""
    y = np.asarray(y, dtype=float)
    theta = _chol_solve(design.gram, design.X.T @ y)
    resid = y - design.X @ theta
    rss = float(resid @ resid)
    kkt = _kkt_residual(
        DesignSystem(design.X, np.zeros((0, design.k)), design.gram), y, theta, np.zeros(0)
    )
    return FitResult(
        theta=theta,
        rss=rss,
        active=(),
        loglik=gaussian_loglik(rss, design.n),
        kkt_residual=kkt,
    )


def fit_inequality(design: DesignSystem, y) -> FitResult:
    """Least squares under ``C theta >= 0``.

    The unconstrained solution is returned unchanged when already
    feasible; otherwise it is projected onto the cone in the ``X'X``
    metric by the active-set iteration.
    """
    y = np.asarray(y, dtype=float)
    theta_hat = _chol_solve(design.gram, design.X.T @ y)
    C = design.C
    if C.shape[0] == 0:
        theta, lams = theta_hat, np.zeros(0)
    else:
        scales = _row_scales(C)
        if np.all(C @ theta_hat >= -TOL_FEAS * scales):
            theta, lams = theta_hat, np.zeros(C.shape[0])
        else:
            theta, lams = _active_set_project(theta_hat, design.gram, C)
    resid = y - design.X @ theta
    rss = float(resid @ resid)
    return FitResult(
        theta=theta,
        rss=rss,
        active=_active_rows(C, theta),
        loglik=gaussian_loglik(rss, design.n),
        kkt_residual=_kkt_residual(design, y, theta, lams),
    )


def fit_equality(design: DesignSystem, y) -> FitResult:
    """Least squares under ``C theta = 0`` via a null-space basis.

    Requires ``C`` to have full row rank; for the full spline model the
    null space is spanned by the intercept, so this fit collapses to the
    intercept-only mean.
    """
    y = np.asarray(y, dtype=float)
    C = design.C
    k = design.k
    if C.shape[0] == 0:
        return fit_unconstrained(design, y)
    if np.linalg.matrix_rank(C) < C.shape[0]:
        raise DesignError(
            f"equality constraints are rank deficient "
            f"({C.shape[0]} rows, rank {np.linalg.matrix_rank(C)})"
        )
    N = scipy.linalg.null_space(C)
    if N.shape[1] == 0:
        theta = np.zeros(k)
    else:
        Z = design.X @ N
        beta, *_ = np.linalg.lstsq(Z, y, rcond=None)
        theta = N @ beta
    resid = y - design.X @ theta
    rss = float(resid @ resid)
    # Stationarity holds on the null space by construction; report the
    # residual of the projected gradient as the certificate.
    grad = 2.0 * (design.gram @ theta - design.X.T @ y)
    scale = 1.0 + float(np.max(np.abs(2.0 * (design.X.T @ y)), initial=0.0))
    kkt = float(np.max(np.abs(N.T @ grad), initial=0.0)) / scale
    return FitResult(
        theta=theta,
        rss=rss,
        active=tuple(range(C.shape[0])),
        loglik=gaussian_loglik(rss, design.n),
        kkt_residual=kkt,
    )
