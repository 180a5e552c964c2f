"""Uniform confidence bands around the constrained fit.

The confidence set for the coefficient vector is the intersection of the
constraint cone with an ellipsoid centred at the inequality fit,

    { theta : C theta >= 0,  ||M (theta - ti)||^2 <= lambda },

where ``M`` is the upper Cholesky factor of ``X'X`` and ``lambda`` is
calibrated from the band mixture quantile:

    lambda = rss_hat * Q / (1 - Q),   Q = quantile(1 - alpha).

A band value at a covariate point is the extremum of ``x' theta`` over
that set.  After the substitution ``theta = ti + sqrt(lambda) M^-1 phi``
the problem becomes minimising a linear function over the unit ball cut
by half-spaces, which a short log-barrier path solves.  The barrier runs
on all grid directions at once (stacked Newton systems), and every value
is certified by a feasible dual point before it is returned:

    dual(mu) = x' ti - mu' C ti - sqrt(lambda) ||M^-T (x - C' mu)||

lower-bounds the minimum for any mu >= 0, so primal - dual bounds the
error of the reported extremum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .chibar import ChibarWeights
from .errors import DataError, SolverError
from .inference import mixture_quantile
from .model import DesignSystem, KnotSet, basis_matrix
from .solver import TOL_FEAS, fit_inequality, fit_unconstrained

# barrier schedule
_T_INIT = 1.0
_T_GROW = 10.0
_TOL_CENTER = 1e-9
_GAP_REL = 1e-7
_MAX_STAGES = 40
_MAX_NEWTON = 80

_LAM_TINY = 1e-12
# residual sums below this relative size are least-squares roundoff
_RSS_SNAP = 1e-20


@dataclass(frozen=True)
class BandRegion:
    """Calibrated confidence set for one gene's coefficients."""

    center: np.ndarray
    M: np.ndarray
    lam: float
    alpha: float
    quantile: float

    def __post_init__(self):
        if self.lam < 0.0:
            raise DataError(f"negative ellipsoid radius {self.lam}")


@dataclass(frozen=True)
class BandGrid:
    """Band evaluated on a covariate grid."""

    xs: np.ndarray
    fitted: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float
    lam: float


def region_params(design: DesignSystem, y: np.ndarray, weights: ChibarWeights, alpha: float) -> BandRegion:
    """Calibrate the confidence set at level ``1 - alpha``."""
    if not 0.0 < alpha < 1.0:
        raise DataError(f"alpha must lie in (0, 1), got {alpha}")
    fit_unc = fit_unconstrained(design, y)
    fit = fit_inequality(design, y)
    q = mixture_quantile(1.0 - alpha, weights, design.n, design.k, variant="band")
    if q >= 1.0:
        raise SolverError("band quantile reached 1; cannot calibrate the ellipsoid")
    rss = fit_unc.rss
    if rss <= _RSS_SNAP * max(1.0, float(y @ y)):
        rss = 0.0  # interpolating fit: the region is the single point
    lam = rss * q / (1.0 - q)
    M = linalg.cholesky(design.gram, lower=False)
    return BandRegion(center=fit.theta, M=M, lam=lam, alpha=alpha, quantile=q)


def _feasible_start(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """A strictly interior point of {phi : A phi + b >= 0, ||phi|| < 1}."""
    q, k = A.shape
    if q == 0 or (b > TOL_FEAS).all():
        phi = np.zeros(k)
        if q and not (A @ phi + b > 0.0).all():
            raise SolverError("origin is not strictly feasible despite positive offsets")
        return phi
    # Aim every slack uphill at once: solve A d = 1, then step just far
    # enough inside the ball.
    d, *_ = np.linalg.lstsq(A, np.ones(q), rcond=None)
    if not np.allclose(A @ d, 1.0, atol=1e-8):
        raise SolverError("constraint rows admit no common strictly feasible direction")
    step = 0.5 / max(1.0, float(np.linalg.norm(d)))
    for _ in range(60):
        phi = step * d
        if np.linalg.norm(phi) < 1.0 and (A @ phi + b > 0.0).all():
            return phi
        step *= 0.5
    raise SolverError("failed to find a strictly feasible interior point")


def _barrier_value(G: np.ndarray, phi: np.ndarray, t: float, A: np.ndarray, b: np.ndarray) -> np.ndarray:
    s = phi @ A.T + b if A.size else np.ones((phi.shape[0], 0))
    r = 1.0 - np.einsum("bi,bi->b", phi, phi)
    val = t * np.einsum("bi,bi->b", G, phi) - np.log(r)
    if s.size:
        val = val - np.log(s).sum(axis=1)
    return val


def _center_batch(G: np.ndarray, phi: np.ndarray, t: float, A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Damped Newton toward the analytic centre of each tilted barrier.

    Best effort: a stalled problem is left where it is.  Correctness is
    enforced by the duality-gap certificate in the caller, never here.
    """
    B, k = G.shape
    eye = np.eye(k)
    for _ in range(_MAX_NEWTON):
        s = phi @ A.T + b if A.size else np.ones((B, 0))
        r = 1.0 - np.einsum("bi,bi->b", phi, phi)
        inv_s = 1.0 / s if s.size else s
        grad = t * G + (2.0 / r)[:, None] * phi
        if s.size:
            grad = grad - inv_s @ A
        H = (2.0 / r)[:, None, None] * eye[None, :, :]
        H = H + (4.0 / r**2)[:, None, None] * np.einsum("bi,bj->bij", phi, phi)
        if s.size:
            H = H + np.einsum("qi,bq,qj->bij", A, inv_s**2, A)
        delta = np.linalg.solve(H, -grad[..., None])[..., 0]
        dec2 = np.einsum("bi,bi->b", grad, -delta)
        live = dec2 > 2.0 * _TOL_CENTER
        if not live.any():
            return phi
        f0 = _barrier_value(G, phi, t, A, b)
        step = np.where(live, 1.0, 0.0)
        cand = phi
        ok = np.zeros(B, dtype=bool)
        for _ in range(60):
            cand = phi + step[:, None] * delta
            s_c = cand @ A.T + b if A.size else np.ones((B, 0))
            r_c = 1.0 - np.einsum("bi,bi->b", cand, cand)
            ok = r_c > 0.0
            if s_c.size:
                ok &= (s_c > 0.0).all(axis=1)
            with np.errstate(invalid="ignore", divide="ignore"):
                f_c = _barrier_value(G, np.where(ok[:, None], cand, phi), t, A, b)
            ok &= f_c <= f0 - 0.25 * step * dec2
            bad = live & ~ok
            if not bad.any():
                break
            step[bad] *= 0.5
        moved = live & ok
        if not moved.any():
            return phi
        phi = np.where(moved[:, None], cand, phi)
    return phi


def linear_extremes(dirs: np.ndarray, region: BandRegion, C: np.ndarray) -> np.ndarray:
    """Minimum of ``dirs[b] @ theta`` over the region, for every row.

    Each value is certified: the method raises if any duality gap
    exceeds ``1e-7 * (1 + |value|)``.
    """
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    B, k = dirs.shape
    center, M, lam = region.center, region.M, region.lam
    base = dirs @ center
    if lam <= _LAM_TINY * max(1.0, float(center @ center)):
        return base.copy()
    root = np.sqrt(lam)
    # g = sqrt(lam) M^-T x per direction; whitened constraint rows
    G = root * linalg.solve_triangular(M, dirs.T, trans="T", lower=False).T
    if C.size:
        A = root * linalg.solve_triangular(M, C.T, trans="T", lower=False).T
        b = C @ center
        if (b < -TOL_FEAS).any():
            raise SolverError("band centre violates the cone constraints")
        b = np.maximum(b, 0.0)
    else:
        A = np.zeros((0, k))
        b = np.zeros(0)
    if A.shape[0] == 0:
        return base - np.linalg.norm(G, axis=1)

    phi = np.tile(_feasible_start(A, b), (B, 1))
    t = _T_INIT
    m = A.shape[0] + 1.0
    for _ in range(_MAX_STAGES):
        phi = _center_batch(G, phi, t, A, b)
        primal = base + np.einsum("bi,bi->b", G, phi)
        s = phi @ A.T + b
        mu_phi = 1.0 / (t * s)  # multipliers in whitened coordinates
        # map back: mu rows pair with C via A = sqrt(lam) C M^-1
        resid = dirs - mu_phi @ C
        w = root * linalg.solve_triangular(M, resid.T, trans="T", lower=False).T
        dual = base - mu_phi @ b - np.linalg.norm(w, axis=1)
        gap = primal - dual
        if (gap <= _GAP_REL * (1.0 + np.abs(primal))).all():
            return primal
        t *= _T_GROW
    raise SolverError("band optimisation failed to certify the requested gap")


def band_at(xrow: np.ndarray, region: BandRegion, C: np.ndarray):
    """Lower and upper band value for one basis row."""
    xrow = np.asarray(xrow, dtype=float)
    vals = linear_extremes(np.vstack([xrow, -xrow]), region, C)
    return float(vals[0]), float(-vals[1])


def band_grid(
    design: DesignSystem,
    y: np.ndarray,
    knotset: KnotSet,
    weights: ChibarWeights,
    alpha: float = 0.05,
    xs: np.ndarray | None = None,
    n_points: int = 100,
) -> BandGrid:
    """Evaluate the band on a grid spanning the observed covariate range.

    All grid extremes run through one stacked barrier call; the fitted
    curve is the constrained fit at the same points.
    """
    region = region_params(design, y, weights, alpha)
    x_obs = design.X[:, 1] if design.k > 1 else None
    if xs is None:
        if x_obs is None:
            raise DataError("cannot infer a grid without a covariate column; pass xs")
        xs = np.linspace(float(np.min(x_obs)), float(np.max(x_obs)), n_points)
    else:
        xs = np.asarray(xs, dtype=float)
        if xs.ndim != 1 or xs.size == 0:
            raise DataError("grid must be a non-empty one-dimensional array")
    rows = basis_matrix(xs, knotset)
    if rows.shape[1] != design.k:
        raise DataError(
            f"grid basis has {rows.shape[1]} columns but the design has {design.k}; "
            "bands are evaluated on the full model"
        )
    stacked = np.vstack([rows, -rows])
    vals = linear_extremes(stacked, region, design.C)
    npts = rows.shape[0]
    lower = vals[:npts]
    upper = -vals[npts:]
    fitted = rows @ region.center
    return BandGrid(
        xs=xs,
        fitted=fitted,
        lower=lower,
        upper=upper,
        level=1.0 - alpha,
        lam=region.lam,
    )
