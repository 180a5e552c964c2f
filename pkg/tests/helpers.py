"""Independent oracles used to derive expected values in the test suite.

Everything here is deliberately written against the problem statements,
not against the package internals: brute-force enumeration, dense grids
and quadrature.  Slow is fine; these only run at test time.
"""

from itertools import combinations

import numpy as np
from scipy import integrate, special


def exhaustive_qp(gram, rhs, C):
    """Minimize (1/2)th'Gth - rhs'th s.t. C th >= 0 by active-set enumeration.

    Tries every subset of constraint rows as the active set, solves the
    equality-constrained KKT system, and keeps the best point that is
    primal feasible with nonnegative multipliers.  Exponential in the
    number of rows; intended for q <= ~6.
    """
    gram = np.asarray(gram, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    C = np.asarray(C, dtype=float)
    q = C.shape[0]
    best = None
    best_val = np.inf
    for r in range(q + 1):
        for subset in combinations(range(q), r):
            A = C[list(subset)]
            m = len(subset)
            kkt = np.zeros((gram.shape[0] + m, gram.shape[0] + m))
            kkt[: gram.shape[0], : gram.shape[0]] = gram
            if m:
                kkt[: gram.shape[0], gram.shape[0]:] = -A.T
                kkt[gram.shape[0]:, : gram.shape[0]] = A
            vec = np.concatenate([rhs, np.zeros(m)])
            try:
                sol = np.linalg.solve(kkt, vec)
            except np.linalg.LinAlgError:
                continue
            theta, mult = sol[: gram.shape[0]], sol[gram.shape[0]:]
            if q and np.min(C @ theta) < -1e-9:
                continue
            if m and np.min(mult) < -1e-9:
                continue
            val = 0.5 * theta @ gram @ theta - rhs @ theta
            if val < best_val - 1e-12:
                best_val = val
                best = theta
    if best is None:
        raise AssertionError("exhaustive QP found no feasible stationary point")
    return best, best_val


def exhaustive_lsq(X, y, C):
    """Constrained least squares via exhaustive_qp; returns (theta, rss)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    theta, _ = exhaustive_qp(X.T @ X, X.T @ y, C)
    resid = y - X @ theta
    return theta, float(resid @ resid)


def grid_band_extremes(xvec, center, M, lam, C, n_grid=1000):
    """Dense-grid min/max of xvec'th over the k=2 band region.

    Grid covers the ellipsoid's bounding box; feasibility is checked
    pointwise.  Resolution error is about the grid spacing times |xvec|.
    """
    center = np.asarray(center, dtype=float)
    M = np.asarray(M, dtype=float)
    if center.size != 2:
        raise ValueError("grid oracle only handles k=2")
    Minv = np.linalg.inv(M)
    # ellipsoid {th: |M(th-center)|^2 <= lam} bounding box half-widths
    half = np.sqrt(lam) * np.sqrt((Minv @ Minv.T).diagonal())
    t0 = np.linspace(center[0] - half[0], center[0] + half[0], n_grid)
    t1 = np.linspace(center[1] - half[1], center[1] + half[1], n_grid)
    g0, g1 = np.meshgrid(t0, t1, indexing="ij")
    pts = np.stack([g0.ravel(), g1.ravel()], axis=1)
    d = (pts - center) @ M.T
    ok = np.einsum("ij,ij->i", d, d) <= lam
    if C is not None and len(C):
        ok &= np.all(pts @ np.asarray(C, dtype=float).T >= 0.0, axis=1)
    vals = pts[ok] @ np.asarray(xvec, dtype=float)
    if vals.size == 0:
        raise AssertionError("grid oracle found no feasible point")
    return float(vals.min()), float(vals.max()), float(max(half) * 2 / (n_grid - 1))


def scripted_basis(x, knots):
    """Loop-built spline basis: 1, x, then (jump, hinge) per knot."""
    x = np.asarray(x, dtype=float)
    cols = [np.ones_like(x), x]
    for a in knots:
        cols.append((x > a).astype(float))
        cols.append(np.maximum(x - a, 0.0))
    return np.stack(cols, axis=1)


def beta_mixture_cdf(t, w0, weights, a_params, b_params):
    """Quadrature CDF of w0*delta_0 + sum_i w_i Beta(a_i, b_i) at t."""
    if t < 0:
        return 0.0
    total = w0
    for w, a, b in zip(weights, a_params, b_params):
        if w == 0.0:
            continue
        dens = lambda u, a=a, b=b: (
            u ** (a - 1.0) * (1.0 - u) ** (b - 1.0) / special.beta(a, b)
        )
        val, _ = integrate.quad(dens, 0.0, min(t, 1.0), limit=200)
        total += w * min(max(val, 0.0), 1.0)
    return min(total, 1.0)


def beta_mixture_quantile(prob, w0, weights, a_params, b_params, tol=1e-10):
    """Bisection quantile of the mixture in beta_mixture_cdf."""
    if prob <= w0:
        return 0.0
    lo, hi = 0.0, 1.0 - 1e-14
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if beta_mixture_cdf(mid, w0, weights, a_params, b_params) < prob:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def mc_cone_dims(C, gram, n_draws, seed):
    """MC chi-bar dimension frequencies by brute projection.

    Projects standard-normal draws (in the gram metric) onto the cone
    with exhaustive_qp and bins by the rank of the active rows.  Returns
    the frequency vector over h = 0..rank(C).
    """
    rng = np.random.default_rng(seed)
    C = np.asarray(C, dtype=float)
    gram = np.asarray(gram, dtype=float)
    k = gram.shape[0]
    rank_all = int(np.linalg.matrix_rank(C, tol=1e-10))
    cov = np.linalg.inv(gram)
    L = np.linalg.cholesky(cov)
    counts = np.zeros(rank_all + 1, dtype=int)
    for _ in range(n_draws):
        z = L @ rng.standard_normal(k)
        theta, _ = exhaustive_qp(gram, gram @ z, C)
        active = np.abs(C @ theta) <= 1e-8
        if active.any():
            r_active = int(np.linalg.matrix_rank(C[active], tol=1e-10))
        else:
            r_active = 0
        counts[rank_all - r_active] += 1
    return counts / n_draws


def naive_bh(pvalues):
    """Quadratic-time Benjamini-Hochberg q-values."""
    p = np.asarray(pvalues, dtype=float)
    m = p.size
    q = np.empty(m)
    for i in range(m):
        rank = np.sum(p <= p[i])
        candidates = []
        for j in range(m):
            if p[j] >= p[i]:
                rj = np.sum(p <= p[j])
                candidates.append(p[j] * m / rj)
        q[i] = min(min(candidates), 1.0)
    return q
