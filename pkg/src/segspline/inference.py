"""Testing flat against constrained alternatives.

The test compares the equality-restricted fit (every constraint active,
which pins the model to a flat line) with the inequality fit.  The
statistic is a ratio of quadratic forms in the design metric,

    ebar = D / (D + rss_hat),   D = (ti - te)' X'X (ti - te),

with ``ti`` the inequality fit, ``te`` the equality fit and ``rss_hat``
the residual sum of squares of the unconstrained fit.  Under the null
its distribution is a mixture of Beta(h/2, (n-k)/2) laws weighted by the
constraint cone's level probabilities, with the ``h = 0`` component a
point mass at zero.  Confidence-set calibration uses the same mixture
shifted by half a degree of freedom, Beta((h+1)/2, (n-k)/2), with no
point mass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize, stats

from .chibar import ChibarWeights
from .errors import DataError
from .model import DesignSystem
from .solver import FitResult, fit_equality, fit_inequality, fit_unconstrained

VARIANTS = ("test", "band")

# The inequality and equality fits come from different solvers, so a
# replicate whose cone projection lands in {C theta = 0} yields a tiny
# positive ebar instead of an exact zero.  Genuine nonzero values are
# Beta-distributed and essentially never this small.
EBAR_TOL = 1e-10


@dataclass(frozen=True)
class TestResult:
    """Constrained-against-flat test for one gene."""

    lr: float
    ebar: float
    pvalue: float
    df_residual: int
    fit_ineq: FitResult
    fit_eq: FitResult


def ebar_statistic(design: DesignSystem, y: np.ndarray):
    """Return ``(lr, ebar, fit_ineq, fit_eq, fit_unc)``.

    ``lr`` is the raw residual drop ``rss_eq - rss_ineq``; ``ebar`` is the
    scale-free statistic fed to the null mixture.
    """
    n, k = design.n, design.k
    if n <= k:
        raise DataError(f"need more observations than coefficients (n={n}, k={k})")
    fit_unc = fit_unconstrained(design, y)
    fit_ineq = fit_inequality(design, y)
    fit_eq = fit_equality(design, y)
    diff = fit_ineq.theta - fit_eq.theta
    delta = float(diff @ design.gram @ diff)
    # Snap roundoff-sized deviations before forming the ratio: when the
    # data are themselves noiseless (rss = 0) the raw ratio is 0/0.
    if delta <= EBAR_TOL * max(1.0, float(y @ y)):
        delta = 0.0
    denom = delta + fit_unc.rss
    ebar = delta / denom if denom > 0.0 else 0.0
    if ebar < EBAR_TOL:
        ebar = 0.0
    lr = fit_eq.rss - fit_ineq.rss
    return lr, ebar, fit_ineq, fit_eq, fit_unc


def _mixture_params(weights: ChibarWeights, n: int, k: int, variant: str):
    if variant not in VARIANTS:
        raise DataError(f"unknown mixture variant {variant!r}; expected one of {VARIANTS}")
    if n <= k:
        raise DataError(f"need more observations than coefficients (n={n}, k={k})")
    b = 0.5 * (n - k)
    hs = np.arange(weights.p + 1)
    if variant == "test":
        # h = 0 contributes a point mass at zero, handled by the caller.
        a = 0.5 * hs[1:]
        return weights.w[0], weights.w[1:], a, b
    a = 0.5 * (hs + 1.0)
    return 0.0, weights.w, a, b


def mixture_survival(x: float, weights: ChibarWeights, n: int, k: int, variant: str = "test") -> float:
    """P(statistic > x) under the null mixture."""
    w0, w, a, b = _mixture_params(weights, n, k, variant)
    if x < 0.0:
        return 1.0
    if x >= 1.0:
        return 0.0
    tail = float(np.sum(w * stats.beta.sf(x, a, b))) if w.size else 0.0
    if x == 0.0 and variant == "test":
        # point mass sits at zero; the survival at 0 excludes it
        return tail
    return tail


def mixture_pvalue(ebar: float, weights: ChibarWeights, n: int, k: int, variant: str = "test") -> float:
    """P(statistic >= observed) including any point mass at zero."""
    w0, w, a, b = _mixture_params(weights, n, k, variant)
    if ebar <= 0.0:
        return 1.0
    if ebar >= 1.0:
        ebar = 1.0
    tail = float(np.sum(w * stats.beta.sf(ebar, a, b))) if w.size else 0.0
    return min(1.0, tail)


def mixture_quantile(prob: float, weights: ChibarWeights, n: int, k: int, variant: str = "band") -> float:
    """Smallest x with CDF(x) >= prob; used at prob = 1 - alpha."""
    if not 0.0 < prob < 1.0:
        raise DataError(f"quantile level must lie in (0, 1), got {prob}")
    w0, w, a, b = _mixture_params(weights, n, k, variant)
    if prob <= w0:
        return 0.0

    def cdf_gap(x: float) -> float:
        return (1.0 - mixture_survival(x, weights, n, k, variant)) - prob

    lo, hi = 0.0, 1.0 - 1e-15
    if cdf_gap(hi) < 0.0:
        return 1.0
    return float(optimize.brentq(cdf_gap, lo, hi, xtol=1e-13, rtol=1e-12))


def plrs_test(design: DesignSystem, y: np.ndarray, weights: ChibarWeights) -> TestResult:
    """Full test: fits, statistic, and mixture p-value."""
    lr, ebar, fit_ineq, fit_eq, _ = ebar_statistic(design, y)
    pvalue = mixture_pvalue(ebar, weights, design.n, design.k, variant="test")
    return TestResult(
        lr=lr,
        ebar=ebar,
        pvalue=pvalue,
        df_residual=design.n - design.k,
        fit_ineq=fit_ineq,
        fit_eq=fit_eq,
    )


def bh_qvalues(pvalues) -> np.ndarray:
    """Benjamini-Hochberg q-values: monotone min-from-the-right, clipped at 1."""
    p = np.asarray(pvalues, dtype=float)
    if p.ndim != 1:
        raise DataError("p-values must be a one-dimensional array")
    if p.size == 0:
        return np.empty(0, dtype=float)
    if np.any(~np.isfinite(p)) or np.any(p < 0.0) or np.any(p > 1.0):
        raise DataError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    ranked = p[order] * m / np.arange(1, m + 1)
    ranked = np.minimum.accumulate(ranked[::-1])[::-1]
    q = np.empty(m, dtype=float)
    q[order] = np.clip(ranked, 0.0, 1.0)
    return q
