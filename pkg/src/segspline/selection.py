"""Submodel scoring and selection.

Every submodel of a gene's spline family is fitted under its restricted
sign constraints and scored by three criteria.  AIC and BIC use the
classical complexity counts; the one-sided criterion replaces the count
of coefficients by its expectation under the constraint cone,

    penalty = sum_h w(p, h) * (k - p + h),

where the level probabilities ``w(p, h)`` come from the submodel's own
constraint geometry.  With no constraints the penalty collapses to ``k``
and the criterion equals AIC.  All criteria are evaluated at the
constrained fit; AIC and the one-sided criterion live on the
``-loglik + penalty`` scale while BIC uses ``-2 loglik + log(n) k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chibar import ChibarWeights, level_weights
from .errors import DataError
from .model import (
    DesignSystem,
    GeneRecord,
    KnotSet,
    SplineSpec,
    basis_matrix,
    build_design,
    enumerate_submodels,
    full_constraints,
    restrict_constraints,
)
from .solver import FitResult, fit_inequality

MODEL_CLASSES = ("intercept", "simple-linear", "piecewise-level", "piecewise-linear")

CRITERIA = ("osaic", "aic", "bic")


def classify_spec(spec: SplineSpec) -> str:
    """Shape class of a submodel from its retained terms.

    Any degree-one knot term makes the fit piecewise linear; otherwise a
    retained jump makes it piecewise level; otherwise the ``x`` term alone
    is simple linear and the bare intercept is flat.
    """
    inc = spec.included
    if any(inc[3::2]):
        return "piecewise-linear"
    if any(inc[2::2]):
        return "piecewise-level"
    if inc[1]:
        return "simple-linear"
    return "intercept"


def aic(loglik: float, k: int) -> float:
    return -loglik + k


def bic(loglik: float, k: int, n: int) -> float:
    return -2.0 * loglik + math.log(n) * k


def osaic_penalty(weights: ChibarWeights, k: int) -> float:
    """Expected effective dimension ``sum_h w(p, h) (k - p + h)``."""
    p = weights.p
    return float(np.sum(weights.w * (k - p + np.arange(p + 1))))


def osaic(loglik: float, weights: ChibarWeights, k: int) -> float:
    return -loglik + osaic_penalty(weights, k)


@dataclass(frozen=True)
class SubmodelScore:
    """One row of the selection table."""

    spec: SplineSpec
    fit: FitResult
    weights: ChibarWeights
    k: int
    p: int
    osaic: float
    aic: float
    bic: float
    model_class: str

    @property
    def mask_index(self) -> int:
        return self.spec.mask_index

    def score(self, criterion: str) -> float:
        if criterion not in CRITERIA:
            raise DataError(f"unknown criterion {criterion!r}; expected one of {CRITERIA}")
        return getattr(self, criterion)


@dataclass(frozen=True)
class SelectionResult:
    """Scores for every submodel plus the winner under each criterion."""

    scores: tuple
    winners: dict

    def winner(self, criterion: str) -> SubmodelScore:
        if criterion not in self.winners:
            raise DataError(f"unknown criterion {criterion!r}; expected one of {CRITERIA}")
        return self.winners[criterion]


def submodel_designs(record: GeneRecord, knotset: KnotSet):
    """Yield ``(spec, design)`` for every submodel, sharing one basis.

    The full design is validated once; submodels are column subsets, so
    they inherit full column rank and non-degeneracy.
    """
    specs = enumerate_submodels(knotset)
    full = specs[-1]
    design_full = build_design(record, full)  # validates rank and columns
    basis = basis_matrix(record.x, knotset)
    gram_full = basis.T @ basis
    C_full = full_constraints(knotset)
    for spec in specs:
        mask = np.asarray(spec.included, dtype=bool)
        if mask.all():
            yield spec, design_full
            continue
        X = basis[:, mask]
        gram = gram_full[np.ix_(mask, mask)]
        C = restrict_constraints(C_full, mask)
        yield spec, DesignSystem(X=X, C=C, gram=gram)


def select(
    record: GeneRecord,
    knotset: KnotSet,
    criterion: str = "osaic",
    mc_draws: int = 10_000,
    seed=0,
    weight_cache: dict | None = None,
) -> SelectionResult:
    """Fit and score every submodel; return the table and the winners.

    Ties are broken toward fewer coefficients and then the canonical
    submodel order.  ``weight_cache`` (keyed by mask index) lets repeated
    calls on the same gene reuse Monte Carlo level probabilities.
    """
    if criterion not in CRITERIA:
        raise DataError(f"unknown criterion {criterion!r}; expected one of {CRITERIA}")
    y = record.y
    n = record.n
    rows = []
    for spec, design in submodel_designs(record, knotset):
        fit = fit_inequality(design, y)
        key = spec.mask_index
        if weight_cache is not None and key in weight_cache:
            weights = weight_cache[key]
        else:
            sub_seed = np.random.SeedSequence([_seed_entropy(seed), key])
            weights = level_weights(design.C, design.gram, n_draws=mc_draws, seed=sub_seed)
            if weight_cache is not None:
                weight_cache[key] = weights
        rows.append(
            SubmodelScore(
                spec=spec,
                fit=fit,
                weights=weights,
                k=design.k,
                p=design.q,
                osaic=osaic(fit.loglik, weights, design.k),
                aic=aic(fit.loglik, design.k),
                bic=bic(fit.loglik, design.k, n),
                model_class=classify_spec(spec),
            )
        )
    winners = {
        crit: min(rows, key=lambda r: (r.score(crit), r.k, r.mask_index))
        for crit in CRITERIA
    }
    return SelectionResult(scores=tuple(rows), winners=winners)


def _seed_entropy(seed) -> int:
    if isinstance(seed, np.random.SeedSequence):
        return int(seed.generate_state(1, dtype=np.uint64)[0])
    return int(seed)
