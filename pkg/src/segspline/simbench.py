"""Simulation studies: point estimation, band coverage, test behaviour.

Three reusable experiments plus a corpus generator for end-to-end runs.
Every experiment takes a seed and produces identical tables on identical
inputs; per-replicate streams are derived from the seed and the
replicate index, never from global state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bands import linear_extremes, region_params
from .chibar import level_weights
from .errors import DataError, SegsplineError, SolverError
from .inference import plrs_test
from .knots import knots_for_record
from .model import (
    DesignSystem,
    GeneRecord,
    KnotSet,
    basis_matrix,
    build_design,
    full_constraints,
    full_spec,
    merge_sparse_states,
    restrict_constraints,
)
from .screen import _lm_pvalue
from .solver import fit_inequality, fit_unconstrained

POINT_HEADER = (
    "model",
    "a2",
    "sigma",
    "linear_bias2",
    "linear_var",
    "piecewise_bias2",
    "piecewise_var",
)

COVERAGE_HEADER = ("n", "sigma", "alpha", "coverage", "reps")

SHAPES_HEADER = ("shape", "effect", "alpha", "plrs_rate", "lm_rate", "reps")

SHAPES = ("null", "linear", "level", "partial")


@dataclass(frozen=True)
class SimTable:
    """Rows of one experiment plus the matching TSV header."""

    header: tuple
    rows: tuple


def _truth(model: int, a2: float, x: np.ndarray) -> np.ndarray:
    hinge = np.maximum(x - 0.5, 0.0)
    if model == 1:
        return 1.0 + a2 * hinge
    if model == 2:
        return 1.0 + 0.5 * x + (a2 - 0.5) * hinge
    raise DataError(f"unknown simulation model {model}")


def _single_knot_designs(x: np.ndarray):
    """Full piecewise design at knot 0.5 plus the nested linear design."""
    knotset = KnotSet(knots=(0.5,), state_labels=(0, 1))
    basis = basis_matrix(x, knotset)
    C_full = full_constraints(knotset)
    full = DesignSystem(X=basis, C=C_full)
    mask = np.array([True, True, False, False])
    linear = DesignSystem(
        X=basis[:, :2],
        C=restrict_constraints(C_full, mask),
        gram=full.gram[np.ix_(mask, mask)],
    )
    return full, linear


def sim_point_estimation(
    a2_grid=(0.0, 0.5, 1.0, 2.0, 5.0),
    sigma_grid=(0.1, 0.25, 0.5, 0.75, 1.0),
    reps: int = 1000,
    seed: int = 1,
    models=(1, 2),
    n: int = 80,
    share_design: bool = True,
    constrained: bool = True,
) -> SimTable:
    """Squared bias and variance of the gain-segment slope estimators.

    Data follow a single-knot truth at 0.5 with the gain-segment slope
    equal to ``a2``.  The linear estimator is the slope of the nested
    straight-line fit; the piecewise estimator is the post-knot slope of
    the 4-coefficient fit.  One covariate draw is shared by every cell
    of a model (``share_design``), and both fits respect the sign
    constraints unless ``constrained`` is off.
    """
    rows = []
    for model in models:
        rng_design = np.random.default_rng(np.random.SeedSequence([seed, model, 0]))
        x_shared = rng_design.uniform(0.0, 1.0, size=n)
        cell = 0
        for a2 in a2_grid:
            for sigma in sigma_grid:
                cell += 1
                rng = np.random.default_rng(np.random.SeedSequence([seed, model, cell]))
                x = x_shared if share_design else rng.uniform(0.0, 1.0, size=n)
                full, linear = _single_knot_designs(x)
                f = _truth(model, a2, x)
                est_lin = np.empty(reps)
                est_pw = np.empty(reps)
                for r in range(reps):
                    y = f + sigma * rng.standard_normal(n)
                    if constrained:
                        fit_l = fit_inequality(linear, y)
                        fit_p = fit_inequality(full, y)
                    else:
                        fit_l = fit_unconstrained(linear, y)
                        fit_p = fit_unconstrained(full, y)
                    est_lin[r] = fit_l.theta[1]
                    est_pw[r] = fit_p.theta[1] + fit_p.theta[3]
                rows.append(
                    (
                        model,
                        a2,
                        sigma,
                        float((est_lin.mean() - a2) ** 2),
                        float(est_lin.var(ddof=1)),
                        float((est_pw.mean() - a2) ** 2),
                        float(est_pw.var(ddof=1)),
                    )
                )
    return SimTable(header=POINT_HEADER, rows=tuple(rows))


def _coverage_truth(t: np.ndarray) -> np.ndarray:
    return 1.0 + (t > 0.5).astype(float) + np.maximum(t - 0.5, 0.0)


def sim_coverage(
    n_grid=(20, 40, 80),
    sigma_grid=(0.5, 1.0),
    alpha_grid=(0.05, 0.1),
    reps: int = 2000,
    seed: int = 1,
    grid_points: int = 10,
    grid_range: str = "data",
    mc_draws: int = 10_000,
) -> SimTable:
    """Simultaneous coverage of the band over an equidistant grid.

    Truth is a unit jump plus unit slope change at 0.5.  Each replicate
    redraws the covariate, recalibrates the band, and checks whether all
    grid-point truths lie inside it at once.  ``grid_range`` picks the
    grid span: the observed covariate range (``data``) or ``unit`` for
    [0, 1].
    """
    if grid_range not in ("data", "unit"):
        raise DataError(f"grid_range must be 'data' or 'unit', got {grid_range!r}")
    knotset = KnotSet(knots=(0.5,), state_labels=(0, 1))
    cells = {(n, sig): np.zeros(len(alpha_grid), dtype=int) for n in n_grid for sig in sigma_grid}
    for ni, n in enumerate(n_grid):
        for si, sigma in enumerate(sigma_grid):
            for rep in range(reps):
                rng = np.random.default_rng(np.random.SeedSequence([seed, ni, si, rep, 0]))
                for _ in range(1000):
                    x = rng.uniform(0.0, 1.0, size=n)
                    basis = basis_matrix(x, knotset)
                    if np.linalg.matrix_rank(basis) == basis.shape[1]:
                        break
                else:
                    raise SolverError("could not draw a full-rank coverage design")
                design = DesignSystem(X=basis, C=full_constraints(knotset))
                y = _coverage_truth(x) + sigma * rng.standard_normal(n)
                weights = level_weights(
                    design.C,
                    design.gram,
                    n_draws=mc_draws,
                    seed=np.random.SeedSequence([seed, ni, si, rep, 1]),
                )
                if grid_range == "data":
                    grid = np.linspace(float(x.min()), float(x.max()), grid_points)
                else:
                    grid = np.linspace(0.0, 1.0, grid_points)
                truth = _coverage_truth(grid)
                rows_basis = basis_matrix(grid, knotset)
                stacked = np.vstack([rows_basis, -rows_basis])
                for ai, alpha in enumerate(alpha_grid):
                    region = region_params(design, y, weights, alpha)
                    vals = linear_extremes(stacked, region, design.C)
                    lower = vals[:grid_points]
                    upper = -vals[grid_points:]
                    if np.all((truth >= lower) & (truth <= upper)):
                        cells[(n, sigma)][ai] += 1
    rows = []
    for n in n_grid:
        for sigma in sigma_grid:
            for ai, alpha in enumerate(alpha_grid):
                rows.append((n, sigma, alpha, cells[(n, sigma)][ai] / reps, reps))
    return SimTable(header=COVERAGE_HEADER, rows=tuple(rows))


def _calibration_design(n: int, rng) -> GeneRecord:
    """Three well-separated states, loss through gain, sizes as equal as possible."""
    sizes = [n // 3, n // 3, n - 2 * (n // 3)]
    xs = np.concatenate(
        [
            rng.uniform(-1.0, -0.4, size=sizes[0]),
            rng.uniform(-0.2, 0.2, size=sizes[1]),
            rng.uniform(0.4, 1.0, size=sizes[2]),
        ]
    )
    s = np.concatenate(
        [np.full(sizes[0], -1), np.zeros(sizes[1], dtype=int), np.ones(sizes[2], dtype=int)]
    )
    y = np.zeros(n)
    return GeneRecord(y=y, x=xs, s=s, callprobs=None, sample_ids=None)


def sim_null_calibration(
    n: int = 50,
    reps: int = 2000,
    seed: int = 1,
    sigma: float = 1.0,
    mc_draws: int = 100_000,
    fixed_design: bool = True,
) -> np.ndarray:
    """P-values of the flat-against-constrained test on pure noise.

    A fixed design lets one high-precision weight computation serve all
    replicates; otherwise weights are recomputed per draw.
    """
    rng_design = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    record = _calibration_design(n, rng_design)
    knotset = knots_for_record(record, 1, merge_sparse_states(record, 1))
    design = build_design(record, full_spec(knotset))
    weights = None
    if fixed_design:
        weights = level_weights(
            design.C, design.gram, n_draws=mc_draws, seed=np.random.SeedSequence([seed, 1])
        )
    pvals = np.empty(reps)
    for rep in range(reps):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 2, rep]))
        if not fixed_design:
            record = _calibration_design(n, rng)
            knotset = knots_for_record(record, 1, merge_sparse_states(record, 1))
            design = build_design(record, full_spec(knotset))
            weights = level_weights(
                design.C,
                design.gram,
                n_draws=mc_draws,
                seed=np.random.SeedSequence([seed, 3, rep]),
            )
        y = 1.0 + sigma * rng.standard_normal(n)
        pvals[rep] = plrs_test(design, y, weights).pvalue
    return pvals


def _shape_record(shape: str, effect: float, n: int, sigma: float, rng) -> GeneRecord:
    """Two-state gene with the requested association shape."""
    n_gain = max(5, int(round(0.3 * n)))
    n_norm = n - n_gain
    x = np.concatenate(
        [rng.uniform(-0.25, 0.25, size=n_norm), rng.uniform(0.35, 1.0, size=n_gain)]
    )
    s = np.concatenate([np.zeros(n_norm, dtype=int), np.ones(n_gain, dtype=int)])
    gain = s == 1
    if shape == "null":
        f = np.zeros(n)
    elif shape == "linear":
        f = effect * x
    elif shape == "level":
        f = effect * gain.astype(float)
    elif shape == "partial":
        f = effect * np.where(gain, x - 0.3, 0.0)
    else:
        raise DataError(f"unknown shape {shape!r}; expected one of {SHAPES}")
    y = 1.0 + f + sigma * rng.standard_normal(n)
    return GeneRecord(y=y, x=x, s=s, callprobs=None, sample_ids=None)


def sim_test_shapes(
    shapes=SHAPES,
    effect: float = 1.0,
    reps: int = 500,
    n: int = 80,
    sigma: float = 1.0,
    alphas=(0.05,),
    seed: int = 1,
    mc_draws: int = 10_000,
) -> SimTable:
    """Rejection rates of the constrained test and the straight-line test."""
    rows = []
    for shape_idx, shape in enumerate(shapes):
        plrs_p = np.empty(reps)
        lm_p = np.empty(reps)
        for rep in range(reps):
            rng = np.random.default_rng(np.random.SeedSequence([seed, shape_idx, rep, 0]))
            record = _shape_record(shape, effect, n, sigma, rng)
            knotset = knots_for_record(record, 1, merge_sparse_states(record, 5))
            design = build_design(record, full_spec(knotset))
            weights = level_weights(
                design.C,
                design.gram,
                n_draws=mc_draws,
                seed=np.random.SeedSequence([seed, shape_idx, rep, 1]),
            )
            plrs_p[rep] = plrs_test(design, record.y, weights).pvalue
            lm_p[rep] = _lm_pvalue(record)
        for alpha in alphas:
            rows.append(
                (
                    shape,
                    effect,
                    alpha,
                    float(np.mean(plrs_p < alpha)),
                    float(np.mean(lm_p < alpha)),
                    reps,
                )
            )
    return SimTable(header=SHAPES_HEADER, rows=tuple(rows))


_CORPUS_CLASSES = ("intercept", "simple-linear", "piecewise-level", "piecewise-linear")
_STATE_CENTRES = {-1: -0.55, 0: 0.0, 1: 0.55, 2: 1.15}


def make_screen_corpus(
    out_dir: str,
    n_genes: int = 500,
    n_samples: int = 60,
    seed: int = 1,
    with_probs: bool = False,
):
    """Write a simulated expression/segmentation/calls corpus.

    Gene classes are drawn 40/20/20/20 over flat, linear, level and
    piecewise shapes, each respecting the sign constraints, so a screen
    of the corpus exercises every model class.  Returns the file paths
    and the truth table path.
    """
    import os

    os.makedirs(out_dir, exist_ok=True)
    sample_ids = [f"s{j + 1}" for j in range(n_samples)]
    expr_rows, seg_rows, call_rows, truth_rows = [], [], [], []
    prob_rows = {state: [] for state in _STATE_CENTRES}
    for gi in range(n_genes):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 3, gi]))
        gene = f"g{gi + 1:04d}"
        cls = _CORPUS_CLASSES[int(rng.choice(4, p=[0.4, 0.2, 0.2, 0.2]))]
        states = [(0, 1), (-1, 0), (-1, 0, 1), (0, 1, 2), (-1, 0, 1, 2)][int(rng.choice(5))]
        for _ in range(200):
            counts = rng.multinomial(n_samples, np.ones(len(states)) / len(states))
            if counts.min() >= 6:
                break
        s = np.repeat(states, counts)
        x = np.concatenate(
            [
                rng.uniform(_STATE_CENTRES[c] - 0.15, _STATE_CENTRES[c] + 0.15, size=cnt)
                for c, cnt in zip(states, counts)
            ]
        )
        boundaries = [
            0.5 * (x[s == states[j]].max() + x[s == states[j + 1]].min())
            for j in range(len(states) - 1)
        ]
        sigma = rng.uniform(0.2, 0.5)
        f = np.full(n_samples, rng.uniform(0.5, 2.0))
        if cls == "simple-linear":
            f = f + rng.uniform(0.4, 1.2) * x
        elif cls == "piecewise-level":
            for b in boundaries:
                f = f + rng.uniform(0.4, 1.0) * (x > b)
        elif cls == "piecewise-linear":
            f = f + rng.uniform(0.2, 0.6) * x
            for b in boundaries:
                f = f + rng.uniform(0.1, 0.5) * (x > b)
                f = f + rng.uniform(0.4, 1.2) * np.maximum(x - b, 0.0)
        y = f + sigma * rng.standard_normal(n_samples)
        expr_rows.append([gene, *y])
        seg_rows.append([gene, *x])
        call_rows.append([gene, *s])
        truth_rows.append((gene, cls))
        if with_probs:
            for state in _STATE_CENTRES:
                p = np.where(s == state, 0.85, 0.15 / 3)
                prob_rows[state].append([gene, *p])

    from .io import write_tsv

    header = ["feature", *sample_ids]
    paths = {
        "expr": os.path.join(out_dir, "expression.tsv"),
        "seg": os.path.join(out_dir, "segmented.tsv"),
        "calls": os.path.join(out_dir, "calls.tsv"),
        "truth": os.path.join(out_dir, "truth.tsv"),
    }
    write_tsv(paths["expr"], header, expr_rows)
    write_tsv(paths["seg"], header, seg_rows)
    write_tsv(paths["calls"], header, call_rows)
    write_tsv(paths["truth"], ("gene_id", "model_class"), truth_rows)
    if with_probs:
        names = {-1: "loss", 0: "normal", 1: "gain", 2: "amp"}
        for state, name in names.items():
            path = os.path.join(out_dir, f"probs_{name}.tsv")
            write_tsv(path, header, prob_rows[state])
            paths[f"probs_{name}"] = path
    return paths
