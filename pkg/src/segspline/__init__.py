"""Constrained piecewise-linear spline models for DNA copy number and
mRNA expression: per-gene fitting under biological sign constraints,
one-sided model selection, cone-aware testing with FDR control, and
uniform confidence bands."""

__version__ = "0.1.0"

from .bands import BandGrid, BandRegion, band_at, band_grid, linear_extremes, region_params
from .chibar import ChibarWeights, level_weights, weights_exact_small, weights_mc
from .errors import DataError, DesignError, OrderingError, SegsplineError, SolverError
from .inference import (
    TestResult,
    bh_qvalues,
    ebar_statistic,
    mixture_pvalue,
    mixture_quantile,
    mixture_survival,
    plrs_test,
)
from .io import Dataset, ingest, parse_config_file
from .knots import knots_for_record, knots_method1, knots_method2
from .model import (
    DesignSystem,
    GeneRecord,
    KnotSet,
    SplineSpec,
    StateMerge,
    basis_matrix,
    build_design,
    enumerate_submodels,
    full_constraints,
    full_spec,
    merge_sparse_states,
    predict,
    restrict_constraints,
    segment_slopes,
    submodel_masks,
)
from .screen import ScreenConfig, ScreenResult, resolve_config, screen, screen_gene
from .selection import (
    CRITERIA,
    MODEL_CLASSES,
    SelectionResult,
    SubmodelScore,
    aic,
    bic,
    classify_spec,
    osaic,
    osaic_penalty,
    select,
)
from .simbench import (
    make_screen_corpus,
    sim_coverage,
    sim_null_calibration,
    sim_point_estimation,
    sim_test_shapes,
)
from .solver import (
    FitResult,
    fit_equality,
    fit_inequality,
    fit_unconstrained,
    gaussian_loglik,
    project_cone,
)
from .svgplot import svg_band_plot

__all__ = [
    "__version__",
    "BandGrid",
    "BandRegion",
    "ChibarWeights",
    "DataError",
    "Dataset",
    "DesignError",
    "DesignSystem",
    "FitResult",
    "GeneRecord",
    "KnotSet",
    "OrderingError",
    "ScreenConfig",
    "ScreenResult",
    "SegsplineError",
    "SelectionResult",
    "SolverError",
    "SplineSpec",
    "StateMerge",
    "SubmodelScore",
    "TestResult",
    "CRITERIA",
    "MODEL_CLASSES",
    "aic",
    "band_at",
    "band_grid",
    "basis_matrix",
    "bh_qvalues",
    "bic",
    "build_design",
    "classify_spec",
    "ebar_statistic",
    "enumerate_submodels",
    "fit_equality",
    "fit_inequality",
    "fit_unconstrained",
    "full_constraints",
    "full_spec",
    "gaussian_loglik",
    "ingest",
    "knots_for_record",
    "knots_method1",
    "knots_method2",
    "level_weights",
    "linear_extremes",
    "make_screen_corpus",
    "merge_sparse_states",
    "mixture_pvalue",
    "mixture_quantile",
    "mixture_survival",
    "osaic",
    "osaic_penalty",
    "parse_config_file",
    "plrs_test",
    "predict",
    "project_cone",
    "region_params",
    "restrict_constraints",
    "resolve_config",
    "screen",
    "screen_gene",
    "segment_slopes",
    "select",
    "sim_coverage",
    "sim_null_calibration",
    "sim_point_estimation",
    "sim_test_shapes",
    "submodel_masks",
    "svg_band_plot",
    "weights_exact_small",
    "weights_mc",
]
