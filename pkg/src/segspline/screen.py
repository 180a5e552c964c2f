"""Genome-wide screening: knots, selection, test, FDR, reports.

Per gene the pipeline merges sparse states (a looser threshold for
modelling than for testing), places knots, scores every submodel under
the three criteria, and tests flat against the constrained full model.
Benjamini-Hochberg q-values are computed across all genes whose test
ran.  Failures are quarantined to a rejects table; the run continues.

Output rows plus rejects always account for every input gene, and the
summary block is re-derivable from the row file alone; ``audit_rows``
checks exactly that.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .chibar import level_weights
from .errors import DataError, SegsplineError
from .inference import bh_qvalues, plrs_test
from .io import Dataset, format_value, write_tsv
from .knots import knots_for_record
from .model import GeneRecord, build_design, full_spec, merge_sparse_states
from .selection import CRITERIA, MODEL_CLASSES, select

CONFIG_KEYS = (
    "knot_method",
    "criterion",
    "min_obs_per_state_model",
    "min_obs_per_state_test",
    "alpha",
    "fdr_threshold",
    "mc_draws",
    "seed",
    "threads",
    "lm_test",
)

ENV_PREFIX = "SEGSPLINE_"

COEF_COLUMNS = (
    "coef_const",
    "coef_x",
    "coef_jump1",
    "coef_hinge1",
    "coef_jump2",
    "coef_hinge2",
    "coef_jump3",
    "coef_hinge3",
)

# canonical basis term names behind the coefficient columns
_COEF_TERMS = ("1", "x", "(x-a1)^0", "(x-a1)^1", "(x-a2)^0", "(x-a2)^1", "(x-a3)^0", "(x-a3)^1")

ROW_HEADER = (
    "gene_id",
    "n",
    "n_states",
    "knots",
    "model_class",
    "class_osaic",
    "class_aic",
    "class_bic",
    "osaic",
    "aic",
    "bic",
    *COEF_COLUMNS,
    "ebar",
    "pvalue",
    "qvalue",
    "lm_pvalue",
    "merged",
    "flag",
)


@dataclass(frozen=True)
class ScreenConfig:
    knot_method: int = 1
    criterion: str = "osaic"
    min_obs_per_state_model: int = 3
    min_obs_per_state_test: int = 5
    alpha: float = 0.05
    fdr_threshold: float = 0.1
    mc_draws: int = 10_000
    seed: int = 1
    threads: int = 1
    lm_test: bool = False

    def __post_init__(self):
        if self.knot_method not in (1, 2):
            raise DataError(f"knot_method must be 1 or 2, got {self.knot_method}")
        if self.criterion not in CRITERIA:
            raise DataError(f"criterion must be one of {CRITERIA}, got {self.criterion!r}")
        if not 0.0 < self.alpha < 1.0:
            raise DataError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0.0 < self.fdr_threshold <= 1.0:
            raise DataError(f"fdr_threshold must lie in (0, 1], got {self.fdr_threshold}")
        for key in ("min_obs_per_state_model", "min_obs_per_state_test", "mc_draws", "threads"):
            if int(getattr(self, key)) < 1:
                raise DataError(f"{key} must be a positive integer")


_BOOL_TOKENS = {"1": True, "true": True, "yes": True, "0": False, "false": False, "no": False}


def _coerce(key: str, raw: str):
    if key in ("knot_method", "min_obs_per_state_model", "min_obs_per_state_test", "mc_draws",
               "seed", "threads"):
        try:
            return int(raw)
        except ValueError:
            raise DataError(f"config key {key} expects an integer, got {raw!r}") from None
    if key in ("alpha", "fdr_threshold"):
        try:
            return float(raw)
        except ValueError:
            raise DataError(f"config key {key} expects a number, got {raw!r}") from None
    if key == "lm_test":
        token = raw.strip().lower()
        if token not in _BOOL_TOKENS:
            raise DataError(f"config key lm_test expects a boolean, got {raw!r}")
        return _BOOL_TOKENS[token]
    if key == "criterion":
        return raw.strip().lower()
    raise DataError(f"unknown config key {key!r}; known keys: {', '.join(CONFIG_KEYS)}")


def resolve_config(file_values: dict | None = None, environ=None, overrides: dict | None = None) -> ScreenConfig:
    """Defaults < config file < environment < explicit overrides."""
    values: dict = {}
    for key, raw in (file_values or {}).items():
        if key not in CONFIG_KEYS:
            raise DataError(f"unknown config key {key!r}; known keys: {', '.join(CONFIG_KEYS)}")
        values[key] = _coerce(key, raw)
    environ = os.environ if environ is None else environ
    for key in CONFIG_KEYS:
        raw = environ.get(ENV_PREFIX + key.upper())
        if raw is not None:
            values[key] = _coerce(key, raw)
    for key, val in (overrides or {}).items():
        if key not in CONFIG_KEYS:
            raise DataError(f"unknown config key {key!r}; known keys: {', '.join(CONFIG_KEYS)}")
        if val is not None:
            values[key] = _coerce(key, val) if isinstance(val, str) else val
    return ScreenConfig(**values)


@dataclass
class GeneOutcome:
    """Everything the report needs about one gene; qvalue filled in later."""

    gene_id: str
    n: int
    n_states: int
    knots: tuple
    model_class: str
    class_by_criterion: dict
    scores: dict
    coefficients: dict
    ebar: float | None
    pvalue: float | None
    qvalue: float | None = None
    lm_pvalue: float | None = None
    merged: bool = False
    flag: str = "ok"


@dataclass(frozen=True)
class ScreenSummary:
    n_input: int
    n_rows: int
    n_rejected: int
    class_counts: dict
    n_tested: int
    fdr_threshold: float
    n_discoveries: int
    n_lm_discoveries: int | None


@dataclass(frozen=True)
class ScreenResult:
    outcomes: tuple
    rejects: tuple
    summary: ScreenSummary


def _gene_seed_entropy(base_seed: int, gene_index: int) -> int:
    ss = np.random.SeedSequence([int(base_seed), int(gene_index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _lm_pvalue(record: GeneRecord) -> float:
    """Classical two-sided test of zero slope in y = b0 + b1 x."""
    n = record.n
    if n <= 2:
        return float("nan")
    X = np.column_stack([np.ones(n), record.x])
    theta, *_ = np.linalg.lstsq(X, record.y, rcond=None)
    resid = record.y - X @ theta
    rss1 = float(resid @ resid)
    rss0 = float(np.sum((record.y - record.y.mean()) ** 2))
    if rss1 <= 0.0:
        return 0.0 if rss0 > rss1 else 1.0
    f = (rss0 - rss1) / (rss1 / (n - 2))
    return float(stats.f.sf(f, 1, n - 2))


def screen_gene(record: GeneRecord, gene_id: str, gene_index: int, config: ScreenConfig) -> GeneOutcome:
    """Run the full per-gene pipeline; raises on unusable genes."""
    entropy = _gene_seed_entropy(config.seed, gene_index)

    merge_model = merge_sparse_states(record, config.min_obs_per_state_model)
    knotset = knots_for_record(record, config.knot_method, merge_model)
    cache: dict = {}
    selection = select(
        record,
        knotset,
        criterion=config.criterion,
        mc_draws=config.mc_draws,
        seed=entropy,
        weight_cache=cache,
    )
    chosen = selection.winner(config.criterion)
    coefficients = dict(zip(chosen.spec.term_names(), chosen.fit.theta))

    outcome = GeneOutcome(
        gene_id=gene_id,
        n=record.n,
        n_states=len(merge_model.groups),
        knots=tuple(float(a) for a in knotset.knots),
        model_class=chosen.model_class,
        class_by_criterion={c: selection.winner(c).model_class for c in CRITERIA},
        scores={c: chosen.score(c) for c in CRITERIA},
        coefficients=coefficients,
        ebar=None,
        pvalue=None,
        merged=merge_model.merged,
    )

    # testing uses its own, stricter merge
    try:
        merge_test = merge_sparse_states(record, config.min_obs_per_state_test)
        knots_test = knots_for_record(record, config.knot_method, merge_test)
        spec_test = full_spec(knots_test)
        design_test = build_design(record, spec_test)
        if knots_test.knots == knotset.knots and spec_test.mask_index in cache:
            weights = cache[spec_test.mask_index]
        else:
            sub_seed = np.random.SeedSequence([entropy, spec_test.mask_index])
            weights = level_weights(
                design_test.C, design_test.gram, n_draws=config.mc_draws, seed=sub_seed
            )
        result = plrs_test(design_test, record.y, weights)
        outcome.ebar = result.ebar
        outcome.pvalue = result.pvalue
    except SegsplineError as exc:
        outcome.flag = f"test skipped: {exc}"

    if config.lm_test:
        outcome.lm_pvalue = _lm_pvalue(record)
    return outcome


def screen(dataset: Dataset, config: ScreenConfig) -> ScreenResult:
    """Screen every gene; quarantine failures; attach BH q-values."""
    if config.knot_method == 2:
        missing = [g for g, r in zip(dataset.gene_ids, dataset.records) if r.callprobs is None]
        if missing:
            raise DataError(
                "knot method 2 needs membership probabilities; "
                f"{len(missing)} genes lack them (first: {missing[0]})"
            )

    def run_one(item):
        index, gene_id, record = item
        try:
            return screen_gene(record, gene_id, index, config)
        except SegsplineError as exc:
            return (gene_id, str(exc))

    items = list(zip(range(dataset.n_genes), dataset.gene_ids, dataset.records))
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(run_one, items))
    else:
        results = [run_one(item) for item in items]

    outcomes = [r for r in results if isinstance(r, GeneOutcome)]
    rejects = list(dataset.dropped) + [r for r in results if not isinstance(r, GeneOutcome)]

    tested = [o for o in outcomes if o.pvalue is not None]
    if tested:
        qvals = bh_qvalues([o.pvalue for o in tested])
        for o, q in zip(tested, qvals):
            o.qvalue = float(q)

    class_counts = {
        crit: {cls: 0 for cls in MODEL_CLASSES} for crit in CRITERIA
    }
    for o in outcomes:
        for crit in CRITERIA:
            class_counts[crit][o.class_by_criterion[crit]] += 1

    n_disc = sum(1 for o in tested if o.qvalue is not None and o.qvalue < config.fdr_threshold)
    n_lm = None
    if config.lm_test:
        lm_ps = [o.lm_pvalue for o in outcomes if o.lm_pvalue is not None and np.isfinite(o.lm_pvalue)]
        if lm_ps:
            lm_qs = bh_qvalues(lm_ps)
            n_lm = int(np.sum(lm_qs < config.fdr_threshold))
        else:
            n_lm = 0

    n_input = dataset.n_genes + len(dataset.dropped)
    summary = ScreenSummary(
        n_input=n_input,
        n_rows=len(outcomes),
        n_rejected=len(rejects),
        class_counts=class_counts,
        n_tested=len(tested),
        fdr_threshold=config.fdr_threshold,
        n_discoveries=n_disc,
        n_lm_discoveries=n_lm,
    )
    return ScreenResult(outcomes=tuple(outcomes), rejects=tuple(rejects), summary=summary)


def outcome_row(o: GeneOutcome) -> tuple:
    coef = [o.coefficients.get(term) for term in _COEF_TERMS]
    return (
        o.gene_id,
        o.n,
        o.n_states,
        ";".join(format(a, ".10g") for a in o.knots) if o.knots else None,
        o.model_class,
        o.class_by_criterion["osaic"],
        o.class_by_criterion["aic"],
        o.class_by_criterion["bic"],
        o.scores["osaic"],
        o.scores["aic"],
        o.scores["bic"],
        *coef,
        o.ebar,
        o.pvalue,
        o.qvalue,
        o.lm_pvalue,
        int(o.merged),
        o.flag,
    )


def write_screen_output(result: ScreenResult, out_prefix: str):
    """Write rows, rejects and summary; returns the three paths."""
    rows_path = out_prefix + "_genes.tsv"
    rejects_path = out_prefix + "_rejects.tsv"
    summary_path = out_prefix + "_summary.txt"
    write_tsv(rows_path, ROW_HEADER, (outcome_row(o) for o in result.outcomes))
    write_tsv(rejects_path, ("gene_id", "reason"), result.rejects)
    audit_ok = audit_rows(rows_path, result.summary)
    text = summary_text(result.summary, audit_ok)
    with open(summary_path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return rows_path, rejects_path, summary_path


def summary_text(summary: ScreenSummary, audit_ok: bool | None = None) -> str:
    lines = [
        f"genes read\t{summary.n_input}",
        f"rows written\t{summary.n_rows}",
        f"rejected\t{summary.n_rejected}",
    ]
    for crit in CRITERIA:
        counts = summary.class_counts[crit]
        joined = "\t".join(f"{cls}={counts[cls]}" for cls in MODEL_CLASSES)
        lines.append(f"selected[{crit}]\t{joined}")
    lines.append(f"tested genes\t{summary.n_tested}")
    lines.append(
        f"q<{format_value(summary.fdr_threshold)} (plrs)\t{summary.n_discoveries}"
    )
    if summary.n_lm_discoveries is not None:
        lines.append(
            f"q<{format_value(summary.fdr_threshold)} (lm)\t{summary.n_lm_discoveries}"
        )
    if audit_ok is not None:
        lines.append(f"audit\t{'OK' if audit_ok else 'MISMATCH'}")
    return "\n".join(lines) + "\n"


def audit_rows(rows_path: str, summary: ScreenSummary) -> bool:
    """Recompute the summary counts from the written row file."""
    with open(rows_path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        return False
    header = lines[0].split("\t")
    idx = {name: i for i, name in enumerate(header)}
    counts = {crit: {cls: 0 for cls in MODEL_CLASSES} for crit in CRITERIA}
    n_rows = 0
    n_tested = 0
    n_disc = 0
    for line in lines[1:]:
        if not line.strip():
            continue
        cells = line.split("\t")
        n_rows += 1
        for crit in CRITERIA:
            counts[crit][cells[idx[f"class_{crit}"]]] += 1
        qcell = cells[idx["qvalue"]]
        if cells[idx["pvalue"]] != "NA":
            n_tested += 1
        if qcell != "NA" and float(qcell) < summary.fdr_threshold:
            n_disc += 1
    return (
        n_rows == summary.n_rows
        and n_tested == summary.n_tested
        and n_disc == summary.n_discoveries
        and counts == summary.class_counts
    )
