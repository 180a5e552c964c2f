"""Command-line interface.

Subcommands: ``screen`` (whole-corpus pipeline), ``fit`` (one gene,
printed selection table), ``bands`` (one gene, TSV + SVG band files),
``simulate`` (simulation tables and the demo corpus).  Configuration
merges, in increasing precedence: built-in defaults, a ``key=value``
config file, ``SEGSPLINE_*`` environment variables, command-line flags.

Exit codes: 0 success (warnings allowed), 2 input or configuration
error, 3 internal numerical failure that kills an entire run.

Output formats are documented in FORMATS.md.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__
from .bands import band_grid
from .chibar import level_weights
from .errors import DataError, SegsplineError
from .io import Dataset, ingest, parse_config_file, write_band_table, write_tsv
from .knots import knots_for_record
from .model import build_design, full_spec, merge_sparse_states
from .screen import CRITERIA, ScreenConfig, resolve_config, screen, write_screen_output
from .selection import select
from .simbench import (
    make_screen_corpus,
    sim_coverage,
    sim_point_estimation,
    sim_test_shapes,
)
from .svgplot import svg_band_plot, write_svg


def _add_input_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--expr", required=True, help="expression matrix TSV (features x samples)")
    parser.add_argument("--seg", required=True, help="segmented copy-number matrix TSV")
    parser.add_argument("--calls", help="called-state matrix TSV with values in {-1,0,1,2}")
    parser.add_argument(
        "--probs",
        nargs=4,
        metavar=("LOSS", "NORMAL", "GAIN", "AMP"),
        help="four per-state membership-probability matrices",
    )
    parser.add_argument(
        "--probs-long",
        help="long-format probability TSV (feature, sample, loss, normal, gain, amp)",
    )


def _add_config_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="key=value configuration file")
    parser.add_argument("--knot-method", type=int, choices=(1, 2), dest="knot_method")
    parser.add_argument("--criterion", choices=CRITERIA)
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--fdr-threshold", type=float, dest="fdr_threshold")
    parser.add_argument("--mc-draws", type=int, dest="mc_draws")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--threads", type=int)
    parser.add_argument("--min-obs-model", type=int, dest="min_obs_per_state_model")
    parser.add_argument("--min-obs-test", type=int, dest="min_obs_per_state_test")
    parser.add_argument(
        "--lm-test", action="store_const", const=True, dest="lm_test",
        help="also run the straight-line F test per gene",
    )


_CONFIG_DESTS = (
    "knot_method",
    "criterion",
    "alpha",
    "fdr_threshold",
    "mc_draws",
    "seed",
    "threads",
    "min_obs_per_state_model",
    "min_obs_per_state_test",
    "lm_test",
)


def _config_from_args(args) -> ScreenConfig:
    file_values = parse_config_file(args.config) if getattr(args, "config", None) else None
    overrides = {key: getattr(args, key, None) for key in _CONFIG_DESTS}
    return resolve_config(file_values=file_values, overrides=overrides)


def _ingest_from_args(args) -> Dataset:
    return ingest(
        args.expr,
        args.seg,
        calls_path=args.calls,
        probs_paths=args.probs,
        probs_long_path=args.probs_long,
    )


def _gene_index(dataset: Dataset, gene_id: str) -> int:
    try:
        return dataset.gene_ids.index(gene_id)
    except ValueError:
        raise DataError(f"unknown gene id {gene_id!r}") from None


def _cmd_screen(args) -> int:
    config = _config_from_args(args)
    dataset = _ingest_from_args(args)
    result = screen(dataset, config)
    rows_path, rejects_path, summary_path = write_screen_output(result, args.out)
    with open(summary_path, "r", encoding="utf-8") as fh:
        sys.stdout.write(fh.read())
    print(f"rows: {rows_path}")
    print(f"rejects: {rejects_path}")
    if result.summary.n_rows == 0 and result.summary.n_input > 0:
        print("every gene failed; see the rejects table", file=sys.stderr)
        return 3
    return 0


def _cmd_fit(args) -> int:
    config = _config_from_args(args)
    dataset = _ingest_from_args(args)
    index = _gene_index(dataset, args.gene)
    record = dataset.records[index]
    merge = merge_sparse_states(record, config.min_obs_per_state_model)
    knotset = knots_for_record(record, config.knot_method, merge)
    entropy = int(np.random.SeedSequence([config.seed, index]).generate_state(1, dtype=np.uint64)[0])
    selection = select(
        record, knotset, criterion=config.criterion, mc_draws=config.mc_draws, seed=entropy
    )
    print(f"gene\t{args.gene}")
    print(f"n\t{record.n}")
    knots_str = ";".join(format(a, ".10g") for a in knotset.knots) if knotset.knots else "NA"
    print(f"knots\t{knots_str}")
    print("mask\tclass\tk\tosaic\taic\tbic")
    for row in selection.scores:
        print(
            f"{row.mask_index}\t{row.model_class}\t{row.k}"
            f"\t{row.osaic:.6g}\t{row.aic:.6g}\t{row.bic:.6g}"
        )
    for crit in CRITERIA:
        winner = selection.winner(crit)
        print(f"winner[{crit}]\t{winner.model_class}\tmask={winner.mask_index}")
    chosen = selection.winner(config.criterion)
    for name, value in zip(chosen.spec.term_names(), chosen.fit.theta):
        print(f"coef[{name}]\t{value:.10g}")
    return 0


def _cmd_bands(args) -> int:
    config = _config_from_args(args)
    dataset = _ingest_from_args(args)
    index = _gene_index(dataset, args.gene)
    record = dataset.records[index]
    merge = merge_sparse_states(record, config.min_obs_per_state_model)
    knotset = knots_for_record(record, config.knot_method, merge)
    spec = full_spec(knotset)
    design = build_design(record, spec)
    entropy = int(np.random.SeedSequence([config.seed, index]).generate_state(1, dtype=np.uint64)[0])
    weights = level_weights(
        design.C,
        design.gram,
        n_draws=config.mc_draws,
        seed=np.random.SeedSequence([entropy, spec.mask_index]),
    )
    grid = band_grid(
        design, record.y, knotset, weights, alpha=config.alpha, n_points=args.grid_size
    )
    tsv_path = args.out + "_band.tsv"
    svg_path = args.out + "_band.svg"
    write_band_table(tsv_path, grid, knotset)
    write_svg(svg_path, svg_band_plot(record, grid, knotset, title=args.gene))
    print(f"band table: {tsv_path}")
    print(f"plot: {svg_path}")
    return 0


def _cmd_simulate(args) -> int:
    if args.study == "point":
        table = sim_point_estimation(reps=args.reps or 1000, seed=args.seed)
    elif args.study == "coverage":
        table = sim_coverage(reps=args.reps or 2000, seed=args.seed)
    elif args.study == "shapes":
        table = sim_test_shapes(reps=args.reps or 500, seed=args.seed)
    elif args.study == "corpus":
        paths = make_screen_corpus(args.out, n_genes=args.genes, seed=args.seed)
        for name, path in paths.items():
            print(f"{name}: {path}")
        return 0
    else:  # unreachable with argparse choices
        raise DataError(f"unknown study {args.study!r}")
    out_path = args.out + f"_{args.study}.tsv"
    write_tsv(out_path, table.header, table.rows)
    print(f"table: {out_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segspline",
        description=(
            "Constrained piecewise-linear spline models linking DNA copy number "
            "to mRNA expression: per-gene fits, model selection, testing with "
            "FDR control, and uniform confidence bands."
        ),
        epilog="Tables are TSV with NA for missing values; see FORMATS.md.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_screen = sub.add_parser("screen", help="run the full per-gene pipeline over a corpus")
    _add_input_flags(p_screen)
    _add_config_flags(p_screen)
    p_screen.add_argument("--out", required=True, help="output path prefix")
    p_screen.set_defaults(func=_cmd_screen)

    p_fit = sub.add_parser("fit", help="fit one gene and print its selection table")
    _add_input_flags(p_fit)
    _add_config_flags(p_fit)
    p_fit.add_argument("--gene", required=True, help="feature id to fit")
    p_fit.set_defaults(func=_cmd_fit)

    p_bands = sub.add_parser("bands", help="confidence band files for one gene")
    _add_input_flags(p_bands)
    _add_config_flags(p_bands)
    p_bands.add_argument("--gene", required=True, help="feature id to plot")
    p_bands.add_argument("--out", required=True, help="output path prefix")
    p_bands.add_argument("--grid-size", type=int, default=100, dest="grid_size")
    p_bands.set_defaults(func=_cmd_bands)

    p_sim = sub.add_parser("simulate", help="simulation studies and the demo corpus")
    p_sim.add_argument("study", choices=("point", "coverage", "shapes", "corpus"))
    p_sim.add_argument("--out", required=True, help="output path prefix (or corpus directory)")
    p_sim.add_argument("--reps", type=int)
    p_sim.add_argument("--seed", type=int, default=1)
    p_sim.add_argument("--genes", type=int, default=500, help="corpus size (corpus study)")
    p_sim.set_defaults(func=_cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SegsplineError as exc:
        print(f"internal failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
