"""Tabular input and output for the screening pipeline.

All tables are tab-separated with a header row.  Matrix inputs put one
feature per row, first column the feature identifier, remaining columns
the samples.  Every input file of a run must list the same samples in
the same order; anything else is a hard error, because silently
reordering expression against copy number would corrupt every gene.

Missing values are written as ``NA`` and accepted as ``NA``/``NaN`` or
an empty cell on input.  A gene with a missing cell is excluded and
counted, never imputed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .model import STATE_CODES, GeneRecord, KnotSet

_MISSING_TOKENS = frozenset({"", "NA", "NaN", "nan", "na"})

PROB_COLUMNS = ("loss", "normal", "gain", "amp")


@dataclass(frozen=True)
class Table:
    """One parsed matrix file: features x samples."""

    ids: tuple
    samples: tuple
    values: np.ndarray  # float matrix, NaN marks missing cells


@dataclass(frozen=True)
class Dataset:
    """Gene records ready for screening, plus the excluded remainder."""

    gene_ids: tuple
    records: tuple
    dropped: tuple  # (gene_id, reason) pairs
    sample_ids: tuple

    @property
    def n_genes(self) -> int:
        return len(self.gene_ids)


def _parse_cell(token: str, path: str, row_id: str, column: str) -> float:
    token = token.strip()
    if token in _MISSING_TOKENS:
        return float("nan")
    try:
        return float(token)
    except ValueError:
        raise DataError(
            f"unparseable value {token!r} at row {row_id!r}, column {column!r} in {path}"
        ) from None


def read_matrix_tsv(path: str) -> Table:
    """Parse a feature-by-sample TSV; duplicate feature ids are rejected."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataError(f"{path} is empty")
    header = lines[0].rstrip("\n").split("\t")
    if len(header) < 2:
        raise DataError(f"{path} needs a feature-id column plus at least one sample column")
    samples = tuple(h.strip() for h in header[1:])
    ids = []
    rows = []
    seen = set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split("\t")
        if len(cells) != len(samples) + 1:
            raise DataError(
                f"{path}:{lineno}: expected {len(samples) + 1} columns, found {len(cells)}"
            )
        gene = cells[0].strip()
        if gene in seen:
            raise DataError(f"{path}: duplicate feature id {gene!r}")
        seen.add(gene)
        ids.append(gene)
        rows.append([_parse_cell(c, path, gene, samples[j]) for j, c in enumerate(cells[1:])])
    values = np.asarray(rows, dtype=float) if rows else np.empty((0, len(samples)))
    return Table(ids=tuple(ids), samples=samples, values=values)


def read_long_probs(path: str):
    """Parse a long-format probability file.

    Columns: feature, sample, then one column per state in the order
    loss, normal, gain, amp.  Returns {gene: {sample: 4-vector}}.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataError(f"{path} is empty")
    header = [h.strip() for h in lines[0].split("\t")]
    expected = ["feature", "sample", *PROB_COLUMNS]
    if header != expected:
        raise DataError(
            f"{path}: long-format probabilities need columns {expected}, found {header}"
        )
    out: dict = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split("\t")
        if len(cells) != 6:
            raise DataError(f"{path}:{lineno}: expected 6 columns, found {len(cells)}")
        gene, sample = cells[0].strip(), cells[1].strip()
        probs = np.array(
            [_parse_cell(c, path, gene, PROB_COLUMNS[j]) for j, c in enumerate(cells[2:])]
        )
        per_gene = out.setdefault(gene, {})
        if sample in per_gene:
            raise DataError(f"{path}: duplicate (feature, sample) pair ({gene!r}, {sample!r})")
        per_gene[sample] = probs
    return out


def _check_same_samples(reference: Table, other: Table, ref_path: str, other_path: str):
    if reference.samples != other.samples:
        raise DataError(
            f"sample columns differ between {ref_path} and {other_path}; "
            "all inputs must list identical samples in identical order"
        )


def _calls_from_floats(row: np.ndarray):
    """Round a float call row to state codes; None if any cell is invalid."""
    rounded = np.rint(row)
    if np.any(np.abs(row - rounded) > 1e-9):
        return None
    s = rounded.astype(int)
    if np.any(~np.isin(s, STATE_CODES)):
        return None
    return s


def ingest(
    expr_path: str,
    seg_path: str,
    calls_path: str | None = None,
    probs_paths=None,
    probs_long_path: str | None = None,
) -> Dataset:
    """Assemble GeneRecords from matched expression / segmentation / call files.

    Calls may come from a matrix of state codes, four per-state
    probability matrices (loss, normal, gain, amp), or one long-format
    probability file.  With probabilities only, hard calls are the
    per-sample argmax.  Genes missing from any input, containing missing
    cells, or failing record validation are dropped with a reason.
    """
    expr = read_matrix_tsv(expr_path)
    seg = read_matrix_tsv(seg_path)
    _check_same_samples(expr, seg, expr_path, seg_path)
    samples = expr.samples

    calls = None
    if calls_path is not None:
        calls = read_matrix_tsv(calls_path)
        _check_same_samples(expr, calls, expr_path, calls_path)

    prob_tables = None
    long_probs = None
    if probs_paths is not None:
        probs_paths = tuple(probs_paths)
        if len(probs_paths) != 4:
            raise DataError(
                "probability input needs exactly four files (loss, normal, gain, amp)"
            )
        prob_tables = tuple(read_matrix_tsv(p) for p in probs_paths)
        for p, tab in zip(probs_paths, prob_tables):
            _check_same_samples(expr, tab, expr_path, p)
    if probs_long_path is not None:
        if prob_tables is not None:
            raise DataError("pass either four probability matrices or one long file, not both")
        long_probs = read_long_probs(probs_long_path)
    if calls is None and prob_tables is None and long_probs is None:
        raise DataError("calls are required: a call matrix or probability input")

    seg_index = {g: i for i, g in enumerate(seg.ids)}
    calls_index = {g: i for i, g in enumerate(calls.ids)} if calls is not None else None
    prob_indices = (
        tuple({g: i for i, g in enumerate(t.ids)} for t in prob_tables)
        if prob_tables is not None
        else None
    )

    gene_ids = []
    records = []
    dropped = []
    for gi, gene in enumerate(expr.ids):
        y = expr.values[gi]
        if gene not in seg_index:
            dropped.append((gene, f"absent from {seg_path}"))
            continue
        x = seg.values[seg_index[gene]]

        callprobs = None
        if prob_indices is not None:
            rows = []
            missing_file = None
            for p, tab, idx in zip(probs_paths, prob_tables, prob_indices):
                if gene not in idx:
                    missing_file = p
                    break
                rows.append(tab.values[idx[gene]])
            if missing_file is not None:
                dropped.append((gene, f"absent from {missing_file}"))
                continue
            callprobs = np.column_stack(rows)
        elif long_probs is not None:
            per_gene = long_probs.get(gene)
            if per_gene is None:
                dropped.append((gene, f"absent from {probs_long_path}"))
                continue
            missing_sample = next((sm for sm in samples if sm not in per_gene), None)
            if missing_sample is not None:
                dropped.append((gene, f"no probabilities for sample {missing_sample!r}"))
                continue
            callprobs = np.vstack([per_gene[sm] for sm in samples])

        if calls is not None:
            if gene not in calls_index:
                dropped.append((gene, f"absent from {calls_path}"))
                continue
            call_row = calls.values[calls_index[gene]]
            if np.any(np.isnan(call_row)):
                dropped.append((gene, "missing values"))
                continue
            s = _calls_from_floats(call_row)
            if s is None:
                dropped.append((gene, "call values outside {-1, 0, 1, 2}"))
                continue
        else:
            if np.any(np.isnan(callprobs)):
                dropped.append((gene, "missing values"))
                continue
            s = np.asarray(STATE_CODES)[np.argmax(callprobs, axis=1)]

        if np.any(np.isnan(y)) or np.any(np.isnan(x)) or (
            callprobs is not None and np.any(np.isnan(callprobs))
        ):
            dropped.append((gene, "missing values"))
            continue
        try:
            record = GeneRecord(y=y, x=x, s=s, callprobs=callprobs, sample_ids=samples)
        except DataError as exc:
            dropped.append((gene, str(exc)))
            continue
        gene_ids.append(gene)
        records.append(record)

    return Dataset(
        gene_ids=tuple(gene_ids),
        records=tuple(records),
        dropped=tuple(dropped),
        sample_ids=samples,
    )


def format_value(value) -> str:
    """Render one output cell; NA for missing, trimmed floats otherwise."""
    if value is None:
        return "NA"
    if isinstance(value, float):
        if np.isnan(value):
            return "NA"
        return format(value, ".10g")
    if isinstance(value, (np.floating,)):
        return format_value(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def write_tsv(path: str, header, rows):
    """Write a TSV with deterministic formatting."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(format_value(v) for v in row) + "\n")


def write_band_table(path: str, grid, knotset: KnotSet):
    """Band grid to TSV: x, fitted, lower, upper, state label at x."""
    header = ("x", "fitted", "lower", "upper", "state")
    rows = [
        (
            grid.xs[i],
            grid.fitted[i],
            grid.lower[i],
            grid.upper[i],
            knotset.state_at(grid.xs[i]),
        )
        for i in range(grid.xs.size)
    ]
    write_tsv(path, header, rows)


def parse_config_file(path: str) -> dict:
    """Flat ``key = value`` configuration; ``#`` starts a comment."""
    out: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected key=value, found {raw.rstrip()!r}")
            key, value = line.split("=", 1)
            key = key.strip()
            if not key:
                raise DataError(f"{path}:{lineno}: empty key")
            out[key] = value.strip()
    return out
