"""Piecewise linear spline model over ordered copy-number states.

A gene's expression response ``y`` is modelled against its segmented DNA
copy-number value ``x`` while respecting the discrete aberration calls
(loss/normal/gain/amplification, coded -1/0/1/2).  With ``S`` contiguous
states present and knots ``a_1 < ... < a_{S-1}`` separating them, the full
model uses the truncated power basis of degree one,

    f(x) = t0 + t1*x + sum_j [ t_{j,0} * (x - a_j)^0_+  +  t_{j,1} * (x - a_j)^1_+ ]

where ``(u)^0_+`` is the indicator of ``u > 0`` and ``(u)^1_+ = max(u, 0)``.
Coefficients are kept in the canonical order

    (t0, t1, t_{1,0}, t_{1,1}, t_{2,0}, t_{2,1}, t_{3,0}, t_{3,1})

truncated to 2*S entries.  Knot ``j`` contributes a level jump ``t_{j,0}``
and a slope change ``t_{j,1}``; the segment right of knot ``j`` therefore
has slope ``t1 + t_{1,1} + ... + t_{j,1}``.

Copy-number effects on expression are taken to be non-negative, which
translates into linear inequality constraints ``C theta >= 0``:

* every jump ``t_{j,0}`` is non-negative,
* the slope of the reference (normal) segment is non-negative,
* every aberrant segment's slope is at least the reference slope.

Submodels switch individual basis terms off (the intercept is always kept);
their constraint matrices are the full rows restricted to the retained
columns, with rows that reference only dropped coefficients removed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DesignError

STATE_CODES = (-1, 0, 1, 2)
STATE_NAMES = {-1: "loss", 0: "normal", 1: "gain", 2: "amplification"}

MAX_STATES = 4

_CALLPROB_TOL = 1e-6


def _as_float_vector(v, name):
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        raise DataError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class GeneRecord:
    """Per-gene input bundle: expression, segmented copy number and calls.

    Parameters
    ----------
    y : array, shape (n,)
        Expression values (one per sample).
    x : array, shape (n,)
        Segmented copy-number values, same sample order as ``y``.
    s : array of int, shape (n,)
        Hard state calls in {-1, 0, 1, 2}.  The set of distinct calls must
        be contiguous within (-1, 0, 1, 2); records observing e.g. only
        loss and gain are rejected rather than silently remapped.
    callprobs : array, shape (n, 4), optional
        Per-sample membership probabilities for the four states in the
        fixed column order (loss, normal, gain, amplification).  Rows must
        sum to one within 1e-6.
    sample_ids : tuple of str, optional
        Sample identifiers, for reporting only.
    """

    y: np.ndarray
    x: np.ndarray
    s: np.ndarray
    callprobs: np.ndarray | None = None
    sample_ids: tuple | None = None

    def __post_init__(self):
        y = _as_float_vector(self.y, "y")
        x = _as_float_vector(self.x, "x")
        s = np.asarray(self.s)
        if s.ndim != 1:
            raise DataError(f"s must be one-dimensional, got shape {s.shape}")
        if not (len(y) == len(x) == len(s)):
            raise DataError(
                f"length mismatch: y has {len(y)}, x has {len(x)}, s has {len(s)}"
            )
        if len(y) < 1:
            raise DataError("record must contain at least one sample")
        if not np.all(np.isfinite(y)) or not np.all(np.isfinite(x)):
            raise DataError("y and x must be finite")
        if not np.all(np.isin(s, STATE_CODES)):
            bad = sorted(set(s.tolist()) - set(STATE_CODES))
            raise DataError(f"state calls outside {STATE_CODES}: {bad}")
        s = s.astype(int)
        present = sorted(set(s.tolist()))
        lo, hi = present[0], present[-1]
        if present != list(range(lo, hi + 1)):
            raise DataError(
                f"observed states {tuple(present)} are not contiguous within "
                f"{STATE_CODES}; record rejected"
            )
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "s", s)
        if self.callprobs is not None:
            cp = np.asarray(self.callprobs, dtype=float)
            if cp.shape != (len(y), len(STATE_CODES)):
                raise DataError(
                    f"callprobs must have shape ({len(y)}, {len(STATE_CODES)}), "
                    f"got {cp.shape}"
                )
            if np.any(cp < -_CALLPROB_TOL) or np.any(cp > 1 + _CALLPROB_TOL):
                raise DataError("callprobs entries must lie in [0, 1]")
            rowsum = cp.sum(axis=1)
            off = np.abs(rowsum - 1.0)
            if np.any(off > _CALLPROB_TOL):
                i = int(np.argmax(off))
                raise DataError(
                    f"callprobs row {i} sums to {rowsum[i]:.8f}, expected 1"
                )
            object.__setattr__(self, "callprobs", cp)
        if self.sample_ids is not None:
            ids = tuple(str(t) for t in self.sample_ids)
            if len(ids) != len(y):
                raise DataError(
                    f"sample_ids has {len(ids)} entries for {len(y)} samples"
                )
            object.__setattr__(self, "sample_ids", ids)

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def states_present(self) -> tuple:
        return tuple(sorted(set(self.s.tolist())))


@dataclass(frozen=True)
class KnotSet:
    """Ordered knots together with the state labels they separate.

    ``knots[j]`` separates ``state_labels[j]`` (below) from
    ``state_labels[j+1]`` (above).  Knots must be strictly increasing and
    there is exactly one fewer knot than labels.
    """

    knots: tuple
    state_labels: tuple

    def __post_init__(self):
        knots = tuple(float(a) for a in self.knots)
        labels = tuple(int(c) for c in self.state_labels)
        if len(labels) < 1 or len(labels) > MAX_STATES:
            raise DataError(f"need 1..{MAX_STATES} states, got {len(labels)}")
        if len(knots) != len(labels) - 1:
            raise DataError(
                f"{len(labels)} states require {len(labels) - 1} knots, "
                f"got {len(knots)}"
            )
        if any(not np.isfinite(a) for a in knots):
            raise DataError("knots must be finite")
        if any(b <= a for a, b in zip(knots, knots[1:])):
            raise DataError(f"knots must be strictly increasing, got {knots}")
        if any(b <= a for a, b in zip(labels, labels[1:])):
            raise DataError(f"state labels must be strictly increasing, got {labels}")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "state_labels", labels)

    @property
    def n_states(self) -> int:
        return len(self.state_labels)

    def state_at(self, x):
        """State label of the segment containing ``x`` (scalar or array).

        Points exactly on a knot belong to the lower segment, matching the
        ``(u)^0_+ = 1{u > 0}`` convention of the basis.
        """
        xs = np.asarray(x, dtype=float)
        idx = np.zeros(xs.shape, dtype=int)
        for a in self.knots:
            idx += (xs > a).astype(int)
        labels = np.asarray(self.state_labels)
        out = labels[idx]
        return out if xs.ndim else int(out)


@dataclass(frozen=True)
class SplineSpec:
    """A submodel: a knot set plus the mask of retained basis terms.

    ``included`` has one flag per canonical basis term (length ``2 * S``);
    the intercept flag must be on.  ``mask_index`` is the binary encoding
    of the non-intercept flags (bit 0 = the ``x`` term) and doubles as the
    canonical enumeration order.
    """

    knotset: KnotSet
    included: tuple

    def __post_init__(self):
        inc = tuple(bool(b) for b in self.included)
        kfull = 2 * self.knotset.n_states
        if len(inc) != kfull:
            raise DataError(
                f"included must have {kfull} flags for {self.knotset.n_states} "
                f"states, got {len(inc)}"
            )
        if not inc[0]:
            raise DataError("the intercept term cannot be dropped")
        object.__setattr__(self, "included", inc)

    @property
    def k(self) -> int:
        return sum(self.included)

    @property
    def mask_index(self) -> int:
        return sum(1 << i for i, on in enumerate(self.included[1:]) if on)

    def term_names(self) -> tuple:
        return tuple(
            name
            for name, on in zip(basis_term_names(self.knotset), self.included)
            if on
        )


@dataclass(frozen=True)
class DesignSystem:
    """Design matrix, constraint matrix and Gram matrix for one submodel."""

    X: np.ndarray
    C: np.ndarray
    gram: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        C = np.asarray(self.C, dtype=float)
        if C.size == 0:
            C = C.reshape(0, X.shape[1])
        if C.shape[1] != X.shape[1]:
            raise DataError(
                f"C has {C.shape[1]} columns for a {X.shape[1]}-column design"
            )
        gram = self.gram
        if gram is None:
            gram = X.T @ X
        gram = np.asarray(gram, dtype=float)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "gram", gram)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def k(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return self.C.shape[0]


def basis_term_names(knotset: KnotSet) -> tuple:
    names = ["1", "x"]
    for j, a in enumerate(knotset.knots, start=1):
        names.append(f"(x-a{j})^0")
        names.append(f"(x-a{j})^1")
    return tuple(names)


def basis_matrix(x, knotset: KnotSet) -> np.ndarray:
    """Evaluate the full truncated power basis at ``x``.

    Returns an ``(n, 2*S)`` matrix with columns in canonical order.  The
    degree-zero column for knot ``a`` is ``1{x > a}`` (right-open jumps)
    and the degree-one column is ``max(x - a, 0)``.
    """
    xs = np.asarray(x, dtype=float)
    if xs.ndim != 1:
        xs = xs.reshape(-1)
    cols = [np.ones_like(xs), xs]
    for a in knotset.knots:
        d = xs - a
        cols.append((d > 0).astype(float))
        cols.append(np.maximum(d, 0.0))
    return np.column_stack(cols)


def _reference_segment(labels) -> int:
    # Reference is the normal state when observed; otherwise the observed
    # state closest to normal (labels are contiguous, so this is an end).
    if 0 in labels:
        return labels.index(0)
    return 0 if labels[0] > 0 else len(labels) - 1


def full_constraints(knotset: KnotSet) -> np.ndarray:
    """Constraint matrix ``C`` of the full model, one row per inequality.

    Row order: reference-segment slope, aberrant slopes above the
    reference (ascending), aberrant slopes below (descending), then the
    jumps in knot order.  For four states (-1, 0, 1, 2) this reproduces

        [ 0  1  0  1  0  0  0  0 ]      reference (normal) slope
        [ 0  0  0  0  0  1  0  0 ]      gain slope - normal slope
        [ 0  0  0  0  0  1  0  1 ]      amplification slope - normal slope
        [ 0  0  0 -1  0  0  0  0 ]      loss slope - normal slope
        [ 0  0  1  0  0  0  0  0 ]      jump at knot 1
        [ 0  0  0  0  1  0  0  0 ]      jump at knot 2
        [ 0  0  0  0  0  0  1  0 ]      jump at knot 3
    """
    labels = list(knotset.state_labels)
    S = len(labels)
    kfull = 2 * S
    ref = _reference_segment(labels)

    def slope(seg):
        r = np.zeros(kfull)
        r[1] = 1.0
        for j in range(1, seg + 1):
            r[2 * j + 1] = 1.0
        return r

    rows = [slope(ref)]
    for seg in range(ref + 1, S):
        rows.append(slope(seg) - slope(ref))
    for seg in range(ref - 1, -1, -1):
        rows.append(slope(seg) - slope(ref))
    for j in range(1, S):
        r = np.zeros(kfull)
        r[2 * j] = 1.0
        rows.append(r)
    return np.array(rows) if rows else np.zeros((0, kfull))


def restrict_constraints(C_full: np.ndarray, included) -> np.ndarray:
    """Restrict constraint rows to the retained columns.

    Rows that become identically zero are dropped (they referenced only
    excluded coefficients); exact duplicate rows are collapsed to the first
    occurrence so the count of inequalities reflects distinct constraints.
    Opposite-sign pairs are kept: they pin a coefficient to zero, which is
    a legitimate (if wasteful) member of the enumeration.
    """
    mask = np.asarray(included, dtype=bool)
    sub = C_full[:, mask]
    kept = []
    for row in sub:
        if not np.any(row != 0.0):
            continue
        if any(np.array_equal(row, r) for r in kept):
            continue
        kept.append(row)
    if not kept:
        return np.zeros((0, int(mask.sum())))
    return np.array(kept)


def build_design(record: GeneRecord, spec: SplineSpec) -> DesignSystem:
    """Assemble the design system for one submodel of one gene.

    Raises
    ------
    DesignError
        If a retained basis column is identically zero (an empty segment
        would make a jump or hinge unidentifiable) or the design is rank
        deficient.
    """
    full = basis_matrix(record.x, spec.knotset)
    mask = np.asarray(spec.included, dtype=bool)
    X = full[:, mask]
    names = [n for n, on in zip(basis_term_names(spec.knotset), mask) if on]
    norms = np.abs(X).max(axis=0)
    dead = np.nonzero(norms == 0.0)[0]
    if dead.size:
        raise DesignError(
            f"basis column(s) {', '.join(names[i] for i in dead)} are "
            f"identically zero for this record"
        )
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise DesignError(
            f"design is rank deficient ({X.shape[1]} columns, "
            f"rank {np.linalg.matrix_rank(X)})"
        )
    C = restrict_constraints(full_constraints(spec.knotset), mask)
    return DesignSystem(X=X, C=C, gram=X.T @ X)


def submodel_masks(n_states: int) -> list:
    """All retained-term masks for ``n_states`` states, in binary order.

    The intercept is always on; the remaining ``2*S - 1`` flags count up
    in binary with bit 0 controlling the ``x`` term, giving
    ``2**(2*S - 1)`` masks.
    """
    if not 1 <= n_states <= MAX_STATES:
        raise DataError(f"n_states must be 1..{MAX_STATES}, got {n_states}")
    width = 2 * n_states - 1
    masks = []
    for m in range(1 << width):
        flags = (True,) + tuple(bool((m >> b) & 1) for b in range(width))
        masks.append(flags)
    return masks


def enumerate_submodels(knotset: KnotSet) -> list:
    """Every submodel spec for the given knot set, in canonical order."""
    return [SplineSpec(knotset, m) for m in submodel_masks(knotset.n_states)]


def full_spec(knotset: KnotSet) -> SplineSpec:
    return SplineSpec(knotset, (True,) * (2 * knotset.n_states))


def predict(spec: SplineSpec, theta, x) -> np.ndarray:
    """Evaluate the fitted spline at new covariate values."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (spec.k,):
        raise DataError(f"theta must have length {spec.k}, got {theta.shape}")
    full = basis_matrix(np.atleast_1d(x), spec.knotset)
    mask = np.asarray(spec.included, dtype=bool)
    return full[:, mask] @ theta


def segment_slopes(spec: SplineSpec, theta) -> np.ndarray:
    """Per-segment slope implied by ``theta`` (zeros fill dropped terms)."""
    theta = np.asarray(theta, dtype=float)
    fullth = np.zeros(2 * spec.knotset.n_states)
    fullth[np.asarray(spec.included, dtype=bool)] = theta
    slopes = [fullth[1]]
    for j in range(1, spec.knotset.n_states):
        slopes.append(slopes[-1] + fullth[2 * j + 1])
    return np.array(slopes)


@dataclass(frozen=True)
class StateMerge:
    """Result of pooling sparse states: relabelled calls plus group map.

    ``groups[i]`` lists the original codes pooled into segment ``i``
    (ascending blocks of a contiguous run); ``labels[i]`` is the segment's
    representative code, the member closest to normal, and ``s`` holds the
    per-sample relabelled calls.  ``merged`` tells whether anything pooled.
    """

    s: np.ndarray
    groups: tuple
    merged: bool

    @property
    def labels(self) -> tuple:
        return tuple(group_label(g) for g in self.groups)


def group_label(group) -> int:
    """Representative code of a pooled block: the member closest to normal.

    Blocks are ascending and disjoint, so these labels are strictly
    increasing across blocks and the block containing the normal state is
    labelled 0, which keeps it the reference segment for the constraints.
    """
    return min(group, key=lambda c: (abs(c), c))


def merge_sparse_states(record: GeneRecord, min_count: int) -> StateMerge:
    """Pool states observed fewer than ``min_count`` times with a neighbour.

    The sparsest block (ties to the lower code) is absorbed into the
    adjacent block across the smaller covariate gap (ties to the lower
    neighbour), the separating knot disappears, and the process repeats
    until every remaining block meets the minimum or one block is left.
    The record itself is not modified; callers model the pooled blocks via
    the returned relabelled calls and group map.
    """
    blocks = [(c,) for c in record.states_present]
    while True:
        if len(blocks) == 1:
            break
        counts = [int(np.isin(record.s, b).sum()) for b in blocks]
        sparse = [i for i, c in enumerate(counts) if c < min_count]
        if not sparse:
            break
        i = min(sparse, key=lambda j: (counts[j], blocks[j][0]))
        if i == 0:
            target = 1
        elif i == len(blocks) - 1:
            target = i - 1
        else:
            xv = record.x[np.isin(record.s, blocks[i])]
            x_below = record.x[np.isin(record.s, blocks[i - 1])]
            x_above = record.x[np.isin(record.s, blocks[i + 1])]
            gap_below = xv.min() - x_below.max()
            gap_above = x_above.min() - xv.max()
            target = i - 1 if gap_below <= gap_above else i + 1
        lo, hi = min(i, target), max(i, target)
        blocks[lo : hi + 1] = [blocks[lo] + blocks[hi]]
    groups = tuple(tuple(sorted(b)) for b in blocks)
    merged = any(len(g) > 1 for g in groups)
    s = record.s.copy()
    if merged:
        for g in groups:
            s[np.isin(record.s, g)] = group_label(g)
    return StateMerge(s=s, groups=groups, merged=merged)
