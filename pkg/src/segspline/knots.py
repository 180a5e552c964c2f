"""Knot placement between adjacent copy-number states.

Two estimators are provided.  Method 1 uses the hard calls only: each knot
is the midpoint between the largest covariate value of the lower state and
the smallest of the upper state.  Method 2 uses soft membership
probabilities: the knot maximises the summed probability of the state
assignment it induces,

    g(a) = sum_i [ p_i(lower) if x_i <= a else p_i(upper) ]

which is piecewise constant in ``a``; the maximising set of cut positions
is located by an exhaustive scan over the ``n + 1`` possible splits of the
sorted covariate values and the midpoint of the maximising interval is
returned.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError, OrderingError
from .model import STATE_CODES, GeneRecord, KnotSet, StateMerge, group_label

_STATE_COL = {c: i for i, c in enumerate(STATE_CODES)}


def knots_method1(x, s) -> KnotSet:
    """Midpoint knots from hard state calls.

    Raises
    ------
    OrderingError
        If some lower-state sample sits at or above some upper-state
        sample, so no separating knot exists.  The error carries the
        offending sample indices on both sides.
    """
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=int)
    if x.shape != s.shape or x.ndim != 1:
        raise DataError("x and s must be one-dimensional and equally long")
    labels = sorted(set(s.tolist()))
    knots = []
    for lo, hi in zip(labels, labels[1:]):
        x_lo = x[s == lo]
        x_hi = x[s == hi]
        top, bottom = x_lo.max(), x_hi.min()
        if top >= bottom:
            lower_bad = np.nonzero((s == lo) & (x >= bottom))[0]
            upper_bad = np.nonzero((s == hi) & (x <= top))[0]
            raise OrderingError(
                f"states {lo} and {hi} overlap on the covariate axis "
                f"(lower max {top:g} >= upper min {bottom:g}; "
                f"lower indices {lower_bad.tolist()}, "
                f"upper indices {upper_bad.tolist()})",
                lower_indices=lower_bad,
                upper_indices=upper_bad,
            )
        knots.append(0.5 * (top + bottom))
    return KnotSet(tuple(knots), tuple(labels))


def _scan_cuts(x_sorted, p_lo_sorted, p_hi_sorted):
    """Objective of every cut position.

    Cut ``t`` assigns the first ``t`` sorted samples to the lower state.
    Returns the (n + 1)-vector of objective values.
    """
    clo = np.concatenate(([0.0], np.cumsum(p_lo_sorted)))
    chi = np.concatenate(([0.0], np.cumsum(p_hi_sorted)))
    total_hi = chi[-1]
    return clo + (total_hi - chi)


def _maximising_runs(obj, tol=0.0):
    best = obj.max()
    hit = np.nonzero(obj >= best - tol)[0]
    runs = []
    start = prev = hit[0]
    for t in hit[1:]:
        if t == prev + 1:
            prev = t
            continue
        runs.append((start, prev))
        start = prev = t
    runs.append((start, prev))
    return runs


def _run_midpoint(values, run):
    ta, tb = run
    m = len(values)
    left = values[ta - 1] if ta >= 1 else values[0]
    right = values[tb] if tb <= m - 1 else values[m - 1]
    return 0.5 * (left + right)


def knots_method2(x, callprobs, state_groups) -> KnotSet:
    """Probability-weighted knots, one per boundary between state groups.

    Parameters
    ----------
    x : array, shape (n,)
        Segmented covariate values.
    callprobs : array, shape (n, 4)
        Membership probabilities in (loss, normal, gain, amplification)
        column order.
    state_groups : sequence of tuple of int
        Ascending groups of original state codes; merged states pool their
        probability columns.  Singleton groups reproduce the plain
        per-state estimator.

    Notes
    -----
    When several disjoint cut intervals tie for the maximum, the one whose
    midpoint lies closest to a reference point is chosen; the reference is
    the method-1 midpoint computed from the boundary's pairwise most
    probable calls, falling back to the median covariate when those calls
    do not separate.  Remaining ties go to the leftmost interval.
    """
    x = np.asarray(x, dtype=float)
    cp = np.asarray(callprobs, dtype=float)
    if cp.shape != (len(x), len(STATE_CODES)):
        raise DataError(
            f"callprobs must have shape ({len(x)}, {len(STATE_CODES)}), got {cp.shape}"
        )
    groups = [tuple(g) for g in state_groups]
    if len(groups) < 1:
        raise DataError("need at least one state group")
    flat = [c for g in groups for c in g]
    if sorted(flat) != flat or len(set(flat)) != len(flat):
        raise DataError(f"state groups must be ascending and disjoint, got {groups}")

    order = np.argsort(x, kind="stable")
    xs = x[order]
    # Distinct values: cuts between equal x values induce no new partition.
    values, first_idx = np.unique(xs, return_index=True)
    labels = tuple(group_label(g) for g in groups)

    knots = []
    for g_lo, g_hi in zip(groups, groups[1:]):
        p_lo = cp[:, [_STATE_COL[c] for c in g_lo]].sum(axis=1)
        p_hi = cp[:, [_STATE_COL[c] for c in g_hi]].sum(axis=1)
        obj_all = _scan_cuts(xs, p_lo[order], p_hi[order])
        # Collapse to cuts at distinct-value boundaries: cut t in "distinct"
        # space = cut first_idx[t] in sample space, plus the all-lower cut.
        cut_positions = np.concatenate((first_idx, [len(xs)]))
        obj = obj_all[cut_positions]
        runs = _maximising_runs(obj)
        if len(runs) == 1:
            knot = _run_midpoint(values, runs[0])
        else:
            ref = _boundary_reference(x, p_lo, p_hi)
            cands = [_run_midpoint(values, r) for r in runs]
            dist = [abs(c - ref) for c in cands]
            knot = cands[int(np.argmin(dist))]
        knots.append(knot)

    try:
        return KnotSet(tuple(knots), labels)
    except DataError as exc:
        raise DataError(
            f"probability-weighted knots are not strictly increasing: "
            f"{tuple(round(a, 6) for a in knots)} ({exc})"
        ) from exc


def _boundary_reference(x, p_lo, p_hi) -> float:
    lower = p_lo >= p_hi
    if lower.any() and (~lower).any():
        top = x[lower].max()
        bottom = x[~lower].min()
        if top < bottom:
            return 0.5 * (top + bottom)
    return float(np.median(x))


def knots_for_record(record: GeneRecord, method: int, merge: StateMerge) -> KnotSet:
    """Knot set for a record after state pooling, by the configured method."""
    if method == 1:
        return knots_method1(record.x, merge.s)
    if method == 2:
        if record.callprobs is None:
            raise DataError("knot method 2 requires call probabilities")
        return knots_method2(record.x, record.callprobs, merge.groups)
    raise DataError(f"unknown knot method {method}; expected 1 or 2")
