import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import scripted_basis
from segspline import (
    DataError,
    DesignSystem,
    GeneRecord,
    KnotSet,
    OrderingError,
    SplineSpec,
    basis_matrix,
    build_design,
    classify_spec,
    enumerate_submodels,
    full_constraints,
    full_spec,
    merge_sparse_states,
    predict,
    restrict_constraints,
    segment_slopes,
    submodel_masks,
)


def _record(n=24, states=(0, 1), seed=0):
    rng = np.random.default_rng(seed)
    per = n // len(states)
    x = np.concatenate([rng.uniform(i, i + 0.8, size=per) for i in range(len(states))])
    s = np.repeat(states, per)
    y = rng.standard_normal(x.size)
    return GeneRecord(y=y, x=x, s=s)


# ---------------------------------------------------------------- basis

def test_basis_matches_scripted_evaluator():
    rng = np.random.default_rng(3)
    x = rng.uniform(-1, 2, size=50)
    knots = (0.1, 0.9)
    ks = KnotSet(knots=knots, state_labels=(-1, 0, 1))
    np.testing.assert_allclose(basis_matrix(x, ks), scripted_basis(x, knots))


def test_basis_jump_is_strictly_greater_than():
    # (u)^0_+ = 1{u > 0}: at the knot itself the jump column is 0
    ks = KnotSet(knots=(0.5,), state_labels=(0, 1))
    B = basis_matrix(np.array([0.5, 0.5 + 1e-12]), ks)
    assert B[0, 2] == 0.0
    assert B[1, 2] == 1.0


def test_term_names_ordering():
    spec = full_spec(KnotSet(knots=(0.2, 0.7), state_labels=(-1, 0, 1)))
    assert tuple(spec.term_names()) == (
        "1", "x", "(x-a1)^0", "(x-a1)^1", "(x-a2)^0", "(x-a2)^1",
    )


@given(
    knot=st.floats(min_value=-5, max_value=5, allow_nan=False),
    pts=st.lists(st.floats(min_value=-10, max_value=10, allow_nan=False),
                 min_size=2, max_size=30),
)
@settings(max_examples=60, deadline=None)
def test_basis_hinge_continuity_and_slope(knot, pts):
    ks = KnotSet(knots=(knot,), state_labels=(0, 1))
    x = np.asarray(sorted(pts), dtype=float)
    B = basis_matrix(x, ks)
    hinge = B[:, 3]
    assert np.all(hinge >= 0)
    np.testing.assert_allclose(hinge, np.maximum(x - knot, 0.0))
    assert np.all(B[:, 2] == (x > knot))


# ------------------------------------------------------------ constraints

def test_full_constraints_two_state_gain():
    ks = KnotSet(knots=(0.5,), state_labels=(0, 1))
    C = full_constraints(ks)
    expect = {(0.0, 1.0, 0.0, 0.0), (0.0, 0.0, 1.0, 0.0), (0.0, 0.0, 0.0, 1.0)}
    assert {tuple(row) for row in C} == expect


def test_full_constraints_loss_normal():
    # reference on the right; loss segment must drop at the jump and be
    # at least as steep as the reference
    ks = KnotSet(knots=(0.0,), state_labels=(-1, 0))
    C = full_constraints(ks)
    theta_ok = np.array([0.0, 1.0, 1.0, -0.5])   # ref slope 1, loss slope 1.5
    theta_bad = np.array([0.0, 1.0, 1.0, 0.5])   # loss shallower than ref
    assert np.all(C @ theta_ok >= -1e-12)
    assert np.min(C @ theta_bad) < 0


@pytest.mark.parametrize("labels", [
    (0,), (0, 1), (-1, 0), (-1, 0, 1), (-1, 0, 1, 2), (0, 1, 2), (1, 2), (-1, 2),
])
def test_full_constraints_full_row_rank(labels):
    ks = KnotSet(knots=tuple(0.5 + i for i in range(len(labels) - 1)),
                 state_labels=labels)
    C = full_constraints(ks)
    if C.size:
        assert np.linalg.matrix_rank(C) == C.shape[0]
        assert C.shape[1] == 2 * len(labels)


def test_constraints_reference_without_normal_state():
    # no state 0: reference is the label closest to 0
    ks = KnotSet(knots=(0.5,), state_labels=(1, 2))
    C = full_constraints(ks)
    # reference is state 1 (left segment): its slope is theta_1
    assert any(np.array_equal(row, [0, 1, 0, 0]) for row in C)


def test_restrict_constraints_drops_zero_rows_keeps_pairs():
    C = np.array([
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ])
    # drop the jump column: its row becomes all zero and is removed
    R = restrict_constraints(C, [True, True, False, True])
    assert R.shape == (2, 3)
    # duplicates collapse
    C2 = np.array([[0.0, 1.0], [0.0, 1.0]])
    assert restrict_constraints(C2, [True, True]).shape == (1, 2)
    # opposite-sign rows both survive: they pin the coefficient at zero
    C3 = np.array([[0.0, 1.0], [0.0, -1.0]])
    assert restrict_constraints(C3, [True, True]).shape == (2, 2)


def test_restricted_constraints_pin_four_state_loss_slope():
    # with S=4 the loss row is a pure sign flip of the hinge coefficient;
    # slicing away the companion columns can leave +/- pairs
    ks = KnotSet(knots=(0.3, 0.6, 0.9), state_labels=(-1, 0, 1, 2))
    C = full_constraints(ks)
    assert np.linalg.matrix_rank(C) == C.shape[0]


# ------------------------------------------------------------- submodels

@pytest.mark.parametrize("n_states,count", [(1, 2), (2, 8), (3, 32), (4, 128)])
def test_submodel_mask_count(n_states, count):
    masks = submodel_masks(n_states)
    assert len(masks) == count
    assert all(m[0] for m in masks)          # intercept always on
    assert masks[0][1:] == (False,) * (2 * n_states - 1) or n_states == 0


def test_enumerate_submodels_bit_order():
    ks = KnotSet(knots=(0.5,), state_labels=(0, 1))
    specs = enumerate_submodels(ks)
    assert len(specs) == 8
    # mask index 1 toggles the slope, 2 the first jump, 4 the first hinge
    assert specs[1].included == (True, True, False, False)
    assert specs[2].included == (True, False, True, False)
    assert specs[4].included == (True, False, False, True)
    for i, spec in enumerate(specs):
        assert spec.mask_index == i


def test_classify_spec_labels():
    ks = KnotSet(knots=(0.5,), state_labels=(0, 1))
    specs = enumerate_submodels(ks)
    assert classify_spec(specs[0]) == "intercept"
    assert classify_spec(specs[1]) == "simple-linear"
    assert classify_spec(specs[2]) == "piecewise-level"
    assert classify_spec(specs[4]) == "piecewise-linear"
    assert classify_spec(specs[7]) == "piecewise-linear"


def test_predict_and_segment_slopes():
    ks = KnotSet(knots=(0.5,), state_labels=(0, 1))
    spec = full_spec(ks)
    theta = np.array([1.0, 0.0, 1.0, 1.0])
    x = np.array([0.0, 0.5, 0.75, 1.0])
    np.testing.assert_allclose(predict(spec, theta, x), [1.0, 1.0, 2.25, 2.5])
    np.testing.assert_allclose(segment_slopes(spec, theta), [0.0, 1.0])


# ---------------------------------------------------------------- records

def test_record_validation_errors():
    with pytest.raises(DataError):
        GeneRecord(y=np.ones(3), x=np.ones(4), s=np.zeros(4, dtype=int))
    with pytest.raises(DataError):
        GeneRecord(y=np.array([1.0, np.nan]), x=np.ones(2), s=np.zeros(2, dtype=int))
    with pytest.raises(DataError):
        GeneRecord(y=np.ones(2), x=np.ones(2), s=np.array([0, 3]))


def test_state_order_violation_surfaces_in_knots():
    # a gain sample sitting below a normal sample: segments overlap, so
    # the midpoint knot is undefined
    from segspline import knots_method1

    x = np.array([0.0, 1.0, 0.5, 2.0])
    s = np.array([0, 0, 1, 1])
    with pytest.raises(OrderingError) as err:
        knots_method1(x, s)
    assert err.value.lower_indices is not None
    assert err.value.upper_indices is not None


def test_merge_sparse_states():
    rec = _record(n=22, states=(0, 1), seed=1)
    # drop to a single observation of state 1
    rec2 = GeneRecord(y=rec.y[:12], x=rec.x[:12], s=np.array([0] * 11 + [1]))
    merge = merge_sparse_states(rec2, min_count=3)
    assert merge.merged
    assert len(set(merge.groups)) == 1


def test_build_design_gram_consistency():
    rec = _record()
    ks = KnotSet(knots=(0.9,), state_labels=(0, 1))
    design = build_design(rec, full_spec(ks))
    np.testing.assert_allclose(design.gram, design.X.T @ design.X)


def test_design_rank_error():
    # duplicate covariate values squeeze the basis to deficient rank
    y = np.zeros(6)
    x = np.full(6, 0.3)
    s = np.zeros(6, dtype=int)
    rec = GeneRecord(y=y, x=x, s=s)
    ks = KnotSet(knots=(), state_labels=(0,))
    with pytest.raises(Exception):
        build_design(rec, full_spec(ks))
