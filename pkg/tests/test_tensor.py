import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tenscomp.tensor import (
    as_dims,
    fold,
    frobenius_norm,
    project,
    project_complement,
    rse,
    unfold,
)

dims_st = st.tuples(*[st.integers(1, 20)] * 3)


def unfold_by_enumeration(x, mode):
    """Place every entry with the documented column formula."""
    dims = x.shape
    rest = [n for n in range(3) if n != mode]
    out = np.full((dims[mode], dims[rest[0]] * dims[rest[1]]), np.nan)
    for idx in np.ndindex(*dims):
        col = idx[rest[0]] + dims[rest[0]] * idx[rest[1]]
        out[idx[mode], col] = x[idx]
    return out


@pytest.fixture
def cube8():
    # values 1..8 stored i-fastest
    return np.arange(1.0, 9.0).reshape((2, 2, 2), order="F")


def test_cube8_layout(cube8):
    assert cube8[1, 0, 0] == 2.0
    assert cube8[0, 1, 0] == 3.0
    assert cube8[0, 0, 1] == 5.0


@pytest.mark.parametrize("mode", [0, 1, 2])
def test_unfold_matches_enumeration(cube8, mode):
    np.testing.assert_array_equal(unfold(cube8, mode), unfold_by_enumeration(cube8, mode))


def test_unfold_mode0_rows_are_slices(cube8):
    np.testing.assert_array_equal(unfold(cube8, 0), [[1, 3, 5, 7], [2, 4, 6, 8]])


def test_fold_of_enumerated_mode2(cube8):
    np.testing.assert_array_equal(fold(unfold_by_enumeration(cube8, 2), 2, (2, 2, 2)), cube8)


@pytest.mark.parametrize("mode", [0, 1, 2])
def test_unfold_matches_enumeration_rectangular(rng, mode):
    x = rng.standard_normal((3, 4, 5))
    np.testing.assert_array_equal(unfold(x, mode), unfold_by_enumeration(x, mode))
    np.testing.assert_array_equal(fold(unfold(x, mode), mode, x.shape), x)


def test_spe10_sized_unfolding_shape():
    x = np.zeros((60, 220, 85))
    assert unfold(x, 2).shape == (85, 13200)


def test_fold_zeros():
    out = fold(np.zeros((2, 6)), 0, (2, 3, 2))
    assert out.shape == (2, 3, 2) and not out.any()


def test_invalid_mode():
    with pytest.raises(ValueError):
        unfold(np.zeros((2, 2, 2)), 3)
    with pytest.raises(ValueError):
        fold(np.zeros((2, 4)), -1, (2, 2, 2))


def test_fold_shape_mismatch():
    with pytest.raises(ValueError, match="must have shape"):
        fold(np.zeros((2, 5)), 0, (2, 2, 2))


def test_dims_must_be_positive():
    with pytest.raises(ValueError):
        as_dims((0, 2, 2))


@settings(max_examples=40, deadline=None)
@given(dims=dims_st, mode=st.integers(0, 2), seed=st.integers(0, 2**31))
def test_round_trips(dims, mode, seed):
    x = np.random.default_rng(seed).standard_normal(dims)
    m = unfold(x, mode)
    assert m.shape[0] == dims[mode] and m.shape[0] * m.shape[1] == x.size
    np.testing.assert_array_equal(fold(m, mode, dims), x)
    np.testing.assert_array_equal(unfold(fold(m, mode, dims), mode), m)
    assert np.isclose(np.linalg.norm(m), frobenius_norm(x), rtol=1e-13)


def test_project_all_true_and_all_false(rng):
    x = rng.standard_normal((3, 4, 5))
    full = np.ones(x.shape, dtype=bool)
    np.testing.assert_array_equal(project(x, full), x)
    np.testing.assert_array_equal(project(x, ~full), np.zeros_like(x))
    np.testing.assert_array_equal(project_complement(x, full), np.zeros_like(x))


def test_project_single_cell(rng):
    x = rng.standard_normal((3, 4, 5))
    mask = np.zeros(x.shape, dtype=bool)
    mask[1, 2, 3] = True
    p = project(x, mask)
    for idx in np.ndindex(*x.shape):
        assert p[idx] == (x[idx] if idx == (1, 2, 3) else 0.0)
    c = project_complement(x, mask)
    for idx in np.ndindex(*x.shape):
        assert c[idx] == (0.0 if idx == (1, 2, 3) else x[idx])


def test_project_rejects_mismatch_and_nonbool():
    with pytest.raises(ValueError):
        project(np.zeros((2, 2, 2)), np.ones((2, 2, 3), dtype=bool))
    with pytest.raises(TypeError):
        project(np.zeros((2, 2, 2)), np.ones((2, 2, 2)))


@settings(max_examples=40, deadline=None)
@given(dims=dims_st, seed=st.integers(0, 2**31), p=st.floats(0, 1))
def test_projection_properties(dims, seed, p):
    r = np.random.default_rng(seed)
    x = r.standard_normal(dims)
    mask = r.random(dims) < p
    a, b = project(x, mask), project_complement(x, mask)
    np.testing.assert_array_equal(a + b, x)
    np.testing.assert_array_equal(project(a, mask), a)
    assert np.isclose(frobenius_norm(x) ** 2, frobenius_norm(a) ** 2 + frobenius_norm(b) ** 2, rtol=1e-12)


def test_observed_zero_is_kept_distinct():
    x = np.zeros((1, 1, 2))
    mask = np.array([[[True, False]]])
    assert project(x, mask)[0, 0, 0] == 0.0
    assert project_complement(x + 1, mask)[0, 0, 1] == 1.0


def test_frobenius():
    assert frobenius_norm(np.zeros((2, 2, 2))) == 0.0
    x = np.zeros((2, 2, 2))
    x[1, 1, 0] = 3.0
    assert frobenius_norm(x) == 3.0
    assert frobenius_norm(np.array([3.0, 4.0]).reshape(2, 1, 1)) == 5.0


def test_rse_values():
    truth = np.array([3.0, 4.0, 7.0]).reshape(3, 1, 1)
    mask = np.array([False, False, True]).reshape(3, 1, 1)
    assert rse(truth, truth, mask) == 0.0
    assert rse(np.zeros(3).reshape(3, 1, 1), truth, mask) == 1.0
    rec = np.array([3.0, 1.0, -50.0]).reshape(3, 1, 1)
    assert rse(rec, truth, mask) == pytest.approx(0.6, abs=1e-15)


def test_rse_errors():
    truth = np.ones((2, 1, 1))
    with pytest.raises(ValueError, match="no unobserved"):
        rse(truth, truth, np.ones((2, 1, 1), dtype=bool))
    with pytest.raises(ValueError, match="identically zero"):
        rse(truth, np.zeros((2, 1, 1)), np.zeros((2, 1, 1), dtype=bool))
    with pytest.raises(ValueError):
        rse(np.ones((3, 1, 1)), truth, np.zeros((2, 1, 1), dtype=bool))
