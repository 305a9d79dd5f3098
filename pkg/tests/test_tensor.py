import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tnpca.tensor import (
    DimensionError,
    SemiSymmetricTensor,
    SymmetryError,
    fix_sign,
    frobenius_norm,
    inner_product,
    max_asymmetry,
    mode_n_multiply,
    refold,
    symmetric_top_eigenvector,
    unfold,
)

from conftest import random_semisym


def naive_mode_n(X, A, mode):
    """Triple-loop contraction: out[..., j, ...] = sum_i A[j, i] X[..., i, ...]."""
    shape = list(X.shape)
    J = A.shape[0]
    out_shape = shape.copy()
    out_shape[mode] = J
    out = np.zeros(out_shape)
    for idx in np.ndindex(*out_shape):
        total = 0.0
        for i in range(shape[mode]):
            src = list(idx)
            src[mode] = i
            total += A[idx[mode], i] * X[tuple(src)]
        out[idx] = total
    return out


def naive_unfold(X, mode):
    """Explicit Kolda index map: column = sum_{k != mode} i_k * prod_{m<k, m != mode} I_m."""
    dims = X.shape
    M = np.zeros((dims[mode], int(np.prod(dims)) // dims[mode]))
    for idx in np.ndindex(*dims):
        col, stride = 0, 1
        for k in range(len(dims)):
            if k == mode:
                continue
            col += idx[k] * stride
            stride *= dims[k]
        M[idx[mode], col] = X[idx]
    return M


def test_all_ones_contract_mode2_vector():
    X = np.ones((2, 2, 2))
    np.testing.assert_array_equal(mode_n_multiply(X, [1.0, 1.0], 2), np.full((2, 2), 2.0))


def test_identity_leaves_tensor_unchanged(rng):
    X = rng.standard_normal((3, 4, 5))
    np.testing.assert_array_equal(mode_n_multiply(X, np.eye(3), 0), X)


@pytest.mark.parametrize("mode", [0, 1, 2])
def test_mode_n_matches_naive_loops(rng, mode):
    X = rng.standard_normal((3, 3, 2))
    A = rng.standard_normal((4, X.shape[mode]))
    np.testing.assert_allclose(mode_n_multiply(X, A, mode), naive_mode_n(X, A, mode), atol=1e-12, rtol=0)


def test_mode_n_shape_error_names_mode_and_extents():
    with pytest.raises(DimensionError, match=r"mode 2.*2.*3"):
        mode_n_multiply(np.ones((2, 2, 2)), np.ones((3, 3)), 2)
    with pytest.raises(DimensionError):
        mode_n_multiply(np.ones((2, 2, 2)), np.ones(3), 1)


def test_inner_product_and_norm(rng):
    X = rng.standard_normal((4, 4, 3))
    Y = rng.standard_normal((4, 4, 3))
    assert inner_product(X, X) == pytest.approx(frobenius_norm(X) ** 2, rel=1e-14)
    assert inner_product(X, np.zeros_like(X)) == 0.0
    assert inner_product(X, Y) == pytest.approx(float(X.ravel() @ Y.ravel()), rel=1e-13)
    with pytest.raises(DimensionError):
        inner_product(X, Y[:, :, :2])


def test_frobenius_norm_examples(rng):
    assert frobenius_norm(np.ones((2, 2, 2))) == pytest.approx(np.sqrt(8))
    assert frobenius_norm(np.zeros((3, 3, 3))) == 0.0
    X = rng.standard_normal((3, 5, 2))
    assert frobenius_norm(X) == pytest.approx(np.sqrt(np.sum(X.ravel() ** 2)), rel=1e-14)


def test_unfold_examples(rng):
    S = random_semisym(rng, 4, 1)
    np.testing.assert_array_equal(unfold(S, 0), S[:, :, 0])
    X = rng.standard_normal((3, 3, 2))
    for mode in range(3):
        np.testing.assert_array_equal(unfold(X, mode), naive_unfold(X, mode))
    with pytest.raises(DimensionError):
        unfold(X, 3)


@settings(max_examples=50, deadline=None)
@given(
    dims=st.lists(st.integers(1, 4), min_size=3, max_size=4),
    mode=st.integers(0, 3),
    seed=st.integers(0, 2**32 - 1),
)
def test_unfold_refold_round_trip_is_exact(dims, mode, seed):
    mode = mode % len(dims)
    X = np.random.default_rng(seed).standard_normal(dims)
    back = refold(unfold(X, mode), mode, X.shape)
    assert back.shape == X.shape
    assert np.array_equal(back, X)


@settings(max_examples=50, deadline=None)
@given(P=st.integers(1, 5), N=st.integers(1, 4), mode=st.integers(0, 2), seed=st.integers(0, 2**32 - 1))
def test_mode_n_linear_in_matrix(P, N, mode, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((P, P, N))
    n = X.shape[mode]
    A, B = rng.standard_normal((3, n)), rng.standard_normal((3, n))
    lhs = mode_n_multiply(X, A + B, mode)
    rhs = mode_n_multiply(X, A, mode) + mode_n_multiply(X, B, mode)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(lhs)))


@settings(max_examples=50, deadline=None)
@given(P=st.integers(1, 6), N=st.integers(1, 6), seed=st.integers(0, 2**32 - 1))
def test_contracting_subject_mode_keeps_symmetry(P, N, seed):
    rng = np.random.default_rng(seed)
    X = random_semisym(rng, P, N)
    M = mode_n_multiply(X, rng.standard_normal(N), 2)
    assert np.max(np.abs(M - M.T)) <= 1e-12


@settings(max_examples=50, deadline=None)
@given(P=st.integers(1, 6), N=st.integers(1, 6), mode=st.integers(0, 2), seed=st.integers(0, 2**32 - 1))
def test_orthogonal_multiply_preserves_norm(P, N, mode, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((P, P, N))
    Q, _ = np.linalg.qr(rng.standard_normal((X.shape[mode],) * 2))
    assert frobenius_norm(mode_n_multiply(X, Q, mode)) == pytest.approx(frobenius_norm(X), rel=1e-10)


def test_semisymmetric_construction(rng):
    X = random_semisym(rng, 4, 3)
    T = SemiSymmetricTensor(X)
    assert T.shape == (4, 4, 3) and T.P == 4 and T.N == 3
    assert not T.values.flags.writeable
    noisy = X.copy()
    noisy[0, 1, 0] += 1e-9
    T2 = SemiSymmetricTensor(noisy)
    assert max_asymmetry(T2.values) == 0.0
    bad = X.copy()
    bad[0, 1, 2] += 1e-3
    with pytest.raises(SymmetryError, match="slice 2"):
        SemiSymmetricTensor(bad)
    with pytest.raises(ValueError):
        SemiSymmetricTensor(np.full((2, 2, 1), np.nan))
    assert np.asarray(T) is T.values


def test_top_eigenvector_diagonal():
    top = symmetric_top_eigenvector(np.diag([3.0, 1.0, 2.0]))
    assert top.value == pytest.approx(3.0)
    np.testing.assert_allclose(top.vector, [1.0, 0.0, 0.0], atol=1e-15)
    assert not top.degenerate


def test_top_eigenvector_identity_is_degenerate():
    top = symmetric_top_eigenvector(np.eye(4))
    assert top.value == pytest.approx(1.0)
    assert np.linalg.norm(top.vector) == pytest.approx(1.0)
    assert top.degenerate


@pytest.mark.parametrize("seed", range(5))
def test_top_eigenvector_matches_full_eigensolver(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((5, 5))
    A = A + A.T
    # oracle: eigenpairs via the general (non-symmetric) solver
    w, Q = np.linalg.eig(A)
    i = np.argmax(w.real)
    lam, v = w.real[i], Q[:, i].real
    v /= np.linalg.norm(v)
    top = symmetric_top_eigenvector(A)
    assert abs(top.value - lam) <= 1e-10
    assert abs(top.vector @ v) >= 1 - 1e-10
    assert top.vector[np.argmax(np.abs(top.vector))] > 0


def test_top_eigenvector_power_path_large_matrix():
    rng = np.random.default_rng(1)
    Q, _ = np.linalg.qr(rng.standard_normal((600, 600)))
    w = np.linspace(-5, 3, 600)
    w[-1] = 4.0
    A = (Q * w) @ Q.T
    top = symmetric_top_eigenvector(A)
    assert top.value == pytest.approx(4.0, abs=1e-8)
    assert abs(top.vector @ Q[:, -1]) >= 1 - 1e-8


def test_top_eigenvector_rejects_nonfinite():
    with pytest.raises(ValueError):
        symmetric_top_eigenvector(np.array([[np.inf, 0], [0, 1.0]]))


def test_fix_sign_columns():
    M = np.array([[1.0, -3.0], [-2.0, 1.0]])
    out = fix_sign(M)
    np.testing.assert_array_equal(out, [[-1.0, 3.0], [2.0, -1.0]])
