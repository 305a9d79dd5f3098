"""Dense semi-symmetric tensors and the multilinear primitives used everywhere else.

Modes are numbered from 0 (numpy convention): for a ``P x P x N`` network
tensor, modes 0 and 1 index nodes and mode 2 indexes subjects.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

SYMMETRY_TOL = 1e-12
REJECT_TOL = 1e-6
DIRECT_EIGH_MAX = 512


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible."""


class SymmetryError(ValueError):
    """Raised when a slice is too far from symmetric to be repaired."""


class SemiSymmetricTensor:
    """A ``P x P x N`` stack of symmetric matrices.

    Slices are checked on construction: asymmetry up to ``REJECT_TOL`` is
    repaired by averaging with the transpose, anything larger is rejected.
    The stored array is read-only.
    """

    __slots__ = ("_values",)

    def __init__(self, values, *, reject_tol: float = REJECT_TOL):
        arr = np.array(values, dtype=float)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[0] != arr.shape[1]:
            raise DimensionError(f"expected a P x P x N array, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[2] < 1:
            raise DimensionError(f"empty tensor of shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor contains non-finite values")
        asym = max_asymmetry(arr)
        if asym > reject_tol:
            i, j, n = np.unravel_index(
                np.argmax(np.abs(arr - arr.transpose(1, 0, 2))), arr.shape
            )
            raise SymmetryError(
                f"slice {n} is not symmetric: |X[{i},{j}] - X[{j},{i}]| = {asym:.3g}"
            )
        if asym > 0:
            arr = 0.5 * (arr + arr.transpose(1, 0, 2))
        arr.setflags(write=False)
        self._values = arr

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def shape(self) -> tuple[int, int, int]:
        return self._values.shape

    @property
    def P(self) -> int:
        return self._values.shape[0]

    @property
    def N(self) -> int:
        return self._values.shape[2]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._values
        return self._values.astype(dtype)

    def __repr__(self) -> str:
        return f"SemiSymmetricTensor(P={self.P}, N={self.N})"


def max_asymmetry(X) -> float:
    """Largest ``|X[i,j,...] - X[j,i,...]|`` over all slices."""
    X = np.asarray(X)
    if X.shape[0] == 0:
        return 0.0
    return float(np.max(np.abs(X - np.swapaxes(X, 0, 1))))


def is_semisymmetric(X, tol: float = SYMMETRY_TOL) -> bool:
    return max_asymmetry(X) <= tol


def mode_n_multiply(X, A, mode: int) -> np.ndarray:
    """Multiply tensor ``X`` along ``mode`` by matrix or vector ``A``.

    A matrix of shape ``(J, I_mode)`` replaces that extent by ``J``; a vector
    of length ``I_mode`` contracts the mode away.
    """
    X = np.asarray(X, dtype=float)
    A = np.asarray(A, dtype=float)
    if not 0 <= mode < X.ndim:
        raise DimensionError(f"mode {mode} out of range for a {X.ndim}-mode tensor")
    extent = X.shape[mode]
    if A.ndim == 1:
        if A.shape[0] != extent:
            raise DimensionError(
                f"mode {mode}: tensor extent {extent} != vector length {A.shape[0]}"
            )
        return np.tensordot(X, A, axes=(mode, 0))
    if A.ndim != 2:
        raise DimensionError("A must be a vector or a matrix")
    if A.shape[1] != extent:
        raise DimensionError(
            f"mode {mode}: tensor extent {extent} != matrix column count {A.shape[1]}"
        )
    return np.moveaxis(np.tensordot(A, X, axes=(1, mode)), 0, mode)


def inner_product(A, B) -> float:
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise DimensionError(f"shape mismatch: {A.shape} vs {B.shape}")
    return float(np.vdot(A, B))


def frobenius_norm(X) -> float:
    return float(np.linalg.norm(np.asarray(X, dtype=float).ravel()))


def unfold(X, mode: int) -> np.ndarray:
    """Mode-``mode`` matricization with Kolda column ordering.

    Rows index ``mode``; columns run over the remaining modes with the
    lowest-numbered remaining mode varying fastest.
    """
    X = np.asarray(X)
    if not 0 <= mode < X.ndim:
        raise DimensionError(f"mode {mode} out of range for a {X.ndim}-mode tensor")
    return np.reshape(np.moveaxis(X, mode, 0), (X.shape[mode], -1), order="F")


def refold(M, mode: int, shape) -> np.ndarray:
    """Inverse of :func:`unfold`."""
    shape = tuple(shape)
    if not 0 <= mode < len(shape):
        raise DimensionError(f"mode {mode} out of range for shape {shape}")
    moved = (shape[mode],) + shape[:mode] + shape[mode + 1 :]
    return np.moveaxis(np.reshape(np.asarray(M), moved, order="F"), 0, mode)


class TopEigen(NamedTuple):
    value: float
    vector: np.ndarray
    degenerate: bool


def fix_sign(v: np.ndarray) -> np.ndarray:
    """Flip ``v`` (or each column of ``v``) so its largest-magnitude entry is positive."""
    v = np.array(v, dtype=float)
    if v.ndim == 1:
        if v.size and v[np.argmax(np.abs(v))] < 0:
            v = -v
        return v
    idx = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[idx, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return v * signs


def _power_top(A: np.ndarray, tol: float = 1e-12, max_iter: int = 10_000):
    # shift so the spectrum is nonnegative: dominant magnitude == largest algebraic
    shift = float(np.max(np.sum(np.abs(A), axis=1)))
    B = A + shift * np.eye(A.shape[0])
    rng = np.random.default_rng(0)
    x = rng.standard_normal(A.shape[0])
    x /= np.linalg.norm(x)
    lam = x @ B @ x
    for _ in range(max_iter):
        y = B @ x
        ny = np.linalg.norm(y)
        if ny == 0:
            break
        y /= ny
        lam_new = y @ B @ y
        done = abs(lam_new - lam) <= tol * max(1.0, abs(lam_new))
        x, lam = y, lam_new
        if done:
            break
    # second eigenvalue estimate for the degeneracy flag via deflated power step
    C = B - lam * np.outer(x, x)
    z = rng.standard_normal(A.shape[0])
    for _ in range(200):
        z = C @ z
        nz = np.linalg.norm(z)
        if nz == 0:
            break
        z /= nz
    lam2 = z @ B @ z
    return lam - shift, x, lam - lam2


def symmetric_top_eigenvector(A) -> TopEigen:
    """Algebraically largest eigenpair of a symmetric matrix.

    The eigenvector is normalized and sign-fixed (largest-magnitude entry
    positive). ``degenerate`` is set when the top two eigenvalues are closer
    than ``1e-12`` relative to the spectrum's scale, in which case any vector
    of the leading eigenspace may be returned.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix contains non-finite values")
    A = 0.5 * (A + A.T)
    n = A.shape[0]
    scale = max(1.0, float(np.max(np.abs(A)))) if n else 1.0
    if n <= DIRECT_EIGH_MAX:
        w, Q = np.linalg.eigh(A)
        value, vec = float(w[-1]), Q[:, -1]
        gap = w[-1] - w[-2] if n > 1 else np.inf
    else:
        value, vec, gap = _power_top(A)
    return TopEigen(value, fix_sign(vec), bool(gap < 1e-12 * scale))
