"""Semi-symmetric tensor decompositions.

``tn_pca`` is the greedy semi-symmetric CP fit (tensor power method with
subtraction deflation and orthogonal network factors). ``hosvd_semisym`` and
``hooi_semisym`` are the tied-factor Tucker baselines.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .tensor import (
    DimensionError,
    fix_sign,
    frobenius_norm,
    mode_n_multiply,
    symmetric_top_eigenvector,
    unfold,
)

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 500
DEFAULT_RESTARTS = 3


class RankError(ValueError):
    """Requested rank is outside the admissible range."""


@dataclass(frozen=True)
class TnDecomposition:
    """Output of :func:`tn_pca`: ``X ~ sum_k d[k] * V[:,k] o V[:,k] o U[:,k]``."""

    d: np.ndarray
    V: np.ndarray
    U: np.ndarray
    objective_traces: list = field(default_factory=list)
    converged: list = field(default_factory=list)
    degenerate: list = field(default_factory=list)

    @property
    def K(self) -> int:
        return int(self.d.shape[0])

    def truncate(self, k: int) -> "TnDecomposition":
        return TnDecomposition(
            self.d[:k],
            self.V[:, :k],
            self.U[:, :k],
            self.objective_traces[:k],
            self.converged[:k],
            self.degenerate[:k],
        )


@dataclass(frozen=True)
class TuckerDecomposition:
    """Tied-factor Tucker model ``X ~ core x0 V x1 V x2 U``."""

    core: np.ndarray
    V: np.ndarray
    U: np.ndarray
    fit: float = float("nan")
    converged: bool = True
    iterations: int = 0


@dataclass(frozen=True)
class Tn4Decomposition:
    """Four-mode extension: ``sum_k d[k] V[:,k] o V[:,k] o W[:,k] o U[:,k]``."""

    d: np.ndarray
    V: np.ndarray
    W: np.ndarray
    U: np.ndarray
    objective_traces: list = field(default_factory=list)
    converged: list = field(default_factory=list)

    @property
    def K(self) -> int:
        return int(self.d.shape[0])


@dataclass
class RankOneResult:
    d: float
    v: np.ndarray
    u: np.ndarray
    trace: list
    converged: bool
    degenerate: bool = False
    failed: bool = False


def _complement_basis(V_prev: np.ndarray) -> np.ndarray | None:
    """Orthonormal basis of the orthogonal complement of span(V_prev), or None if V_prev is empty."""
    k = V_prev.shape[1]
    if k == 0:
        return None
    Q, _ = np.linalg.qr(V_prev, mode="complete")
    return Q[:, k:]


def _project(Q: np.ndarray | None, x: np.ndarray) -> np.ndarray:
    return x if Q is None else Q @ (Q.T @ x)


def _restricted_top(M: np.ndarray, Q: np.ndarray | None):
    # E_max of P M P, solved inside range(P) so the answer stays orthogonal to V_prev
    if Q is None:
        return symmetric_top_eigenvector(M)
    top = symmetric_top_eigenvector(Q.T @ M @ Q)
    return top._replace(vector=Q @ top.vector)


def _random_unit(rng: np.random.Generator, Q: np.ndarray | None, P: int) -> np.ndarray:
    for _ in range(100):
        x = _project(Q, rng.standard_normal(P))
        nx = np.linalg.norm(x)
        if nx > 1e-8:
            return x / nx
    raise RuntimeError("could not draw a nonzero vector in the feasible subspace")


def _vv_contract(X: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``X x0 v x1 v`` for a tensor whose first two modes are nodes."""
    return np.tensordot(v, np.tensordot(v, X, axes=(0, 0)), axes=(0, 0))


def rank_one_step(
    Xh,
    V_prev=None,
    init=None,
    *,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    restarts: int = DEFAULT_RESTARTS,
    rng: np.random.Generator | None = None,
) -> RankOneResult:
    """Fit one semi-symmetric rank-one term to ``Xh`` with ``v`` orthogonal to ``V_prev``.

    Alternates ``u <- normalize(Xh x0 v x1 v)`` and
    ``v <- E_max(P (Xh x2 u) P)``. ``trace`` holds the objective
    ``Xh x0 v x1 v x2 u`` after every sweep; it is nondecreasing.

    A vanishing ``Xh x0 v x1 v`` (``v`` lies on a saddle) triggers a fresh
    random ``v``; after ``restarts`` such failures the result has ``d = 0``
    and ``failed = True``.
    """
    Xh = np.asarray(Xh, dtype=float)
    P, N = Xh.shape[0], Xh.shape[2]
    rng = np.random.default_rng() if rng is None else rng
    V_prev = np.zeros((P, 0)) if V_prev is None else np.asarray(V_prev, dtype=float).reshape(P, -1)
    Q = _complement_basis(V_prev)
    norm_x = frobenius_norm(Xh)
    if norm_x == 0.0:
        return RankOneResult(0.0, np.eye(P)[:, 0], np.ones(N) / np.sqrt(N), [], False, failed=True)

    v = _project(Q, np.asarray(init, dtype=float)) if init is not None else _random_unit(rng, Q, P)
    nv = np.linalg.norm(v)
    v = v / nv if nv > 1e-12 else _random_unit(rng, Q, P)

    trace: list[float] = []
    failures = 0
    converged = False
    degenerate = False
    u = np.ones(N) / np.sqrt(N)
    it = 0
    while it < max_iter:
        g = _vv_contract(Xh, v)
        ng = np.linalg.norm(g)
        if ng <= 1e-13 * norm_x:
            failures += 1
            if failures > restarts:
                return RankOneResult(0.0, fix_sign(v), u, trace, False, failed=True)
            v = _random_unit(rng, Q, P)
            trace.clear()
            continue
        u = g / ng
        top = _restricted_top(Xh @ u, Q)
        v, degenerate = top.vector, top.degenerate
        trace.append(top.value)
        it += 1
        if len(trace) >= 2 and abs(trace[-1] - trace[-2]) <= tol * abs(trace[-1]):
            converged = True
            break

    v = fix_sign(v)
    d = float(_vv_contract(Xh, v) @ u)
    if d < 0:
        u, d = -u, -d
    return RankOneResult(d, v, u, trace, converged, degenerate)


def _mean_slice_init(X: np.ndarray, Q: np.ndarray | None) -> np.ndarray:
    return _restricted_top(X.reshape(X.shape[0], X.shape[1], -1).mean(axis=2), Q).vector


def _gram_init(X: np.ndarray, Q: np.ndarray | None) -> np.ndarray:
    # sum_n X_n X_n: insensitive to the signs of the subject loadings
    X0 = X.reshape(X.shape[0], -1)
    return _restricted_top(X0 @ X0.T, Q).vector


def _initial_vector(r: int, X: np.ndarray, Q: np.ndarray | None):
    if r == 0:
        return _mean_slice_init(X, Q)
    if r == 1:
        return _gram_init(X, Q)
    return None


def _child_rng(rng: np.random.Generator) -> np.random.Generator:
    return np.random.default_rng(rng.integers(0, 2**63 - 1))


def tn_pca(
    X,
    K: int,
    *,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    restarts: int = DEFAULT_RESTARTS,
    seed=None,
) -> TnDecomposition:
    """Greedy semi-symmetric CP decomposition with orthonormal network factors.

    Parameters
    ----------
    X : array_like, shape (P, P, N)
        Semi-symmetric tensor (one symmetric network per subject).
    K : int
        Number of components, ``1 <= K <= P``.
    tol, max_iter :
        Per-component stopping rule on the relative objective change.
    restarts : int
        Initializations tried per component: the top eigenvector of the
        (projected) mean slice, then the top eigenvector of the projected
        ``sum_n X_n X_n``, then random unit vectors. The best objective wins.
    seed : int, Generator or None

    Returns
    -------
    TnDecomposition
        May hold fewer than ``K`` components if the residual is exhausted.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 3 or X.shape[0] != X.shape[1]:
        raise DimensionError(f"expected a P x P x N tensor, got shape {X.shape}")
    P, _, N = X.shape
    if not 1 <= K <= P:
        raise RankError(f"K={K} must satisfy 1 <= K <= P={P}")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    rng = np.random.default_rng(seed)
    norm0 = frobenius_norm(X)
    Xh = X.copy()

    ds, vs, us, traces, conv, degen = [], [], [], [], [], []
    for k in range(K):
        V_prev = np.column_stack(vs) if vs else np.zeros((P, 0))
        Q = _complement_basis(V_prev)
        best = None
        for r in range(restarts):
            init = _initial_vector(r, Xh, Q)
            res = rank_one_step(
                Xh, V_prev, init, tol=tol, max_iter=max_iter, restarts=restarts, rng=_child_rng(rng)
            )
            if best is None or res.d > best.d:
                best = res
        if best.failed or best.d <= 1e-12 * norm0:
            warnings.warn(
                f"residual exhausted after {k} components (requested {K})", RuntimeWarning, stacklevel=2
            )
            break
        if not best.converged:
            log.info("component %d did not converge in %d sweeps", k, max_iter)
        Xh -= best.d * np.einsum("i,j,n->ijn", best.v, best.v, best.u)
        ds.append(best.d)
        vs.append(best.v)
        us.append(best.u)
        traces.append(list(best.trace))
        conv.append(best.converged)
        degen.append(best.degenerate)

    K_out = len(ds)
    return TnDecomposition(
        np.array(ds, dtype=float),
        np.column_stack(vs) if K_out else np.zeros((P, 0)),
        np.column_stack(us) if K_out else np.zeros((N, 0)),
        traces,
        conv,
        degen,
    )


def reconstruct(dec, subject: int | None = None) -> np.ndarray:
    """Rebuild one subject's network (``P x P``) or the full tensor from a decomposition."""
    if isinstance(dec, TuckerDecomposition):
        full = mode_n_multiply(mode_n_multiply(mode_n_multiply(dec.core, dec.V, 0), dec.V, 1), dec.U, 2)
        if subject is None:
            return full
        if not 0 <= subject < dec.U.shape[0]:
            raise IndexError(f"subject {subject} out of range for N={dec.U.shape[0]}")
        return full[:, :, subject]
    V, U, d = dec.V, dec.U, dec.d
    if subject is None:
        return np.einsum("k,ik,jk,nk->ijn", d, V, V, U)
    if not 0 <= subject < U.shape[0]:
        raise IndexError(f"subject {subject} out of range for N={U.shape[0]}")
    return (V * (d * U[subject])) @ V.T


def _leading_left_singular(M: np.ndarray, k: int) -> np.ndarray:
    Uf, _, _ = np.linalg.svd(M, full_matrices=False)
    return fix_sign(Uf[:, :k])


def _tucker_core(X: np.ndarray, V: np.ndarray, U: np.ndarray) -> np.ndarray:
    return mode_n_multiply(mode_n_multiply(mode_n_multiply(X, V.T, 0), V.T, 1), U.T, 2)


def _check_tucker_ranks(X: np.ndarray, K_V: int, K_U: int):
    if X.ndim != 3 or X.shape[0] != X.shape[1]:
        raise DimensionError(f"expected a P x P x N tensor, got shape {X.shape}")
    P, _, N = X.shape
    if not 1 <= K_V <= P:
        raise RankError(f"K_V={K_V} must satisfy 1 <= K_V <= P={P}")
    if not 1 <= K_U <= N:
        raise RankError(f"K_U={K_U} must satisfy 1 <= K_U <= N={N}")


def hosvd_semisym(X, K_V: int, K_U: int | None = None) -> TuckerDecomposition:
    """Truncated HOSVD with the two node modes sharing one factor."""
    X = np.asarray(X, dtype=float)
    K_U = K_V if K_U is None else K_U
    _check_tucker_ranks(X, K_V, K_U)
    V = _leading_left_singular(unfold(X, 0), K_V)
    U = _leading_left_singular(unfold(X, 2), K_U)
    core = _tucker_core(X, V, U)
    nx2 = frobenius_norm(X) ** 2
    fit = frobenius_norm(core) ** 2 / nx2 if nx2 > 0 else 1.0
    return TuckerDecomposition(core, V, U, fit, True, 0)


def hooi_semisym(
    X,
    K_V: int,
    K_U: int | None = None,
    *,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> TuckerDecomposition:
    """Tied-factor HOOI started from :func:`hosvd_semisym`.

    Each sweep replaces ``V`` by the top eigenvectors of the mode-0 Gram
    matrix of ``X x1 V^T x2 U^T`` (one-sided update of the tied factor), then
    ``U`` by the leading left singular vectors of the mode-2 unfolding of
    ``X x0 V^T x1 V^T``. The best-fitting iterate is returned, so the fit
    never falls below the HOSVD fit.
    """
    X = np.asarray(X, dtype=float)
    K_U = K_V if K_U is None else K_U
    start = hosvd_semisym(X, K_V, K_U)
    nx2 = frobenius_norm(X) ** 2
    if nx2 == 0:
        return start
    V, U = start.V, start.U
    best = (start.fit, V, U)
    fit_prev = start.fit
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        W = mode_n_multiply(mode_n_multiply(X, V.T, 1), U.T, 2)
        W0 = unfold(W, 0)
        evals, evecs = np.linalg.eigh(W0 @ W0.T)
        V = fix_sign(evecs[:, ::-1][:, :K_V])
        U = _leading_left_singular(unfold(mode_n_multiply(mode_n_multiply(X, V.T, 0), V.T, 1), 2), K_U)
        fit = frobenius_norm(_tucker_core(X, V, U)) ** 2 / nx2
        if fit > best[0]:
            best = (fit, V, U)
        if abs(fit - fit_prev) <= tol * max(abs(fit), 1e-300):
            converged = True
            break
        fit_prev = fit
    fit, V, U = best
    return TuckerDecomposition(_tucker_core(X, V, U), V, U, fit, converged, it)


def _four_mode_rank_one(X4, Q, v, rng, tol, max_iter, restarts):
    P, _, M, N = X4.shape
    norm_x = frobenius_norm(X4)
    u = np.ones(N) / np.sqrt(N)
    w = np.ones(M) / np.sqrt(M)
    trace: list[float] = []
    converged = False
    failures = 0
    it = 0
    while it < max_iter:
        G = _vv_contract(X4, v)  # M x N
        gw = G @ u
        if np.linalg.norm(gw) <= 1e-13 * norm_x:
            gw = G.sum(axis=1)
        if np.linalg.norm(gw) <= 1e-13 * norm_x:
            failures += 1
            if failures > restarts:
                return 0.0, fix_sign(v), w, u, trace, False
            v = _random_unit(rng, Q, P)
            trace.clear()
            continue
        w = gw / np.linalg.norm(gw)
        gu = w @ G
        ngu = np.linalg.norm(gu)
        if ngu <= 1e-13 * norm_x:
            failures += 1
            if failures > restarts:
                return 0.0, fix_sign(v), w, u, trace, False
            v = _random_unit(rng, Q, P)
            trace.clear()
            continue
        u = gu / ngu
        top = _restricted_top(X4 @ u @ w, Q)
        v = top.vector
        trace.append(top.value)
        it += 1
        if len(trace) >= 2 and abs(trace[-1] - trace[-2]) <= tol * abs(trace[-1]):
            converged = True
            break
    v = fix_sign(v)
    d = float(w @ _vv_contract(X4, v) @ u)
    if d < 0:
        u, d = -u, -d
    return d, v, w, u, trace, converged


def tn_pca_4mode(
    X4,
    K: int,
    *,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    restarts: int = DEFAULT_RESTARTS,
    seed=None,
) -> Tn4Decomposition:
    """Greedy semi-symmetric CP for a ``P x P x M x N`` tensor (features in mode 2).

    Cyclic closed-form updates: ``w`` and ``u`` are normalized contractions,
    ``v`` is the top eigenvector of the projected contracted matrix. Only
    ``V`` carries the orthogonality constraint.
    """
    X4 = np.asarray(X4, dtype=float)
    if X4.ndim != 4 or X4.shape[0] != X4.shape[1]:
        raise DimensionError(f"expected a P x P x M x N tensor, got shape {X4.shape}")
    P, _, M, N = X4.shape
    if not 1 <= K <= P:
        raise RankError(f"K={K} must satisfy 1 <= K <= P={P}")
    rng = np.random.default_rng(seed)
    norm0 = frobenius_norm(X4)
    Xh = X4.copy()
    ds, vs, ws, us, traces, conv = [], [], [], [], [], []
    for k in range(K):
        V_prev = np.column_stack(vs) if vs else np.zeros((P, 0))
        Q = _complement_basis(V_prev)
        best = None
        for r in range(restarts):
            crng = _child_rng(rng)
            v0 = _initial_vector(r, Xh, Q)
            v0 = _random_unit(crng, Q, P) if v0 is None else v0
            res = _four_mode_rank_one(Xh, Q, v0, crng, tol, max_iter, restarts)
            if best is None or res[0] > best[0]:
                best = res
        d, v, w, u, trace, converged = best
        if d <= 1e-12 * norm0:
            warnings.warn(
                f"residual exhausted after {k} components (requested {K})", RuntimeWarning, stacklevel=2
            )
            break
        Xh -= d * np.einsum("i,j,m,n->ijmn", v, v, w, u)
        ds.append(d)
        vs.append(v)
        ws.append(w)
        us.append(u)
        traces.append(list(trace))
        conv.append(converged)
    K_out = len(ds)

    def stack(cols, rows):
        return np.column_stack(cols) if K_out else np.zeros((rows, 0))

    return Tn4Decomposition(np.array(ds, dtype=float), stack(vs, P), stack(ws, M), stack(us, N), traces, conv)
