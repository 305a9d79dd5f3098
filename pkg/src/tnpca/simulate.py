"""Synthetic semi-symmetric tensors with Wishart noise and the two recovery metrics.

The generative model is ``X = sum_k D[k] v_k o v_k o u_k + c E`` with
``D[k] = (2 - 0.1 k) sqrt(P N)``, ``V`` drawn uniformly from the Stiefel
manifold, ``U`` either Stiefel or independent unit-norm Gaussian columns, and
each noise slice ``E[:, :, n] ~ Wishart(I, P)``. The scalar ``c`` is chosen so
that ``||signal|| / ||c E||`` equals the requested SNR.
"""
from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .decompose import (
    TnDecomposition,
    TuckerDecomposition,
    hooi_semisym,
    hosvd_semisym,
    tn_pca,
)
from .tensor import frobenius_norm, mode_n_multiply

log = logging.getLogger(__name__)

U_MODES = ("orthogonal", "gaussian")
METHODS = ("tnpca", "hosvd", "hooi")
DEFAULT_SNR_GRID = (0.25, 0.5, 1.0, 2.0, 4.0)


@dataclass(frozen=True)
class SimulationConfig:
    P: int = 30
    N: int = 100
    K: int = 5
    snr: float = 1.0
    u_mode: str = "gaussian"
    seed: int = 0
    replicates: int = 10

    def __post_init__(self):
        if self.P < 1 or self.N < 1:
            raise ValueError("P and N must be positive")
        if not 1 <= self.K <= min(self.P, self.N):
            raise ValueError(f"K={self.K} must satisfy 1 <= K <= min(P, N)")
        if not self.snr > 0:
            raise ValueError(f"snr must be positive, got {self.snr}")
        if self.u_mode not in U_MODES:
            raise ValueError(f"u_mode must be one of {U_MODES}, got {self.u_mode!r}")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")


@dataclass(frozen=True)
class SimulationDraw:
    X: np.ndarray
    D_true: np.ndarray
    V_true: np.ndarray
    U_true: np.ndarray
    noise_scale: float

    @property
    def signal(self) -> np.ndarray:
        return np.einsum("k,ik,jk,nk->ijn", self.D_true, self.V_true, self.V_true, self.U_true)


def sample_stiefel(P: int, K: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed ``P x K`` matrix with orthonormal columns."""
    if not 1 <= K <= P:
        raise ValueError(f"K={K} must satisfy 1 <= K <= P={P}")
    Q, R = np.linalg.qr(rng.standard_normal((P, K)))
    s = np.sign(np.diag(R))
    s[s == 0] = 1.0
    return Q * s


def sample_unit_gaussian(N: int, K: int, rng: np.random.Generator) -> np.ndarray:
    G = rng.standard_normal((N, K))
    return G / np.linalg.norm(G, axis=0)


def sample_wishart_noise(P: int, N: int, rng: np.random.Generator) -> np.ndarray:
    """``P x P x N`` tensor whose slices are iid ``G G^T`` with ``G`` standard Gaussian ``P x P``."""
    G = rng.standard_normal((N, P, P))
    E = G @ G.transpose(0, 2, 1)
    E = 0.5 * (E + E.transpose(0, 2, 1))
    return np.ascontiguousarray(E.transpose(1, 2, 0))


def core_values(P: int, N: int, K: int) -> np.ndarray:
    k = np.arange(1, K + 1)
    return (2.0 - 0.1 * k) * math.sqrt(P * N)


def generate(cfg: SimulationConfig, rng: np.random.Generator) -> SimulationDraw:
    D = core_values(cfg.P, cfg.N, cfg.K)
    V = sample_stiefel(cfg.P, cfg.K, rng)
    if cfg.u_mode == "orthogonal":
        U = sample_stiefel(cfg.N, cfg.K, rng)
    else:
        U = sample_unit_gaussian(cfg.N, cfg.K, rng)
    S = np.einsum("k,ik,jk,nk->ijn", D, V, V, U)
    E = sample_wishart_noise(cfg.P, cfg.N, rng)
    c = 0.0 if math.isinf(cfg.snr) else frobenius_norm(S) / (cfg.snr * frobenius_norm(E))
    X = S + c * E
    return SimulationDraw(X, D, V, U, c)


def greedy_match(C: np.ndarray) -> np.ndarray:
    """Greedy assignment on ``|C|`` (rows = true, cols = estimated).

    Returns ``match`` with ``match[i]`` the estimated column paired with true
    row ``i``, or -1 when no column is left.
    """
    A = np.abs(np.asarray(C, dtype=float)).copy()
    n_true, n_est = A.shape
    match = -np.ones(n_true, dtype=int)
    for _ in range(min(n_true, n_est)):
        i, j = np.unravel_index(np.argmax(A), A.shape)
        match[i] = j
        A[i, :] = -np.inf
        A[:, j] = -np.inf
    return match


def _estimated_core(dec) -> tuple[np.ndarray, np.ndarray, np.ndarray, bool]:
    if isinstance(dec, TuckerDecomposition):
        return dec.core, dec.V, dec.U, False
    K = dec.d.shape[0]
    core = np.zeros((K, K, K))
    core[np.arange(K), np.arange(K), np.arange(K)] = dec.d
    return core, dec.V, dec.U, True


def relative_core_error(draw: SimulationDraw, dec) -> float:
    """``||D - D_hat|| / ||D||`` after aligning estimated components with the truth.

    Network factors are paired greedily by largest ``|cos|``; for Tucker fits
    the subject factors are paired the same way, for CP fits they follow the
    network pairing. Column signs are aligned with the truth before the
    estimated core is compared to the diagonal true core.
    """
    D_true = np.asarray(draw.D_true, dtype=float)
    K = D_true.shape[0]
    core, V, U, tied = _estimated_core(dec)
    if V.shape[1] == 0:
        return 1.0
    if V.shape[1] != K or U.shape[1] != K:
        warnings.warn(
            f"rank mismatch: true K={K}, estimated ({V.shape[1]}, {U.shape[1]}); comparing on overlap",
            RuntimeWarning,
            stacklevel=2,
        )
    CV = draw.V_true.T @ V
    mv = greedy_match(CV)
    if tied:
        mu = mv
    else:
        mu = greedy_match(draw.U_true.T @ U)

    sv = np.array([np.sign(CV[i, j]) if j >= 0 else 0.0 for i, j in enumerate(mv)])
    CU = draw.U_true.T @ U
    su = np.array([np.sign(CU[i, j]) if j >= 0 else 0.0 for i, j in enumerate(mu)])
    sv[sv == 0] = 1.0
    su[su == 0] = 1.0

    aligned = np.zeros((K, K, K))
    for a in range(K):
        if mv[a] < 0:
            continue
        for b in range(K):
            if mv[b] < 0:
                continue
            for c in range(K):
                if mu[c] < 0:
                    continue
                aligned[a, b, c] = sv[a] * sv[b] * su[c] * core[mv[a], mv[b], mu[c]]
    D = np.zeros((K, K, K))
    D[np.arange(K), np.arange(K), np.arange(K)] = D_true
    return frobenius_norm(D - aligned) / frobenius_norm(D)


def _projector(A: np.ndarray) -> tuple[np.ndarray, bool]:
    G = A.T @ A
    s = np.linalg.svd(G, compute_uv=False)
    singular = bool(s.size and s[-1] <= 1e-10 * max(s[0], 1e-300))
    Ginv = np.linalg.pinv(G, rcond=1e-10, hermitian=True)
    return A @ Ginv @ A.T, singular


def variance_explained(X, dec, k: int) -> float:
    """Share of ``||X||^2`` captured by projecting onto the first ``k`` network and subject factors.

    Uses ``P = A (A^T A)^+ A^T`` so non-orthogonal subject factors are handled.
    """
    X = np.asarray(X, dtype=float)
    if k == 0:
        return 0.0
    V, U = dec.V, dec.U
    if k > V.shape[1] or k > U.shape[1]:
        raise ValueError(f"k={k} exceeds the number of components")
    PV, sing_v = _projector(V[:, :k])
    PU, sing_u = _projector(U[:, :k])
    if sing_v or sing_u:
        warnings.warn("singular factor Gram matrix; used pseudo-inverse", RuntimeWarning, stacklevel=2)
    Y = mode_n_multiply(mode_n_multiply(mode_n_multiply(X, PV, 0), PV, 1), PU, 2)
    nx2 = frobenius_norm(X) ** 2
    return frobenius_norm(Y) ** 2 / nx2 if nx2 > 0 else 0.0


def cumulative_variance_explained(X, dec) -> np.ndarray:
    K = min(dec.V.shape[1], dec.U.shape[1])
    return np.array([variance_explained(X, dec, k) for k in range(1, K + 1)])


def decompose(method: str, X: np.ndarray, K: int, seed=None):
    if method == "tnpca":
        return tn_pca(X, K, seed=seed)
    if method == "hosvd":
        return hosvd_semisym(X, K, K)
    if method == "hooi":
        return hooi_semisym(X, K, K)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


@dataclass
class StudyCell:
    method: str
    u_mode: str
    snr: float
    K: int
    core_errors: list = field(default_factory=list)
    variance_explained: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    @property
    def core_error_mean(self) -> float:
        return float(np.mean(self.core_errors)) if self.core_errors else float("nan")

    @property
    def core_error_std(self) -> float:
        return float(np.std(self.core_errors)) if self.core_errors else float("nan")

    @property
    def variance_explained_mean(self) -> list:
        return np.mean(self.variance_explained, axis=0).tolist() if self.variance_explained else []

    @property
    def variance_explained_std(self) -> list:
        return np.std(self.variance_explained, axis=0).tolist() if self.variance_explained else []

    def summary(self) -> dict:
        return {
            "method": self.method,
            "u_mode": self.u_mode,
            "snr": self.snr,
            "K": self.K,
            "replicates": len(self.core_errors),
            "core_error_mean": self.core_error_mean,
            "core_error_std": self.core_error_std,
            "variance_explained_mean": self.variance_explained_mean,
            "variance_explained_std": self.variance_explained_std,
            "core_errors": list(self.core_errors),
            "failures": list(self.failures),
        }


@dataclass
class SimulationReport:
    config: dict
    cells: list

    def cell(self, method: str, u_mode: str, snr: float, K: int) -> StudyCell:
        for c in self.cells:
            if (c.method, c.u_mode, c.snr, c.K) == (method, u_mode, snr, K):
                return c
        raise KeyError((method, u_mode, snr, K))

    def to_dict(self) -> dict:
        return {"config": self.config, "cells": [c.summary() for c in self.cells]}

    def rows(self):
        """Flat rows: one per (cell, k) for the delimited report."""
        for c in self.cells:
            ve_m, ve_s = c.variance_explained_mean, c.variance_explained_std
            for k in range(len(ve_m)):
                yield {
                    "method": c.method,
                    "u_mode": c.u_mode,
                    "snr": c.snr,
                    "K": c.K,
                    "k": k + 1,
                    "core_error_mean": c.core_error_mean,
                    "core_error_std": c.core_error_std,
                    "variance_explained_mean": ve_m[k],
                    "variance_explained_std": ve_s[k],
                }


def _run_replicate(base: SimulationConfig, u_mode, snr, K, methods, cell_index, rep):
    ss = np.random.SeedSequence([base.seed, cell_index, rep])
    data_seed, method_seed = ss.spawn(2)
    cfg = SimulationConfig(base.P, base.N, K, snr, u_mode, base.seed, base.replicates)
    draw = generate(cfg, np.random.default_rng(data_seed))
    out = {}
    for m in methods:
        try:
            dec = decompose(m, draw.X, K, seed=np.random.default_rng(method_seed))
            out[m] = (relative_core_error(draw, dec), cumulative_variance_explained(draw.X, dec).tolist(), None)
        except Exception as exc:  # recorded per cell, never aborts the sweep
            log.warning("cell %s/%s/%s/%s rep %d failed: %s", m, u_mode, snr, K, rep, exc)
            out[m] = (None, None, f"{type(exc).__name__}: {exc}")
    return out


def run_study(
    snr_grid=DEFAULT_SNR_GRID,
    rank_grid=(5,),
    methods=METHODS,
    u_modes=U_MODES,
    base: SimulationConfig | None = None,
    threads: int = 1,
) -> SimulationReport:
    """Sweep (u_mode, snr, K); every method sees the same draws in each replicate.

    Replicate ``r`` of grid cell ``i`` uses the seed stream
    ``(base.seed, i, r)``, so results do not depend on scheduling.
    """
    base = SimulationConfig() if base is None else base
    snr_grid, rank_grid = list(snr_grid), list(rank_grid)
    if not snr_grid or not rank_grid or not methods or not u_modes:
        raise ValueError("study grid must be nonempty")
    grid = [(u, s, K) for u in u_modes for s in snr_grid for K in rank_grid]
    jobs = [(i, r) for i in range(len(grid)) for r in range(base.replicates)]

    def work(job):
        i, r = job
        u, s, K = grid[i]
        return _run_replicate(base, u, s, K, methods, i, r)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(j) for j in jobs]

    cells = {(m, *g): StudyCell(m, *g) for g in grid for m in methods}
    for (i, r), res in zip(jobs, results):
        for m in methods:
            err, ve, fail = res[m]
            cell = cells[(m, *grid[i])]
            if fail is not None:
                cell.failures.append({"replicate": r, "error": fail})
            else:
                cell.core_errors.append(err)
                cell.variance_explained.append(ve)
    config = asdict(base) | {
        "snr_grid": snr_grid,
        "rank_grid": rank_grid,
        "methods": list(methods),
        "u_modes": list(u_modes),
    }
    return SimulationReport(config, list(cells.values()))


def generate_test_retest(
    n_subjects: int,
    n_scans: int,
    P: int,
    rng: np.random.Generator,
    *,
    ratio: float = 5.0,
    rank: int = 10,
) -> tuple[np.ndarray, np.ndarray]:
    """Repeated scans of the same subjects.

    Each subject has a network ``B + S_i`` where ``B`` is a shared positive
    baseline (norm ``2 * ratio``) and ``S_i`` a subject-specific combination of ``rank`` rank-one
    networks; each scan adds symmetric Gaussian noise. ``ratio`` is
    ``||S_i|| / ||scan noise||`` on average.

    Returns the ``P x P x (n_subjects * n_scans)`` tensor and subject labels.
    """
    rank = min(rank, P)
    B = np.abs(rng.standard_normal((P, P)))
    B = B + B.T
    B *= 2.0 * ratio / np.linalg.norm(B)
    V = sample_stiefel(P, rank, rng)
    scans, labels = [], []
    for i in range(n_subjects):
        a = rng.standard_normal(rank)
        S = (V * a) @ V.T
        S *= ratio / np.linalg.norm(S)
        for _ in range(n_scans):
            Z = rng.standard_normal((P, P))
            Z = (Z + Z.T) / 2
            Z /= np.linalg.norm(Z)
            scans.append(B + S + Z)
            labels.append(i)
    return np.stack(scans, axis=2), np.array(labels)


def generate_planted_trait(
    cfg: SimulationConfig,
    rng: np.random.Generator,
    *,
    edge: tuple[int, int] = (0, 1),
    component: int = 0,
    trait_noise: float = 0.5,
    n_null_traits: int = 4,
) -> tuple[SimulationDraw, np.ndarray, list[str]]:
    """Simulation draw whose component ``component`` is localized on ``edge`` and drives a trait.

    The planted network factor is ``(e_i + e_j) / sqrt(2)``; the remaining
    network factors are Stiefel draws orthogonal to it. Trait 0 equals the
    standardized subject score of the planted component plus Gaussian noise;
    the other traits are pure noise.
    """
    i, j = edge
    if i == j or not (0 <= i < cfg.P and 0 <= j < cfg.P):
        raise ValueError(f"invalid edge {edge} for P={cfg.P}")
    v0 = np.zeros(cfg.P)
    v0[[i, j]] = 1.0 / math.sqrt(2.0)
    Q, _ = np.linalg.qr(np.column_stack([v0, np.eye(cfg.P)]))
    comp = Q[:, 1:]
    rest = comp @ sample_stiefel(cfg.P - 1, cfg.K - 1, rng) if cfg.K > 1 else np.zeros((cfg.P, 0))
    cols = list(rest.T)
    cols.insert(component, v0)
    V = np.column_stack(cols)
    if cfg.u_mode == "orthogonal":
        U = sample_stiefel(cfg.N, cfg.K, rng)
    else:
        U = sample_unit_gaussian(cfg.N, cfg.K, rng)
    D = core_values(cfg.P, cfg.N, cfg.K)
    S = np.einsum("k,ik,jk,nk->ijn", D, V, V, U)
    E = sample_wishart_noise(cfg.P, cfg.N, rng)
    c = 0.0 if math.isinf(cfg.snr) else frobenius_norm(S) / (cfg.snr * frobenius_norm(E))
    draw = SimulationDraw(S + c * E, D, V, U, c)

    score = U[:, component]
    score = (score - score.mean()) / score.std()
    traits = [score + trait_noise * rng.standard_normal(cfg.N)]
    traits += [rng.standard_normal(cfg.N) for _ in range(n_null_traits)]
    names = ["planted"] + [f"null{t + 1}" for t in range(n_null_traits)]
    return draw, np.column_stack(traits), names
