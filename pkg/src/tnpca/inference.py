"""Relating subject embeddings to traits.

Group construction, MMD two-sample tests with Benjamini-Hochberg control,
CCA / LDA directions in the embedding space, and the maps that carry a
direction back to an edge-space network.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .decompose import TnDecomposition

TRAIT_KINDS = ("continuous", "ordinal", "categorical")


class UndefinedDirectionError(ArithmeticError):
    """The trait carries no variation the embedding could align with."""


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Subject PC scores (rows) with the network basis they refer to."""

    scores: np.ndarray
    d: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        if self.scores.ndim != 2 or self.scores.shape[1] != self.d.shape[0]:
            raise ValueError("scores must be N x K with K matching d")

    @classmethod
    def from_decomposition(cls, dec: TnDecomposition) -> "EmbeddingMatrix":
        return cls(np.asarray(dec.U, dtype=float), np.asarray(dec.d, dtype=float), np.asarray(dec.V, dtype=float))

    @property
    def K(self) -> int:
        return self.scores.shape[1]

    @property
    def N(self) -> int:
        return self.scores.shape[0]

    def truncate(self, k: int) -> "EmbeddingMatrix":
        return EmbeddingMatrix(self.scores[:, :k], self.d[:k], self.V[:, :k])

    def network(self, i: int) -> np.ndarray:
        return (self.V * (self.d * self.scores[i])) @ self.V.T


@dataclass(frozen=True)
class TraitVector:
    values: np.ndarray
    kind: str = "continuous"
    name: str = "trait"

    def __post_init__(self):
        if self.kind not in TRAIT_KINDS:
            raise ValueError(f"kind must be one of {TRAIT_KINDS}")
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    @property
    def observed(self) -> np.ndarray:
        return np.flatnonzero(~np.isnan(self.values))


@dataclass(frozen=True)
class GroupEmbedding:
    mean: np.ndarray
    covariance: np.ndarray
    count: int

    @classmethod
    def from_rows(cls, rows) -> "GroupEmbedding":
        rows = np.asarray(rows, dtype=float)
        if rows.shape[0] < 2:
            raise ValueError("a group needs at least two members")
        C = np.atleast_2d(np.cov(rows, rowvar=False))
        return cls(rows.mean(axis=0), 0.5 * (C + C.T), rows.shape[0])


@dataclass(frozen=True)
class Direction:
    w: np.ndarray
    s: float
    delta_net: np.ndarray
    trait: str
    method: str
    threshold: float | None = None

    def to_dict(self) -> dict:
        out = {
            "trait": self.trait,
            "method": self.method,
            "w": self.w.tolist(),
            "s": self.s,
            "delta_net": self.delta_net.tolist(),
        }
        if self.threshold is not None:
            out["threshold"] = self.threshold
        return out


class TestResult(NamedTuple):
    statistic: float
    p_value: float
    permutations: int
    bandwidth: float


class FdrResult(NamedTuple):
    rejected: np.ndarray
    threshold: float


def extreme_groups(values, n_per_group: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Indices of the ``n_per_group`` lowest and highest observed values.

    Ties at either boundary are broken uniformly at random; the two groups are
    always disjoint. Missing values (NaN) are skipped.
    """
    values = np.asarray(values.values if isinstance(values, TraitVector) else values, dtype=float)
    obs = np.flatnonzero(~np.isnan(values))
    if obs.size < 2 * n_per_group or n_per_group < 1:
        raise ValueError(f"need at least {2 * n_per_group} observed values, have {obs.size}")
    order = obs[np.lexsort((rng.permutation(obs.size), values[obs]))]
    return np.sort(order[:n_per_group]), np.sort(order[-n_per_group:])


def _canonical_pair(A: np.ndarray, B: np.ndarray):
    # MMD is symmetric in (A, B); a fixed pooling order makes the permutation stream symmetric too
    if (A.shape[0], A.tobytes()) > (B.shape[0], B.tobytes()):
        return B, A
    return A, B


def mmd_test(A, B, permutations: int = 1000, rng: np.random.Generator | None = None) -> TestResult:
    """Biased MMD^2 with a Gaussian kernel and a label-permutation p-value.

    The kernel bandwidth is the median pairwise Euclidean distance in the
    pooled sample; ``p = (1 + #{perm >= observed}) / (1 + permutations)``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[0] < 2 or B.shape[0] < 2:
        raise ValueError("each sample needs at least two rows")
    if A.shape[1] != B.shape[1]:
        raise ValueError("samples must have the same dimension")
    rng = np.random.default_rng() if rng is None else rng
    A, B = _canonical_pair(A, B)
    Z = np.vstack([A, B])
    n, m = A.shape[0], B.shape[0]
    sq = np.sum(Z**2, axis=1)
    D2 = np.maximum(sq[:, None] + sq[None, :] - 2 * Z @ Z.T, 0.0)
    iu = np.triu_indices(n + m, 1)
    bandwidth = float(np.median(np.sqrt(D2[iu])))
    if bandwidth == 0.0:
        return TestResult(0.0, 1.0, permutations, 0.0)
    Kmat = np.exp(-D2 / (2 * bandwidth**2))

    a = np.concatenate([np.full(n, 1.0 / n), np.full(m, -1.0 / m)])
    stat = max(float(a @ Kmat @ a), 0.0)
    if permutations <= 0:
        return TestResult(stat, 1.0, 0, bandwidth)
    perms = np.argsort(rng.random((permutations, n + m)), axis=1)
    Apm = a[perms]
    null = np.einsum("ij,jk,ik->i", Apm, Kmat, Apm)
    exceed = int(np.sum(null >= stat - 1e-12))
    return TestResult(stat, (1 + exceed) / (1 + permutations), permutations, bandwidth)


def fdr_bh(p_values, alpha: float = 0.05) -> FdrResult:
    """Benjamini-Hochberg step-up procedure.

    ``threshold`` is ``alpha * i / m`` for the largest rejected rank ``i``
    (0 when nothing is rejected).
    """
    p = np.asarray(p_values, dtype=float).ravel()
    m = p.size
    if m == 0:
        return FdrResult(np.zeros(0, dtype=bool), 0.0)
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise ValueError("p-values must lie in [0, 1]")
    order = np.argsort(p, kind="stable")
    crit = alpha * np.arange(1, m + 1) / m
    below = np.flatnonzero(p[order] <= crit)
    rejected = np.zeros(m, dtype=bool)
    if below.size == 0:
        return FdrResult(rejected, 0.0)
    i_max = below[-1]
    rejected[order[: i_max + 1]] = True
    return FdrResult(rejected, float(crit[i_max]))


def _residualize(y: np.ndarray, covariates: np.ndarray | None) -> np.ndarray:
    if covariates is None:
        return y - y.mean()
    Z = np.column_stack([np.ones(y.shape[0]), covariates])
    beta, *_ = np.linalg.lstsq(Z, y, rcond=None)
    return y - Z @ beta


def direction_scale(emb: EmbeddingMatrix | np.ndarray, group0, group1) -> float:
    """``||mean(group0) - mean(group1)||`` in the embedding space."""
    S = emb.scores if isinstance(emb, EmbeddingMatrix) else np.asarray(emb, dtype=float)
    g0, g1 = np.asarray(group0), np.asarray(group1)
    if g0.size == 0 or g1.size == 0:
        raise ValueError("groups must be nonempty")
    return float(np.linalg.norm(S[g0].mean(axis=0) - S[g1].mean(axis=0)))


def delta_net(d, V, w, s: float) -> np.ndarray:
    """``s * sum_k d[k] w[k] v_k v_k^T``."""
    d = np.asarray(d, dtype=float)
    V = np.asarray(V, dtype=float)
    w = np.asarray(w, dtype=float)
    if w.shape[0] != d.shape[0] or V.shape[1] != d.shape[0]:
        raise ValueError(f"length mismatch: w has {w.shape[0]} entries, decomposition has {d.shape[0]}")
    return s * ((V * (d * w)) @ V.T)


def cca_direction(
    emb: EmbeddingMatrix,
    trait: TraitVector,
    covariates=None,
    groups: tuple | None = None,
    rng: np.random.Generator | None = None,
) -> Direction:
    """Unit direction of maximal covariance between PC scores and the trait.

    The trait is residualized on ``[1, covariates]`` (or just centered), the
    score columns are centered, and ``w = U^T y / ||U^T y||``. The scale uses
    ``groups`` (low, high) when given, otherwise the lower and upper quarters
    of the observed trait.
    """
    y_all = trait.values
    keep = ~np.isnan(y_all)
    cov = None
    if covariates is not None:
        cov = np.asarray(covariates, dtype=float).reshape(y_all.shape[0], -1)
        keep &= ~np.any(np.isnan(cov), axis=1)
        cov = cov[keep]
    idx = np.flatnonzero(keep)
    if idx.size < emb.K + 2:
        raise ValueError(f"need at least K+2={emb.K + 2} observed subjects, have {idx.size}")
    y = y_all[idx]
    yc = y - y.mean()
    yr = _residualize(y, cov)
    ref = np.linalg.norm(yc)
    if ref == 0.0 or np.linalg.norm(yr) <= 1e-10 * ref:
        raise UndefinedDirectionError(f"trait {trait.name!r} has no residual variation")
    S = emb.scores[idx]
    g = (S - S.mean(axis=0)).T @ yr
    ng = np.linalg.norm(g)
    if ng <= 1e-14 * ref * max(np.linalg.norm(S), 1.0):
        raise UndefinedDirectionError(f"trait {trait.name!r} is uncorrelated with every PC score")
    w = g / ng
    if groups is None:
        rng = np.random.default_rng(0) if rng is None else rng
        groups = extreme_groups(np.where(keep, y_all, np.nan), max(1, idx.size // 4), rng)
    s = direction_scale(emb, groups[0], groups[1])
    return Direction(w, s, delta_net(emb.d, emb.V, w, s), trait.name, "cca")


def lda_direction(
    emb: EmbeddingMatrix,
    group0,
    group1,
    *,
    regularize: bool = True,
    trait: str = "trait",
) -> Direction:
    """Fisher direction separating ``group1`` from ``group0``.

    ``w ~ (S0 + S1 + lam I)^{-1} (mu1 - mu0)`` with
    ``lam = 1e-6 tr(S0 + S1) / K`` when ``regularize`` (the default), else 0.
    ``threshold`` is the midpoint of the projected group means.
    """
    S = emb.scores
    g0 = GroupEmbedding.from_rows(S[np.asarray(group0)])
    g1 = GroupEmbedding.from_rows(S[np.asarray(group1)])
    pooled = g0.covariance + g1.covariance
    K = pooled.shape[0]
    lam = 1e-6 * np.trace(pooled) / K if regularize else 0.0
    A = pooled + lam * np.eye(K)
    if not regularize and np.linalg.cond(A) > 1e12:
        raise np.linalg.LinAlgError("pooled covariance is singular; use regularize=True")
    raw = np.linalg.solve(A, g1.mean - g0.mean)
    nr = np.linalg.norm(raw)
    if nr == 0.0:
        raise UndefinedDirectionError("group means coincide")
    w = raw / nr
    threshold = float(0.5 * (w @ g0.mean + w @ g1.mean))
    s = direction_scale(emb, group0, group1)
    return Direction(w, s, delta_net(emb.d, emb.V, w, s), trait, "lda", threshold)


def top_edges(net, n_edges: int) -> list[tuple[int, int, float]]:
    """Largest-``|value|`` off-diagonal entries of a symmetric matrix.

    Ties are broken by ``(i, j)`` in lexicographic order; zero entries are not
    reported, so fewer than ``n_edges`` triples may come back.
    """
    net = np.asarray(net, dtype=float)
    P = net.shape[0]
    if not 0 <= n_edges <= P * (P - 1) // 2:
        raise ValueError(f"n_edges={n_edges} outside [0, {P * (P - 1) // 2}]")
    i, j = np.triu_indices(P, 1)
    vals = net[i, j]
    order = np.lexsort((j, i, -np.abs(vals)))[:n_edges]
    return [(int(i[o]), int(j[o]), float(vals[o])) for o in order if vals[o] != 0.0]


def principal_network(dec, K: int | None = None) -> np.ndarray:
    """``sum_{k < K} d_k v_k v_k^T``."""
    K = dec.d.shape[0] if K is None else K
    if K > dec.d.shape[0]:
        raise ValueError(f"K={K} exceeds the {dec.d.shape[0]} available components")
    V = dec.V[:, :K]
    return (V * dec.d[:K]) @ V.T


def project_onto(scores, w):
    """``<scores, w>`` for one score row or row-wise for a matrix."""
    scores = np.asarray(scores, dtype=float)
    w = np.asarray(w.w if isinstance(w, Direction) else w, dtype=float)
    if scores.shape[-1] != w.shape[0]:
        raise ValueError(f"length mismatch: {scores.shape[-1]} vs {w.shape[0]}")
    out = scores @ w
    return float(out) if out.ndim == 0 else out
