"""Prediction harness: baseline (covariates) vs full (covariates + PC scores) models.

The improvement ratio is ``rho = (psi_baseline - psi_full) / psi_baseline``
where ``psi`` is the test RMSE for continuous/ordinal traits and
``1 - accuracy`` for binary categorical traits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_FRACTIONS = (0.66, 0.17, 0.17)
DEFAULT_K_GRID = (5, 10, 20, 30, 40, 60)


@dataclass(frozen=True)
class SplitPlan:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    fractions: tuple = DEFAULT_FRACTIONS
    seed: int | None = None

    @property
    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.validation), len(self.test)


def largest_remainder(N: int, fractions) -> list[int]:
    raw = [N * f for f in fractions]
    sizes = [math.floor(r) for r in raw]
    short = N - sum(sizes)
    by_remainder = sorted(range(len(raw)), key=lambda i: (-(raw[i] - sizes[i]), i))
    for i in by_remainder[:short]:
        sizes[i] += 1
    return sizes


def make_split(N: int, fractions=DEFAULT_FRACTIONS, seed: int | None = None) -> SplitPlan:
    """Seeded random train/validation/test partition sized by largest-remainder rounding."""
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f <= 0 for f in fractions) or abs(sum(fractions) - 1) > 1e-9:
        raise ValueError(f"fractions must be three positive numbers summing to 1, got {fractions}")
    sizes = largest_remainder(N, fractions)
    if min(sizes) == 0:
        raise ValueError(f"N={N} is too small for nonempty parts {sizes}")
    perm = np.random.default_rng(seed).permutation(N)
    a, b = sizes[0], sizes[0] + sizes[1]
    return SplitPlan(np.sort(perm[:a]), np.sort(perm[a:b]), np.sort(perm[b:]), fractions, seed)


def _design(X, n: int) -> np.ndarray:
    if X is None:
        return np.ones((n, 1))
    X = np.asarray(X, dtype=float).reshape(n, -1)
    return np.column_stack([np.ones(n), X])


@dataclass(frozen=True)
class LinearModel:
    coef: np.ndarray
    intercept: float
    ridge: bool = False

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        n = X.shape[0]
        return self.intercept + X.reshape(n, -1) @ self.coef


def fit_linear(X, y) -> LinearModel:
    """Least squares with intercept; switches to a tiny ridge when rows <= columns."""
    y = np.asarray(y, dtype=float)
    Z = _design(X, y.shape[0])
    if Z.shape[0] >= Z.shape[1] + 1:
        beta, *_ = np.linalg.lstsq(Z, y, rcond=None)
        return LinearModel(beta[1:], float(beta[0]))
    G = Z.T @ Z
    lam = 1e-6 * max(np.trace(G), 1e-12) / G.shape[0]
    pen = lam * np.eye(G.shape[0])
    pen[0, 0] = 0.0
    beta = np.linalg.lstsq(G + pen, Z.T @ y, rcond=None)[0]
    return LinearModel(beta[1:], float(beta[0]), ridge=True)


@dataclass(frozen=True)
class LogisticModel:
    coef: np.ndarray
    intercept: float
    classes: tuple
    converged: bool = True

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        z = self.intercept + X.reshape(X.shape[0], -1) @ self.coef
        return 0.5 * (1 + np.tanh(0.5 * z))

    def predict(self, X) -> np.ndarray:
        p = self.predict_proba(X)
        return np.where(p >= 0.5, self.classes[1], self.classes[0])


def _penalized_nll(beta, Z, t, l2):
    z = Z @ beta
    return float(np.sum(np.logaddexp(0.0, z) - t * z) + 0.5 * l2 * beta[1:] @ beta[1:])


def fit_logistic(X, y, *, l2: float = 1e-6, max_iter: int = 200, tol: float = 1e-10) -> LogisticModel:
    """Penalized maximum likelihood by Newton steps with backtracking.

    The L2 penalty (intercept excluded) keeps separable data finite.
    """
    y = np.asarray(y)
    classes = tuple(np.unique(y).tolist())
    if len(classes) != 2:
        raise ValueError(f"logistic regression needs exactly two classes, got {len(classes)}")
    t = (y == classes[1]).astype(float)
    Z = _design(X, y.shape[0])
    p_dim = Z.shape[1]
    pen = np.full(p_dim, l2)
    pen[0] = 0.0
    beta = np.zeros(p_dim)
    f = _penalized_nll(beta, Z, t, l2)
    converged = False
    for _ in range(max_iter):
        mu = 0.5 * (1 + np.tanh(0.5 * (Z @ beta)))
        grad = Z.T @ (mu - t) + pen * beta
        if np.max(np.abs(grad)) <= tol * max(1.0, len(t)):
            converged = True
            break
        H = (Z * (mu * (1 - mu))[:, None]).T @ Z + np.diag(pen) + 1e-12 * np.eye(p_dim)
        step = np.linalg.lstsq(H, grad, rcond=None)[0]
        a = 1.0
        while a > 1e-10:
            cand = beta - a * step
            fc = _penalized_nll(cand, Z, t, l2)
            if fc <= f:
                break
            a *= 0.5
        else:
            converged = True
            break
        beta, f = cand, fc
    return LogisticModel(beta[1:], float(beta[0]), classes, converged)


def _stack(cov, scores, rows, k):
    parts = []
    if cov is not None:
        parts.append(cov[rows])
    if k > 0:
        parts.append(scores[rows, :k])
    if not parts:
        return None
    return np.column_stack(parts)


def _fit(kind, X, y):
    return fit_logistic(X, y) if kind == "categorical" else fit_linear(X, y)


def _predict(model, X, n):
    return model.predict(X if X is not None else np.zeros((n, 0)))


def _psi(kind, pred, y) -> float:
    if kind == "categorical":
        return float(1.0 - np.mean(pred == y))
    return float(np.sqrt(np.mean((pred - y) ** 2)))


@dataclass
class PredictionReport:
    trait: str
    psi_baseline: float
    psi_full: float
    rho: float
    metric: str
    best_K: int
    validation_psi: dict = field(default_factory=dict)
    test_predictions: np.ndarray | None = None
    test_values: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "trait": self.trait,
            "metric": self.metric,
            "psi_baseline": self.psi_baseline,
            "psi_full": self.psi_full,
            "rho": self.rho,
            "best_K": self.best_K,
            "validation_psi": {str(k): v for k, v in self.validation_psi.items()},
        }


def improvement_ratio(psi_baseline: float, psi_full: float, scale: float = 1.0) -> float:
    # a saturated baseline (psi ~ 0) leaves nothing to improve
    if psi_baseline <= 1e-12 * max(scale, 1e-300):
        return 0.0
    return (psi_baseline - psi_full) / psi_baseline


def select_k(kind, train: tuple, validation: tuple, k_grid) -> tuple[int, dict]:
    """Choose the PC count by validation error; ties go to the smaller ``K``.

    ``train`` and ``validation`` are ``(scores, y, covariates)`` row subsets,
    so test rows cannot reach this step.
    """
    s_tr, y_tr, c_tr = train
    s_va, y_va, c_va = validation
    all_tr, all_va = np.arange(len(y_tr)), np.arange(len(y_va))
    val_psi = {}
    for k in k_grid:
        model = _fit(kind, _stack(c_tr, s_tr, all_tr, k), y_tr)
        pred = _predict(model, _stack(c_va, s_va, all_va, k), len(y_va))
        val_psi[k] = _psi(kind, pred, y_va)
    best = min(val_psi, key=lambda k: (val_psi[k], k))
    return best, val_psi


def evaluate_trait(
    scores,
    y,
    kind: str = "continuous",
    covariates=None,
    split: SplitPlan | None = None,
    k_grid=DEFAULT_K_GRID,
    name: str = "trait",
    seed: int | None = None,
) -> PredictionReport:
    """Fit baseline and full models on train, pick ``K`` on validation, score on test.

    Rows with a missing trait or covariate are dropped first (a supplied
    ``split`` indexes the remaining rows). ``k_grid``
    entries larger than the available PC count are skipped.
    """
    scores = np.asarray(scores, dtype=float)
    y = np.asarray(y, dtype=float if kind != "categorical" else None)
    cov = None if covariates is None else np.asarray(covariates, dtype=float).reshape(scores.shape[0], -1)
    keep = np.ones(scores.shape[0], dtype=bool)
    if kind != "categorical":
        keep &= ~np.isnan(y)
    if cov is not None:
        keep &= ~np.any(np.isnan(cov), axis=1)
    idx = np.flatnonzero(keep)
    scores, y = scores[idx], y[idx]
    cov = None if cov is None else cov[idx]
    split = make_split(len(idx), seed=seed) if split is None else split
    if min(split.sizes) == 0:
        raise ValueError("every split part must be nonempty")
    grid = sorted({int(k) for k in k_grid if 1 <= k <= scores.shape[1]})
    if not grid:
        raise ValueError(f"no K in {tuple(k_grid)} fits the {scores.shape[1]} available PCs")

    def rows(part):
        return scores[part], y[part], None if cov is None else cov[part]

    best_k, val_psi = select_k(kind, rows(split.train), rows(split.validation), grid)

    tr, te = split.train, split.test
    base = _fit(kind, _stack(cov, scores, tr, 0), y[tr])
    full = _fit(kind, _stack(cov, scores, tr, best_k), y[tr])
    pred_b = _predict(base, _stack(cov, scores, te, 0), len(te))
    pred_f = _predict(full, _stack(cov, scores, te, best_k), len(te))
    psi_b, psi_f = _psi(kind, pred_b, y[te]), _psi(kind, pred_f, y[te])
    scale = 1.0 if kind == "categorical" else float(np.std(y[tr])) or 1.0
    return PredictionReport(
        name,
        psi_b,
        psi_f,
        improvement_ratio(psi_b, psi_f, scale),
        "one-minus-accuracy" if kind == "categorical" else "rmse",
        best_k,
        val_psi,
        pred_f,
        y[te],
    )


def evaluate_trait_repeated(
    scores,
    y,
    kind: str = "continuous",
    covariates=None,
    k_grid=DEFAULT_K_GRID,
    repeats: int = 10,
    seed: int = 0,
    name: str = "trait",
) -> list[PredictionReport]:
    """Run :func:`evaluate_trait` over ``repeats`` independent random splits."""
    seeds = np.random.SeedSequence(seed).generate_state(repeats)
    return [
        evaluate_trait(scores, y, kind, covariates, None, k_grid, name, seed=int(s)) for s in seeds
    ]


def predicted_group_means(predictions, levels) -> dict:
    """Mean prediction per observed level, in ascending level order."""
    predictions = np.asarray(predictions, dtype=float)
    levels = np.asarray(levels)
    if predictions.shape[0] != levels.shape[0]:
        raise ValueError("predictions and levels must have the same length")
    out = {}
    for lv in np.unique(levels):
        members = predictions[levels == lv]
        if members.size == 0:
            raise ValueError(f"level {lv} is empty")
        out[lv.item() if hasattr(lv, "item") else lv] = float(members.mean())
    return out


@dataclass
class IdentificationReport:
    accuracy: float
    K: int
    assignments: np.ndarray

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "K": self.K, "assignments": self.assignments.tolist()}


def identify_subjects(gallery, gallery_labels, probes, probe_labels, K: int) -> IdentificationReport:
    """1-nearest-neighbour identification on the first ``K`` PC scores."""
    gallery = np.asarray(gallery, dtype=float)
    probes = np.asarray(probes, dtype=float)
    gallery_labels = np.asarray(gallery_labels)
    probe_labels = np.asarray(probe_labels)
    if gallery.shape[0] == 0:
        raise ValueError("empty gallery")
    if not set(probe_labels.tolist()) <= set(gallery_labels.tolist()):
        raise ValueError("gallery does not cover every probe subject")
    G, Pr = gallery[:, :K], probes[:, :K]
    dist = np.sum(Pr**2, axis=1)[:, None] + np.sum(G**2, axis=1)[None, :] - 2 * Pr @ G.T
    assigned = gallery_labels[np.argmin(dist, axis=1)]
    acc = float(np.mean(assigned == probe_labels)) if len(probe_labels) else float("nan")
    return IdentificationReport(acc, K, assigned)
