import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tnpca.predict import (
    evaluate_trait,
    evaluate_trait_repeated,
    fit_linear,
    fit_logistic,
    identify_subjects,
    improvement_ratio,
    largest_remainder,
    make_split,
    predicted_group_means,
    select_k,
)


def remainder_oracle(N, fractions):
    """Hamilton apportionment written out step by step."""
    quotas = [N * f for f in fractions]
    seats = [int(q // 1) for q in quotas]
    while sum(seats) < N:
        rem = [(q - s, -i) for i, (q, s) in enumerate(zip(quotas, seats))]
        _, neg_i = max(rem)
        seats[-neg_i] += 1
        quotas[-neg_i] = seats[-neg_i]  # consumed
    return seats


def test_split_sizes_examples():
    assert make_split(100, seed=0).sizes == (66, 17, 17)
    assert make_split(6, seed=0).sizes == (4, 1, 1)
    assert largest_remainder(6, (0.66, 0.17, 0.17)) == remainder_oracle(6, (0.66, 0.17, 0.17))


def test_split_determinism():
    a, b = make_split(50, seed=3), make_split(50, seed=3)
    assert all(np.array_equal(x, y) for x, y in zip((a.train, a.validation, a.test), (b.train, b.validation, b.test)))


def test_split_errors():
    with pytest.raises(ValueError):
        make_split(2)
    with pytest.raises(ValueError):
        make_split(10, (0.5, 0.5, 0.0))
    with pytest.raises(ValueError):
        make_split(10, (0.5, 0.2, 0.2))


@settings(max_examples=100, deadline=None)
@given(
    N=st.integers(3, 400),
    w=st.lists(st.floats(0.05, 1.0), min_size=3, max_size=3),
    seed=st.integers(0, 2**32 - 1),
)
def test_split_partition_property(N, w, seed):
    fr = tuple(x / sum(w) for x in w)
    sizes = largest_remainder(N, fr)
    assert sizes == remainder_oracle(N, fr)
    if min(sizes) == 0:
        return
    plan = make_split(N, fr, seed)
    parts = np.concatenate([plan.train, plan.validation, plan.test])
    assert np.array_equal(np.sort(parts), np.arange(N))
    assert all(abs(s - N * f) < 1 for s, f in zip(plan.sizes, fr))


def test_linear_exact_and_intercept_only(rng):
    X = rng.standard_normal((30, 3))
    y = X @ [1.0, -2.0, 0.5] + 4.0
    m = fit_linear(X, y)
    assert np.sqrt(np.mean((m.predict(X) - y) ** 2)) <= 1e-10
    y2 = rng.standard_normal(12)
    m0 = fit_linear(None, y2)
    assert m0.intercept == pytest.approx(y2.mean(), abs=1e-14)


def test_linear_normal_equations_oracle(rng):
    X = rng.standard_normal((50, 4))
    y = rng.standard_normal(50)
    Z = np.column_stack([np.ones(50), X])
    beta = np.linalg.solve(Z.T @ Z, Z.T @ y)
    m = fit_linear(X, y)
    np.testing.assert_allclose(np.concatenate([[m.intercept], m.coef]), beta, atol=1e-8)


def test_linear_ridge_fallback_flagged(rng):
    m = fit_linear(rng.standard_normal((3, 5)), rng.standard_normal(3))
    assert m.ridge
    assert np.all(np.isfinite(m.coef))


def test_linear_affine_rescaling_invariance(rng):
    X = rng.standard_normal((40, 3))
    y = rng.standard_normal(40)
    X2 = X.copy()
    X2[:, 1] = 7.5 * X2[:, 1] - 3.0
    np.testing.assert_allclose(fit_linear(X, y).predict(X), fit_linear(X2, y).predict(X2), atol=1e-8)


def test_logistic_separable(rng):
    x = np.concatenate([rng.uniform(-3, -0.5, 20), rng.uniform(0.5, 3, 20)])
    y = (x > 0).astype(int)
    m = fit_logistic(x[:, None], y)
    assert np.mean(m.predict(x[:, None]) == y) == 1.0


def test_logistic_stationarity(rng):
    X = rng.standard_normal((200, 3))
    y = (X @ [1.0, -1.0, 0.5] + rng.standard_normal(200) > 0).astype(int)
    m = fit_logistic(X, y)
    assert m.converged
    Z = np.column_stack([np.ones(200), X])
    beta = np.concatenate([[m.intercept], m.coef])
    mu = 1 / (1 + np.exp(-Z @ beta))
    grad = Z.T @ (mu - y) + 1e-6 * np.concatenate([[0.0], m.coef])
    assert np.max(np.abs(grad)) <= 1e-6


def test_logistic_null_accuracy_is_majority_rate():
    rng = np.random.default_rng(8)
    n = 5000
    X = rng.standard_normal((n, 2))
    y = (rng.random(n) < 0.7).astype(int)
    acc = np.mean(fit_logistic(X, y).predict(X) == y)
    assert abs(acc - y.mean()) <= 0.02


def test_logistic_single_class():
    with pytest.raises(ValueError):
        fit_logistic(np.ones((5, 1)), np.zeros(5))


def test_improvement_ratio_identity():
    assert improvement_ratio(2.0, 0.5) == (2.0 - 0.5) / 2.0
    assert improvement_ratio(0.0, 0.0) == 0.0
    assert improvement_ratio(1.0, 3.0) == -2.0


def test_planted_trait_rho_near_one(rng):
    scores = rng.standard_normal((200, 10))
    y = scores[:, 0].copy()
    rep = evaluate_trait(scores, y, k_grid=(5, 10), seed=1, covariates=rng.standard_normal((200, 1)))
    assert rep.rho >= 0.99
    assert rep.psi_full <= 1e-8
    assert rep.rho == (rep.psi_baseline - rep.psi_full) / rep.psi_baseline


def test_covariate_determined_trait_rho_near_zero(rng):
    scores = rng.standard_normal((150, 10))
    age = rng.standard_normal(150)
    rep = evaluate_trait(scores, 3 * age + 1, covariates=age[:, None], k_grid=(5,), seed=0)
    assert rep.rho == 0.0


def test_categorical_trait(rng):
    scores = rng.standard_normal((300, 6))
    y = np.where(scores[:, 0] + 0.3 * rng.standard_normal(300) > 0, "heavy", "light")
    rep = evaluate_trait(scores, y, kind="categorical", k_grid=(1, 5), seed=2)
    assert rep.metric == "one-minus-accuracy"
    assert rep.psi_full < rep.psi_baseline
    assert rep.rho <= 1


def test_missing_rows_dropped(rng):
    scores = rng.standard_normal((100, 6))
    y = scores[:, 1] + 0.1 * rng.standard_normal(100)
    y[::10] = np.nan
    rep = evaluate_trait(scores, y, k_grid=(5,), seed=0)
    assert len(rep.test_values) == largest_remainder(90, (0.66, 0.17, 0.17))[2] and not np.any(np.isnan(rep.test_values))


def test_k_selection_ignores_test_rows(rng):
    scores = rng.standard_normal((120, 30))
    y = scores[:, :3] @ [1.0, 0.5, 0.2] + rng.standard_normal(120)
    plan = make_split(120, seed=4)
    clean = evaluate_trait(scores, y, split=plan, k_grid=(5, 10, 20))
    corrupted = y.copy()
    corrupted[plan.test] = 1e6 * rng.standard_normal(plan.test.size)
    dirty = evaluate_trait(scores, corrupted, split=plan, k_grid=(5, 10, 20))
    assert dirty.best_K == clean.best_K
    assert dirty.validation_psi == clean.validation_psi


def test_select_k_prefers_smaller_on_ties(rng):
    s = np.zeros((20, 4))
    y = rng.standard_normal(20)
    best, psi = select_k("continuous", (s[:10], y[:10], None), (s[10:], y[10:], None), (1, 2, 3))
    assert len(set(psi.values())) == 1
    assert best == 1


def test_repeated_runs_are_deterministic(rng):
    scores = rng.standard_normal((80, 6))
    y = rng.standard_normal(80)
    a = evaluate_trait_repeated(scores, y, k_grid=(5,), repeats=3, seed=5)
    b = evaluate_trait_repeated(scores, y, k_grid=(5,), repeats=3, seed=5)
    assert [r.rho for r in a] == [r.rho for r in b]
    assert len({r.rho for r in a}) == 3


def test_predicted_group_means(rng):
    levels = rng.integers(1, 5, 100)
    pred = levels + 0.1 * rng.standard_normal(100)
    means = predicted_group_means(pred, levels)
    vals = [means[k] for k in sorted(means)]
    assert list(means) == sorted(means) and all(np.diff(vals) > 0)
    const = predicted_group_means(np.full(100, 2.5), levels)
    assert set(const.values()) == {2.5}
    single = predicted_group_means(pred, np.zeros(100, dtype=int))
    assert single == {0: pytest.approx(pred.mean())}
    with pytest.raises(ValueError):
        predicted_group_means(pred[:5], levels)


def test_identification_examples(rng):
    G = rng.standard_normal((5, 4))
    rep = identify_subjects(G, np.arange(5), G.copy(), np.arange(5), K=4)
    assert rep.accuracy == 1.0
    assert rep.assignments.tolist() == list(range(5))
    with pytest.raises(ValueError):
        identify_subjects(np.zeros((0, 4)), [], G, np.arange(5), 2)
    with pytest.raises(ValueError):
        identify_subjects(G, np.arange(5), G, np.arange(1, 6), 2)


def test_identification_accuracy_counts(rng):
    G = np.array([[0.0], [10.0]])
    probes = np.array([[1.0], [9.0], [6.0], [4.0]])
    rep = identify_subjects(G, [0, 1], probes, [0, 1, 0, 1], K=1)
    assert rep.accuracy == 0.5
