import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tnpca.decompose import TnDecomposition, TuckerDecomposition, hooi_semisym, hosvd_semisym, tn_pca
from tnpca.simulate import (
    SimulationConfig,
    SimulationDraw,
    core_values,
    cumulative_variance_explained,
    generate,
    generate_planted_trait,
    generate_test_retest,
    greedy_match,
    relative_core_error,
    run_study,
    sample_stiefel,
    sample_unit_gaussian,
    sample_wishart_noise,
    variance_explained,
)
from tnpca.tensor import frobenius_norm, max_asymmetry, mode_n_multiply


def test_stiefel_orthonormal_and_square_det(rng):
    Q = sample_stiefel(7, 3, rng)
    assert np.max(np.abs(Q.T @ Q - np.eye(3))) <= 1e-12
    F = sample_stiefel(5, 5, rng)
    assert abs(abs(np.linalg.det(F)) - 1) <= 1e-10
    with pytest.raises(ValueError):
        sample_stiefel(2, 3, rng)


def test_stiefel_column_mean_is_zero():
    rng = np.random.default_rng(5)
    draws = np.array([sample_stiefel(5, 1, rng)[:, 0] for _ in range(10_000)])
    # each coordinate of a uniform unit vector in R^5 has variance 1/5
    bound = 3 * math.sqrt(1 / 5 / 10_000)
    assert np.all(np.abs(draws.mean(axis=0)) <= bound)


def test_stiefel_has_no_sign_bias():
    # without the R-diagonal correction the first entry of QR's Q skews negative
    rng = np.random.default_rng(6)
    first = np.array([sample_stiefel(4, 2, rng)[0, 0] for _ in range(4000)])
    assert abs(np.mean(first > 0) - 0.5) <= 3 * 0.5 / math.sqrt(4000)


def test_unit_gaussian_columns(rng):
    U = sample_unit_gaussian(20, 4, rng)
    np.testing.assert_allclose(np.linalg.norm(U, axis=0), 1.0, atol=1e-14)


def test_wishart_slices_psd_and_symmetric(rng):
    E = sample_wishart_noise(5, 6, rng)
    assert max_asymmetry(E) == 0.0
    for n in range(6):
        assert np.linalg.eigvalsh(E[:, :, n]).min() >= -1e-10


def test_wishart_mean_and_variance_oracles():
    P, n = 4, 2000
    E = sample_wishart_noise(P, n, np.random.default_rng(11))
    mean = E.mean(axis=2)
    # Var(A_ii) = 2P, Var(A_ij) = P for i != j
    se = np.sqrt(np.where(np.eye(P, dtype=bool), 2 * P, P) / n)
    assert np.all(np.abs(mean - P * np.eye(P)) <= 3 * se)
    diag = E[0, 0, :]
    # diagonal entry is P * chi2_P / P ... i.e. chi2_P; Var of sample variance ~ (E[x^4]-var^2)/n
    var = diag.var(ddof=1)
    m4 = 12 * P * (P + 4)  # fourth central moment of chi2_P
    se_var = math.sqrt((m4 - (2 * P) ** 2) / n)
    assert abs(var - 2 * P) <= 3 * se_var


def test_core_values_formula():
    D = core_values(100, 500, 3)
    np.testing.assert_allclose(D, [1.9 * math.sqrt(50000), 1.8 * math.sqrt(50000), 1.7 * math.sqrt(50000)])


def test_config_validation():
    with pytest.raises(ValueError):
        SimulationConfig(P=3, N=10, K=4)
    with pytest.raises(ValueError):
        SimulationConfig(snr=0)
    with pytest.raises(ValueError):
        SimulationConfig(u_mode="other")
    with pytest.raises(ValueError):
        SimulationConfig(replicates=0)


@pytest.mark.parametrize("u_mode", ["orthogonal", "gaussian"])
def test_generate_realized_snr(u_mode):
    cfg = SimulationConfig(P=8, N=12, K=3, snr=0.7, u_mode=u_mode)
    draw = generate(cfg, np.random.default_rng(0))
    S = draw.signal
    noise = draw.X - S
    assert frobenius_norm(S) / frobenius_norm(noise) == pytest.approx(0.7, rel=1e-12)
    assert max_asymmetry(draw.X) <= 1e-12
    np.testing.assert_array_equal(draw.D_true, core_values(8, 12, 3))


def test_generate_deterministic():
    cfg = SimulationConfig(P=6, N=8, K=2)
    a = generate(cfg, np.random.default_rng(3))
    b = generate(cfg, np.random.default_rng(3))
    assert np.array_equal(a.X, b.X)


@pytest.mark.parametrize("u_mode", ["orthogonal", "gaussian"])
def test_near_noiseless_recovery(u_mode):
    cfg = SimulationConfig(P=12, N=20, K=3, snr=1e8, u_mode=u_mode)
    draw = generate(cfg, np.random.default_rng(1))
    assert relative_core_error(draw, tn_pca(draw.X, 3, seed=0)) <= 1e-6
    if u_mode == "orthogonal":
        assert relative_core_error(draw, hosvd_semisym(draw.X, 3)) <= 1e-6
        assert relative_core_error(draw, hooi_semisym(draw.X, 3)) <= 1e-6


def test_core_error_trivial_cases(rng):
    cfg = SimulationConfig(P=6, N=8, K=3, snr=math.inf)
    draw = generate(cfg, rng)
    exact = TnDecomposition(draw.D_true, draw.V_true, draw.U_true)
    assert relative_core_error(draw, exact) == 0.0
    zero = TnDecomposition(np.zeros(3), draw.V_true, draw.U_true)
    assert relative_core_error(draw, zero) == pytest.approx(1.0)
    perm = np.array([2, 0, 1])
    signs = np.array([1.0, -1.0, 1.0])
    shuffled = TnDecomposition(draw.D_true[perm], draw.V_true[:, perm] * signs, draw.U_true[:, perm])
    assert relative_core_error(draw, shuffled) <= 1e-14
    # v -> -v leaves v o v o u unchanged; u -> -u negates it
    flipped = TnDecomposition(draw.D_true, draw.V_true, -draw.U_true)
    assert relative_core_error(draw, flipped) == pytest.approx(2.0)
    empty = TnDecomposition(np.zeros(0), np.zeros((6, 0)), np.zeros((8, 0)))
    assert relative_core_error(draw, empty) == 1.0


def test_core_error_rank_mismatch_warns(rng):
    draw = generate(SimulationConfig(P=6, N=8, K=3, snr=math.inf), rng)
    with pytest.warns(RuntimeWarning, match="rank mismatch"):
        relative_core_error(draw, TnDecomposition(draw.D_true[:2], draw.V_true[:, :2], draw.U_true[:, :2]))


def test_greedy_match():
    C = np.array([[0.1, 0.9, 0.0], [0.8, 0.85, 0.2], [0.0, 0.1, -0.3]])
    assert greedy_match(C).tolist() == [1, 0, 2]
    assert greedy_match(np.ones((3, 1))).tolist() == [0, -1, -1]


def shortcut_oracle(X, V, U, k):
    core = mode_n_multiply(mode_n_multiply(mode_n_multiply(X, V[:, :k].T, 0), V[:, :k].T, 1), U[:, :k].T, 2)
    return float(np.sum(core**2) / np.sum(X**2))


def test_variance_explained_examples(rng):
    X = rng.standard_normal((3, 3, 3))
    X = X + X.transpose(1, 0, 2)
    full = TuckerDecomposition(np.zeros((3, 3, 3)), np.linalg.qr(rng.standard_normal((3, 3)))[0],
                               np.linalg.qr(rng.standard_normal((3, 3)))[0])
    assert variance_explained(X, full, 3) == pytest.approx(1.0, abs=1e-10)
    assert variance_explained(X, full, 0) == 0.0
    dec = hosvd_semisym(X, 3, 3)
    for k in (1, 2, 3):
        assert abs(variance_explained(X, dec, k) - shortcut_oracle(X, dec.V, dec.U, k)) <= 1e-10


def test_variance_explained_singular_gram_warns(rng):
    X = rng.standard_normal((4, 4, 3))
    u = rng.standard_normal(3)
    dec = TnDecomposition(np.ones(2), np.eye(4)[:, :2], np.column_stack([u, u]))
    with pytest.warns(RuntimeWarning, match="pseudo-inverse"):
        variance_explained(X, dec, 2)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), method=st.sampled_from(["tnpca", "hosvd", "hooi"]))
def test_variance_explained_in_unit_interval_and_monotone(seed, method):
    cfg = SimulationConfig(P=6, N=7, K=3, snr=1.0)
    draw = generate(cfg, np.random.default_rng(seed))
    dec = {"tnpca": lambda: tn_pca(draw.X, 3, seed=seed), "hosvd": lambda: hosvd_semisym(draw.X, 3),
           "hooi": lambda: hooi_semisym(draw.X, 3)}[method]()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        ve = cumulative_variance_explained(draw.X, dec)
    assert np.all(ve >= 0) and np.all(ve <= 1 + 1e-10)
    assert np.all(np.diff(ve) >= -1e-10)


def test_study_determinism_and_thread_independence():
    base = SimulationConfig(P=8, N=10, K=2, replicates=2, seed=4)
    a = run_study((0.5, 2.0), (2,), base=base)
    b = run_study((0.5, 2.0), (2,), base=base, threads=3)
    assert a.to_dict() == b.to_dict()
    cell = a.cell("tnpca", "gaussian", 0.5, 2)
    assert len(cell.core_errors) == 2 and not cell.failures
    assert len(list(a.rows())) == len(a.cells) * 2


def test_study_records_failures():
    base = SimulationConfig(P=4, N=5, K=2, replicates=1)
    report = run_study((1.0,), (2,), methods=("tnpca", "bogus"), u_modes=("gaussian",), base=base)
    bad = report.cell("bogus", "gaussian", 1.0, 2)
    assert len(bad.failures) == 1 and not bad.core_errors
    assert len(report.cell("tnpca", "gaussian", 1.0, 2).core_errors) == 1


def test_test_retest_design():
    X, labels = generate_test_retest(5, 2, 12, np.random.default_rng(0))
    assert X.shape == (12, 12, 10)
    assert labels.tolist() == [0, 0, 1, 1, 2, 2, 3, 3, 4, 4]
    assert max_asymmetry(X) <= 1e-12


def test_planted_trait_design():
    cfg = SimulationConfig(P=10, N=40, K=3, snr=2.0)
    draw, traits, names = generate_planted_trait(cfg, np.random.default_rng(0), edge=(2, 7), n_null_traits=2)
    assert names == ["planted", "null1", "null2"]
    assert traits.shape == (40, 3)
    v0 = draw.V_true[:, 0]
    assert v0[2] == pytest.approx(1 / math.sqrt(2)) and v0[7] == pytest.approx(1 / math.sqrt(2))
    assert np.max(np.abs(draw.V_true.T @ draw.V_true - np.eye(3))) <= 1e-12
    assert np.corrcoef(traits[:, 0], draw.U_true[:, 0])[0, 1] > 0.8
    with pytest.raises(ValueError):
        generate_planted_trait(cfg, np.random.default_rng(0), edge=(3, 3))
