import numpy as np
import pytest

from glaves.lasso import (fit_lasso_path, fold_ids, kkt_violation, lambda_max, lasso_objective,
                          select_lambda_cv)


def _orthonormal(rng, n=60, k=4):
    q, _ = np.linalg.qr(rng.standard_normal((n, k)))
    return q * np.sqrt(n)


def test_orthonormal_soft_threshold(rng):
    X = _orthonormal(rng)
    y = X @ np.array([1.5, -0.7, 0.2, 0.0]) + rng.standard_normal(60)
    z = X.T @ y / 60
    path = fit_lasso_path(X, y, n_lambdas=25)
    oracle = np.sign(z) * np.maximum(np.abs(z) - path.lambdas[:, None], 0)
    np.testing.assert_allclose(path.coefficient_matrix, oracle, atol=1e-3)


def test_lambda_max_zeroes_penalized(rng):
    X = np.column_stack([np.ones(40), rng.standard_normal((40, 3))])
    y = 2 + X[:, 1] + rng.standard_normal(40)
    lam = lambda_max(X, y, (0,))
    path = fit_lasso_path(X, y, lambdas=[lam, 1.5 * lam], unpenalized_columns=(0,))
    np.testing.assert_array_equal(path.coefficient_matrix[:, 1:], 0.0)
    assert path.coefficient_matrix[0, 0] == pytest.approx(y.mean())
    below = fit_lasso_path(X, y, lambdas=[0.99 * lam], unpenalized_columns=(0,))
    assert np.count_nonzero(below.coefficient_matrix[0, 1:]) == 1


def test_p2_brute_force_grid():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((20, 2))
    X[:, 1] += 0.5 * X[:, 0]
    y = X @ np.array([1.0, -0.5]) + 0.5 * rng.standard_normal(20)
    lambdas = np.array([0.8, 0.4, 0.2, 0.1, 0.02])
    path = fit_lasso_path(X, y, lambdas=lambdas)

    def grid_min(lam, center, half, k):
        axis = np.linspace(-half, half, k)
        b1, b2 = np.meshgrid(center[0] + axis, center[1] + axis, indexing="ij")
        pts = np.stack([b1.ravel(), b2.ravel()], axis=1)
        obj = ((y[None, :] - pts @ X.T) ** 2).sum(axis=1) / 40 + lam * np.abs(pts).sum(axis=1)
        return pts[np.argmin(obj)], obj.min()

    for lam, coef in zip(lambdas, path.coefficient_matrix):
        coarse, _ = grid_min(lam, np.zeros(2), 2.0, 801)  # spacing 5e-3
        best, best_obj = grid_min(lam, coarse, 0.01, 401)  # spacing 5e-5
        np.testing.assert_allclose(coef, best, atol=1e-3)
        assert lasso_objective(X, y, coef, lam) <= best_obj + 1e-12


def test_kkt_every_solution(rng):
    X = np.column_stack([np.ones(80), rng.standard_normal((80, 6))])
    y = X[:, 1] - X[:, 3] + rng.standard_normal(80)
    path = fit_lasso_path(X, y, unpenalized_columns=(0,))
    for lam, coef in zip(path.lambdas, path.coefficient_matrix):
        assert kkt_violation(X, y, coef, lam, (0,)) <= 1e-6


def test_warm_equals_cold(rng):
    X = rng.standard_normal((50, 5))
    y = X[:, 0] + rng.standard_normal(50)
    warm = fit_lasso_path(X, y, n_lambdas=20)
    cold = fit_lasso_path(X, y, lambdas=warm.lambdas, warm_start=False)
    np.testing.assert_allclose(warm.coefficient_matrix, cold.coefficient_matrix, atol=1e-5)


def test_homogeneity(rng):
    X = rng.standard_normal((50, 5))
    y = X[:, 0] + rng.standard_normal(50)
    lambdas = np.array([0.3, 0.1, 0.03])
    one = fit_lasso_path(X, y, lambdas=lambdas)
    two = fit_lasso_path(X, 2 * y, lambdas=2 * lambdas)
    np.testing.assert_allclose(two.coefficient_matrix, 2 * one.coefficient_matrix, atol=1e-6)


def test_non_finite_rejected():
    X = np.ones((5, 2))
    X[1, 1] = np.nan
    with pytest.raises(ValueError):
        fit_lasso_path(X, np.ones(5))


def test_fold_ids_deterministic_and_balanced():
    a = fold_ids(103, 10, seed=4)
    np.testing.assert_array_equal(a, fold_ids(103, 10, seed=4))
    assert set(np.bincount(a)) <= {10, 11}
    assert not np.array_equal(a, fold_ids(103, 10, seed=5))
    with pytest.raises(ValueError):
        fold_ids(5, 10)


def test_row_hash_folds_follow_rows(rng):
    X = rng.standard_normal((30, 3))
    y = rng.standard_normal(30)
    ids = fold_ids(30, 5, 1, "row-hash", X, y)
    perm = rng.permutation(30)
    np.testing.assert_array_equal(fold_ids(30, 5, 1, "row-hash", X[perm], y[perm]), ids[perm])


def test_identical_folds_identical_errors(rng):
    x = rng.standard_normal((10, 2))
    X = np.vstack([x, x])
    y = np.concatenate([x[:, 0], x[:, 0]]) + 0.1
    path = select_lambda_cv(np.column_stack([np.ones(20), X]), y, (0,),
                            folds=np.repeat([0, 1], 10), n_lambdas=15)
    assert path.cv_standard_errors == pytest.approx(np.zeros(15), abs=1e-12)


def test_cv_pure_noise_picks_large_lambda():
    hits = 0
    for s in range(200):
        rng = np.random.default_rng([1, s])
        X = np.column_stack([np.ones(100), rng.standard_normal((100, 10))])
        path = select_lambda_cv(X, rng.standard_normal(100), (0,), seed=s)
        hits += path.chosen_index < 100 / 3
    assert hits >= 180


def test_cv_strong_signal_is_active():
    hits = 0
    for s in range(100):
        rng = np.random.default_rng([2, s])
        X = np.column_stack([np.ones(60), rng.standard_normal((60, 5))])
        y = 5 * X[:, 2] + 0.1 * rng.standard_normal(60)
        path = select_lambda_cv(X, y, (0,), seed=s)
        hits += path.chosen_coefficients[2] != 0
    assert hits >= 99


def test_cv_deterministic_given_seed(rng):
    X = np.column_stack([np.ones(50), rng.standard_normal((50, 4))])
    y = X[:, 1] + rng.standard_normal(50)
    a = select_lambda_cv(X, y, (0,), seed=3)
    b = select_lambda_cv(X, y, (0,), seed=3)
    assert a.chosen_lambda == b.chosen_lambda
    np.testing.assert_array_equal(a.cv_errors, b.cv_errors)
