"""L1-penalized least squares by cyclic coordinate descent, with a lambda path and K-fold CV.

The objective at a given ``lam`` is::

    (1 / (2 n)) * ||y - X b||^2 + lam * sum_{j penalized} |b_j|

Columns listed in ``unpenalized_columns`` (intercept, treatment) carry no penalty.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Optional, Sequence

import numba
import numpy as np

CD_TOL = 1e-7
MAX_SWEEPS = 100_000


@dataclass(frozen=True)
class LassoPath:
    lambdas: np.ndarray
    coefficient_matrix: np.ndarray  # (n_lambdas, n_columns)
    cv_errors: Optional[np.ndarray] = None
    cv_standard_errors: Optional[np.ndarray] = None
    chosen_lambda: Optional[float] = None
    chosen_index: Optional[int] = None
    n_sweeps: Optional[np.ndarray] = None

    @property
    def chosen_coefficients(self) -> np.ndarray:
        if self.chosen_index is None:
            raise ValueError("no lambda has been chosen for this path")
        return self.coefficient_matrix[self.chosen_index]


@numba.njit(cache=True)
def _cd_path(G, c, penalized, lambdas, b0, tol, max_sweeps):
    k = G.shape[0]
    L = lambdas.shape[0]
    B = np.zeros((L, k))
    sweeps = np.zeros(L, dtype=np.int64)
    b = b0.copy()
    # q_j = x_j^T (y - X b) / n
    q = c - G @ b
    for li in range(L):
        lam = lambdas[li]
        for sweep in range(max_sweeps):
            maxdelta = 0.0
            for j in range(k):
                gjj = G[j, j]
                if gjj <= 0.0:
                    continue
                z = q[j] + gjj * b[j]
                if penalized[j]:
                    if z > lam:
                        new = (z - lam) / gjj
                    elif z < -lam:
                        new = (z + lam) / gjj
                    else:
                        new = 0.0
                else:
                    new = z / gjj
                d = new - b[j]
                if d != 0.0:
                    for i in range(k):
                        q[i] -= G[i, j] * d
                    b[j] = new
                    ad = abs(d) * np.sqrt(gjj)
                    if ad > maxdelta:
                        maxdelta = ad
            sweeps[li] = sweep + 1
            if maxdelta < tol:
                break
        B[li, :] = b
    return B, sweeps


def _prepare(design, response, unpenalized_columns):
    X = np.ascontiguousarray(design, dtype=float)
    y = np.ascontiguousarray(response, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("design must be (n, k) with n matching the response length")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite entries in lasso inputs")
    penalized = np.ones(X.shape[1], dtype=np.bool_)
    penalized[list(unpenalized_columns)] = False
    return X, y, penalized


def lambda_max(design, response, unpenalized_columns: Sequence[int] = ()) -> float:
    """Smallest penalty at which every penalized coefficient is zero."""
    X, y, penalized = _prepare(design, response, unpenalized_columns)
    n = X.shape[0]
    r0 = y
    if not penalized.all():
        U = X[:, ~penalized]
        coef, *_ = np.linalg.lstsq(U, y, rcond=None)
        r0 = y - U @ coef
    if not penalized.any():
        return 0.0
    return float(np.max(np.abs(X[:, penalized].T @ r0)) / n)


def lambda_grid(lam_max, n_lambdas=100, lambda_min_ratio=1e-3):
    lam_max = max(float(lam_max), 1e-12)
    return np.geomspace(lam_max, lam_max * lambda_min_ratio, n_lambdas)


def fit_lasso_path(design, response, n_lambdas: int = 100, lambda_min_ratio: float = 1e-3,
                   unpenalized_columns: Sequence[int] = (), lambdas=None, tol: float = CD_TOL,
                   warm_start: bool = True) -> LassoPath:
    """Coordinate-descent solutions along a decreasing, log-spaced lambda grid.

    Parameters
    ----------
    design : (n, k) array
        Penalized columns are expected to be on a common scale (standardized).
    response : (n,) array
    n_lambdas, lambda_min_ratio : grid size and ``lambda_min / lambda_max``.
    unpenalized_columns : indices left out of the L1 penalty.
    lambdas : explicit decreasing grid; overrides the automatic one.
    warm_start : start each lambda from the previous solution (otherwise from zero).
    """
    X, y, penalized = _prepare(design, response, unpenalized_columns)
    n, k = X.shape
    if lambdas is None:
        lambdas = lambda_grid(lambda_max(X, y, unpenalized_columns), n_lambdas, lambda_min_ratio)
    lambdas = np.asarray(lambdas, dtype=float)
    G = X.T @ X / n
    c = X.T @ y / n
    if warm_start:
        B, sweeps = _cd_path(G, c, penalized, lambdas, np.zeros(k), tol, MAX_SWEEPS)
    else:
        rows = [_cd_path(G, c, penalized, lambdas[i:i + 1], np.zeros(k), tol, MAX_SWEEPS)
                for i in range(lambdas.shape[0])]
        B = np.vstack([r[0] for r in rows])
        sweeps = np.concatenate([r[1] for r in rows])
    return LassoPath(lambdas=lambdas, coefficient_matrix=B, n_sweeps=sweeps)


def lasso_objective(design, response, coef, lam, unpenalized_columns=()):
    X, y, penalized = _prepare(design, response, unpenalized_columns)
    r = y - X @ coef
    return float(r @ r / (2 * X.shape[0]) + lam * np.abs(np.asarray(coef)[penalized]).sum())


def kkt_violation(design, response, coef, lam, unpenalized_columns=()) -> float:
    """Largest departure from the lasso optimality conditions at ``coef``."""
    X, y, penalized = _prepare(design, response, unpenalized_columns)
    coef = np.asarray(coef, dtype=float)
    grad = X.T @ (y - X @ coef) / X.shape[0]
    worst = 0.0
    for j in range(X.shape[1]):
        if not penalized[j]:
            worst = max(worst, abs(grad[j]))
        elif coef[j] == 0.0:
            worst = max(worst, abs(grad[j]) - lam)
        else:
            worst = max(worst, abs(grad[j] - lam * np.sign(coef[j])))
    return worst


def fold_ids(n: int, k_folds: int, seed=0, mode: str = "permutation", design=None, response=None):
    """Fold label per row.

    ``permutation`` deals a seeded random permutation round-robin into folds. ``row-hash``
    derives each row's fold from a hash of its contents (and the seed), so the assignment
    travels with the row under any reordering.
    """
    if k_folds < 2:
        raise ValueError("need at least 2 folds")
    if n < k_folds:
        raise ValueError(f"cannot split {n} rows into {k_folds} folds")
    if mode == "permutation":
        perm = np.random.default_rng(seed).permutation(n)
        ids = np.empty(n, dtype=np.int64)
        ids[perm] = np.arange(n) % k_folds
        return ids
    if mode == "row-hash":
        X = np.ascontiguousarray(design, dtype=float)
        y = np.ascontiguousarray(response, dtype=float).ravel()
        salt = np.asarray(seed, dtype=np.int64).tobytes()
        ids = np.empty(n, dtype=np.int64)
        for i in range(n):
            h = hashlib.blake2b(X[i].tobytes() + y[i:i + 1].tobytes() + salt, digest_size=8)
            ids[i] = int.from_bytes(h.digest(), "little") % k_folds
        return ids
    raise ValueError(f"unknown fold mode {mode!r}")


def select_lambda_cv(design, response, unpenalized_columns: Sequence[int] = (), k_folds: int = 10,
                     seed=0, n_lambdas: int = 100, lambda_min_ratio: float = 1e-3,
                     fold_mode: str = "permutation", folds=None) -> LassoPath:
    """Full-data lasso path with the lambda chosen by K-fold cross-validation.

    Every fold is fitted on the full-data grid. The chosen lambda minimizes the pooled
    held-out mean squared error; ties go to the largest lambda.
    """
    X, y, _ = _prepare(design, response, unpenalized_columns)
    n = X.shape[0]
    full = fit_lasso_path(X, y, n_lambdas, lambda_min_ratio, unpenalized_columns)
    lambdas = full.lambdas
    if folds is None:
        folds = fold_ids(n, k_folds, seed, fold_mode, X, y)
    folds = np.asarray(folds)
    labels = np.unique(folds)
    sq_err = np.zeros((labels.shape[0], lambdas.shape[0]))
    counts = np.zeros(labels.shape[0])
    for f, label in enumerate(labels):
        test = folds == label
        train = ~test
        path = fit_lasso_path(X[train], y[train], unpenalized_columns=unpenalized_columns,
                              lambdas=lambdas)
        pred = X[test] @ path.coefficient_matrix.T
        sq_err[f] = ((y[test, None] - pred) ** 2).sum(axis=0)
        counts[f] = test.sum()
    fold_mse = sq_err / counts[:, None]
    cv_mean = sq_err.sum(axis=0) / counts.sum()
    cv_se = fold_mse.std(axis=0, ddof=1) / np.sqrt(labels.shape[0]) if labels.shape[0] > 1 \
        else np.zeros_like(cv_mean)
    best = int(np.argmin(cv_mean))
    return LassoPath(lambdas=lambdas, coefficient_matrix=full.coefficient_matrix,
                     cv_errors=cv_mean, cv_standard_errors=cv_se,
                     chosen_lambda=float(lambdas[best]), chosen_index=best,
                     n_sweeps=full.n_sweeps)
