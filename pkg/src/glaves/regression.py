"""Unpenalized least-squares and logistic fits."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import expit

RIDGE_JITTER = 1e-8
V_FLOOR = 1e-8
COEF_NORM_CAP = 30.0


@dataclass(frozen=True)
class LinearFit:
    coefficients: np.ndarray
    residual_sum_squares: float
    rank_deficient: bool = False


@dataclass(frozen=True)
class LogisticFit:
    coefficients: np.ndarray
    converged: bool
    final_negative_log_likelihood: float
    n_iter: int = 0
    history: tuple = field(default=(), repr=False)


def outcome_design(x, a):
    """Outcome-model design ``[X, A*X, 1, A]`` (main effects, interactions, intercept, treatment)."""
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float).reshape(-1, 1)
    n = x.shape[0]
    return np.hstack([x, a * x, np.ones((n, 1)), a])


def fit_ols(design, response, observation_weights=None) -> LinearFit:
    """Least squares by pivoted QR; falls back to a tiny ridge when the design is rank deficient.

    The ridge term is ``1e-8`` times the mean diagonal of the (weighted) Gram matrix so the
    fallback is insensitive to column units.
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float).ravel()
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite entries in design or response")
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"design has {X.shape[0]} rows but response has {y.shape[0]}")
    k = X.shape[1]
    if observation_weights is not None:
        w = np.asarray(observation_weights, dtype=float).ravel()
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("observation weights must be nonnegative and finite")
        sw = np.sqrt(w)
        Xw, yw = X * sw[:, None], y * sw
    else:
        Xw, yw = X, y

    if k == 0:
        return LinearFit(np.zeros(0), float(yw @ yw))
    if Xw.shape[0] >= k:
        Q, R, _ = linalg.qr(Xw, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        rank_deficient = bool(diag[-1] <= max(diag[0], 1.0) * 1e-10 * max(Xw.shape))
    else:
        rank_deficient = True

    if rank_deficient:
        G = Xw.T @ Xw
        jitter = RIDGE_JITTER * max(np.trace(G) / k, 1e-300)
        coef = linalg.solve(G + jitter * np.eye(k), Xw.T @ yw, assume_a="pos")
    else:
        coef, *_ = linalg.lstsq(Xw, yw, lapack_driver="gelsy")
    resid = yw - Xw @ coef
    return LinearFit(coefficients=coef, residual_sum_squares=float(resid @ resid),
                     rank_deficient=rank_deficient)


def _logistic_nll(eta, labels, w):
    # log(1 + e^eta) - label*eta, summed with weights
    return float(w @ (np.logaddexp(0.0, eta) - labels * eta))


def fit_logistic(design, labels, observation_weights=None, tol=1e-6, max_iter=200,
                 coef_cap=COEF_NORM_CAP) -> LogisticFit:
    """Bernoulli-logit maximum likelihood by damped Newton iterations.

    The objective is the weighted *sum* negative log-likelihood; iteration stops once its
    gradient norm falls below ``tol``. Step halving keeps the objective monotone. When the
    classes are separable the coefficient norm runs away; the fit is then clipped at
    ``coef_cap`` and returned with ``converged=False``.
    """
    X = np.asarray(design, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    s = np.asarray(labels, dtype=float).ravel()
    if not np.all((s == 0) | (s == 1)):
        raise ValueError("labels must be 0/1")
    if s.min() == s.max():
        raise ValueError("logistic fit needs both classes present")
    w = np.ones_like(s) if observation_weights is None else np.asarray(observation_weights, float)

    k = X.shape[1]
    coef = np.zeros(k)
    eta = X @ coef
    nll = _logistic_nll(eta, s, w)
    history = [nll]
    capped = False
    it = 0
    for it in range(1, max_iter + 1):
        mu = expit(eta)
        grad = X.T @ (w * (mu - s))
        if np.linalg.norm(grad) < tol:
            it -= 1
            break
        H = (X * (w * mu * (1 - mu))[:, None]).T @ X
        H[np.diag_indices_from(H)] += 1e-12 * max(np.trace(H) / k, 1e-12)
        try:
            step = linalg.solve(H, grad, assume_a="pos")
        except linalg.LinAlgError:
            step = linalg.lstsq(H, grad)[0]
        t = 1.0
        while True:
            cand = coef - t * step
            cand_nll = _logistic_nll(X @ cand, s, w)
            if cand_nll <= nll or t < 1e-10:
                break
            t *= 0.5
        if cand_nll > nll:
            break
        coef, nll = cand, cand_nll
        norm = np.linalg.norm(coef)
        if norm > coef_cap:
            coef = coef * (coef_cap / norm)
            nll = _logistic_nll(X @ coef, s, w)
            capped = True
        eta = X @ coef
        history.append(nll)
        if capped:
            break
    grad = X.T @ (w * (expit(eta) - s))
    converged = (not capped) and bool(np.linalg.norm(grad) < tol)
    return LogisticFit(coefficients=coef, converged=converged,
                       final_negative_log_likelihood=nll, n_iter=it, history=tuple(history))


def full_outcome_model_coefficients(exp):
    """Full-model coefficients feeding the adaptive weights.

    One OLS fit of ``y`` on ``[X, A*X, 1, A]``. Entries with magnitude below ``1e-8`` are
    pushed out to ``+-1e-8`` (sign kept, zero maps to ``+``) so that ``1/|v|`` stays finite.

    Returns
    -------
    v : ndarray, length 2p + 2
    fit : LinearFit
    """
    D = outcome_design(exp.x, exp.a)
    fit = fit_ols(D, exp.y)
    v = fit.coefficients.copy()
    small = np.abs(v) < V_FLOOR
    v[small] = np.where(v[small] < 0, -V_FLOOR, V_FLOOR)
    return v, fit
