"""TATE estimators behind one interface: S.Diff, OLS, IntLASSO, LASSO, GLAVeS, OLSGLAVeS."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import (ExperimentalSample, TargetSample, target_omega, validate_pair,
                   weighted_mean)
from .fit import (GlavesConfig, TateEstimate, estimate_tate_glaves, fit_glaves,
                  refit_olsglaves)
from .lasso import select_lambda_cv
from .regression import fit_ols

METHODS = ("S.Diff", "OLS", "IntLASSO", "LASSO", "GLAVeS", "OLSGLAVeS")


@dataclass(frozen=True)
class CVConfig:
    k_folds: int = 10
    n_lambdas: int = 100
    lambda_min_ratio: float = 1e-3
    fold_mode: str = "permutation"


@dataclass
class EstimatorResult:
    estimate: TateEstimate
    selected_interactions: tuple = ()
    selected_main_effects: tuple = ()
    # covariate index -> treatment-interaction coefficient in original units
    interaction_coefficients: dict = field(default_factory=dict)

    @property
    def point(self) -> float:
        return self.estimate.point


def _seed_list(seed):
    return [int(s) for s in np.atleast_1d(seed)]


def s_diff(exp: ExperimentalSample) -> EstimatorResult:
    """Treated-arm mean outcome minus control-arm mean outcome."""
    treated = exp.a == 1
    if treated.all() or not treated.any():
        raise ValueError("both arms must be non-empty")
    point = float(exp.y[treated].mean() - exp.y[~treated].mean())
    return EstimatorResult(TateEstimate(point, "S.Diff"))


def _arm_fit(exp, arm):
    rows = exp.a == arm
    design = np.hstack([np.ones((rows.sum(), 1)), exp.x[rows]])
    return fit_ols(design, exp.y[rows])


def ols_tate(exp: ExperimentalSample, tgt: TargetSample, omega=None) -> EstimatorResult:
    """Separate OLS fits per arm on all covariates, averaged over the target rows."""
    f1, f0 = _arm_fit(exp, 1), _arm_fit(exp, 0)
    diff = f1.coefficients - f0.coefficients
    effect = diff[0] + tgt.x_star @ diff[1:]
    p = exp.p
    est = TateEstimate(weighted_mean(effect, omega), "OLS",
                       diagnostics={"rank_deficient": f1.rank_deficient or f0.rank_deficient})
    return EstimatorResult(est, tuple(range(p)), tuple(range(p)),
                           {j: float(diff[1 + j]) for j in range(p)})


def _column_scale(design, penalized):
    scale = np.ones(design.shape[1])
    sd = design[:, penalized].std(axis=0, ddof=1)
    sd[~(sd > 0)] = 1.0
    scale[penalized] = sd
    return scale


def _cv_lasso(design, y, unpenalized, cv: CVConfig, seed):
    penalized = np.ones(design.shape[1], dtype=bool)
    penalized[list(unpenalized)] = False
    scale = _column_scale(design, penalized)
    path = select_lambda_cv(design / scale, y, unpenalized, cv.k_folds, seed, cv.n_lambdas,
                            cv.lambda_min_ratio, cv.fold_mode)
    return path.chosen_coefficients / scale, path


def int_lasso_tate(exp: ExperimentalSample, tgt: TargetSample, omega=None,
                   cv: CVConfig = CVConfig(), seed=0) -> EstimatorResult:
    """One lasso on ``[1, A, X, A*X]`` with intercept and treatment unpenalized."""
    p = exp.p
    a = exp.a[:, None]
    design = np.hstack([np.ones((exp.n, 1)), a, exp.x, a * exp.x])
    coef, path = _cv_lasso(design, exp.y, (0, 1), cv, seed)
    b_int = coef[2 + p:]
    effect = coef[1] + tgt.x_star @ b_int
    est = TateEstimate(weighted_mean(effect, omega), "IntLASSO",
                       diagnostics={"chosen_lambda": path.chosen_lambda})
    ints = tuple(int(j) for j in np.flatnonzero(b_int != 0))
    mains = tuple(int(j) for j in np.flatnonzero(coef[2:2 + p] != 0))
    return EstimatorResult(est, ints, mains, {j: float(b_int[j]) for j in ints})


def twoarm_lasso_tate(exp: ExperimentalSample, tgt: TargetSample, omega=None,
                      cv: CVConfig = CVConfig(), seed=0) -> EstimatorResult:
    """Separate CV-lasso fits per arm (intercept unpenalized).

    A covariate counts as a selected interaction when it is nonzero in either arm.
    """
    coefs = {}
    lambdas = {}
    for arm in (1, 0):
        rows = exp.a == arm
        design = np.hstack([np.ones((rows.sum(), 1)), exp.x[rows]])
        coefs[arm], path = _cv_lasso(design, exp.y[rows], (0,), cv, _seed_list(seed) + [arm])
        lambdas[arm] = path.chosen_lambda
    diff = coefs[1] - coefs[0]
    effect = diff[0] + tgt.x_star @ diff[1:]
    either = (coefs[1][1:] != 0) | (coefs[0][1:] != 0)
    sel = tuple(int(j) for j in np.flatnonzero(either))
    est = TateEstimate(weighted_mean(effect, omega), "LASSO",
                       diagnostics={"chosen_lambda_treated": lambdas[1],
                                    "chosen_lambda_control": lambdas[0]})
    return EstimatorResult(est, sel, sel, {j: float(diff[1 + j]) for j in sel})


def glaves_tates(exp: ExperimentalSample, tgt: TargetSample,
                 config: GlavesConfig = GlavesConfig()):
    """GLAVeS and OLSGLAVeS from a single path fit.

    Returns ``(glaves_result, olsglaves_result, fit)``.
    """
    fit, s_tgt, omega = fit_glaves(exp, tgt, config)
    ints, mains = fit.selected_interactions, fit.selected_main_effects
    info = fit.standardization
    scaled_coef = fit.beta[fit.p:2 * fit.p]
    coefs = {j: float(scaled_coef[j] * info.sd_y / info.sd_x[j]) for j in ints}
    g = EstimatorResult(estimate_tate_glaves(fit, s_tgt, omega), ints, mains, coefs)
    refit = refit_olsglaves(exp, mains, ints, tgt, omega)
    o = EstimatorResult(refit, ints, mains,
                        {int(j): float(c) for j, c in
                         refit.diagnostics["interaction_coefficients"].items()})
    return g, o, fit


def run_methods(exp: ExperimentalSample, tgt: TargetSample, methods=METHODS,
                glaves_config: GlavesConfig = GlavesConfig(), cv: CVConfig = CVConfig(),
                seed=0, return_fit: bool = False):
    """Evaluate the requested estimators on one dataset pair.

    Returns a dict ``method -> EstimatorResult`` (plus the GLAVeS fit when ``return_fit``).
    """
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ValueError(f"unknown methods {sorted(unknown)}; expected a subset of {METHODS}")
    validate_pair(exp, tgt)
    omega = target_omega(tgt)
    out = {}
    fit = None
    seed = _seed_list(seed)
    for method in methods:
        if method == "S.Diff":
            out[method] = s_diff(exp)
        elif method == "OLS":
            out[method] = ols_tate(exp, tgt, omega)
        elif method == "IntLASSO":
            out[method] = int_lasso_tate(exp, tgt, omega, cv, seed + [1])
        elif method == "LASSO":
            out[method] = twoarm_lasso_tate(exp, tgt, omega, cv, seed + [2])
        elif method in ("GLAVeS", "OLSGLAVeS") and fit is None:
            g, o, fit = glaves_tates(exp, tgt, glaves_config)
            if "GLAVeS" in methods:
                out["GLAVeS"] = g
            if "OLSGLAVeS" in methods:
                out["OLSGLAVeS"] = o
    out = {m: out[m] for m in methods}
    if return_fit:
        return out, fit
    return out
