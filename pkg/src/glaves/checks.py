"""Self-contained numerical checks run by ``glaves validate``.

Each check returns a :class:`CheckResult`; none of them needs reference tables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ExperimentalSample, TargetSample, standardize, target_omega
from .estimators import METHODS, run_methods
from .fit import (AdaptiveWeights, GlavesConfig, GroupStructure, JointObjective, fit_glaves,
                  kkt_residual, solve_at, solve_path)
from .lasso import fit_lasso_path
from .regression import fit_logistic, fit_ols, full_outcome_model_coefficients, outcome_design
from .scenarios import get_scenario
from .simulation import run_scenario


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        text = f"{tag} {self.name}: {self.value:.3g} (tolerance {self.tolerance:g})"
        return f"{text} {self.detail}".rstrip()


def random_fixture(seed, n: int = 80, m: int = 60, p: int = 3, weighted: bool = False,
                   shift: float = 0.8):
    """Small two-sample dataset with a shifted first covariate and one true interaction."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    a = np.zeros(n)
    a[rng.permutation(n)[: n // 2]] = 1.0
    y = 1.0 + a + x[:, 0] + 0.5 * a * x[:, 0] + rng.standard_normal(n)
    xs = rng.standard_normal((m, p))
    xs[:, 0] += shift
    w = rng.uniform(0.5, 3.0, m) if weighted else None
    return ExperimentalSample(y, a, x), TargetSample(xs, w)


def _objective(exp, tgt, loss="bernoulli"):
    s_exp, s_tgt, _ = standardize(exp, tgt)
    return s_exp, JointObjective(s_exp, s_tgt, target_omega(tgt), loss)


def check_gradient(n_fixtures: int = 4, points: int = 5, tol: float = 1e-5) -> CheckResult:
    """Analytic gradient against central finite differences."""
    worst = 0.0
    for f in range(n_fixtures):
        exp, tgt = random_fixture([7, f], weighted=bool(f % 2))
        for loss in ("bernoulli", "exponential"):
            _, obj = _objective(exp, tgt, loss)
            rng = np.random.default_rng([8, f])
            for _ in range(points):
                alpha = 0.5 * rng.standard_normal(obj.n_coefficients)
                g = obj.gradient(alpha)
                h = 1e-5
                fd = np.empty_like(g)
                for k in range(g.shape[0]):
                    e = np.zeros_like(alpha)
                    e[k] = h
                    fd[k] = (obj.value(alpha + e) - obj.value(alpha - e)) / (2 * h)
                rel = np.max(np.abs(fd - g)) / max(np.max(np.abs(g)), 1e-12)
                worst = max(worst, float(rel))
    return CheckResult("joint objective gradient vs finite differences", worst <= tol, worst, tol)


def check_path_kkt(n_fixtures: int = 20, tol: float = 1e-5, n_lambdas: int = 30) -> CheckResult:
    """Group-subgradient optimality residual at every path solution."""
    worst = 0.0
    for f in range(n_fixtures):
        exp, tgt = random_fixture([11, f], p=2 + f % 4, weighted=bool(f % 3 == 0))
        s_exp, obj = _objective(exp, tgt)
        v, _ = full_outcome_model_coefficients(s_exp)
        weights = AdaptiveWeights.from_full_model(v, s_exp.p)
        groups = GroupStructure.for_covariates(s_exp.p)
        lambdas, alphas, _ = solve_path(obj, groups, weights, n_lambdas=n_lambdas)
        for lam, alpha in zip(lambdas, alphas):
            worst = max(worst, kkt_residual(obj, groups, weights, lam, alpha))
    return CheckResult(f"path KKT residual on {n_fixtures} fixtures", worst <= tol, worst, tol)


def check_lambda_zero(n_fixtures: int = 3, tol: float = 1e-4) -> CheckResult:
    """With no penalty the joint fit splits into OLS and weighted logistic regression."""
    worst = 0.0
    for f in range(n_fixtures):
        exp, tgt = random_fixture([13, f], weighted=bool(f % 2))
        s_exp, obj = _objective(exp, tgt)
        p = s_exp.p
        v, _ = full_outcome_model_coefficients(s_exp)
        weights = AdaptiveWeights.from_full_model(v, p)
        res = solve_at(obj, GroupStructure.for_covariates(p), weights, 0.0, max_iter=200000,
                       obj_tol=1e-14, kkt_tol=1e-10)
        beta_ols = fit_ols(outcome_design(s_exp.x, s_exp.a), s_exp.y).coefficients
        logit = fit_logistic(obj.Z, obj.s, obj.c, tol=1e-10)
        nb = 2 * p + 2
        err = max(np.max(np.abs(res.alpha[:nb] - beta_ols)),
                  np.max(np.abs(res.alpha[nb:] - logit.coefficients)))
        worst = max(worst, float(err))
    return CheckResult("lambda = 0 matches OLS and logistic fits", worst <= tol, worst, tol)


def check_coupling(n_fixtures: int = 5) -> CheckResult:
    """Paired interaction and selection coefficients are zero together along the path."""
    total = 0
    for f in range(n_fixtures):
        exp, tgt = random_fixture([17, f], p=4)
        fit, _, _ = fit_glaves(exp, tgt, GlavesConfig(n_lambdas=40))
        total += fit.coupling_violations()
    return CheckResult("pair-group coupling violations", total == 0, total, 0)


def check_lasso(tol: float = 1e-3) -> CheckResult:
    """Coordinate descent on an orthonormal design equals soft-thresholding."""
    rng = np.random.default_rng(19)
    n, k = 50, 5
    q, _ = np.linalg.qr(rng.standard_normal((n, k)))
    X = q * np.sqrt(n)  # X'X / n = I
    y = X @ np.array([2.0, -1.0, 0.3, 0.0, 0.0]) + rng.standard_normal(n)
    z = X.T @ y / n
    lambdas = np.array([1.5, 0.8, 0.2, 0.01])
    path = fit_lasso_path(X, y, lambdas=lambdas)
    closed = np.sign(z) * np.maximum(np.abs(z)[None, :] - lambdas[:, None], 0.0)
    err = float(np.max(np.abs(path.coefficient_matrix - closed)))
    return CheckResult("lasso orthonormal closed form", err <= tol, err, tol)


def check_weight_invariance(tol: float = 1e-6) -> CheckResult:
    """Uniform weights equal no weights; rescaled weights change nothing.

    Rescaling perturbs the normalized weights in the last bit, which the iterative GLAVeS
    solver can amplify up to its stopping tolerance, hence ``tol`` above that tolerance.
    """
    exp, tgt = random_fixture(23, n=120, m=80, p=3, weighted=True)
    plain = TargetSample(tgt.x_star)
    uniform = TargetSample(tgt.x_star, np.full(tgt.m, 2.5))
    scaled = TargetSample(tgt.x_star, 7.0 * tgt.raw_weights)
    methods = METHODS
    kw = dict(methods=methods, seed=3)
    base = run_methods(exp, plain, **kw)
    uni = run_methods(exp, uniform, **kw)
    ref = run_methods(exp, tgt, **kw)
    sc = run_methods(exp, scaled, **kw)
    worst = 0.0
    for m in methods:
        worst = max(worst, abs(base[m].point - uni[m].point), abs(ref[m].point - sc[m].point))
    return CheckResult("survey-weight invariances (all estimators)", worst <= tol, worst, tol)


def check_determinism() -> CheckResult:
    spec = get_scenario(1)
    kw = dict(methods=("S.Diff", "OLS", "GLAVeS"), replicates=3, base_seed=5)
    a = run_scenario(spec, workers=1, **kw)
    b = run_scenario(spec, workers=2, **kw)
    diff = sum(int(not np.array_equal(a.estimates[m], b.estimates[m])) for m in kw["methods"])
    return CheckResult("seeded runs identical across worker counts", diff == 0, diff, 0)


ALL_CHECKS = (check_gradient, check_path_kkt, check_lambda_zero, check_coupling, check_lasso,
              check_weight_invariance, check_determinism)


def run_all_checks():
    return [check() for check in ALL_CHECKS]
