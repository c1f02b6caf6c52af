"""Joint outcome/selection adaptive group lasso (GLAVeS).

Coefficients are stacked as ``alpha = (beta, gamma)``:

* ``beta`` (length 2p + 2) follows the outcome design ``[X, A*X, 1, A]``;
* ``gamma`` (length p + 1) follows the selection design ``[X, 1]``.

Groups tie each interaction ``beta[p + j]`` to the matching selection slope ``gamma[j]``
and the two intercepts to each other, so a covariate enters or leaves both models at once.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numba
import numpy as np

from .data import (ExperimentalSample, StandardizationInfo, TargetSample, standardize,
                   target_omega, validate_pair, weighted_mean)
from .regression import fit_ols, full_outcome_model_coefficients, outcome_design

logger = logging.getLogger(__name__)

LOSS_VARIANTS = {"bernoulli": 0, "exponential": 1}
V_MODES = ("matched", "literal")


@dataclass(frozen=True)
class GlavesConfig:
    n_lambdas: int = 100
    lambda_min_ratio: float = 1e-3
    v_mode: str = "literal"
    selection_loss: str = "bernoulli"
    scaling: str = "experimental-sd"
    max_iter: int = 5000
    obj_tol: float = 1e-8
    kkt_tol: float = 1e-7


@dataclass(frozen=True)
class GroupStructure:
    """The 2p + 2 coefficient groups over the stacked vector (length 3p + 3)."""

    p: int
    groups: tuple

    @classmethod
    def for_covariates(cls, p: int) -> "GroupStructure":
        nb = 2 * p + 2
        groups = [(j,) for j in range(p)]
        groups += [(p + j, nb + j) for j in range(p)]
        groups.append((2 * p, nb + p))
        groups.append((2 * p + 1,))
        return cls(p=p, groups=tuple(groups))

    @property
    def n_coefficients(self) -> int:
        return 3 * self.p + 3

    def padded(self) -> np.ndarray:
        out = -np.ones((len(self.groups), 2), dtype=np.int64)
        for k, g in enumerate(self.groups):
            out[k, :len(g)] = g
        return out


@dataclass(frozen=True)
class AdaptiveWeights:
    w: np.ndarray  # length 2p + 2
    v: np.ndarray  # denominators used for the 2p penalized groups

    @classmethod
    def from_full_model(cls, v_full, p: int, mode: str = "literal") -> "AdaptiveWeights":
        """Penalty weights from full-model coefficients ``v_full`` (ordered as ``[X, A*X, 1, A]``).

        ``matched`` divides each group by its own full-model coefficient. ``literal`` uses the
        interaction coefficient of covariate j for both the main-effect and the interaction group.
        """
        v_full = np.asarray(v_full, dtype=float)
        if mode == "matched":
            v = v_full[:2 * p].copy()
        elif mode == "literal":
            v = np.concatenate([v_full[p:2 * p], v_full[p:2 * p]])
        else:
            raise ValueError(f"unknown v mode {mode!r}; expected one of {V_MODES}")
        w = np.zeros(2 * p + 2)
        w[:p] = 1.0 / np.abs(v[:p])
        w[p:2 * p] = math.sqrt(2.0) / np.abs(v[p:])
        return cls(w=w, v=v)


@dataclass(frozen=True)
class TateEstimate:
    point: float
    method: str
    ci: Optional[tuple] = None
    n_bootstrap: int = 0
    diagnostics: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# numba kernels


@numba.njit(cache=True)
def _smooth(alpha, G, Dy, yy, n, Z, s, c, nm, variant, grad):
    nb = G.shape[0]
    beta = alpha[:nb]
    gamma = alpha[nb:]
    Gb = G @ beta
    f_out = (yy - 2.0 * (beta @ Dy) + beta @ Gb) / n
    for i in range(nb):
        grad[i] = 2.0 * (Gb[i] - Dy[i]) / n
    eta = Z @ gamma
    rows = eta.shape[0]
    dl = np.empty(rows)
    f_sel = 0.0
    for i in range(rows):
        if variant == 0:
            u = eta[i]
            scale = 1.0
            target = s[i]
        else:
            # +-1 labels, loss log(1 + exp(-2 s' eta)) == softplus(2 eta) - 2 eta [s = 1]
            u = 2.0 * eta[i]
            scale = 2.0
            target = s[i]
        e = math.exp(-abs(u))
        if u > 0:
            sp = u + math.log1p(e)
            sig = 1.0 / (1.0 + e)
        else:
            sp = math.log1p(e)
            sig = e / (1.0 + e)
        f_sel += c[i] * (sp - target * u)
        dl[i] = scale * c[i] * (sig - target)
    gsel = Z.T @ dl
    for i in range(gamma.shape[0]):
        grad[nb + i] = gsel[i] / nm
    return f_out + f_sel / nm


@numba.njit(cache=True)
def _penalty(alpha, groups, w):
    total = 0.0
    for k in range(groups.shape[0]):
        if w[k] == 0.0:
            continue
        sq = 0.0
        for t in range(2):
            idx = groups[k, t]
            if idx >= 0:
                sq += alpha[idx] * alpha[idx]
        total += w[k] * math.sqrt(sq)
    return total


@numba.njit(cache=True)
def _prox(z, thresholds, groups, out):
    for i in range(z.shape[0]):
        out[i] = z[i]
    for k in range(groups.shape[0]):
        thr = thresholds[k]
        if thr <= 0.0:
            continue
        sq = 0.0
        for t in range(2):
            idx = groups[k, t]
            if idx >= 0:
                sq += z[idx] * z[idx]
        norm = math.sqrt(sq)
        factor = 0.0
        if norm > thr:
            factor = 1.0 - thr / norm
        for t in range(2):
            idx = groups[k, t]
            if idx >= 0:
                out[idx] = factor * z[idx]


@numba.njit(cache=True)
def _kkt(alpha, grad, lam, groups, w):
    worst = 0.0
    for k in range(groups.shape[0]):
        na = 0.0
        ng = 0.0
        for t in range(2):
            idx = groups[k, t]
            if idx >= 0:
                na += alpha[idx] * alpha[idx]
                ng += grad[idx] * grad[idx]
        na = math.sqrt(na)
        ng = math.sqrt(ng)
        if w[k] == 0.0:
            r = ng
        elif na == 0.0:
            r = ng - lam * w[k]
        else:
            sq = 0.0
            for t in range(2):
                idx = groups[k, t]
                if idx >= 0:
                    d = grad[idx] + lam * w[k] * alpha[idx] / na
                    sq += d * d
            r = math.sqrt(sq)
        if r > worst:
            worst = r
    return worst


@numba.njit(cache=True)
def _prox_grad(alpha0, lam, G, Dy, yy, n, Z, s, c, nm, variant, groups, w,
               max_iter, obj_tol, kkt_tol, history):
    x = alpha0.copy()
    g = np.empty_like(x)
    f = _smooth(x, G, Dy, yy, n, Z, s, c, nm, variant, g)
    F = f + lam * _penalty(x, groups, w)
    history[0] = F
    xn = np.empty_like(x)
    gn = np.empty_like(x)
    thresholds = np.empty(w.shape[0])
    t = 1.0
    converged = False
    it = 0
    kkt = _kkt(x, g, lam, groups, w)
    if kkt < kkt_tol:
        return x, True, 0, F, kkt
    slack = 0.0
    for it in range(1, max_iter + 1):
        fn = 0.0
        while True:
            for k in range(w.shape[0]):
                thresholds[k] = t * lam * w[k]
            _prox(x - t * g, thresholds, groups, xn)
            d = xn - x
            fn = _smooth(xn, G, Dy, yy, n, Z, s, c, nm, variant, gn)
            slack = 1e-15 * (abs(f) + 1.0)
            if fn <= f + g @ d + (d @ d) / (2.0 * t) + slack:
                break
            t *= 0.5
            if t < 1e-20:
                break
        Fn = fn + lam * _penalty(xn, groups, w)
        rel = abs(F - Fn) / max(abs(F), 1.0)
        sdiff = xn - x
        ydiff = gn - g
        sy = sdiff @ ydiff
        ss = sdiff @ sdiff
        x[:] = xn
        g[:] = gn
        f = fn
        F = Fn
        history[it] = F
        kkt = _kkt(x, g, lam, groups, w)
        if rel < obj_tol and kkt < kkt_tol:
            converged = True
            break
        if sy > 0.0 and ss > 0.0:
            t = ss / sy
        else:
            t = t * 2.0
        t = min(max(t, 1e-12), 1e12)
    return x, converged, it, F, kkt


# ---------------------------------------------------------------------------


class JointObjective:
    """Smooth part of the joint penalized criterion.

    ``L(alpha) = (1/n) sum_exp (y - D beta)^2
               + (1/(n+m)) [sum_exp l(1, z'gamma) + sum_tgt omega_i l(0, z*'gamma)]``

    where ``l`` is the Bernoulli negative log-likelihood under a logit link. The
    ``exponential`` variant replaces ``l`` with ``log(1 + exp(-2 s' eta))`` for +-1 labels
    ``s'``.
    """

    def __init__(self, exp: ExperimentalSample, tgt: TargetSample, omega=None,
                 selection_loss: str = "bernoulli"):
        if selection_loss not in LOSS_VARIANTS:
            raise ValueError(f"unknown selection loss {selection_loss!r}")
        self.p = exp.p
        self.n = exp.n
        self.m = tgt.m
        self.variant = LOSS_VARIANTS[selection_loss]
        self.selection_loss = selection_loss
        D = outcome_design(exp.x, exp.a)
        self.D = np.ascontiguousarray(D)
        self.y = np.ascontiguousarray(exp.y)
        self.G = np.ascontiguousarray(D.T @ D)
        self.Dy = D.T @ exp.y
        self.yy = float(exp.y @ exp.y)
        Z = np.vstack([np.hstack([exp.x, np.ones((self.n, 1))]),
                       np.hstack([tgt.x_star, np.ones((self.m, 1))])])
        self.Z = np.ascontiguousarray(Z)
        self.s = np.concatenate([np.ones(self.n), np.zeros(self.m)])
        om = np.ones(self.m) if omega is None else np.asarray(omega, dtype=float)
        if om.shape[0] != self.m:
            raise ValueError("omega must have one entry per target row")
        self.omega = om
        self.c = np.concatenate([np.ones(self.n), om])
        self.nm = float(self.n + self.m)

    @property
    def n_coefficients(self) -> int:
        return 3 * self.p + 3

    def value_and_gradient(self, alpha):
        alpha = np.ascontiguousarray(alpha, dtype=float)
        grad = np.empty_like(alpha)
        val = _smooth(alpha, self.G, self.Dy, self.yy, float(self.n), self.Z, self.s, self.c,
                      self.nm, self.variant, grad)
        return float(val), grad

    def value(self, alpha) -> float:
        return self.value_and_gradient(alpha)[0]

    def gradient(self, alpha) -> np.ndarray:
        return self.value_and_gradient(alpha)[1]

    def outcome_rss(self, beta) -> float:
        r = self.y - self.D @ beta
        return float(r @ r)

    def unpenalized_start(self) -> np.ndarray:
        """Penalized groups at zero, intercepts and treatment at their partial minimizer."""
        p, nb = self.p, 2 * self.p + 2
        alpha = np.zeros(self.n_coefficients)
        fit = fit_ols(self.D[:, [2 * p, 2 * p + 1]], self.y)
        alpha[2 * p], alpha[2 * p + 1] = fit.coefficients
        logit = math.log(self.n / float(self.omega.sum()))
        alpha[nb + p] = logit if self.variant == 0 else 0.5 * logit
        return alpha


def build_joint_objective(exp, tgt, omega=None, selection_loss="bernoulli") -> JointObjective:
    return JointObjective(exp, tgt, omega, selection_loss)


def group_prox(z, threshold):
    """Block soft-thresholding: ``max(0, 1 - threshold / ||z||) * z``."""
    z = np.asarray(z, dtype=float)
    if threshold <= 0:
        return z.copy()
    norm = float(np.linalg.norm(z))
    if norm <= threshold:
        return np.zeros_like(z)
    return (1.0 - threshold / norm) * z


def penalized_objective(objective, groups: GroupStructure, weights: AdaptiveWeights, lam, alpha):
    alpha = np.ascontiguousarray(alpha, dtype=float)
    return objective.value(alpha) + lam * _penalty(alpha, groups.padded(), weights.w)


def kkt_residual(objective, groups: GroupStructure, weights: AdaptiveWeights, lam, alpha) -> float:
    """Largest group-wise departure from the subgradient optimality conditions."""
    alpha = np.ascontiguousarray(alpha, dtype=float)
    return float(_kkt(alpha, objective.gradient(alpha), float(lam), groups.padded(), weights.w))


@dataclass
class SolveResult:
    alpha: np.ndarray
    converged: bool
    n_iter: int
    objective: float
    kkt: float
    history: np.ndarray


def solve_at(objective: JointObjective, groups: GroupStructure, weights: AdaptiveWeights,
             lam: float, start=None, max_iter=5000, obj_tol=1e-8, kkt_tol=1e-7) -> SolveResult:
    """Minimize the penalized criterion at one lambda by proximal gradient.

    Step sizes start from a Barzilai-Borwein guess and are halved until the
    sufficient-decrease condition holds, which keeps the penalized objective
    non-increasing. Stops once the relative objective change is below ``obj_tol`` and
    the optimality residual is below ``kkt_tol``.
    """
    start = objective.unpenalized_start() if start is None else np.asarray(start, dtype=float)
    history = np.full(max_iter + 1, np.nan)
    x, ok, it, F, kkt = _prox_grad(np.ascontiguousarray(start), float(lam), objective.G,
                                   objective.Dy, objective.yy, float(objective.n), objective.Z,
                                   objective.s, objective.c, objective.nm, objective.variant,
                                   groups.padded(), weights.w, max_iter, obj_tol, kkt_tol, history)
    return SolveResult(alpha=x, converged=bool(ok), n_iter=int(it), objective=float(F),
                       kkt=float(kkt), history=history[:it + 1])


def glaves_lambda_max(objective, groups: GroupStructure, weights: AdaptiveWeights) -> float:
    alpha0 = objective.unpenalized_start()
    grad = objective.gradient(alpha0)
    best = 0.0
    for k, g in enumerate(groups.groups):
        if weights.w[k] > 0:
            best = max(best, float(np.linalg.norm(grad[list(g)])) / weights.w[k])
    return best


@dataclass
class GlavesFit:
    """Full lambda-path solution with GCV-based model choice."""

    p: int
    lambdas: np.ndarray
    betas: np.ndarray  # (L, 2p + 2)
    gammas: np.ndarray  # (L, p + 1)
    gcv: np.ndarray
    chosen_index: int
    weights: AdaptiveWeights
    converged: np.ndarray
    n_iter: np.ndarray
    kkt: np.ndarray
    standardization: Optional[StandardizationInfo] = None
    full_model_rank_deficient: bool = False

    @property
    def chosen_lambda(self) -> float:
        return float(self.lambdas[self.chosen_index])

    @property
    def beta(self) -> np.ndarray:
        return self.betas[self.chosen_index]

    @property
    def gamma(self) -> np.ndarray:
        return self.gammas[self.chosen_index]

    @property
    def selected_interactions(self) -> tuple:
        return tuple(int(j) for j in np.flatnonzero(self.beta[self.p:2 * self.p] != 0))

    @property
    def selected_main_effects(self) -> tuple:
        return tuple(int(j) for j in np.flatnonzero(self.beta[:self.p] != 0))

    def coupling_violations(self) -> int:
        """Count (lambda, j) pairs where exactly one of beta[p+j], gamma[j] is zero."""
        p = self.p
        bz = self.betas[:, p:2 * p] == 0
        gz = self.gammas[:, :p] == 0
        return int(np.sum(bz != gz))


def solve_path(objective: JointObjective, groups: GroupStructure, weights: AdaptiveWeights,
               n_lambdas=100, lambda_min_ratio=1e-3, lambdas=None, max_iter=5000,
               obj_tol=1e-8, kkt_tol=1e-7):
    """Warm-started solutions over a decreasing log-spaced grid starting at lambda_max.

    Returns ``(lambdas, alphas, SolveResult list)``.
    """
    if not np.all(np.isfinite(weights.w)):
        raise ValueError("adaptive weights must be finite")
    if lambdas is None:
        lam_max = glaves_lambda_max(objective, groups, weights) * (1 + 1e-12)
        lam_max = max(lam_max, 1e-12)
        lambdas = np.geomspace(lam_max, lam_max * lambda_min_ratio, n_lambdas)
    lambdas = np.asarray(lambdas, dtype=float)
    alpha = objective.unpenalized_start()
    alphas = np.empty((lambdas.shape[0], objective.n_coefficients))
    results = []
    for i, lam in enumerate(lambdas):
        res = solve_at(objective, groups, weights, lam, alpha, max_iter, obj_tol, kkt_tol)
        if not res.converged:
            logger.debug("lambda %.3g did not converge (kkt %.2e)", lam, res.kkt)
        alpha = res.alpha
        alphas[i] = alpha
        results.append(res)
    return lambdas, alphas, results


def gcv(beta, exp: ExperimentalSample, v) -> float:
    """Outcome-only generalized cross-validation score for one coefficient vector.

    ``RSS / (1 - df/n)^2`` with ``df = 2 + #{k <= 2p: beta_k != 0} + sum_k |beta_k| / |v_k|``.
    Returns ``inf`` when ``df >= n``.
    """
    beta = np.asarray(beta, dtype=float)
    v = np.asarray(v, dtype=float)
    p = exp.p
    r = exp.y - outcome_design(exp.x, exp.a) @ beta
    rss = float(r @ r)
    b = beta[:2 * p]
    df = 2.0 + np.count_nonzero(b) + float(np.sum(np.abs(b) / np.abs(v)))
    n = exp.n
    if df >= n:
        return math.inf
    return rss / (1.0 - df / n) ** 2


def fit_glaves_scaled(exp: ExperimentalSample, tgt: TargetSample, omega=None,
                      config: GlavesConfig = GlavesConfig(), info=None) -> GlavesFit:
    """Fit on already standardized samples."""
    p = exp.p
    v_full, full_fit = full_outcome_model_coefficients(exp)
    weights = AdaptiveWeights.from_full_model(v_full, p, config.v_mode)
    groups = GroupStructure.for_covariates(p)
    objective = JointObjective(exp, tgt, omega, config.selection_loss)
    lambdas, alphas, results = solve_path(objective, groups, weights, config.n_lambdas,
                                          config.lambda_min_ratio, None, config.max_iter,
                                          config.obj_tol, config.kkt_tol)
    nb = 2 * p + 2
    betas, gammas = alphas[:, :nb], alphas[:, nb:]
    scores = np.array([gcv(b, exp, weights.v) for b in betas])
    chosen = int(np.argmin(scores))  # first index wins ties
    return GlavesFit(p=p, lambdas=lambdas, betas=betas, gammas=gammas, gcv=scores,
                     chosen_index=chosen, weights=weights,
                     converged=np.array([r.converged for r in results]),
                     n_iter=np.array([r.n_iter for r in results]),
                     kkt=np.array([r.kkt for r in results]),
                     standardization=info, full_model_rank_deficient=full_fit.rank_deficient)


def fit_glaves(exp: ExperimentalSample, tgt: TargetSample,
               config: GlavesConfig = GlavesConfig()):
    """Validate, standardize and fit. Returns ``(fit, scaled_target, omega)``."""
    validate_pair(exp, tgt)
    s_exp, s_tgt, info = standardize(exp, tgt, config.scaling)
    omega = target_omega(tgt)
    fit = fit_glaves_scaled(s_exp, s_tgt, omega, config, info)
    return fit, s_tgt, omega


def estimate_tate_glaves(fit: GlavesFit, tgt: TargetSample, omega=None) -> TateEstimate:
    """Plug-in TATE from the chosen outcome coefficients, reported in original units.

    ``tgt`` must be on the same scale the model was fitted on.
    """
    p = fit.p
    beta = fit.beta
    sd_y = fit.standardization.sd_y if fit.standardization is not None else 1.0
    shift = weighted_mean(tgt.x_star @ beta[p:2 * p], omega)
    point = sd_y * (beta[2 * p + 1] + shift)
    return TateEstimate(point=float(point), method="GLAVeS",
                        diagnostics={"chosen_lambda": fit.chosen_lambda,
                                     "all_converged": bool(fit.converged.all())})


def refit_olsglaves(exp: ExperimentalSample, selected_main_effects, selected_interactions,
                    tgt: TargetSample, omega=None) -> TateEstimate:
    """OLS on ``{1, A, selected X_j, selected A*X_j}`` in original units, then the plug-in."""
    mains = list(selected_main_effects)
    ints = list(selected_interactions)
    a = exp.a[:, None]
    design = np.hstack([np.ones((exp.n, 1)), a, exp.x[:, mains], a * exp.x[:, ints]])
    fit = fit_ols(design, exp.y)
    coef = fit.coefficients
    b_a = coef[1]
    b_int = coef[2 + len(mains):]
    effect = b_a + tgt.x_star[:, ints] @ b_int
    point = weighted_mean(effect, omega)
    return TateEstimate(point=point, method="OLSGLAVeS",
                        diagnostics={"rank_deficient": fit.rank_deficient,
                                     "interaction_coefficients": dict(zip(ints, b_int.tolist()))})


class BootstrapError(RuntimeError):
    pass


def bootstrap_ci(estimator: Callable, exp: ExperimentalSample, tgt: TargetSample,
                 B: int = 100, seed=0, level: float = 0.95, max_failure_rate: float = 0.10):
    """Percentile bootstrap interval for ``estimator(exp, tgt)``.

    The estimator may return a float or a 1-d array (one interval per entry; a replicate
    with any non-finite entry counts as failed). Experimental and target rows are resampled independently (target rows carry their
    weights). Replicate ``b`` draws from ``default_rng([seed, b])``, so the result does not
    depend on evaluation order. Replicates that raise are dropped.

    Returns
    -------
    (lower, upper, n_ok, n_failed)
    """
    if B < 2:
        raise ValueError("need at least 2 bootstrap replicates")
    seed_seq = list(np.atleast_1d(seed).astype(int))
    values = []
    failed = 0
    for b in range(B):
        rng = np.random.default_rng(seed_seq + [b])
        rows_e = rng.integers(0, exp.n, exp.n)
        rows_t = rng.integers(0, tgt.m, tgt.m)
        try:
            val = np.asarray(estimator(exp.take(rows_e), tgt.take(rows_t)), dtype=float)
            if not np.all(np.isfinite(val)):
                raise ValueError("non-finite bootstrap estimate")
        except Exception as err:  # noqa: BLE001 - any replicate failure is counted, not fatal
            logger.debug("bootstrap replicate %d failed: %s", b, err)
            failed += 1
            continue
        values.append(val)
    if failed > max_failure_rate * B:
        raise BootstrapError(f"{failed} of {B} bootstrap replicates failed")
    tail = 100 * (1 - level) / 2
    lo, hi = np.percentile(np.asarray(values), [tail, 100 - tail], axis=0)
    if np.ndim(lo) == 0:
        lo, hi = float(lo), float(hi)
    return lo, hi, len(values), failed
