"""Monte Carlo harness: scenario replication, summary metrics and the one-covariate study."""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import ExperimentalSample, TargetSample
from .estimators import METHODS, CVConfig, run_methods
from .fit import GlavesConfig
from .regression import fit_ols
from .scenarios import ScenarioSpec, generate_replicate, true_tate

logger = logging.getLogger(__name__)

MAX_FAILURE_RATE = 0.01


class SimulationError(RuntimeError):
    pass


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("GLAVES_WORKERS", "1")))
    except ValueError:
        return 1


@dataclass
class ReplicateMetrics:
    index: int
    truth: float
    true_interactions: frozenset
    estimates: dict  # method -> float (nan on failure)
    selected: dict  # method -> tuple of covariate indices
    failures: dict = field(default_factory=dict)
    coupling_violations: int = 0
    nonconverged: int = 0


@dataclass
class MethodSummary:
    method: str
    n_ok: int
    n_failed: int
    bias: float
    mse: float
    sd: float
    sensitivity: float
    specificity: float
    mcse_bias: float
    mcse_mse: float
    mcse_sensitivity: float
    mcse_specificity: float

    def as_row(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ScenarioSummary:
    scenario: object
    replicates: int
    truth: float
    methods: dict  # method -> MethodSummary
    estimates: dict  # method -> array of per-replicate estimates
    coupling_violations: int = 0
    nonconverged: int = 0


def _replicate(args) -> ReplicateMetrics:
    spec, methods, base_seed, index, gcfg, cv = args
    exp, tgt = generate_replicate(spec, [base_seed, index])
    truth = true_tate(spec)
    estimates, selected, failures = {}, {}, {}
    violations = nonconverged = 0
    batches = [[m] for m in methods if m not in ("GLAVeS", "OLSGLAVeS")]
    pair = [m for m in methods if m in ("GLAVeS", "OLSGLAVeS")]
    if pair:
        batches.append(pair)
    for batch in batches:
        try:
            out, fit = run_methods(exp, tgt, batch, gcfg, cv, seed=[base_seed, index],
                                   return_fit=True)
        except Exception as err:  # noqa: BLE001 - recorded per replicate, capped below
            for m in batch:
                estimates[m] = math.nan
                selected[m] = ()
                failures[m] = f"{type(err).__name__}: {err}"
            continue
        if fit is not None:
            violations += fit.coupling_violations()
            nonconverged += int((~fit.converged).sum())
        for m, res in out.items():
            estimates[m] = res.point
            selected[m] = res.selected_interactions
    return ReplicateMetrics(index, truth, spec.true_interactions, estimates, selected, failures,
                            violations, nonconverged)


def _rates(selected, truth, p):
    truth = set(truth)
    null = set(range(p)) - truth
    s = set(selected)
    sens = len(s & truth) / len(truth) if truth else math.nan
    spec = len(null - s) / len(null) if null else math.nan
    return sens, spec


def _mcse(x):
    x = np.asarray(x, dtype=float)
    if x.size < 2 or np.all(np.isnan(x)):
        return math.nan
    return float(x.std(ddof=1) / math.sqrt(x.size))


def summarize(records, spec: ScenarioSpec, methods) -> ScenarioSummary:
    """Reduce replicate records (in replicate order) to per-method metrics.

    ``sd`` uses the n-1 denominator and ``mse`` is the mean squared error, so
    ``mse == bias**2 + sd**2 * (R-1)/R``.
    """
    records = sorted(records, key=lambda r: r.index)
    truth = true_tate(spec)
    out, estimates = {}, {}
    for m in methods:
        est = np.array([r.estimates[m] for r in records], dtype=float)
        ok = ~np.isnan(est)
        n_ok = int(ok.sum())
        n_failed = len(records) - n_ok
        if n_failed > MAX_FAILURE_RATE * len(records):
            reasons = sorted({r.failures.get(m, "") for r in records if m in r.failures})
            raise SimulationError(f"{m}: {n_failed} of {len(records)} replicates failed: "
                                  f"{reasons[:3]}")
        err = est[ok] - truth
        rates = np.array([_rates(r.selected[m], r.true_interactions, spec.p)
                          for r in records if not math.isnan(r.estimates[m])]).reshape(-1, 2)
        bias = float(err.mean()) if n_ok else math.nan
        mse = float(np.mean(err ** 2)) if n_ok else math.nan
        sd = float(est[ok].std(ddof=1)) if n_ok > 1 else math.nan
        out[m] = MethodSummary(
            method=m, n_ok=n_ok, n_failed=n_failed, bias=bias, mse=mse, sd=sd,
            sensitivity=float(rates[:, 0].mean()) if n_ok else math.nan,
            specificity=float(rates[:, 1].mean()) if n_ok else math.nan,
            mcse_bias=_mcse(err), mcse_mse=_mcse(err ** 2),
            mcse_sensitivity=_mcse(rates[:, 0]), mcse_specificity=_mcse(rates[:, 1]),
        )
        estimates[m] = est
    return ScenarioSummary(
        scenario=spec.id, replicates=len(records), truth=truth, methods=out,
        estimates=estimates,
        coupling_violations=int(sum(r.coupling_violations for r in records)),
        nonconverged=int(sum(r.nonconverged for r in records)),
    )


def _map(func, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [func(j) for j in jobs]
    chunk = max(1, len(jobs) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, jobs, chunksize=chunk))


def run_scenario(spec: ScenarioSpec, methods=METHODS, replicates: int = 1000, base_seed: int = 0,
                 workers: int = 1, glaves_config: GlavesConfig = GlavesConfig(),
                 cv: CVConfig = CVConfig(), return_records: bool = False):
    """Run ``replicates`` independent datasets through every method.

    Replicate ``i`` draws its data from seed ``(base_seed, i)``; results are reduced in
    replicate order, so the summary does not depend on ``workers``.
    """
    if replicates < 1:
        raise ValueError("need at least one replicate")
    methods = tuple(methods)
    jobs = [(spec, methods, int(base_seed), i, glaves_config, cv) for i in range(replicates)]
    records = _map(_replicate, jobs, workers)
    summary = summarize(records, spec, methods)
    if return_records:
        return summary, records
    return summary


# ---------------------------------------------------------------------------
# one-covariate study of model misspecification

DISTRIBUTIONS = ("same", "different")
TRUTHS = {
    "unrelated": (0.0, 0.0),  # (coefficient on X, coefficient on A*X)
    "related": (1.0, 0.0),
    "interaction": (1.0, 1.0),
}
MODELS = ("A", "A+X", "A+X+AX")


@dataclass
class MotivatingStudyResult:
    replicates: int
    rows: list  # dicts: distribution, truth, true_tate, mse_<model>, bias_<model>


def _study_cell(distribution, truth, R, seed, n, m, noise_sd, cell_index):
    bx, bax = TRUTHS[truth]
    mu_star = 1.0 if distribution == "different" else 0.0
    tate = 1.0 + bax * mu_star
    est = np.empty((R, len(MODELS)))
    for r in range(R):
        rng = np.random.default_rng([seed, cell_index, r])
        x = rng.standard_normal(n)
        a = rng.binomial(1, 0.5, n).astype(float)
        y = a + bx * x + bax * a * x + noise_sd * rng.standard_normal(n)
        xs = mu_star + rng.standard_normal(m)
        one = np.ones(n)
        est[r, 0] = fit_ols(np.column_stack([one, a]), y).coefficients[1]
        est[r, 1] = fit_ols(np.column_stack([one, a, x]), y).coefficients[1]
        c = fit_ols(np.column_stack([one, a, x, a * x]), y).coefficients
        est[r, 2] = c[1] + c[3] * xs.mean()
    err = est - tate
    row = {"distribution": distribution, "truth": truth, "true_tate": tate}
    for k, model in enumerate(MODELS):
        row[f"mse_{model}"] = float(np.mean(err[:, k] ** 2))
        row[f"bias_{model}"] = float(err[:, k].mean())
        row[f"mcse_mse_{model}"] = _mcse(err[:, k] ** 2)
    return row


def run_motivating_study(replicates: int = 1000, seed: int = 0, n: int = 300, m: int = 900,
                         noise_sd: float = 1.5) -> MotivatingStudyResult:
    """TATE MSE of three nested outcome models under six one-covariate settings.

    Experimental ``X ~ N(0, 1)``; target ``X* ~ N(0, 1)`` (same) or ``N(1, 1)`` (different).
    """
    if replicates < 1:
        raise ValueError("need at least one replicate")
    rows = []
    cell = 0
    for dist in DISTRIBUTIONS:
        for truth in TRUTHS:
            rows.append(_study_cell(dist, truth, replicates, seed, n, m, noise_sd, cell))
            cell += 1
    return MotivatingStudyResult(replicates=replicates, rows=rows)
