"""Generalizing trial treatment effects with joint group-lasso variable selection."""

from .data import DataError, ExperimentalSample, TargetSample, normalize_weights, standardize
from .estimators import METHODS, CVConfig, EstimatorResult, run_methods
from .fit import GlavesConfig, GlavesFit, TateEstimate, bootstrap_ci, fit_glaves
from .scenarios import SCENARIOS, ScenarioSpec, generate_replicate, get_scenario, true_tate
from .simulation import run_motivating_study, run_scenario

__version__ = "0.1.0"

__all__ = [
    "CVConfig", "DataError", "EstimatorResult", "ExperimentalSample", "GlavesConfig",
    "GlavesFit", "METHODS", "SCENARIOS", "ScenarioSpec", "TargetSample", "TateEstimate",
    "bootstrap_ci", "fit_glaves", "generate_replicate", "get_scenario", "normalize_weights",
    "run_methods", "run_motivating_study", "run_scenario", "standardize", "true_tate",
]
