"""Command-line front end.

Subcommands: ``simulate``, ``analyze``, ``motivating-study`` and ``validate``. Exit status is
0 on success, 1 when a validation check or a run fails, 2 on input errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import subprocess
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .checks import run_all_checks
from .data import POLICIES, DataError, target_omega, validate_pair
from .estimators import METHODS, CVConfig, run_methods
from .fit import LOSS_VARIANTS, V_MODES, BootstrapError, GlavesConfig, bootstrap_ci
from .io import (InputError, ingest_experimental_csv, ingest_target_csv, join_coefficients,
                 join_labels, render_table)
from .scenarios import SCENARIOS, get_scenario
from .simulation import (MODELS, SimulationError, default_workers, run_motivating_study,
                         run_scenario)

logger = logging.getLogger("glaves")

EXIT_OK, EXIT_FAILED, EXIT_INPUT = 0, 1, 2

SIMULATE_COLUMNS = [
    "scenario", "method", "replicates", "n_ok", "n_failed", "truth", "bias", "mse", "sd",
    "sensitivity", "specificity", "mcse_bias", "mcse_mse", "mcse_sensitivity",
    "mcse_specificity", "coupling_violations", "nonconverged_lambdas", "note",
]
ANALYZE_COLUMNS = [
    "method", "estimate", "ci_lower", "ci_upper", "ci_level", "n_bootstrap",
    "n_bootstrap_failed", "n_selected_interactions", "selected_interactions",
    "selected_main_effects", "interaction_coefficients", "note",
]
STUDY_COLUMNS = ["distribution", "truth", "model", "true_tate", "mse", "bias", "mcse_mse", "note"]
VALIDATE_COLUMNS = ["check", "passed", "value", "tolerance"]


class _InputArgumentError(Exception):
    pass


def version_string() -> str:
    """Package version, with the git commit appended when run from a checkout."""
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True,
                             text=True, cwd=Path(__file__).parent, timeout=5, check=False)
        rev = out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        rev = ""
    return f"{__version__}+g{rev}" if rev else __version__


def _methods(text):
    names = [m.strip() for m in text.split(",") if m.strip()]
    unknown = [m for m in names if m not in METHODS]
    if unknown or not names:
        raise argparse.ArgumentTypeError(f"unknown methods {unknown}; choose from {METHODS}")
    return tuple(names)


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _nonnegative_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be a non-negative integer")
    return value


def _ratio(text):
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError("must lie strictly between 0 and 1")
    return value


def _add_output(p):
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--output", type=Path, default=None,
                   help="output file (default: stdout); a run manifest is written next to it")


def _add_model(p):
    p.add_argument("--methods", type=_methods, default=METHODS,
                   help="comma-separated subset of " + ",".join(METHODS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--folds", type=int, default=10, help="CV folds for the lasso methods")
    p.add_argument("--fold-mode", choices=("permutation", "row-hash"), default="permutation")
    p.add_argument("--n-lambdas", type=_positive_int, default=100)
    p.add_argument("--lambda-min-ratio", type=_ratio, default=1e-3)
    p.add_argument("--v-mode", choices=V_MODES, default=GlavesConfig.v_mode,
                   help="full-model coefficient used in the main-effect penalty weights")
    p.add_argument("--selection-loss", choices=tuple(LOSS_VARIANTS),
                   default=GlavesConfig.selection_loss)
    p.add_argument("--scaling", choices=POLICIES, default=GlavesConfig.scaling)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="glaves", description="Generalize trial treatment effects to a target population.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="Monte Carlo reproduction of the simulation scenarios")
    sim.add_argument("--scenario", action="append", default=None,
                     help=f"scenario id (repeatable; default all of {sorted(SCENARIOS)})")
    sim.add_argument("--replicates", type=_positive_int, default=1000)
    sim.add_argument("--workers", type=_positive_int, default=None,
                     help="worker processes (default $GLAVES_WORKERS or 1)")
    sim.add_argument("--target-correlation", choices=("matched", "independent"),
                     default="matched")
    _add_model(sim)
    _add_output(sim)

    ana = sub.add_parser("analyze", help="estimate the TATE from two CSV samples")
    ana.add_argument("--experimental", type=Path, required=True,
                     help="CSV with columns y, a, x1..xp")
    ana.add_argument("--target", type=Path, required=True,
                     help="CSV with columns x1..xp and an optional trailing weight")
    ana.add_argument("--bootstrap", type=_nonnegative_int, default=100,
                     help="bootstrap replicates for percentile CIs (0 disables)")
    ana.add_argument("--ci-level", type=_ratio, default=0.95)
    ana.add_argument("--allow-extra", action="store_true",
                     help="ignore unknown extra columns instead of rejecting them")
    _add_model(ana)
    _add_output(ana)

    mot = sub.add_parser("motivating-study",
                         help="one-covariate study of omitted and extraneous interactions")
    mot.add_argument("--replicates", type=_positive_int, default=1000)
    mot.add_argument("--seed", type=int, default=0)
    _add_output(mot)

    val = sub.add_parser("validate", help="run the numerical self-checks")
    _add_output(val)
    return parser


# ---------------------------------------------------------------------------
# commands


def _glaves_config(args) -> GlavesConfig:
    return GlavesConfig(n_lambdas=args.n_lambdas, lambda_min_ratio=args.lambda_min_ratio,
                        v_mode=args.v_mode, selection_loss=args.selection_loss,
                        scaling=args.scaling)


def _cv_config(args) -> CVConfig:
    if args.folds < 2:
        raise _InputArgumentError("--folds must be at least 2")
    return CVConfig(k_folds=args.folds, n_lambdas=args.n_lambdas,
                    lambda_min_ratio=args.lambda_min_ratio, fold_mode=args.fold_mode)


def _nan_note(row, fields):
    missing = [f for f in fields if isinstance(row.get(f), float) and not math.isfinite(row[f])]
    return missing


def cmd_simulate(args):
    ids = args.scenario or [str(k) for k in sorted(SCENARIOS)]
    try:
        specs = [get_scenario(s) for s in ids]
    except KeyError as err:
        raise _InputArgumentError(err.args[0]) from None
    specs = [s.with_(target_correlation=args.target_correlation) for s in specs]
    workers = args.workers or default_workers()
    gcfg, cv = _glaves_config(args), _cv_config(args)
    rows = []
    for spec in specs:
        summary = run_scenario(spec, args.methods, args.replicates, args.seed, workers, gcfg, cv)
        for m in args.methods:
            row = {"scenario": spec.id, "replicates": summary.replicates,
                   "truth": summary.truth, **summary.methods[m].as_row()}
            row["coupling_violations"] = summary.coupling_violations if m in (
                "GLAVeS", "OLSGLAVeS") else 0
            row["nonconverged_lambdas"] = summary.nonconverged if m in (
                "GLAVeS", "OLSGLAVeS") else 0
            notes = []
            if _nan_note(row, ["sd", "mcse_bias", "mcse_mse"]):
                notes.append("fewer than 2 successful replicates")
            if _nan_note(row, ["sensitivity", "mcse_sensitivity"]) and not spec.true_interactions:
                notes.append("no true interactions")
            elif _nan_note(row, ["mcse_sensitivity"]):
                notes.append("mc standard error needs 2 or more replicates")
            row["note"] = "; ".join(notes)
            rows.append(row)
    config = {"scenarios": [s.id for s in specs], "replicates": args.replicates,
              "seed": args.seed, "methods": list(args.methods), "workers": workers,
              "target_correlation": args.target_correlation, "glaves": asdict(gcfg),
              "cv": asdict(cv)}
    return rows, SIMULATE_COLUMNS, config, EXIT_OK


def _analysis_vector(exp, tgt, methods, gcfg, cv, seed):
    out = run_methods(exp, tgt, methods, gcfg, cv, seed=seed)
    return np.array([out[m].point for m in methods])


def cmd_analyze(args):
    exp = ingest_experimental_csv(args.experimental, args.allow_extra)
    tgt = ingest_target_csv(args.target, args.allow_extra)
    validate_pair(exp, tgt)
    gcfg, cv = _glaves_config(args), _cv_config(args)
    methods = args.methods
    results = run_methods(exp, tgt, methods, gcfg, cv, seed=args.seed)
    lo = hi = None
    n_ok = n_failed = 0
    ci_note = ""
    status = EXIT_OK
    if args.bootstrap >= 2:
        try:
            lo, hi, n_ok, n_failed = bootstrap_ci(
                lambda e, t: _analysis_vector(e, t, methods, gcfg, cv, args.seed),
                exp, tgt, B=args.bootstrap, seed=[args.seed, 99], level=args.ci_level)
        except BootstrapError as err:
            ci_note = f"bootstrap failed: {err}"
            status = EXIT_FAILED
    else:
        ci_note = "bootstrap disabled"
    rows = []
    for k, m in enumerate(methods):
        res = results[m]
        note = ci_note
        if not math.isfinite(res.point):
            note = "; ".join(filter(None, [note, "non-finite estimate"]))
        rows.append({
            "method": m, "estimate": res.point,
            "ci_lower": float(lo[k]) if lo is not None else math.nan,
            "ci_upper": float(hi[k]) if hi is not None else math.nan,
            "ci_level": args.ci_level, "n_bootstrap": n_ok, "n_bootstrap_failed": n_failed,
            "n_selected_interactions": len(res.selected_interactions),
            "selected_interactions": join_labels(res.selected_interactions),
            "selected_main_effects": join_labels(res.selected_main_effects),
            "interaction_coefficients": join_coefficients(res.interaction_coefficients),
            "note": note,
        })
    omega = target_omega(tgt)
    config = {"experimental": str(args.experimental), "target": str(args.target),
              "n": exp.n, "m": tgt.m, "p": exp.p, "weighted": omega is not None,
              "seed": args.seed, "methods": list(methods), "bootstrap": args.bootstrap,
              "ci_level": args.ci_level, "glaves": asdict(gcfg), "cv": asdict(cv)}
    return rows, ANALYZE_COLUMNS, config, status


def cmd_motivating_study(args):
    result = run_motivating_study(args.replicates, args.seed)
    rows = []
    for cell in result.rows:
        for model in MODELS:
            row = {"distribution": cell["distribution"], "truth": cell["truth"], "model": model,
                   "true_tate": cell["true_tate"], "mse": cell[f"mse_{model}"],
                   "bias": cell[f"bias_{model}"], "mcse_mse": cell[f"mcse_mse_{model}"]}
            row["note"] = "mc standard error needs 2 or more replicates" if _nan_note(
                row, ["mcse_mse"]) else ""
            rows.append(row)
    config = {"replicates": args.replicates, "seed": args.seed, "n": 300, "m": 900,
              "noise_sd": 1.5}
    return rows, STUDY_COLUMNS, config, EXIT_OK


def cmd_validate(args):
    results = run_all_checks()
    rows = []
    for r in results:
        print(r.line(), file=sys.stderr if args.output is None else sys.stdout)
        rows.append({"check": r.name, "passed": r.passed, "value": float(r.value),
                     "tolerance": float(r.tolerance)})
    status = EXIT_OK if all(r.passed for r in results) else EXIT_FAILED
    return rows, VALIDATE_COLUMNS, {}, status


COMMANDS = {"simulate": cmd_simulate, "analyze": cmd_analyze,
            "motivating-study": cmd_motivating_study, "validate": cmd_validate}


def _display(rows, columns) -> str:
    """Fixed-width preview rounded to three decimals."""
    def cell(v):
        if isinstance(v, float):
            return f"{v:.3f}" if math.isfinite(v) else "NA"
        return str(v)
    shown = [c for c in columns if c not in ("note", "interaction_coefficients")]
    table = [shown] + [[cell(r.get(c, "")) for c in shown] for r in rows]
    widths = [max(len(line[i]) for line in table) for i in range(len(shown))]
    return "\n".join("  ".join(v.rjust(w) for v, w in zip(line, widths)) for line in table)


def _write(args, rows, columns, config):
    text = render_table(rows, columns, args.format)
    manifest = {"command": args.command, "version": version_string(), "format": args.format,
                "config": config}
    manifest_text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    if args.output is None:
        sys.stdout.write(text)
        sys.stderr.write(manifest_text)
        return
    args.output.parent.mkdir(parents=True, exist_ok=True)
    args.output.write_text(text, encoding="utf-8")
    manifest_path = args.output.with_name(args.output.name + ".manifest.json")
    manifest_path.write_text(manifest_text, encoding="utf-8")
    print(_display(rows, columns))
    print(f"wrote {args.output} and {manifest_path}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rows, columns, config, status = COMMANDS[args.command](args)
    except (_InputArgumentError, InputError, DataError) as err:
        print(f"glaves: input error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except (SimulationError, BootstrapError) as err:
        print(f"glaves: run failed: {err}", file=sys.stderr)
        return EXIT_FAILED
    _write(args, rows, columns, config)
    return status


if __name__ == "__main__":
    sys.exit(main())
