"""Dataset containers, validation and the shared standardization contract."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


class DataError(ValueError):
    """Raised when a sample violates the input contract."""


POLICIES = ("experimental-sd", "pooled-sd")


def _check_finite(arr, name):
    bad = np.argwhere(~np.isfinite(arr))
    if bad.size:
        loc = bad[0]
        if arr.ndim == 2:
            raise DataError(f"non-finite value in {name} at row {loc[0]}, column {loc[1]}")
        raise DataError(f"non-finite value in {name} at row {loc[0]}")


@dataclass(frozen=True)
class ExperimentalSample:
    """Trial data: outcome ``y``, binary treatment ``a`` and covariates ``x`` (n x p)."""

    y: np.ndarray
    a: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        y = np.array(self.y, dtype=float).ravel()
        a = np.array(self.a, dtype=float).ravel()
        x = np.array(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if x.ndim != 2:
            raise DataError(f"x must be a 2-d matrix, got shape {x.shape}")
        n = y.shape[0]
        if a.shape[0] != n or x.shape[0] != n:
            raise DataError(
                f"dimension mismatch: y has {n} rows, a has {a.shape[0]}, x has {x.shape[0]}"
            )
        if n < 2:
            raise DataError("experimental sample needs at least 2 rows")
        _check_finite(y, "y")
        _check_finite(a, "a")
        _check_finite(x, "x")
        if not np.all((a == 0) | (a == 1)):
            row = int(np.flatnonzero((a != 0) & (a != 1))[0])
            raise DataError(f"treatment must be 0/1, row {row} has {a[row]!r}")
        if a.sum() == 0 or a.sum() == n:
            raise DataError("empty treatment arm: both a=0 and a=1 rows are required")
        for arr in (y, a, x):
            arr.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def take(self, rows) -> "ExperimentalSample":
        return ExperimentalSample(self.y[rows], self.a[rows], self.x[rows])


@dataclass(frozen=True)
class TargetSample:
    """Target-population covariates ``x_star`` (m x p) with optional raw survey weights."""

    x_star: np.ndarray
    raw_weights: Optional[np.ndarray] = None

    def __post_init__(self):
        x = np.array(self.x_star, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if x.ndim != 2:
            raise DataError(f"x_star must be a 2-d matrix, got shape {x.shape}")
        if x.shape[0] < 1:
            raise DataError("target sample needs at least 1 row")
        _check_finite(x, "x_star")
        x.setflags(write=False)
        object.__setattr__(self, "x_star", x)
        if self.raw_weights is not None:
            r = np.array(self.raw_weights, dtype=float).ravel()
            if r.shape[0] != x.shape[0]:
                raise DataError(
                    f"dimension mismatch: {r.shape[0]} weights for {x.shape[0]} target rows"
                )
            _check_finite(r, "weight")
            if np.any(r <= 0):
                row = int(np.flatnonzero(r <= 0)[0])
                raise DataError(f"survey weights must be positive, row {row} has {r[row]!r}")
            r.setflags(write=False)
            object.__setattr__(self, "raw_weights", r)

    @property
    def m(self) -> int:
        return self.x_star.shape[0]

    @property
    def p(self) -> int:
        return self.x_star.shape[1]

    def take(self, rows) -> "TargetSample":
        w = None if self.raw_weights is None else self.raw_weights[rows]
        return TargetSample(self.x_star[rows], w)


@dataclass(frozen=True)
class StandardizationInfo:
    sd_y: float
    sd_x: np.ndarray
    policy: str = "experimental-sd"


@dataclass(frozen=True)
class NormalizedWeights:
    """Survey weights rescaled to mean one."""

    omega: np.ndarray


def validate_pair(exp: ExperimentalSample, tgt: TargetSample):
    """Check that two samples can be analysed together and return them unchanged.

    Raises
    ------
    DataError
        On covariate-count mismatch or a constant experimental covariate column.
    """
    if exp.p != tgt.p:
        raise DataError(
            f"dimension mismatch: experimental sample has p={exp.p}, target has p={tgt.p}"
        )
    if exp.p:
        sd = exp.x.std(axis=0, ddof=1)
        const = np.flatnonzero(~(sd > 0))
        if const.size:
            raise DataError(f"constant covariate column x{const[0] + 1} in experimental sample")
    return exp, tgt


def _column_sd(exp, tgt, policy):
    if policy == "experimental-sd":
        sd = exp.x.std(axis=0, ddof=1)
    elif policy == "pooled-sd":
        sd = np.vstack([exp.x, tgt.x_star]).std(axis=0, ddof=1)
    else:
        raise DataError(f"unknown scaling policy {policy!r}; expected one of {POLICIES}")
    if np.any(~(sd > 0)):
        j = int(np.flatnonzero(~(sd > 0))[0])
        raise DataError(f"zero-variance column x{j + 1}")
    return sd


def standardize(exp: ExperimentalSample, tgt: TargetSample, policy: str = "experimental-sd"):
    """Divide the outcome and every covariate by its sample SD (n-1 denominator).

    Both covariate matrices are divided by the same per-column constants, so the
    mean shift between populations survives scaling. Nothing is centered.

    Returns
    -------
    (ExperimentalSample, TargetSample, StandardizationInfo)
    """
    sd_y = float(exp.y.std(ddof=1))
    if not sd_y > 0:
        raise DataError("zero-variance outcome")
    sd_x = _column_sd(exp, tgt, policy) if exp.p else np.ones(0)
    info = StandardizationInfo(sd_y=sd_y, sd_x=sd_x, policy=policy)
    scaled_exp = ExperimentalSample(exp.y / sd_y, exp.a, exp.x / sd_x)
    scaled_tgt = TargetSample(tgt.x_star / sd_x, tgt.raw_weights)
    return scaled_exp, scaled_tgt, info


def unstandardize(exp: ExperimentalSample, tgt: TargetSample, info: StandardizationInfo):
    """Inverse of :func:`standardize`."""
    return (
        ExperimentalSample(exp.y * info.sd_y, exp.a, exp.x * info.sd_x),
        TargetSample(tgt.x_star * info.sd_x, tgt.raw_weights),
    )


def normalize_weights(r, m: Optional[int] = None) -> NormalizedWeights:
    """Rescale raw survey weights to ``m * r / sum(r)`` so they average one."""
    r = np.asarray(r, dtype=float).ravel()
    if m is None:
        m = r.shape[0]
    if r.shape[0] != m:
        raise DataError(f"expected {m} weights, got {r.shape[0]}")
    if np.any(~np.isfinite(r)) or np.any(r <= 0):
        raise DataError("survey weights must be strictly positive and finite")
    return NormalizedWeights(omega=m * r / r.sum())


def target_omega(tgt: TargetSample) -> Optional[np.ndarray]:
    """Normalized weights for a target sample, or ``None`` when unweighted."""
    if tgt.raw_weights is None:
        return None
    return normalize_weights(tgt.raw_weights, tgt.m).omega


def weighted_mean(values, omega=None) -> float:
    """``(1/m) * sum(omega_i * values_i)``; a plain mean when ``omega`` is ``None``."""
    values = np.asarray(values, dtype=float)
    if omega is None:
        return float(values.mean())
    return float(np.sum(np.asarray(omega, dtype=float) * values) / values.shape[0])
