"""Simulation scenarios and their data-generating process."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import ExperimentalSample, TargetSample


@dataclass(frozen=True)
class ScenarioSpec:
    """One simulation setting. Covariate indices are 0-based.

    ``main_effects`` and ``interactions`` are tuples of ``(index, coefficient)``; the outcome is
    ``Y ~ N(A + sum b_j X_j + sum c_j A X_j, noise_sd^2)``. Covariates in ``shifted`` have
    mean ``shift`` in the target sample.
    """

    id: object
    p: int
    main_effects: tuple
    interactions: tuple
    correlated_blocks: tuple = ()
    shifted: tuple = ()
    n: int = 600
    m: int = 300
    noise_sd: float = 1.0
    rho: float = 0.6
    shift: float = 1.0
    target_correlation: str = "matched"

    def __post_init__(self):
        seen = set()
        for block in self.correlated_blocks:
            if seen & set(block):
                raise ValueError("correlated blocks must be disjoint")
            seen |= set(block)
        idx = [j for j, _ in self.main_effects] + [j for j, _ in self.interactions]
        idx += list(self.shifted) + list(seen)
        if any(not 0 <= j < self.p for j in idx):
            raise ValueError("covariate index out of range")
        if not all(np.isfinite(c) for _, c in self.main_effects + self.interactions):
            raise ValueError("coefficients must be finite")
        if self.target_correlation not in ("matched", "independent"):
            raise ValueError("target_correlation must be 'matched' or 'independent'")

    @property
    def true_interactions(self) -> frozenset:
        return frozenset(j for j, c in self.interactions if c != 0)

    def with_(self, **changes) -> "ScenarioSpec":
        return replace(self, **changes)


def _scenario(sid, p, mains, ints, coef, blocks, shifted):
    return ScenarioSpec(
        id=sid, p=p,
        main_effects=tuple((j - 1, 1.0) for j in mains),
        interactions=tuple((j - 1, coef) for j in ints),
        correlated_blocks=tuple(tuple(j - 1 for j in b) for b in blocks),
        shifted=tuple(j - 1 for j in shifted),
    )


_BLOCKS_8 = ((1, 2), (3, 4))
_BLOCKS_15 = ((1, 2), (3, 4), (5, 6, 7), (8, 9, 10))

SCENARIOS = {
    1: _scenario(1, 8, (1, 3), (1, 3), 0.1, (), (1, 2, 3)),
    2: _scenario(2, 8, (1, 3), (1, 3), 0.05, (), (1, 2, 3)),
    3: _scenario(3, 8, (1, 3), (1, 3), 0.1, _BLOCKS_8, (1, 2, 3)),
    4: _scenario(4, 8, (1, 3), (1, 3), 0.05, _BLOCKS_8, (1, 2, 3)),
    5: _scenario(5, 15, (1, 2), (1, 3, 5), 0.1, (), range(1, 8)),
    6: _scenario(6, 15, (1, 2), (1, 3, 5), 0.05, (), range(1, 8)),
    7: _scenario(7, 15, (1, 2), (1, 3, 5), 0.1, _BLOCKS_15, range(1, 8)),
    8: _scenario(8, 15, (1, 2), (1, 3, 5), 0.05, _BLOCKS_15, range(1, 8)),
}


def get_scenario(sid) -> ScenarioSpec:
    try:
        return SCENARIOS[int(sid)]
    except (KeyError, ValueError):
        raise KeyError(f"unknown scenario {sid!r}; known: {sorted(SCENARIOS)}") from None


def covariance(spec: ScenarioSpec) -> np.ndarray:
    """Unit-diagonal covariance with compound-symmetric blocks."""
    sigma = np.eye(spec.p)
    for block in spec.correlated_blocks:
        for i in block:
            for j in block:
                if i != j:
                    sigma[i, j] = spec.rho
    return sigma


def _cholesky(sigma):
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise ValueError("covariance is not positive definite") from None


def true_tate(spec: ScenarioSpec) -> float:
    """Population TATE: 1 plus each interaction coefficient times its target mean."""
    means = np.zeros(spec.p)
    means[list(spec.shifted)] = spec.shift
    return 1.0 + float(sum(c * means[j] for j, c in spec.interactions))


def outcome_mean(spec: ScenarioSpec, x, a):
    mu = np.asarray(a, dtype=float).copy()
    for j, c in spec.main_effects:
        mu += c * x[:, j]
    for j, c in spec.interactions:
        mu += c * a * x[:, j]
    return mu


def generate_replicate(spec: ScenarioSpec, seed):
    """Draw one (experimental, target) pair. Deterministic for a given ``seed``.

    ``seed`` may be an int or a sequence such as ``(base_seed, replicate_index)``.
    """
    rng = np.random.default_rng(seed)
    chol = _cholesky(covariance(spec))
    x = rng.standard_normal((spec.n, spec.p)) @ chol.T
    a = rng.binomial(1, 0.5, spec.n).astype(float)
    y = outcome_mean(spec, x, a) + spec.noise_sd * rng.standard_normal(spec.n)
    tchol = chol if spec.target_correlation == "matched" else np.eye(spec.p)
    xs = rng.standard_normal((spec.m, spec.p)) @ tchol.T
    xs[:, list(spec.shifted)] += spec.shift
    return ExperimentalSample(y, a, x), TargetSample(xs)
