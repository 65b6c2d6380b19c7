"""Seeded jump process over realisation centres."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

__all__ = [
    "BeatConfig",
    "BeatTrajectory",
    "DriftReport",
    "FrequencyReport",
    "simulate",
    "drift_and_diffusion",
    "frequency_test",
]

ALPHA_TOL = 1e-12


@dataclass(frozen=True)
class BeatConfig:
    alpha: Sequence[float]
    centres: Sequence[float]
    steps: int = 10_000
    seed: int = 0
    period: float = 1.0
    action_quantum: float = 1.0
    initial_action: float = 0.0
    # jump-kernel hook: (rng, previous index or None, alpha) -> index; None means i.i.d.
    kernel: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float)
        if a.ndim != 1 or a.size == 0:
            raise ValueError("alpha must be a non-empty list")
        if len(self.centres) != a.size:
            raise ValueError("alpha and centres differ in length")
        if np.any(a < 0) or not np.all(np.isfinite(a)):
            raise ValueError("alpha has negative or non-finite entries")
        if abs(a.sum() - 1.0) > ALPHA_TOL:
            raise ValueError(f"alpha sums to {a.sum()!r}, not 1")
        if int(self.steps) < 1:
            raise ValueError("steps must be >= 1")
        if not self.period > 0 or not self.action_quantum > 0:
            raise ValueError("period and action quantum must be positive")


@dataclass
class BeatTrajectory:
    indices: np.ndarray
    times: np.ndarray
    positions: np.ndarray
    actions: np.ndarray
    counts: np.ndarray
    config: BeatConfig = field(repr=False)

    @property
    def steps(self) -> int:
        return int(self.indices.size)

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.steps

    def records(self):
        """Yield ``(step, time, index, position, action)`` per event."""
        for k in range(self.steps):
            yield (k + 1, float(self.times[k]), int(self.indices[k]),
                   float(self.positions[k]), float(self.actions[k]))


def simulate(config: BeatConfig) -> BeatTrajectory:
    alpha = np.asarray(config.alpha, dtype=float)
    centres = np.asarray(config.centres, dtype=float)
    n = int(config.steps)
    rng = np.random.Generator(np.random.PCG64(config.seed))
    if config.kernel is None:
        idx = rng.choice(alpha.size, size=n, p=alpha)
    else:
        idx = np.empty(n, dtype=np.int64)
        prev = None
        for k in range(n):
            prev = idx[k] = config.kernel(rng, prev, alpha)
    k = np.arange(1, n + 1)
    times = k * config.period
    actions = config.initial_action - k * config.action_quantum
    counts = np.bincount(idx, minlength=alpha.size)
    return BeatTrajectory(idx, times, centres[idx], actions, counts, config)


@dataclass(frozen=True)
class DriftReport:
    drift: float
    variance: float
    stderr: float
    theoretical_drift: float
    theoretical_variance: float

    @property
    def z(self) -> float:
        if self.stderr == 0:
            close = abs(self.drift - self.theoretical_drift) <= 1e-12 * max(1.0, abs(self.theoretical_drift))
            return 0.0 if close else math.inf
        return (self.drift - self.theoretical_drift) / self.stderr


def drift_and_diffusion(traj: BeatTrajectory) -> DriftReport:
    if traj.steps < 2:
        raise ValueError("need at least two steps")
    x = traj.positions
    drift = float(x.mean())
    var = float(x.var(ddof=1))
    alpha = np.asarray(traj.config.alpha, dtype=float)
    c = np.asarray(traj.config.centres, dtype=float)
    mu = float(alpha @ c)
    tvar = float(alpha @ (c - mu) ** 2)
    return DriftReport(drift, var, math.sqrt(tvar / traj.steps), mu, tvar)


@dataclass(frozen=True)
class FrequencyReport:
    statistic: float
    dof: int
    critical: float
    p_value: float
    deviations: np.ndarray
    level: float

    @property
    def passed(self) -> bool:
        return self.statistic <= self.critical


def frequency_test(traj: BeatTrajectory, alpha: Sequence[float] | None = None,
                   level: float = 0.999) -> FrequencyReport:
    """Pearson chi-square of observed counts against ``alpha``.

    Centres with zero probability must never be visited; they drop out of
    the degrees of freedom.
    """
    a = np.asarray(traj.config.alpha if alpha is None else alpha, dtype=float)
    obs = np.asarray(traj.counts, dtype=float)
    if obs.size != a.size:
        raise ValueError("alpha length differs from number of centres")
    expected = a * traj.steps
    live = expected > 0
    if np.any(obs[~live] > 0):
        stat = math.inf
    else:
        stat = float((((obs - expected) ** 2)[live] / expected[live]).sum())
    dof = int(live.sum()) - 1
    if dof < 1:
        crit, p = 0.0, 1.0
    else:
        crit = float(stats.chi2.ppf(level, dof))
        p = float(stats.chi2.sf(stat, dof))
    return FrequencyReport(stat, dof, crit, p, obs / traj.steps - a, level)
