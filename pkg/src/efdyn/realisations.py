"""Grouping of roots into realisations and their probabilities."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .ep import AssembledState

__all__ = [
    "DegenerateReferenceError",
    "Regime",
    "RegimeThresholds",
    "GroupingPolicy",
    "ProjectionCoefficients",
    "RealisationSet",
    "parse_policy",
    "group_realisations",
    "counting_probabilities",
    "born_probabilities",
    "uniform_reference",
    "superposition_reference",
    "expectation_density",
    "complexity",
    "classify_regime",
    "build_realisations",
]


OVERLAP_FLOOR = 1e-12   # below this the reference is treated as orthogonal


class DegenerateReferenceError(ValueError):
    """Reference state has no overlap with any solution."""


class Regime(str, enum.Enum):
    UNIFORM_CHAOS = "UniformChaos"
    SOC = "SOC"
    INTERMEDIATE = "Intermediate"


@dataclass(frozen=True)
class RegimeThresholds:
    soc_max_alpha: float = 0.5
    uniform_entropy: float = 0.9
    uniform_max_factor: float = 3.0      # max alpha <= factor / N
    uniform_max_alpha: float = 0.25      # and max alpha <= this


@dataclass(frozen=True)
class GroupingPolicy:
    kind: str = "elementary"
    delta: float = 0.0

    def __str__(self):
        return self.kind if self.kind == "elementary" else f"cluster:{self.delta!r}"


def parse_policy(text: str | GroupingPolicy | None) -> GroupingPolicy:
    """``"elementary"`` or ``"cluster:<delta>"``."""
    if text is None:
        return GroupingPolicy()
    if isinstance(text, GroupingPolicy):
        return text
    if text == "elementary":
        return GroupingPolicy()
    if text.startswith("cluster:"):
        delta = float(text.split(":", 1)[1])
        if not (delta >= 0 and math.isfinite(delta)):
            raise ValueError(f"cluster delta must be finite and >= 0, got {delta}")
        return GroupingPolicy("cluster", delta)
    raise ValueError(f"unknown grouping policy {text!r}")


@dataclass(frozen=True)
class ProjectionCoefficients:
    coefficients: np.ndarray      # c_i per root
    reference: np.ndarray


@dataclass
class RealisationSet:
    groups: list[list[int]]
    centres: np.ndarray
    alpha_counting: np.ndarray
    alpha_born: np.ndarray | None = None
    complexity: float = 0.0
    projection: ProjectionCoefficients | None = field(default=None, repr=False)

    @property
    def n_elementary(self) -> int:
        return sum(len(g) for g in self.groups)

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def sizes(self) -> list[int]:
        return [len(g) for g in self.groups]


def group_realisations(centroids: Sequence[float], policy: GroupingPolicy | str | None = None) -> list[list[int]]:
    """Partition root indices by their density centroid.

    ``cluster(delta)`` joins roots whose centroids are within ``delta`` of a
    neighbour (single linkage along the coordinate). Groups come back ordered
    by centroid, members by index, so input order does not matter.
    """
    policy = parse_policy(policy)
    c = np.asarray(centroids, dtype=float)
    if policy.kind == "elementary":
        order = np.lexsort((np.arange(c.size), c))
        return [[int(i)] for i in order]
    order = np.lexsort((np.arange(c.size), c))
    groups: list[list[int]] = []
    prev = None
    for i in order:
        if prev is None or c[i] - prev > policy.delta:
            groups.append([])
        groups[-1].append(int(i))
        prev = c[i]
    return [sorted(g) for g in groups]


def counting_probabilities(groups: Sequence[Sequence[int]]) -> np.ndarray:
    sizes = np.array([len(g) for g in groups], dtype=float)
    return sizes / sizes.sum()


def uniform_reference(n_q: int, n_xi: int) -> np.ndarray:
    """Unit vector with equal entries on the full (channel, grid) space."""
    n = n_q * n_xi
    return np.full(n, 1.0 / math.sqrt(n))


def superposition_reference(states: Sequence[AssembledState]) -> np.ndarray:
    """Normalised equal-weight sum of the given states."""
    v = np.sum([s.vector for s in states], axis=0)
    return v / np.linalg.norm(v)


def born_probabilities(states: Sequence[AssembledState], groups: Sequence[Sequence[int]],
                       reference: np.ndarray | None = None):
    """Squared-overlap probabilities ``alpha_r ~ sum_{i in r} |<Psi_i, ref>|^2``."""
    if reference is None:
        n_q, n_xi = states[0].psi.shape
        reference = uniform_reference(n_q, n_xi)
    reference = np.asarray(reference, dtype=float)
    norm = np.linalg.norm(reference)
    if not norm > 0:
        raise DegenerateReferenceError("reference state is zero")
    reference = reference / norm
    c = np.array([s.vector @ reference for s in states])
    w = c ** 2
    total = w.sum()
    if not total > OVERLAP_FLOOR ** 2:
        raise DegenerateReferenceError("reference is orthogonal to every solution")
    alpha = np.array([w[g].sum() for g in groups]) / total
    return ProjectionCoefficients(c / math.sqrt(total), reference), alpha


def group_densities(states: Sequence[AssembledState], groups) -> list[np.ndarray]:
    """Member-averaged density per group; each keeps unit mass."""
    return [np.mean([states[i].density for i in g], axis=0) for g in groups]


def expectation_density(alpha: Sequence[float], densities: Sequence[np.ndarray]) -> np.ndarray:
    """``sum_r alpha_r rho_r``."""
    alpha = np.asarray(alpha, dtype=float)
    return np.tensordot(alpha, np.asarray(densities), axes=1)


def complexity(n_groups: int | RealisationSet, measure: Callable[[int], float] = math.log) -> float:
    """Complexity of a realisation count, ``ln N`` by default; 0 for one realisation."""
    n = n_groups.n_groups if isinstance(n_groups, RealisationSet) else int(n_groups)
    if n < 1:
        raise ValueError("need at least one realisation")
    return float(measure(n))


def classify_regime(alpha: Sequence[float], thresholds: RegimeThresholds = RegimeThresholds()) -> Regime:
    a = np.asarray(alpha, dtype=float)
    if a.size == 0:
        raise ValueError("empty probability list")
    amax = float(a.max())
    if amax >= thresholds.soc_max_alpha:
        return Regime.SOC
    nz = a[a > 0]
    h = float(-(nz * np.log(nz)).sum())
    h_norm = h / math.log(a.size) if a.size > 1 else 0.0
    cap = min(thresholds.uniform_max_alpha, thresholds.uniform_max_factor / a.size)
    if amax <= cap and h_norm >= thresholds.uniform_entropy:
        return Regime.UNIFORM_CHAOS
    return Regime.INTERMEDIATE


def build_realisations(states: Sequence[AssembledState], policy=None, reference=None) -> RealisationSet:
    """Group ``states`` and attach both probability estimators and complexity."""
    groups = group_realisations([s.centroid for s in states], policy)
    alpha_c = counting_probabilities(groups)
    proj, alpha_b = born_probabilities(states, groups, reference)
    centres = np.array([np.mean([states[i].centroid for i in g]) for g in groups])
    return RealisationSet(groups, centres, alpha_c, alpha_b, complexity(len(groups)), proj)
