"""Solve / verify / simulate pipelines shared by the CLI and the tests."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import beat, io
from .ep import (AssembledState, EffectivePotential, RootCountError, RootRecord, assemble_all,
                 build_ep, find_all_roots)
from .model import ChannelSet, ConfigError, CoupledSystem, build_system, uniform_grid, validate
from .realisations import (GroupingPolicy, RealisationSet, Regime, RegimeThresholds, build_realisations,
                           classify_regime, expectation_density, group_densities, parse_policy,
                           superposition_reference)
from .spectral import FullSpectrum, TruncatedSpectrum, solve_full, solve_truncated

log = logging.getLogger(__name__)

DEFAULT_ORACLE_TOL = 1e-8


@dataclass
class RunConfig:
    system: dict | None = None
    out: Path = Path("out")
    seed: int = 0
    policy: GroupingPolicy = field(default_factory=GroupingPolicy)
    reference: str = "uniform"
    oracle_tol: float = DEFAULT_ORACLE_TOL
    thresholds: RegimeThresholds = field(default_factory=RegimeThresholds)
    estimator: str = "born"
    steps: int = 100_000
    period: float = 1.0
    action_quantum: float = 1.0
    trials: int = 100
    max_channels: int = 6
    max_points: int = 12
    fault_trial: int | None = None

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], **overrides) -> "RunConfig":
        """Accept either ``{"system": ..., "run": ...}`` or a bare system config."""
        if "grid" in data:
            system, run = dict(data), {}
        else:
            system, run = data.get("system"), dict(data.get("run", {}))
        if not isinstance(run, Mapping):
            raise ConfigError("'run' section must be a mapping")
        beat_cfg = run.get("beat", {})
        ver = run.get("verify", {})
        tol = run.get("tolerances", {})
        cfg = cls(
            system=system,
            seed=int(run.get("seed", 0)),
            policy=parse_policy(run.get("policy", "elementary")),
            reference=str(run.get("reference", "uniform")),
            oracle_tol=float(tol.get("oracle", DEFAULT_ORACLE_TOL)),
            thresholds=RegimeThresholds(**run.get("regime", {})),
            estimator=str(beat_cfg.get("estimator", "born")),
            steps=int(beat_cfg.get("steps", 100_000)),
            period=float(beat_cfg.get("period", 1.0)),
            action_quantum=float(beat_cfg.get("action_quantum", 1.0)),
            trials=int(ver.get("trials", 100)),
            max_channels=int(ver.get("max_channels", 6)),
            max_points=int(ver.get("max_points", 12)),
        )
        for k, v in overrides.items():
            if v is not None:
                setattr(cfg, k, parse_policy(v) if k == "policy" else v)
        if not cfg.oracle_tol > 0:
            raise ConfigError("tolerances must be positive")
        if cfg.reference not in ("uniform", "superposition"):
            raise ConfigError(f"unknown reference {cfg.reference!r}")
        if cfg.estimator not in ("born", "counting"):
            raise ConfigError(f"unknown estimator {cfg.estimator!r}")
        return cfg

    def echo(self) -> dict:
        return {
            "seed": self.seed, "policy": str(self.policy), "reference": self.reference,
            "oracle_tol": self.oracle_tol, "regime": vars(self.thresholds),
            "estimator": self.estimator, "steps": self.steps, "period": self.period,
            "action_quantum": self.action_quantum, "trials": self.trials,
            "max_channels": self.max_channels, "max_points": self.max_points,
            "fault_trial": self.fault_trial,
        }


@dataclass
class SolveResult:
    system: CoupledSystem
    truncated: TruncatedSpectrum | None
    ep: EffectivePotential
    roots: list[RootRecord]
    states: list[AssembledState]
    full: FullSpectrum
    realisations: RealisationSet
    regime: Regime
    oracle_deviation: float

    @property
    def surviving(self) -> list[int]:
        """Indices of roots with a non-zero open-channel component."""
        return [i for i, r in enumerate(self.roots) if not r.decoupled and self.states[i].normalizable]


def oracle_deviation(roots, full: FullSpectrum, eps0: float) -> float:
    """Max |sorted(eta + eps0) - sorted(E)| relative to max(1, max|E|); inf on count mismatch."""
    e = np.sort([r.eta + eps0 for r in roots])
    if e.size != full.count:
        return float("inf")
    scale = max(1.0, float(np.max(np.abs(full.energies)))) if full.count else 1.0
    return float(np.max(np.abs(e - full.energies)) / scale) if e.size else 0.0


def solve(system: CoupledSystem, policy=None, reference: str = "uniform",
          thresholds: RegimeThresholds = RegimeThresholds(), ep: EffectivePotential | None = None) -> SolveResult:
    problems = validate(system)
    if problems:
        raise ConfigError("invalid system: " + "; ".join(problems))
    truncated = solve_truncated(system) if system.n_q >= 2 else None
    if ep is None:
        ep = build_ep(system, truncated)
    roots = find_all_roots(ep)
    states = assemble_all(system, truncated, roots, ep)
    full = solve_full(system)
    dev = oracle_deviation(roots, full, float(system.channels.energies[0]))

    keep = [i for i, r in enumerate(roots) if not r.decoupled and states[i].normalizable]
    kept = [states[i] for i in keep]
    ref = superposition_reference(kept) if reference == "superposition" else None
    rs = build_realisations(kept, policy, ref)
    rs.groups = [[keep[i] for i in g] for g in rs.groups]   # report indices into the full root list
    regime = classify_regime(rs.alpha_born, thresholds)
    return SolveResult(system, truncated, ep, roots, states, full, rs, regime, dev)


def solve_config(cfg: RunConfig) -> SolveResult:
    if cfg.system is None:
        raise ConfigError("config has no 'system' section")
    return solve(build_system(cfg.system), cfg.policy, cfg.reference, cfg.thresholds)


# --------------------------------------------------------------------------
# randomized oracle campaign

def random_system(rng: np.random.Generator, n_q: int, n_xi: int, min_gap: float = 1e-6,
                  max_tries: int = 100) -> CoupledSystem:
    """Random real symmetric coupled system with closed-channel pole gaps >= ``min_gap * span``."""
    for _ in range(max_tries):
        A = rng.standard_normal((n_q * n_xi, n_q * n_xi))
        A = 0.5 * (A + A.T)
        h_g = A[:n_xi, :n_xi].copy()
        V = {}
        for a in range(n_q):
            for b in range(n_q):
                blk = A[a * n_xi:(a + 1) * n_xi, b * n_xi:(b + 1) * n_xi]
                V[(a, b)] = blk - h_g if a == b else blk.copy()
        eps = np.sort(rng.uniform(0.0, 2.0, n_q))
        system = CoupledSystem(uniform_grid(0.0, 1.0, n_xi), ChannelSet(eps), h_g, V)
        poles = solve_truncated(system).poles
        H = system.hamiltonian()
        span = float(np.ptp(np.linalg.eigvalsh(H))) or 1.0
        if poles.size < 2 or np.min(np.diff(poles)) >= min_gap * span:
            return system
    raise RuntimeError("could not draw a system with separated poles")


@dataclass
class TrialResult:
    trial: int
    n_q: int
    n_xi: int
    roots: int
    expected: int
    deviation: float
    passed: bool
    error: str = ""


def run_trial(seed: int, trial: int, max_channels: int, max_points: int, tol: float,
              fault: bool = False) -> TrialResult:
    rng = np.random.default_rng([seed, trial])
    n_q = int(rng.integers(2, max_channels + 1))
    n_xi = int(rng.integers(2, max_points + 1))
    system = random_system(rng, n_q, n_xi)
    truncated = solve_truncated(system)
    ep = build_ep(system, truncated)
    if fault:
        ep = ep.shifted_pole(0, 1e-3 * ep.span)
    expected = n_q * n_xi
    try:
        roots = find_all_roots(ep, check_count=False)
    except Exception as exc:   # noqa: BLE001 - any solver failure counts against the trial
        return TrialResult(trial, n_q, n_xi, 0, expected, float("inf"), False, repr(exc))
    full = solve_full(system)
    dev = oracle_deviation(roots, full, float(system.channels.energies[0]))
    ok = len(roots) == expected and dev <= tol
    err = "" if len(roots) == expected else str(RootCountError(f"{len(roots)} roots, expected {expected}"))
    return TrialResult(trial, n_q, n_xi, len(roots), expected, dev, ok, err)


def run_verify(trials: int, seed: int, max_channels: int = 6, max_points: int = 12,
               tol: float = DEFAULT_ORACLE_TOL, fault_trial: int | None = None) -> list[TrialResult]:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    return [run_trial(seed, t, max_channels, max_points, tol, fault=(t == fault_trial))
            for t in range(trials)]


# --------------------------------------------------------------------------
# artifact writers

def write_solve_artifacts(res: SolveResult, out: Path) -> dict[str, Path]:
    out = Path(out)
    s = res.system
    eps0 = float(s.channels.energies[0])
    files = {}
    files["hamiltonian"] = io.write_csv(
        out / "hamiltonian.csv", ["row", "col", "value"],
        ((i, j, v) for (i, j), v in np.ndenumerate(s.hamiltonian()) if v != 0))
    if res.truncated is not None:
        t = res.truncated
        files["truncated"] = io.write_csv(
            out / "truncated.csv", ["index", "pole", "eta0", "channel"],
            ((k, t.poles[k], t.eta0[k], t.channel[k]) for k in range(t.count)))
    f = res.full
    files["spectrum"] = io.write_csv(
        out / "spectrum.csv", ["index", "eigenvalue", "residual"],
        ((j, f.energies[j], f.residuals[j]) for j in range(f.count)))
    files["roots"] = io.write_csv(
        out / "roots.csv",
        ["index", "eta", "energy", "branch", "bracket_lo", "bracket_hi", "residual", "decoupled", "centroid"],
        ((i, r.eta, r.eta + eps0, r.branch, r.bracket[0], r.bracket[1], r.residual, r.decoupled,
          res.states[i].centroid) for i, r in enumerate(res.roots)))
    xi = s.grid.points
    files["densities"] = io.write_csv(
        out / "densities.csv", ["root", "channel", "xi", "density"],
        ((i, n, xi[k], st.density[n, k]) for i, st in enumerate(res.states)
         for n in range(s.n_q) for k in range(s.n_xi)))
    rs = res.realisations
    files["realisations"] = io.write_csv(
        out / "realisations.csv", ["group", "members", "size", "centre", "alpha_counting", "alpha_born"],
        ((g, " ".join(map(str, m)), len(m), rs.centres[g], rs.alpha_counting[g], rs.alpha_born[g])
         for g, m in enumerate(rs.groups)))
    dens = group_densities(res.states, rs.groups)
    rho = expectation_density(rs.alpha_born, dens)
    files["expectation"] = io.write_csv(
        out / "expectation.csv", ["channel", "xi", "rho_ex"],
        ((n, xi[k], rho[n, k]) for n in range(s.n_q) for k in range(s.n_xi)))
    return files


def solve_summary(res: SolveResult) -> dict:
    rs = res.realisations
    return {
        "n_q": res.system.n_q,
        "n_xi": res.system.n_xi,
        "roots": len(res.roots),
        "surviving_roots": len(res.surviving),
        "decoupled_roots": sum(r.decoupled for r in res.roots),
        "max_root_residual": max((r.residual for r in res.roots), default=0.0),
        "oracle_max_relative_deviation": res.oracle_deviation,
        "realisations": rs.n_groups,
        "sizes": rs.sizes,
        "alpha_counting": rs.alpha_counting.tolist(),
        "alpha_born": rs.alpha_born.tolist(),
        "centres": rs.centres.tolist(),
        "complexity": rs.complexity,
        "regime": res.regime.value,
    }


def beat_config_from(res: SolveResult, cfg: RunConfig) -> beat.BeatConfig:
    rs = res.realisations
    alpha = rs.alpha_born if cfg.estimator == "born" else rs.alpha_counting
    alpha = np.asarray(alpha, dtype=float)
    alpha = alpha / alpha.sum()
    return beat.BeatConfig(alpha, rs.centres, cfg.steps, cfg.seed, cfg.period, cfg.action_quantum)


def write_trajectory(traj: beat.BeatTrajectory, path: Path) -> Path:
    return io.write_csv(path, ["step", "time", "index", "position", "action"], traj.records())
