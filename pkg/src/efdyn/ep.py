"""Energy-dependent effective potential on the open channel and its roots.

Eliminating the closed channels from the block problem leaves an equation on
channel 0 alone::

    [h_g + V_eff(eta)] psi_0 = eta psi_0,
    V_eff(eta) = V_00 + sum_k u_k u_k^T / (eta - p_k),

with poles ``p_k`` and residue vectors ``u_k = V_0Q psi0_k`` taken from the
closed-channel spectrum. Because ``V_eff`` depends on ``eta`` the reduced
equation has ``N_q * N_xi`` roots instead of ``N_xi``; each root, with
``eta + eps_0``, is an eigenvalue of the full problem.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .model import CoupledSystem
from .spectral import TruncatedSpectrum, fix_signs

__all__ = [
    "PoleProximityError",
    "RootCountError",
    "EffectivePotential",
    "RootRecord",
    "AssembledState",
    "build_ep",
    "eigen_branches",
    "find_all_roots",
    "assemble_state",
    "assemble_all",
]

log = logging.getLogger(__name__)

POLE_GUARD = 1e-9
MERGE_GAP = 2 * POLE_GUARD   # only poles whose gap cannot hold two guard bands
RESIDUE_TOL = 1e-12
ROOT_TOL = 1e-10


class PoleProximityError(ValueError):
    """Evaluation point lies inside the guard band of a pole."""


class RootCountError(RuntimeError):
    """Root search found a number of roots different from ``N_q * N_xi``."""


def _gershgorin(H: np.ndarray) -> tuple[float, float]:
    if H.size == 0:
        return 0.0, 0.0
    d = np.diag(H)
    r = np.abs(H).sum(axis=1) - np.abs(d)
    return float(np.min(d - r)), float(np.max(d + r))


@dataclass(frozen=True)
class Decoupled:
    """Closed-channel eigenvectors with zero overlap on the open channel."""

    location: float
    q_vectors: np.ndarray    # ((N_q-1)*N_xi, m)


@dataclass(frozen=True)
class EffectivePotential:
    v00: np.ndarray
    h_g: np.ndarray
    poles: np.ndarray              # (P,) distinct, ascending
    residues: tuple                # P matrices (N_xi, r_c), V_eff term U U^T/(eta-p)
    mode_poles: np.ndarray         # (K,) raw closed-channel poles
    mode_residues: np.ndarray      # (N_xi, K) raw u_k
    decoupled: tuple = ()
    bounds: tuple = (0.0, 0.0)     # Gershgorin interval of the full problem, relative to eps_0
    n_q: int = 1
    cache: str = "none"

    @property
    def n_xi(self) -> int:
        return int(self.v00.shape[0])

    @property
    def span(self) -> float:
        s = self.bounds[1] - self.bounds[0]
        return s if s > 0 else 1.0

    @property
    def guard(self) -> float:
        return POLE_GUARD * self.span

    def __call__(self, eta: float) -> np.ndarray:
        return self.evaluate(eta)

    def evaluate(self, eta: float) -> np.ndarray:
        """``V_eff(eta)``; raises :class:`PoleProximityError` inside a guard band."""
        self._check_guard(eta)
        out = np.array(self.v00, dtype=float, copy=True)
        for p, U in zip(self.poles, self.residues):
            out += (U @ U.T) / (eta - p)
        return out

    def _check_guard(self, eta):
        if self.poles.size:
            d = np.min(np.abs(np.asarray(eta, dtype=float)[..., None] - self.poles))
            if d < self.guard:
                raise PoleProximityError(f"eta={float(np.min(eta))!r} within {self.guard:.3g} of a pole")

    def stacked(self, etas: np.ndarray) -> np.ndarray:
        """``h_g + V_eff`` for every entry of ``etas``, shape (B, N_xi, N_xi)."""
        etas = np.asarray(etas, dtype=float)
        M = np.broadcast_to(self.h_g + self.v00, (etas.size,) + self.v00.shape).copy()
        for p, U in zip(self.poles, self.residues):
            M += (U @ U.T)[None] / (etas - p)[:, None, None]
        return M

    def shifted_pole(self, index: int, delta: float) -> "EffectivePotential":
        """Copy with pole ``index`` moved by ``delta`` (fault injection hook)."""
        poles = np.array(self.poles, copy=True)
        poles[index] += delta
        order = np.argsort(poles, kind="stable")
        return replace(self, poles=poles[order], residues=tuple(self.residues[i] for i in order))


@dataclass(frozen=True)
class RootRecord:
    eta: float
    psi0: np.ndarray
    branch: int
    bracket: tuple[float, float]
    residual: float
    decoupled: bool = False
    q_vector: np.ndarray | None = field(default=None, repr=False)

    @property
    def converged(self) -> bool:
        return self.decoupled or self.residual <= ROOT_TOL * max(1.0, abs(self.eta))


@dataclass(frozen=True)
class AssembledState:
    """Full state reconstructed from one root.

    ``psi`` holds grid-node amplitudes of unit 2-norm; ``density`` divides by
    the quadrature weights so that ``sum(weights * density) == 1``.
    """

    eta: float
    psi: np.ndarray          # (N_q, N_xi)
    density: np.ndarray      # (N_q, N_xi)
    marginal: np.ndarray     # (N_xi,)
    centroid: float
    normalizable: bool = True

    @property
    def vector(self) -> np.ndarray:
        return self.psi.ravel()


def _open_closed_coupling(system: CoupledSystem) -> np.ndarray:
    """``V_0Q``: channel 0 rows against all closed-channel columns."""
    return np.hstack([system.coupling(0, n) for n in range(1, system.n_q)])


def build_ep(system: CoupledSystem, truncated: TruncatedSpectrum | None) -> EffectivePotential:
    nx = system.n_xi
    v00 = np.array(system.coupling(0, 0), dtype=float)
    H = system.hamiltonian()
    lo, hi = _gershgorin(H)
    eps0 = float(system.channels.energies[0])
    bounds = (lo - eps0, hi - eps0)
    span = bounds[1] - bounds[0] or 1.0

    if truncated is None or truncated.count == 0:
        empty = np.zeros(0)
        return EffectivePotential(v00, np.array(system.h_g), empty, (), empty,
                                  np.zeros((nx, 0)), (), bounds, system.n_q)

    u = _open_closed_coupling(system) @ truncated.vectors
    p = truncated.poles

    # group near-degenerate poles; each group acts through the sum of its outer products
    groups: list[list[int]] = [[0]]
    for k in range(1, p.size):
        if p[k] - p[groups[-1][-1]] < MERGE_GAP * span:
            groups[-1].append(k)
        else:
            groups.append([k])

    poles, residues, decoupled = [], [], []
    tol = RESIDUE_TOL * max(1.0, span)
    for g in groups:
        loc = float(np.mean(p[g]))
        A, s, Bt = np.linalg.svd(u[:, g], full_matrices=True)
        r = int(np.sum(s > tol))
        if r:
            poles.append(loc)
            residues.append(A[:, :r] * s[:r])
        if r < len(g):
            null = Bt[r:].T                    # (m, m - r)
            decoupled.append(Decoupled(loc, truncated.vectors[:, g] @ null))

    return EffectivePotential(
        v00=v00,
        h_g=np.array(system.h_g),
        poles=np.array(poles),
        residues=tuple(residues),
        mode_poles=np.array(p),
        mode_residues=u,
        decoupled=tuple(decoupled),
        bounds=bounds,
        n_q=system.n_q,
    )


def eigen_branches(ep: EffectivePotential, h_g, eta: float) -> np.ndarray:
    """Sorted eigenvalues of ``h_g + V_eff(eta)``."""
    return np.linalg.eigvalsh(np.asarray(h_g) + ep.evaluate(eta))


def _refine(ep, lo, hi, branch, max_iter=200):
    """Vectorised bisection on ``lambda_k(eta) - eta`` followed by a secant step.

    ``f`` is decreasing on every bracket: f(lo) > 0 > f(hi).
    """
    lo = lo.copy()
    hi = hi.copy()
    idx = np.arange(lo.size)
    for _ in range(max_iter):
        width = hi - lo
        active = width > 4 * np.finfo(float).eps * np.maximum(np.abs(lo), np.abs(hi))
        if not active.any():
            break
        a = idx[active]
        mid = 0.5 * (lo[a] + hi[a])
        f = np.linalg.eigvalsh(ep.stacked(mid))[np.arange(a.size), branch[a]] - mid
        pos = f > 0
        lo[a[pos]] = mid[pos]
        hi[a[~pos]] = mid[~pos]

    cand = np.stack([lo, hi])
    fc = np.stack([
        np.linalg.eigvalsh(ep.stacked(c))[np.arange(c.size), branch] - c for c in cand
    ])
    denom = fc[0] - fc[1]
    with np.errstate(divide="ignore", invalid="ignore"):
        sec = np.where(denom != 0, lo + fc[0] * (hi - lo) / denom, 0.5 * (lo + hi))
    sec = np.clip(sec, lo, hi)
    fs = np.linalg.eigvalsh(ep.stacked(sec))[np.arange(sec.size), branch] - sec
    cand = np.vstack([cand, sec])
    fc = np.vstack([fc, fs])
    best = np.argmin(np.abs(fc), axis=0)
    cols = np.arange(lo.size)
    return cand[best, cols], np.abs(fc[best, cols])


def find_all_roots(ep: EffectivePotential, h_g=None, *, check_count: bool = True) -> list[RootRecord]:
    """All roots of ``lambda_k(eta) = eta`` over every branch and pole interval.

    Roots belonging to closed-channel modes that do not couple to channel 0
    are returned with ``decoupled=True`` at their pole location, so the total
    is ``N_q * N_xi``.
    """
    if h_g is not None and not np.array_equal(np.asarray(h_g), ep.h_g):
        ep = replace(ep, h_g=np.array(h_g, dtype=float))
    nx = ep.n_xi
    guard = ep.guard
    pad = max(1e-3 * ep.span, 1.0)
    edges = np.concatenate([[ep.bounds[0] - pad], ep.poles, [ep.bounds[1] + pad]])
    edges[0] = min(edges[0], edges[1] - pad) if ep.poles.size else edges[0]
    edges[-1] = max(edges[-1], edges[-2] + pad) if ep.poles.size else edges[-1]

    left = edges[:-1].copy()
    right = edges[1:].copy()
    left[1:] += guard
    right[:-1] -= guard
    ok = right > left
    left, right = left[ok], right[ok]

    fl = np.linalg.eigvalsh(ep.stacked(left)) - left[:, None]
    fr = np.linalg.eigvalsh(ep.stacked(right)) - right[:, None]

    lo_list, hi_list, br_list, exact = [], [], [], []
    for j in range(left.size):
        for k in range(nx):
            if fl[j, k] > 0 and fr[j, k] < 0:
                lo_list.append(left[j])
                hi_list.append(right[j])
                br_list.append(k)
            elif fl[j, k] == 0:
                exact.append((left[j], k))
            elif fr[j, k] == 0:
                exact.append((right[j], k))

    etas = np.array([e for e, _ in exact], dtype=float)
    branches = np.array([k for _, k in exact], dtype=int)
    resid = np.zeros(etas.size)
    brackets = [(e, e) for e in etas]
    if lo_list:
        lo_a, hi_a = np.array(lo_list), np.array(hi_list)
        br_a = np.array(br_list, dtype=int)
        r_eta, r_res = _refine(ep, lo_a, hi_a, br_a)
        etas = np.concatenate([etas, r_eta])
        branches = np.concatenate([branches, br_a])
        resid = np.concatenate([resid, r_res])
        brackets += list(zip(lo_a.tolist(), hi_a.tolist()))

    roots: list[RootRecord] = []
    if etas.size:
        _, vecs = np.linalg.eigh(ep.stacked(etas))
        for i in range(etas.size):
            psi0 = fix_signs(vecs[i][:, branches[i]])
            roots.append(RootRecord(float(etas[i]), psi0, int(branches[i]),
                                    (float(brackets[i][0]), float(brackets[i][1])), float(resid[i])))
    for dec in ep.decoupled:
        for j in range(dec.q_vectors.shape[1]):
            roots.append(RootRecord(dec.location, np.zeros(nx), -1, (dec.location, dec.location),
                                    0.0, True, dec.q_vectors[:, j]))

    roots.sort(key=lambda r: (r.eta, r.decoupled, r.branch))
    for r in roots:
        if not r.converged:
            log.warning("root eta=%.17g residual %.3g above tolerance", r.eta, r.residual)
    expected = ep.n_q * nx
    if check_count and len(roots) != expected:
        raise RootCountError(f"found {len(roots)} roots, expected N_q*N_xi = {expected}")
    return roots


def assemble_state(system: CoupledSystem, truncated: TruncatedSpectrum | None, root: RootRecord,
                   guard: float | None = None) -> AssembledState:
    """Rebuild closed-channel components from ``psi_0`` by resolvent back-substitution."""
    nq, nx = system.n_q, system.n_xi
    psi = np.zeros((nq, nx))
    normalizable = True
    if root.decoupled:
        psi[1:] = root.q_vector.reshape(nq - 1, nx)
    else:
        psi[0] = root.psi0
        if nq > 1 and truncated is not None and truncated.count:
            vq0 = np.concatenate([system.coupling(n, 0) @ root.psi0 for n in range(1, nq)])
            overlap = truncated.vectors.T @ vq0
            denom = root.eta - truncated.poles
            if guard is None:
                lo, hi = _gershgorin(system.hamiltonian())
                guard = POLE_GUARD * ((hi - lo) or 1.0)
            near = (np.abs(denom) < guard) & (np.abs(overlap) > RESIDUE_TOL)
            if near.any():
                normalizable = False
                log.warning("root eta=%.17g coincides with a pole; state not normalizable", root.eta)
                denom = np.where(near, np.inf, denom)
            psi[1:] = (truncated.vectors @ (overlap / denom)).reshape(nq - 1, nx)

    norm = np.linalg.norm(psi)
    if norm > 0:
        psi = fix_signs(psi.ravel() / norm).reshape(nq, nx)
    else:
        normalizable = False
    w = system.grid.weights
    density = psi ** 2 / w
    marginal = density.sum(axis=0)
    centroid = float(np.sum(system.grid.points * w * marginal)) if norm > 0 else float("nan")
    return AssembledState(root.eta, psi, density, marginal, centroid, normalizable)


def assemble_all(system, truncated, roots, ep: EffectivePotential | None = None) -> list[AssembledState]:
    guard = ep.guard if ep is not None else None
    return [assemble_state(system, truncated, r, guard) for r in roots]

