"""Dense eigen-solvers for the closed-channel block and the full problem."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import CoupledSystem

__all__ = ["TruncatedSpectrum", "FullSpectrum", "solve_truncated", "solve_full", "fix_signs"]


def fix_signs(vecs: np.ndarray, rel: float = 1e-12) -> np.ndarray:
    """Flip columns so the first non-negligible component is positive."""
    vecs = np.array(vecs, dtype=float, copy=True)
    if vecs.ndim == 1:
        return fix_signs(vecs[:, None], rel)[:, 0]
    for j in range(vecs.shape[1]):
        col = vecs[:, j]
        big = np.abs(col) > rel * np.max(np.abs(col), initial=0.0)
        if big.any() and col[np.argmax(big)] < 0:
            vecs[:, j] = -col
    return vecs


@dataclass(frozen=True)
class TruncatedSpectrum:
    """Eigenpairs of the closed-channel block (channels ``n >= 1``).

    ``poles`` are the eigenvalues of the block measured from ``eps_0`` (so the
    channel offsets ``eps_n - eps_0`` are already on its diagonal); ``eta0``
    removes the offset of each mode's dominant channel again.
    """

    poles: np.ndarray        # (K,) ascending
    vectors: np.ndarray      # ((N_q-1)*N_xi, K), columns orthonormal
    channel: np.ndarray      # (K,) dominant channel tag, 1..N_q-1
    eta0: np.ndarray         # (K,)
    n_xi: int

    @property
    def count(self) -> int:
        return int(self.poles.size)

    def component(self, k: int, n: int) -> np.ndarray:
        """Grid part of mode ``k`` living in channel ``n >= 1``."""
        return self.vectors[(n - 1) * self.n_xi:n * self.n_xi, k]


@dataclass(frozen=True)
class FullSpectrum:
    energies: np.ndarray     # (N,) ascending
    vectors: np.ndarray      # (N, N)
    residuals: np.ndarray    # (N,) ||H v - E v||
    n_q: int
    n_xi: int

    @property
    def count(self) -> int:
        return int(self.energies.size)

    def components(self, j: int) -> np.ndarray:
        """Eigenvector ``j`` reshaped to ``(N_q, N_xi)``."""
        return self.vectors[:, j].reshape(self.n_q, self.n_xi)


def closed_block(system: CoupledSystem) -> np.ndarray:
    """Closed-channel operator shifted by ``-eps_0``.

    Channel 0 is excluded from rows and columns.
    """
    nq, nx = system.n_q, system.n_xi
    H = np.zeros(((nq - 1) * nx, (nq - 1) * nx))
    for a in range(1, nq):
        for b in range(1, nq):
            sl_a = slice((a - 1) * nx, a * nx)
            sl_b = slice((b - 1) * nx, b * nx)
            if a == b:
                H[sl_a, sl_a] = system.channel_block(a, system.channels.gap(a))
            else:
                H[sl_a, sl_b] = system.coupling(a, b)
    return H


def _closed_components(system: CoupledSystem) -> list[list[int]]:
    """Closed channels grouped by non-zero mutual coupling (connected components)."""
    nq = system.n_q
    parent = list(range(nq))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a in range(1, nq):
        for b in range(a + 1, nq):
            if np.any(system.coupling(a, b)) or np.any(system.coupling(b, a)):
                parent[find(a)] = find(b)
    comps: dict[int, list[int]] = {}
    for n in range(1, nq):
        comps.setdefault(find(n), []).append(n)
    return sorted(comps.values())


def solve_truncated(system: CoupledSystem) -> TruncatedSpectrum:
    """Diagonalize the closed-channel block.

    A closed channel with no coupling to the other closed channels is solved
    on its own without the ``eps_n - eps_0`` offset, which is then added to
    give the pole. Mutually coupled closed channels are solved together with
    their offsets on the diagonal.
    """
    if system.n_q < 2:
        raise ValueError("truncation needs at least two channels (N_q >= 2)")
    nq, nx = system.n_q, system.n_xi
    size = (nq - 1) * nx
    poles, eta0, tags, cols = [], [], [], []
    for comp in _closed_components(system):
        if len(comp) == 1:
            n = comp[0]
            w, v = np.linalg.eigh(system.channel_block(n))
            poles.append(w + system.channels.gap(n))
            eta0.append(w)
            tags.append(np.full(nx, n))
            full = np.zeros((size, nx))
            full[(n - 1) * nx:n * nx] = v
            cols.append(full)
            continue
        idx = np.concatenate([np.arange((n - 1) * nx, n * nx) for n in comp])
        w, v = np.linalg.eigh(closed_block(system)[np.ix_(idx, idx)])
        weight = (v.reshape(len(comp), nx, -1) ** 2).sum(axis=1)
        tag = np.array(comp)[np.argmax(weight, axis=0)]
        poles.append(w)
        eta0.append(w - np.array([system.channels.gap(int(n)) for n in tag]))
        tags.append(tag)
        full = np.zeros((size, w.size))
        full[idx] = v
        cols.append(full)
    poles = np.concatenate(poles)
    order = np.argsort(poles, kind="stable")
    vectors = fix_signs(np.hstack(cols)[:, order])
    return TruncatedSpectrum(poles[order], vectors, np.concatenate(tags)[order],
                             np.concatenate(eta0)[order], nx)


def solve_full(system: CoupledSystem) -> FullSpectrum:
    H = system.hamiltonian()
    w, v = np.linalg.eigh(H)
    v = fix_signs(v)
    res = np.linalg.norm(H @ v - v * w, axis=0)
    return FullSpectrum(w, v, res, system.n_q, system.n_xi)
