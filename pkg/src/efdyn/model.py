"""Discretized two-field interaction problem.

The first field is represented by a finite set of channels with energies
``eps[n]``; the second by a quadrature grid. Channel 0 is the open channel.
Couplings ``V[(n, m)]`` are real ``N_xi x N_xi`` matrices acting on the grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

__all__ = [
    "ConfigError",
    "GridSpec",
    "ChannelSet",
    "CoupledSystem",
    "SystemConfig",
    "build_system",
    "validate",
    "uniform_grid",
    "kernel_profile",
]


class ConfigError(ValueError):
    """Raised for malformed or inconsistent system configurations."""


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GridSpec:
    points: np.ndarray
    weights: np.ndarray
    label: str = "xi"

    def __post_init__(self):
        object.__setattr__(self, "points", _frozen(np.atleast_1d(self.points)))
        object.__setattr__(self, "weights", _frozen(np.atleast_1d(self.weights)))

    @property
    def size(self) -> int:
        return int(self.points.size)


def uniform_grid(start: float, stop: float, n: int, label: str = "xi") -> GridSpec:
    """Equally spaced grid with constant weights equal to the spacing."""
    if n < 1:
        raise ConfigError("grid needs at least one point")
    if n == 1:
        return GridSpec(np.array([0.5 * (start + stop)]), np.array([1.0]), label)
    pts = np.linspace(start, stop, n)
    return GridSpec(pts, np.full(n, pts[1] - pts[0]), label)


@dataclass(frozen=True)
class ChannelSet:
    energies: np.ndarray
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "energies", _frozen(np.atleast_1d(self.energies)))
        if not self.labels:
            labels = tuple(f"ch{n}" for n in range(self.energies.size))
            object.__setattr__(self, "labels", labels)
        else:
            object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def count(self) -> int:
        return int(self.energies.size)

    def gap(self, n: int) -> float:
        """``eps_n - eps_0``."""
        return float(self.energies[n] - self.energies[0])


@dataclass(frozen=True)
class CoupledSystem:
    """Immutable block representation of the coupled eigenproblem.

    ``couplings`` maps every ordered pair ``(n, m)`` to a dense matrix; absent
    pairs are treated as zero by :meth:`coupling`.
    """

    grid: GridSpec
    channels: ChannelSet
    h_g: np.ndarray
    couplings: Mapping[tuple[int, int], np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "h_g", _frozen(np.atleast_2d(self.h_g)))
        cps = {(int(n), int(m)): _frozen(np.atleast_2d(v)) for (n, m), v in self.couplings.items()}
        object.__setattr__(self, "couplings", cps)

    @property
    def n_q(self) -> int:
        return self.channels.count

    @property
    def n_xi(self) -> int:
        return self.grid.size

    @property
    def dim(self) -> int:
        return self.n_q * self.n_xi

    def coupling(self, n: int, m: int) -> np.ndarray:
        v = self.couplings.get((n, m))
        if v is None:
            return np.zeros((self.n_xi, self.n_xi))
        return v

    def channel_block(self, n: int, shift: float = 0.0) -> np.ndarray:
        """``h_g + V_nn + shift * I``."""
        return self.h_g + self.coupling(n, n) + shift * np.eye(self.n_xi)

    def hamiltonian(self) -> np.ndarray:
        """Full ``(N_q N_xi)``-square matrix with ``eps_n`` on the diagonal blocks."""
        nx = self.n_xi
        H = np.zeros((self.dim, self.dim))
        for n in range(self.n_q):
            for m in range(self.n_q):
                blk = self.channel_block(n, self.channels.energies[n]) if n == m else self.coupling(n, m)
                H[n * nx:(n + 1) * nx, m * nx:(m + 1) * nx] = blk
        return H

    def with_couplings(self, couplings) -> "CoupledSystem":
        return CoupledSystem(self.grid, self.channels, self.h_g, couplings)


# --------------------------------------------------------------------------
# configuration

def kernel_profile(kind: str, xi, params: Mapping[str, Any]) -> np.ndarray:
    """Spatial profile ``w(xi)`` of a separable coupling kernel."""
    xi = np.asarray(xi, dtype=float)
    if kind == "gaussian":
        c = float(params.get("centre", 0.0))
        s = float(params.get("width", 1.0))
        if not s > 0:
            raise ConfigError("gaussian kernel width must be positive")
        return np.exp(-0.5 * ((xi - c) / s) ** 2)
    if kind == "box":
        lo = float(params.get("lower", -math.inf))
        hi = float(params.get("upper", math.inf))
        return ((xi >= lo) & (xi <= hi)).astype(float)
    raise ConfigError(f"unknown separable kernel {kind!r}")


def _finite(name: str, value) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a number, got {value!r}") from exc
    if not math.isfinite(v):
        raise ConfigError(f"non-finite kernel parameter {name}={value!r}")
    return v


def _matrix(name: str, value, n: int) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 1:
        if arr.size != n:
            raise ConfigError(f"{name}: expected {n} diagonal entries, got {arr.size}")
        arr = np.diag(arr)
    if arr.shape != (n, n):
        raise ConfigError(f"{name}: inconsistent dimensions {arr.shape}, grid has {n} points")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name}: non-finite entries")
    return arr


@dataclass
class SystemConfig:
    """Declarative description of a :class:`CoupledSystem`.

    Mirrors the JSON schema documented in the README: sections ``grid``,
    ``channels``, ``background`` and ``coupling``.
    """

    grid: dict
    channels: dict
    coupling: dict
    background: dict = field(default_factory=lambda: {"kind": "zero"})

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SystemConfig":
        if not isinstance(data, Mapping):
            raise ConfigError("system config must be a mapping")
        missing = [k for k in ("grid", "channels", "coupling") if k not in data]
        if missing:
            raise ConfigError(f"missing section(s): {', '.join(missing)}")
        for key in ("grid", "channels", "coupling", "background"):
            if key in data and not isinstance(data[key], Mapping):
                raise ConfigError(f"section {key!r} must be a mapping")
        return cls(
            grid=dict(data["grid"]),
            channels=dict(data["channels"]),
            coupling=dict(data["coupling"]),
            background=dict(data.get("background", {"kind": "zero"})),
        )

    def to_dict(self) -> dict:
        return {
            "grid": self.grid,
            "channels": self.channels,
            "background": self.background,
            "coupling": self.coupling,
        }


def _build_grid(cfg: Mapping) -> GridSpec:
    label = str(cfg.get("label", "xi"))
    if "coordinates" in cfg:
        pts = np.asarray(cfg["coordinates"], dtype=float)
        w = np.asarray(cfg.get("weights", np.ones_like(pts)), dtype=float)
        if w.shape != pts.shape:
            raise ConfigError("grid weights and coordinates differ in length")
        return GridSpec(pts, w, label)
    try:
        n = int(cfg["points"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError("grid needs 'points' (count) or 'coordinates'") from exc
    start = _finite("grid.start", cfg.get("start", 0.0))
    stop = _finite("grid.stop", cfg.get("stop", float(n - 1)))
    return uniform_grid(start, stop, n, label)


def _build_background(cfg: Mapping, grid: GridSpec) -> np.ndarray:
    n = grid.size
    kind = cfg.get("kind", "zero")
    if kind == "table":
        return _matrix("background.matrix", cfg.get("matrix"), n)
    if kind == "zero":
        H = np.zeros((n, n))
    elif kind == "laplacian":
        mass = _finite("background.mass", cfg.get("mass", 1.0))
        if n > 1:
            dx = np.diff(grid.points)
            if not np.allclose(dx, dx[0], rtol=1e-10, atol=0):
                raise ConfigError("laplacian background requires a uniform grid")
            t = 1.0 / (2.0 * mass * dx[0] ** 2)
            H = 2 * t * np.eye(n) - t * (np.eye(n, k=1) + np.eye(n, k=-1))
        else:
            H = np.zeros((1, 1))
    else:
        raise ConfigError(f"unknown background kind {kind!r}")
    pot = cfg.get("potential")
    if pot:
        H = H + np.diag(_potential(pot, grid.points))
    return H


def _potential(cfg, xi) -> np.ndarray:
    if isinstance(cfg, (list, tuple)):
        vals = np.asarray(cfg, dtype=float)
        if vals.shape != xi.shape:
            raise ConfigError("potential values do not match grid size")
        return vals
    kind = cfg.get("kind", "none")
    if kind == "none":
        return np.zeros_like(xi)
    if kind == "harmonic":
        w = _finite("potential.omega", cfg.get("omega", 1.0))
        c = _finite("potential.centre", cfg.get("centre", 0.0))
        return 0.5 * w ** 2 * (xi - c) ** 2
    if kind == "double_well":
        a = _finite("potential.a", cfg.get("a", 1.0))
        b = _finite("potential.b", cfg.get("b", 1.0))
        tilt = _finite("potential.tilt", cfg.get("tilt", 0.0))
        return b * (xi ** 2 - a ** 2) ** 2 + tilt * xi
    raise ConfigError(f"unknown potential kind {kind!r}")


def _parse_pair(key) -> tuple[int, int]:
    if isinstance(key, str):
        parts = key.replace("(", "").replace(")", "").split(",")
    else:
        parts = list(key)
    try:
        n, m = (int(p) for p in parts)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad channel pair key {key!r}") from exc
    return n, m


def _build_couplings(cfg: Mapping, grid: GridSpec, n_q: int) -> dict:
    kind = cfg.get("kind")
    n = grid.size
    out: dict[tuple[int, int], np.ndarray] = {}
    if kind == "table":
        blocks = cfg.get("blocks", {})
        for key, val in blocks.items():
            a, b = _parse_pair(key)
            if not (0 <= a < n_q and 0 <= b < n_q):
                raise ConfigError(f"coupling pair {key!r} outside channel range 0..{n_q - 1}")
            out[(a, b)] = _matrix(f"coupling[{key}]", val, n)
        for (a, b), v in list(out.items()):
            if (b, a) not in out:
                out[(b, a)] = v.T.copy()
            elif not np.array_equal(out[(b, a)], v.T):
                raise ConfigError(f"coupling ({a},{b}) is not the transpose of ({b},{a})")
        return out
    if kind in ("gaussian", "box"):
        g = _finite("coupling.strength", cfg.get("strength", 1.0))
        ff = cfg.get("form_factors", [1.0] * n_q)
        if len(ff) != n_q:
            raise ConfigError(f"form_factors has {len(ff)} entries for {n_q} channels")
        f = np.array([_finite("form_factor", x) for x in ff])
        for key, val in cfg.items():
            if key in ("centre", "width", "lower", "upper"):
                _finite(f"coupling.{key}", val)
        w = kernel_profile(kind, grid.points, cfg)
        for a in range(n_q):
            for b in range(a, n_q):
                out[(a, b)] = np.diag(g * f[a] * f[b] * w)
                out[(b, a)] = out[(a, b)].T.copy()
        return out
    raise ConfigError(f"unknown coupling kind {kind!r}")


def build_system(config: SystemConfig | Mapping) -> CoupledSystem:
    """Assemble a :class:`CoupledSystem` from a config.

    Channel 0 of the result is ``channels.open`` when given, otherwise the
    lowest-energy channel; the rest keep their configured order.
    """
    if not isinstance(config, SystemConfig):
        config = SystemConfig.from_dict(config)
    grid = _build_grid(config.grid)
    if grid.size < 1:
        raise ConfigError("grid is empty")

    energies = config.channels.get("energies")
    if not energies:
        raise ConfigError("channels.energies must be a non-empty list")
    eps = np.array([_finite("channel energy", e) for e in energies])
    n_q = eps.size
    labels = list(config.channels.get("labels", [f"ch{i}" for i in range(n_q)]))
    if len(labels) != n_q:
        raise ConfigError("channels.labels length differs from energies")

    h_g = _build_background(config.background, grid)
    V = _build_couplings(config.coupling, grid, n_q)

    open_ch = config.channels.get("open")
    open_ch = int(np.argmin(eps)) if open_ch is None else int(open_ch)
    if not 0 <= open_ch < n_q:
        raise ConfigError(f"open channel {open_ch} outside 0..{n_q - 1}")
    order = [open_ch] + [i for i in range(n_q) if i != open_ch]
    pos = {old: new for new, old in enumerate(order)}
    V = {(pos[a], pos[b]): v for (a, b), v in V.items()}

    channels = ChannelSet(eps[order], tuple(labels[i] for i in order))
    return CoupledSystem(grid, channels, h_g, V)


def validate(system: CoupledSystem) -> list[str]:
    """Return a list of violated invariants; empty when ``system`` is well-formed."""
    problems: list[str] = []
    pts, w = system.grid.points, system.grid.weights
    nx = pts.size
    if nx < 1:
        problems.append("grid: empty")
    if w.shape != pts.shape:
        problems.append("grid: weights and points differ in length")
    elif np.any(~(w > 0)):
        problems.append("grid: non-positive quadrature weight")
    if nx > 1 and np.any(~(np.diff(pts) > 0)):
        problems.append("grid: points not strictly increasing (ordering violation)")
    if system.channels.count < 1:
        problems.append("channels: no channels")
    if len(system.channels.labels) != system.channels.count:
        problems.append("channels: label count differs from energy count")
    if not np.all(np.isfinite(system.channels.energies)):
        problems.append("channels: non-finite energy")

    if system.h_g.shape != (nx, nx):
        problems.append(f"h_g: shape {system.h_g.shape} does not conform to grid size {nx}")
    elif not np.array_equal(system.h_g, system.h_g.T):
        problems.append("h_g: not symmetric")

    for (n, m), v in sorted(system.couplings.items()):
        if not (0 <= n < system.n_q and 0 <= m < system.n_q):
            problems.append(f"V({n},{m}): channel index out of range")
            continue
        if v.shape != (nx, nx):
            problems.append(f"V({n},{m}): shape {v.shape} does not conform to grid size {nx}")
            continue
        if not np.all(np.isfinite(v)):
            problems.append(f"V({n},{m}): non-finite entries")
        if n <= m:
            vt = system.coupling(m, n)
            if vt.shape == v.shape and not np.array_equal(v, vt.T):
                problems.append(f"V({n},{m}): symmetry violation, not the transpose of V({m},{n})")
    return problems
