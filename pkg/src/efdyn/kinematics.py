"""Rest-frequency / de Broglie kinematics of a particle with rest mass ``m0``.

All quantities are SI. The chain starts from ``m0 c^2 = h nu0`` and builds the
moving-state energy, momentum, the two beat periods and the de Broglie
wavelength and frequency.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

__all__ = [
    "Constants",
    "KinematicState",
    "SuperluminalError",
    "BETA_CAP",
    "ELECTRON_MASS",
    "derive",
    "energy_partition",
    "de_broglie_wavelength",
    "identity_residuals",
    "sweep",
]

BETA_CAP = 1.0 - 1e-12
ELECTRON_MASS = 9.1093837015e-31  # kg, CODATA 2018


class SuperluminalError(ValueError):
    pass


@dataclass(frozen=True)
class Constants:
    h: float = 6.62607015e-34     # J s, exact
    c: float = 299792458.0        # m/s, exact

    def __post_init__(self):
        if not (self.h > 0 and self.c > 0):
            raise ValueError("constants must be positive")


CODATA = Constants()


@dataclass(frozen=True)
class KinematicState:
    m0: float
    v: float
    beta: float
    gamma: float
    E0: float
    E: float
    m: float
    p: float
    nu0: float
    nu: float
    N: float
    tau0: float
    T: float
    tau: float
    nuB: float
    nuB0: float
    lambdaB: float | None
    lambdaB0: float | None
    constants: Constants = CODATA

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "constants"}


def derive(m0: float, v: float, constants: Constants = CODATA) -> KinematicState:
    if not m0 > 0:
        raise ValueError("rest mass must be positive")
    if v < 0:
        raise ValueError("speed must be non-negative")
    h, c = constants.h, constants.c
    beta = v / c
    if beta >= 1.0:
        raise SuperluminalError(f"v={v!r} is not below c")
    if beta > BETA_CAP:
        raise SuperluminalError(f"beta={beta!r} exceeds the cap 1-1e-12")
    root = math.sqrt((1.0 - beta) * (1.0 + beta))
    gamma = 1.0 / root
    E0 = m0 * c * c
    E = E0 / root
    m = E / (c * c)
    p = E * v / (c * c)
    nu0 = E0 / h
    tau0 = 1.0 / nu0
    return KinematicState(
        m0=m0, v=v, beta=beta, gamma=gamma, E0=E0, E=E, m=m, p=p,
        nu0=nu0, nu=nu0 / root, N=nu0 * root,
        tau0=tau0, T=tau0 / root, tau=tau0 * root,
        nuB=p * v / h, nuB0=m0 * v * v / h,
        lambdaB=h / p if v > 0 else None,
        lambdaB0=h / (m0 * v) if v > 0 else None,
        constants=constants,
    )


def energy_partition(state: KinematicState) -> tuple[float, float]:
    """(rest-linked term ``h nu0 sqrt(1-beta^2)``, motion term ``h nuB``)."""
    h = state.constants.h
    return h * state.N, h * state.nuB


def de_broglie_wavelength(m: float, v: float, constants: Constants = CODATA) -> float:
    if not m > 0:
        raise ValueError("mass must be positive")
    if not v > 0:
        raise ValueError("wavelength undefined for v <= 0")
    return constants.h / (m * v)


def _rel(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    return abs(a - b) / scale if scale else 0.0


def identity_residuals(s: KinematicState) -> dict[str, float]:
    """Relative residuals of the identities linking the derived quantities."""
    h, c = s.constants.h, s.constants.c
    rest, motion = energy_partition(s)
    out = {
        "partition": _rel(rest + motion, s.E),
        "dispersion": _rel(s.E ** 2 - (s.p * c) ** 2, s.E0 ** 2),
        "energy_split": _rel(h * s.N + s.p * s.v, s.E),
        "periods_product": _rel(s.T * s.tau, s.tau0 ** 2),
        "frequency_product": _rel(s.N * s.nu, s.nu0 ** 2),
        "period_ratio": _rel(s.tau, s.T * (1 - s.beta) * (1 + s.beta)),
        "nuB_chain": _rel(s.nuB, s.nu * s.beta ** 2),
        "nuB0_chain": _rel(s.nuB0, s.nu0 * s.beta ** 2),
        "mass_energy": _rel(s.m * c * c, s.E),
    }
    if s.lambdaB is not None:
        out["wavelength"] = _rel(s.lambdaB, s.v / s.nuB)
        out["wavelength_rest"] = _rel(s.lambdaB0, s.v / s.nuB0)
    return out


def sweep(m0: float, betas, constants: Constants = CODATA) -> list[KinematicState]:
    return [derive(m0, float(b) * constants.c, constants) for b in np.asarray(betas, dtype=float)]
