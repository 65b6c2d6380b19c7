import numpy as np
import pytest

from efdyn.model import ChannelSet, CoupledSystem, build_system, uniform_grid

D1_CONFIG = {
    "grid": {"coordinates": [0.0], "weights": [1.0]},
    "channels": {"energies": [0.0, 1.0]},
    "background": {"kind": "table", "matrix": [[0.0]]},
    "coupling": {"kind": "table", "blocks": {"0,0": [[0.0]], "1,1": [[0.0]], "0,1": [[0.5]]}},
}


def d1_config(g=0.5):
    cfg = {k: dict(v) for k, v in D1_CONFIG.items()}
    cfg["coupling"] = {"kind": "table", "blocks": {"0,0": [[0.0]], "1,1": [[0.0]], "0,1": [[g]]}}
    return cfg


@pytest.fixture
def d1():
    return build_system(d1_config())


@pytest.fixture
def d1_zero():
    return build_system(d1_config(0.0))


def make_random_system(seed, n_q, n_xi, eps_spread=2.0):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n_q * n_xi, n_q * n_xi))
    A = 0.5 * (A + A.T)
    h_g = A[:n_xi, :n_xi].copy()
    V = {}
    for a in range(n_q):
        for b in range(n_q):
            blk = A[a * n_xi:(a + 1) * n_xi, b * n_xi:(b + 1) * n_xi]
            V[(a, b)] = blk - h_g if a == b else blk.copy()
    eps = np.sort(rng.uniform(0, eps_spread, n_q))
    return CoupledSystem(uniform_grid(-1.0, 1.0, n_xi), ChannelSet(eps), h_g, V)


@pytest.fixture
def random_system():
    return make_random_system


def align(a, b):
    """Flip ``a`` to best match ``b`` and return it."""
    return a if np.dot(a, b) >= 0 else -a
