import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from efdyn.ep import (PoleProximityError, RootCountError, assemble_all, assemble_state, build_ep,
                      eigen_branches, find_all_roots)
from efdyn.model import ChannelSet, CoupledSystem, uniform_grid
from efdyn.spectral import solve_full, solve_truncated

from conftest import align, make_random_system

SQ2 = math.sqrt(2.0)


def resolvent_ep(system, eta):
    """V_00 + V_0Q (eta - H_QQ + eps_0)^-1 V_Q0 by a linear solve (oracle)."""
    nq, nx = system.n_q, system.n_xi
    H = system.hamiltonian() - system.channels.energies[0] * np.eye(nq * nx)
    HQQ = H[nx:, nx:]
    V0Q = H[:nx, nx:]
    return system.coupling(0, 0) + V0Q @ np.linalg.solve(eta * np.eye(HQQ.shape[0]) - HQQ, V0Q.T)


def mode_double_sum(system, truncated, eta):
    """Explicit sum over channels n, n' and modes i of the pole expansion."""
    nx = system.n_xi
    out = np.array(system.coupling(0, 0), dtype=float)
    for i in range(truncated.count):
        denom = eta - truncated.poles[i]
        for n in range(1, system.n_q):
            left = system.coupling(0, n) @ truncated.component(i, n)
            for m in range(1, system.n_q):
                right = system.coupling(0, m) @ truncated.component(i, m)
                out += np.outer(left, right) / denom
    assert out.shape == (nx, nx)
    return out


def pipeline(system):
    t = solve_truncated(system)
    ep = build_ep(system, t)
    roots = find_all_roots(ep)
    return t, ep, roots


# -- build_ep --------------------------------------------------------------

def test_d1_ep_by_hand(d1):
    ep = build_ep(d1, solve_truncated(d1))
    assert ep.poles.tolist() == [1.0]
    assert ep.mode_residues[:, 0].tolist() == [0.5]
    for eta in (-3.0, 0.2, 2.0, 7.5):
        assert ep(eta)[0, 0] == pytest.approx(0.25 / (eta - 1.0), rel=1e-15)


def test_zero_coupling_ep_is_constant(random_system):
    s0 = random_system(4, 3, 4)
    s = s0.with_couplings({(n, n): s0.coupling(n, n) for n in range(3)})
    ep = build_ep(s, solve_truncated(s))
    assert ep.poles.size == 0
    for eta in (-2.0, 0.3, 5.0):
        assert np.array_equal(ep(eta), s.coupling(0, 0))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_ep_matches_independent_evaluators(random_system, seed):
    s = random_system(seed, 4, 5)
    t = solve_truncated(s)
    ep = build_ep(s, t)
    rng = np.random.default_rng(seed)
    probes = rng.uniform(ep.bounds[0], ep.bounds[1], 5)
    for eta in probes:
        got = ep(eta)
        scale = max(1.0, np.max(np.abs(got)))
        assert np.max(np.abs(got - mode_double_sum(s, t, eta))) <= 1e-10 * scale
        # the linear solve loses accuracy near poles, hence the looser bound
        assert np.max(np.abs(got - resolvent_ep(s, eta))) <= 1e-8 * scale
        assert np.array_equal(got, got.T) or np.max(np.abs(got - got.T)) <= 1e-12 * scale


# -- eigen_branches --------------------------------------------------------

def test_d1_branch_at_two(d1):
    ep = build_ep(d1, solve_truncated(d1))
    assert eigen_branches(ep, d1.h_g, 2.0).tolist() == [0.25]


def test_zero_coupling_branches_constant(random_system):
    s0 = random_system(6, 2, 5)
    s = s0.with_couplings({(n, n): s0.coupling(n, n) for n in range(2)})
    ep = build_ep(s, solve_truncated(s))
    ref = np.linalg.eigvalsh(s.h_g + s.coupling(0, 0))
    for eta in (-4.0, 0.0, 9.0):
        assert np.allclose(eigen_branches(ep, s.h_g, eta), ref, atol=1e-13)


def test_pole_guard(d1):
    ep = build_ep(d1, solve_truncated(d1))
    with pytest.raises(PoleProximityError):
        eigen_branches(ep, d1.h_g, 1.0 + 0.1 * ep.guard)


@pytest.mark.parametrize("seed", [0, 7])
def test_branches_non_increasing_between_poles(random_system, seed):
    s = random_system(seed, 3, 4)
    ep = build_ep(s, solve_truncated(s))
    p = ep.poles
    # ten interior points in the widest gaps, finite-difference slopes
    gaps = np.argsort(np.diff(p))[::-1][:10]
    h = 1e-6
    for g in gaps:
        a, b = p[g], p[g + 1]
        eta = 0.5 * (a + b)
        d = 0.25 * (b - a)
        h = min(1e-6, 0.1 * d)
        lo = eigen_branches(ep, s.h_g, eta - h)
        hi = eigen_branches(ep, s.h_g, eta + h)
        slope = (hi - lo) / (2 * h)
        assert np.all(slope <= 1e-6 * max(1.0, np.max(np.abs(slope)))), slope


# -- find_all_roots --------------------------------------------------------

def test_d1_roots_by_hand(d1):
    _, _, roots = pipeline(d1)
    assert len(roots) == 2
    # eta (eta - 1) = 1/4
    assert roots[0].eta == pytest.approx((1 - SQ2) / 2, abs=1e-12)
    assert roots[1].eta == pytest.approx((1 + SQ2) / 2, abs=1e-12)
    assert all(r.residual <= 1e-10 for r in roots)
    assert all(abs(np.linalg.norm(r.psi0) - 1) < 1e-14 for r in roots)


def test_zero_coupling_roots(random_system):
    s0 = random_system(8, 3, 4)
    s = s0.with_couplings({(n, n): s0.coupling(n, n) for n in range(3)})
    _, ep, roots = pipeline(s)
    surviving = [r.eta for r in roots if not r.decoupled]
    assert len(surviving) == 4
    assert np.allclose(surviving, np.linalg.eigvalsh(s.h_g + s.coupling(0, 0)), atol=1e-12)
    assert len(roots) == 12
    eps0 = s.channels.energies[0]
    assert np.allclose(np.sort([r.eta + eps0 for r in roots]), solve_full(s).energies, atol=1e-12)


def test_d1_zero_coupling_single_surviving_level(d1_zero):
    _, _, roots = pipeline(d1_zero)
    assert [r.eta for r in roots if not r.decoupled] == [0.0]
    assert [r.eta for r in roots if r.decoupled] == [1.0]


def test_oracle_equivalence_100_random_systems():
    worst = 0.0
    rng = np.random.default_rng(2024)
    for trial in range(100):
        nq = int(rng.integers(2, 7))
        nx = int(rng.integers(2, 13))
        s = make_random_system(int(rng.integers(1 << 31)), nq, nx)
        t, ep, roots = pipeline(s)
        assert len(roots) == nq * nx
        E = solve_full(s).energies
        got = np.sort([r.eta + s.channels.energies[0] for r in roots])
        dev = np.max(np.abs(got - E)) / max(1.0, np.max(np.abs(E)))
        worst = max(worst, dev)
    assert worst <= 1e-8


def test_root_count_equals_poles_plus_open_dimension(random_system):
    s = random_system(21, 4, 3)
    t, ep, roots = pipeline(s)
    assert len(roots) == s.n_xi + t.count == s.n_q * s.n_xi


def test_root_count_mismatch_is_hard_failure(d1):
    ep = build_ep(d1, solve_truncated(d1))
    from dataclasses import replace
    broken = replace(ep, n_q=3)
    with pytest.raises(RootCountError):
        find_all_roots(broken)


def test_degenerate_closed_channels_are_recovered():
    # two closed channels with identical energy and no mutual coupling: an exactly
    # degenerate pole whose residue has rank 1 on a single grid point
    g = uniform_grid(0, 1, 1)
    V = {(0, 1): np.array([[0.3]]), (1, 0): np.array([[0.3]]),
         (0, 2): np.array([[0.4]]), (2, 0): np.array([[0.4]])}
    s = CoupledSystem(g, ChannelSet([0.0, 1.0, 1.0]), np.zeros((1, 1)), V)
    t, ep, roots = pipeline(s)
    assert len(roots) == 3
    assert sum(r.decoupled for r in roots) == 1
    got = np.sort([r.eta for r in roots])
    assert np.allclose(got, solve_full(s).energies, atol=1e-12)


# -- assemble_state --------------------------------------------------------

def test_d1_assembled_ratio(d1):
    t, ep, roots = pipeline(d1)
    eta_p = (1 + SQ2) / 2
    st = assemble_state(d1, t, roots[1])
    ratio = st.psi[1, 0] / st.psi[0, 0]
    assert ratio == pytest.approx(SQ2 + 1, rel=1e-12)
    assert ratio == pytest.approx(0.5 / (eta_p - 1), rel=1e-12)
    v = solve_full(d1).vectors[:, 1]
    assert np.allclose(align(st.vector, v), v, atol=1e-12)


def test_zero_coupling_state_stays_in_open_channel(d1_zero):
    t, ep, roots = pipeline(d1_zero)
    st = assemble_state(d1_zero, t, [r for r in roots if not r.decoupled][0])
    assert st.psi[1].tolist() == [0.0]
    assert st.density[0, 0] == 1.0


@pytest.mark.parametrize("seed, nq, nx", [(1, 2, 6), (2, 3, 5), (3, 5, 4)])
def test_assembled_states_match_full_eigenvectors(random_system, seed, nq, nx):
    s = random_system(seed, nq, nx)
    t, ep, roots = pipeline(s)
    states = assemble_all(s, t, roots, ep)
    f = solve_full(s)
    for j, st in enumerate(states):
        v = f.vectors[:, j]
        assert np.linalg.norm(align(st.vector, v) - v) <= 1e-7
        w = s.grid.weights
        assert np.all(st.density >= 0)
        assert np.sum(st.density * w) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), nq=st.integers(2, 4), nx=st.integers(1, 5))
def test_property_reduction_exact_and_symmetric(seed, nq, nx):
    s = make_random_system(seed, nq, nx)
    t, ep, roots = pipeline(s)
    E = solve_full(s).energies
    got = np.sort([r.eta + s.channels.energies[0] for r in roots])
    assert np.max(np.abs(got - E)) <= 1e-8 * max(1.0, np.max(np.abs(E)))
    eta = ep.bounds[1] + 1.0
    M = ep(eta)
    assert np.max(np.abs(M - M.T)) <= 1e-12 * max(1.0, np.max(np.abs(M)))
