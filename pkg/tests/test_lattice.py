import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import mathieu_a, mathieu_b

from cavitylattice.hilbert import BasisDescriptor, MomentumModes, StateVector, expectation
from cavitylattice.lattice import (DegenerateBandError, ModelParams, build_full_hamiltonian,
                                   build_kinetic, build_sin, build_sin2, coupling_strength,
                                   initial_state_full, mirror, particle_hamiltonian,
                                   symmetrize_two_particle, wannier_states)


def test_kinetic_is_m_squared():
    np.testing.assert_allclose(np.diag(build_kinetic(3).dense()).real, [9, 4, 1, 0, 1, 4, 9])


def test_sin_squared_matches_product_away_from_edges():
    M = 10
    s = build_sin(M).dense()
    s2 = build_sin2(M).dense()
    inner = slice(2, 2 * M - 1)
    np.testing.assert_allclose((s @ s)[inner, inner], s2[inner, inner], atol=1e-14)
    assert build_sin(M).hermiticity_error() == 0.0


def test_cutoff_validation():
    with pytest.raises(ValueError):
        build_kinetic(0)
    with pytest.raises(ValueError):
        build_sin(1)


@pytest.mark.parametrize("V0", [-4.0, -10.0, -20.0])
def test_band_energies_match_mathieu(V0):
    # -psi'' + V0 sin^2 psi = E psi is Mathieu's equation with q = -V0/4
    q = -V0 / 4
    e0 = mathieu_a(0, q) + V0 / 2
    e1 = min(mathieu_a(1, q), mathieu_b(1, q)) + V0 / 2
    w = wannier_states(V0, 24)
    assert abs(w.energies[0] - e0) < 1e-9
    assert abs(w.energies[1] - e1) < 1e-9
    assert abs(w.J - (e1 - e0) / 2) < 1e-9


def test_wannier_properties(wannier32):
    w = wannier32
    assert abs(w.J - 0.0383734181) < 1e-9
    assert abs(w.hopping + w.J) < 1e-12
    assert abs(w.s + 0.9066843057) < 1e-8
    assert abs(w.left.inner(w.right)) < 1e-12
    sin = build_sin(32)
    assert abs(expectation(sin, w.right) + w.s) < 1e-12


def test_wannier_converged_in_cutoff(wannier16, wannier32):
    assert abs(wannier16.J - wannier32.J) < 1e-10
    assert abs(wannier16.s - wannier32.s) < 1e-10


def test_shallow_lattice_rejected():
    with pytest.raises(DegenerateBandError):
        wannier_states(-0.5, 16)
    with pytest.raises(ValueError):
        wannier_states(1.0, 16)


def test_mirror_maps_right_to_left(wannier32):
    w = wannier32
    assert abs(abs(mirror(w.right).inner(w.left)) - 1) < 1e-12


def test_model_params_resonance():
    p = ModelParams(U0=-0.5, N=2)
    assert p.resonance
    assert p.delta_c == pytest.approx(-11.0)
    assert ModelParams(U0=-0.5, DeltaC=-3).delta_c == -3
    assert ModelParams().m_cutoff == 32
    assert ModelParams(N=2).m_cutoff == 16


@pytest.mark.parametrize("kw", [dict(N=3), dict(kappa=0.0), dict(U0=0.1), dict(M=4),
                                dict(n_max=2), dict(V0=5.0, U0=-1.0)])
def test_model_params_validation(kw):
    with pytest.raises(ValueError):
        ModelParams(**kw)


def test_coupling_strength_sign():
    assert coupling_strength(-0.5, -10) == pytest.approx(-math.sqrt(5))
    assert coupling_strength(0.0, -10) == 0.0


@pytest.mark.parametrize("N,U0", [(1, 0.0), (1, -0.5), (2, -10.0)])
def test_full_hamiltonian_hermitian(N, U0):
    p = ModelParams(U0=U0, N=N, M=8, n_max=5)
    H = build_full_hamiltonian(p)
    assert H.hermiticity_error() < 1e-12
    assert H.basis.dim == (17 if N == 1 else 153) * 6


def test_full_hamiltonian_uncoupled_limit():
    p = ModelParams(U0=0.0, M=8, n_max=4)
    H = build_full_hamiltonian(p).dense()
    h1 = particle_hamiltonian(p.V0, 8).dense()
    expect = np.kron(h1, np.eye(5)) + p.kappa * np.kron(np.eye(17), np.diag(np.arange(5)))
    np.testing.assert_allclose(H, expect, atol=1e-13)


def test_symmetrizer_is_isometry():
    S = symmetrize_two_particle(4)
    np.testing.assert_allclose((S.T @ S).toarray(), np.eye(S.shape[1]), atol=1e-14)
    d = 9
    swap = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            swap[j * d + i, i * d + j] = 1
    P = (S @ S.T).toarray()
    np.testing.assert_allclose(P, (np.eye(d * d) + swap) / 2, atol=1e-14)


def test_two_particle_hamiltonian_matches_product_space():
    M = 8
    p = ModelParams(U0=-0.5, N=2, M=M, n_max=4)
    H = build_full_hamiltonian(p).dense()
    p1 = p.with_(N=1)
    # two-body terms restricted with the isometry; field part unchanged
    S = symmetrize_two_particle(M).toarray()
    h1 = particle_hamiltonian(p.V0, M).dense()
    s1 = build_sin(M).dense()
    e = np.eye(2 * M + 1)
    hp = S.T @ (np.kron(h1, e) + np.kron(e, h1)) @ S
    sp_ = S.T @ (np.kron(s1, e) + np.kron(e, s1)) @ S
    a = np.diag(np.sqrt(np.arange(1, 5)), 1)
    f = np.eye(5)
    expect = np.kron(hp, f) - (p.delta_c - 2 * p.U0) * np.kron(np.eye(hp.shape[0]), a.T @ a) \
        + p1.coupling * np.kron(sp_, a + a.T)
    np.testing.assert_allclose(H, expect, atol=1e-12)


@pytest.mark.parametrize("which", ["right", "left", "mi", "sf"])
def test_two_particle_initial_states_normalized(which):
    p = ModelParams(N=2, M=10, n_max=4)
    psi = initial_state_full(p, which)
    assert abs(psi.norm() - 1) < 1e-12


def test_initial_state_errors():
    with pytest.raises(ValueError):
        initial_state_full(ModelParams(N=1, M=10), "mi")
    with pytest.raises(ValueError):
        initial_state_full(ModelParams(N=1, M=10), "middle")


def test_gaussian_packet_is_localized():
    from cavitylattice.analysis import mean_kx
    p = ModelParams(M=24, n_max=4)
    psi = initial_state_full(p, "right", width=0.2)
    assert abs(mean_kx(psi) - math.pi / 2) < 0.05


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_mirror_is_involution(seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=21) + 1j * rng.normal(size=21)
    psi = StateVector(BasisDescriptor.of(MomentumModes(10)), v)
    np.testing.assert_array_equal(mirror(mirror(psi)).amplitudes, psi.amplitudes)
