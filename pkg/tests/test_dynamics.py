import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cavitylattice.bh import BHParams, bh_states, build_bh_hamiltonian, density_correlation_op
from cavitylattice.dynamics import (DegenerateSteadyStateWarning, JumpChannel, SimulationError,
                                    cavity_decay, liouvillian_apply, mcwf_ensemble,
                                    mcwf_trajectory, me_evolve, steady_field_amplitude,
                                    steady_state, trajectory_rng)
from cavitylattice.hilbert import (BasisDescriptor, BHOccupation, DensityOperator, FockSpace,
                                   LinOp, StateVector, apply, coherent_state, destroy,
                                   expectation, fock_state, kron, number, partial_trace)
from cavitylattice.lattice import ModelParams

KAPPA = 10.0


def _field_only(n_max=10, H=None):
    b = BasisDescriptor.of(FockSpace(n_max))
    H = H if H is not None else LinOp(b, 0 * number(n_max).matrix, True)
    return H, [cavity_decay(KAPPA, b)]


def _bh_setup(N, U0, wannier, n_max=None, **kw):
    p = BHParams.from_model(ModelParams(U0=U0, N=N, n_max=n_max), wannier, **kw)
    H = build_bh_hamiltonian(p)
    return p, H, [cavity_decay(p.kappa, H.basis)]


def _photon(p):
    return kron(LinOp(BasisDescriptor.of(BHOccupation(p.N)),
                      np.eye(p.N + 1, dtype=complex), True), number(p.n_max))


# --------------------------------------------------------------------------
# Liouvillian
# --------------------------------------------------------------------------

def test_vacuum_is_dark():
    H, ch = _field_only()
    d = liouvillian_apply(H, ch, fock_state(10, 0).projector())
    assert np.abs(d.matrix).max() == 0.0


def test_single_photon_decay_rate():
    H, ch = _field_only()
    d = liouvillian_apply(H, ch, fock_state(10, 1).projector())
    assert expectation(number(10), d).real == pytest.approx(-2 * KAPPA)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_liouvillian_traceless(seed):
    rng = np.random.default_rng(seed)
    n = 6
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = A @ A.conj().T
    rho /= np.trace(rho)
    hm = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    b = BasisDescriptor.of(FockSpace(n - 1))
    H = LinOp(b, hm + hm.conj().T, True)
    d = liouvillian_apply(H, [cavity_decay(KAPPA, b)], DensityOperator(b, rho))
    assert abs(d.trace()) < 1e-12


def test_damped_cavity_stays_coherent():
    delta = 3.0
    n_max = 30
    H, ch = _field_only(n_max, delta * number(n_max))
    a0 = 2.0 + 1.0j
    t = np.linspace(0, 0.3, 31)
    sol = me_evolve(H, ch, coherent_state(n_max, a0), t, {"a": destroy(n_max)},
                    store_states=True)
    expect = a0 * np.exp(-(KAPPA + 1j * delta) * t)
    np.testing.assert_allclose(sol.observables["a"], expect.real, atol=1e-9)
    final = sol.states[-1]
    alpha = expect[-1]
    ref = coherent_state(n_max, alpha).projector()
    assert final.trace_distance(ref) < 1e-8


def test_expm_and_rk4_agree(wannier32):
    p, H, ch = _bh_setup(2, -0.5, wannier32)
    t = np.linspace(0, 2, 21)
    obs = {"nlnr": density_correlation_op(2, p.n_max), "n": _photon(p)}
    a = me_evolve(H, ch, bh_states(2, p.n_max)["sf"], t, obs)
    b = me_evolve(H, ch, bh_states(2, p.n_max)["sf"], t, obs, method="rk4")
    for k in obs:
        np.testing.assert_allclose(a.observables[k], b.observables[k], atol=1e-8)
    assert a.trace_drift < 1e-8


def test_me_rejects_bad_grid(wannier32):
    p, H, ch = _bh_setup(1, -0.5, wannier32)
    with pytest.raises(ValueError):
        me_evolve(H, ch, bh_states(1, p.n_max)["right"], [0.0, 1.0, 0.5])


def test_trace_tolerance_enforced(wannier32):
    p, H, ch = _bh_setup(1, -10.0, wannier32)
    with pytest.raises(SimulationError):
        me_evolve(H, ch, bh_states(1, p.n_max)["right"], np.linspace(0, 1, 3),
                  method="rk4", dt=0.08, trace_tol=1e-30)


# --------------------------------------------------------------------------
# steady states and field amplitude
# --------------------------------------------------------------------------

def test_steady_field_amplitude_values():
    for U0, n2 in [(-0.005, 2.5e-4), (-0.5, 2.5e-2), (-10.0, 0.5)]:
        a = steady_field_amplitude("right", V0=-10, U0=U0, kappa=10)
        assert abs(a) ** 2 == pytest.approx(n2, rel=1e-12)
        g = math.sqrt(U0 * -10)
        assert a == pytest.approx(g / (10 * (1 - 1j)))
    assert steady_field_amplitude(0.0, V0=-10, U0=-1, kappa=10) == 0
    p = ModelParams(U0=-0.5, N=2)
    assert abs(steady_field_amplitude("left", p)) ** 2 == pytest.approx(0.025)
    with pytest.raises(ValueError):
        steady_field_amplitude("right", V0=-10, U0=-1, kappa=0.0)


def test_frozen_particle_radiates_coherent_field(wannier32):
    p, H, ch = _bh_setup(1, -0.5, wannier32, J=0.0)
    t = np.linspace(0, 10 / p.kappa, 11)
    a = kron(LinOp(BasisDescriptor.of(BHOccupation(1)), np.eye(2, dtype=complex), True),
             destroy(p.n_max))
    sol = me_evolve(H, ch, bh_states(1, p.n_max)["right"], t, store_states=True)
    got = expectation(a, sol.states[-1])
    alpha = steady_field_amplitude(sin_value=-wannier32.s, V0=-10, U0=-0.5, kappa=10)
    assert abs(got - alpha) < 1e-3


def test_degenerate_steady_state_warns(wannier32):
    p, H, ch = _bh_setup(1, 0.0, wannier32, n_max=4)
    with pytest.warns(DegenerateSteadyStateWarning):
        rho = steady_state(H, ch, method="linear", rho0=bh_states(1, p.n_max)["right"])
    assert abs(rho.trace() - 1) < 1e-12
    # the tunnelling state dephases into its time average
    red = partial_trace(rho, [0]).matrix
    np.testing.assert_allclose(red, np.eye(2) / 2, atol=1e-6)


def test_weak_coupling_steady_state_is_site_mixture(wannier32):
    p, H, ch = _bh_setup(1, -0.005, wannier32)
    rho = steady_state(H, ch)
    red = partial_trace(rho, [0]).matrix
    np.testing.assert_allclose(np.diag(red).real, [0.5, 0.5], atol=0.01)
    assert abs(red[0, 1]) < 0.01
    assert rho.hermiticity_error() < 1e-12
    assert rho.min_eigenvalue() > -1e-8


def test_linear_and_relax_agree(wannier32):
    p, H, ch = _bh_setup(2, -0.5, wannier32)
    a = steady_state(H, ch, method="linear")
    b = steady_state(H, ch, method="relax", rho0=bh_states(2, p.n_max)["mi"])
    assert a.trace_distance(b) < 1e-6


# --------------------------------------------------------------------------
# trajectories
# --------------------------------------------------------------------------

def test_rng_is_keyed_by_index():
    a = trajectory_rng(5, 3).random(4)
    b = trajectory_rng(5, 3).random(4)
    c = trajectory_rng(5, 4).random(4)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)


def test_single_trajectory_ensemble(wannier32):
    p, H, ch = _bh_setup(1, -0.5, wannier32)
    t = np.linspace(0, 20, 41)
    obs = {"n": _photon(p)}
    psi = bh_states(1, p.n_max)["right"]
    ens = mcwf_ensemble(H, ch, psi, t, 1, seed=7, observables=obs)
    tr = mcwf_trajectory(H, ch, psi, t, seed=7, traj_index=0, observables=obs)
    np.testing.assert_array_equal(ens.mean["n"], tr.observables["n"])
    assert np.all(ens.stderr["n"] == 0)


def test_uncoupled_ensemble_is_deterministic(wannier32):
    p, H, ch = _bh_setup(2, 0.0, wannier32, n_max=4)
    t = np.linspace(0, 30, 31)
    obs = {"nlnr": density_correlation_op(2, p.n_max)}
    psi = bh_states(2, p.n_max)["mi"]
    ens = mcwf_ensemble(H, ch, psi, t, 5, observables=obs)
    tr = mcwf_trajectory(H, ch, psi, t, observables=obs)
    np.testing.assert_allclose(ens.mean["nlnr"], tr.observables["nlnr"], atol=1e-12)
    assert ens.n_jumps_total == 0


def test_ensemble_reproducible_and_worker_independent(wannier32):
    p, H, ch = _bh_setup(1, -0.5, wannier32)
    t = np.linspace(0, 10, 21)
    obs = {"n": _photon(p)}
    psi = bh_states(1, p.n_max)["right"]
    a = mcwf_ensemble(H, ch, psi, t, 40, seed=3, observables=obs, batch_size=16)
    b = mcwf_ensemble(H, ch, psi, t, 40, seed=3, observables=obs, batch_size=16, workers=2)
    np.testing.assert_array_equal(a.mean["n"], b.mean["n"])
    np.testing.assert_array_equal(a.jump_counts, b.jump_counts)


def test_trajectory_regenerates_from_its_index(wannier32):
    p, H, ch = _bh_setup(1, -0.5, wannier32)
    t = np.linspace(0, 10, 21)
    obs = {"n": _photon(p)}
    psi = bh_states(1, p.n_max)["right"]
    ens = mcwf_ensemble(H, ch, psi, t, 6, seed=11, observables=obs, keep_trajectories=True)
    one = mcwf_trajectory(H, ch, psi, t, seed=11, traj_index=4, observables=obs)
    np.testing.assert_allclose(ens.trajectories[4].observables["n"], one.observables["n"],
                               rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(ens.trajectories[4].jump_times, one.jump_times, rtol=1e-12)


def test_norm_deficit_monotone_between_jumps(wannier32):
    p, H, ch = _bh_setup(1, -10.0, wannier32)
    t = np.linspace(0, 2, 201)
    tr = mcwf_trajectory(H, ch, bh_states(1, p.n_max)["right"], t, seed=2)
    assert tr.n_jumps > 0
    d = tr.norm_deficit
    edges = np.searchsorted(t, tr.jump_times)
    for lo, hi in zip(np.r_[0, edges], np.r_[edges, t.size]):
        seg = d[lo:hi]
        assert np.all(np.diff(seg) >= -1e-12)


def test_eigen_and_rk4_trajectories_agree(wannier32):
    p, H, ch = _bh_setup(1, -0.5, wannier32)
    t = np.linspace(0, 5, 51)
    obs = {"n": _photon(p)}
    psi = bh_states(1, p.n_max)["right"]
    a = mcwf_trajectory(H, ch, psi, t, seed=1, observables=obs, method="exact")
    b = mcwf_trajectory(H, ch, psi, t, seed=1, observables=obs, method="rk4", dt=1e-3)
    np.testing.assert_allclose(a.jump_times, b.jump_times, atol=1e-6)
    np.testing.assert_allclose(a.observables["n"], b.observables["n"], atol=1e-6)


def test_jump_count_matches_emission_rate(wannier32):
    p, H, ch = _bh_setup(1, -0.5, wannier32)
    t = np.linspace(0, 20, 401)
    nph = _photon(p)
    psi = bh_states(1, p.n_max)["right"]
    ens = mcwf_ensemble(H, ch, psi, t, 300, seed=5, observables={"n": nph})
    me = me_evolve(H, ch, psi, t, {"n": nph})
    expected = 300 * np.trapezoid(2 * p.kappa * me.observables["n"], t)
    assert abs(ens.n_jumps_total - expected) < 3 * math.sqrt(ens.n_jumps_total)


def test_mcwf_mean_tracks_master_equation(wannier32):
    p, H, ch = _bh_setup(1, -0.5, wannier32)
    t = np.linspace(0, 30, 61)
    nph = _photon(p)
    psi = bh_states(1, p.n_max)["right"]
    ens = mcwf_ensemble(H, ch, psi, t, 300, seed=9, observables={"n": nph})
    me = me_evolve(H, ch, psi, t, {"n": nph})
    z = np.abs(ens.mean["n"] - me.observables["n"]) <= 3 * ens.stderr["n"] + 1e-12
    assert z.mean() >= 0.9


def test_dark_state_identity():
    alpha = steady_field_amplitude("right", V0=-10, U0=-0.5, kappa=10)
    n_max = 20
    b = BasisDescriptor.of(BHOccupation(2), FockSpace(n_max))
    st_ = bh_states(2, n_max)
    minus = StateVector(BasisDescriptor.of(BHOccupation(2)), st_["minus"].amplitudes[::n_max + 1])
    plus = StateVector(BasisDescriptor.of(BHOccupation(2)), st_["plus"].amplitudes[::n_max + 1])
    bright = minus.tensor(coherent_state(n_max, -2 * alpha)) + plus.tensor(coherent_state(n_max, 2 * alpha))
    dark = minus.tensor(coherent_state(n_max, -2 * alpha)) - plus.tensor(coherent_state(n_max, 2 * alpha))
    a = kron(LinOp(BasisDescriptor.of(BHOccupation(2)), np.eye(3, dtype=complex), True),
             destroy(n_max))
    got = apply(a, bright).amplitudes
    np.testing.assert_allclose(got, -2 * alpha * dark.amplitudes, atol=1e-12)
    assert got.size == b.dim


def test_jump_channel_rate_operator():
    ch = JumpChannel.from_op(math.sqrt(2.0) * destroy(3))
    np.testing.assert_allclose(ch.rate_op.dense(), 2 * number(3).dense())
