"""
Observables and post-processing.

Positions are evaluated on a uniform midpoint grid of Kx over (-pi, pi); the
branch cut sits at Kx = +-pi, on the barrier between the two sites' outer
flanks.  The midpoint grid is symmetric under Kx -> -Kx, so mirrored states
give exactly opposite <Kx>.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp
from scipy.optimize import curve_fit

from .bh import BHParams, bh_states, build_bh_hamiltonian, density_correlation_op
from .dynamics import cavity_decay, me_evolve, steady_state
from .hilbert import (BasisDescriptor, BHOccupation, DensityOperator, FockSpace,
                      LinOp, MomentumModes, StateVector, SymmetricMomentumPair,
                      expectation, identity, kron, number, partial_trace)
from .lattice import ModelParams, WannierPair, symmetrize_two_particle

__all__ = [
    "GRID_SIZE", "kx_grid", "kx_operator", "right_half_operator",
    "mean_kx", "particle_observable", "bh_kx_operator", "photon_number_op",
    "RelaxationFit", "RelaxationError", "UndefinedRelaxationError",
    "relaxation_time", "adaptive_relaxation", "organization_weight",
    "BuildupResult", "buildup_compare",
]

GRID_SIZE = 256


class RelaxationError(RuntimeError):
    """The damping fit did not converge."""


class UndefinedRelaxationError(RelaxationError):
    """The series shows no resolvable damping."""


# --------------------------------------------------------------------------
# position-space observables
# --------------------------------------------------------------------------

def kx_grid(grid_size: int = GRID_SIZE) -> np.ndarray:
    return -math.pi + (np.arange(grid_size) + 0.5) * (2 * math.pi / grid_size)


def _grid_operator(M: int, weights: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """(1/G) sum_j w_j e^{-i m xi_j} e^{i m' xi_j}."""
    m = np.arange(-M, M + 1)
    E = np.exp(1j * np.outer(grid, m))
    return (E.conj().T * weights) @ E / grid.size


def kx_operator(M: int, grid_size: int = GRID_SIZE) -> LinOp:
    if grid_size <= 2 * M:
        raise ValueError(f"grid of {grid_size} points aliases modes up to |m|={M}")
    g = kx_grid(grid_size)
    X = _grid_operator(M, g, g)
    X = 0.5 * (X + X.conj().T)
    return LinOp(BasisDescriptor.of(MomentumModes(M)), sp.csr_matrix(X), True)


def right_half_operator(M: int, grid_size: int = GRID_SIZE) -> LinOp:
    """Projector-like operator counting weight at Kx > 0."""
    g = kx_grid(grid_size)
    R = _grid_operator(M, (g > 0).astype(float), g)
    R = 0.5 * (R + R.conj().T)
    return LinOp(BasisDescriptor.of(MomentumModes(M)), sp.csr_matrix(R), True)


def _pair_symmetric(one: np.ndarray, two: Optional[np.ndarray], M: int) -> sp.csr_matrix:
    S = symmetrize_two_particle(M)
    eye = np.eye(one.shape[0])
    full = np.kron(one, eye) + np.kron(eye, one) if two is None else two
    return sp.csr_matrix(S.T @ sp.csr_matrix(full) @ S)


def particle_observable(name: str, particle: BasisDescriptor,
                        grid_size: int = GRID_SIZE) -> LinOp:
    """``kx`` (mean over particles) or ``nlnr`` on a momentum particle factor."""
    f = particle.factors[0]
    M = f.M
    X = kx_operator(M, grid_size).dense()
    if name == "kx":
        if isinstance(f, MomentumModes):
            return LinOp(particle, sp.csr_matrix(X), True)
        return LinOp(particle, 0.5 * _pair_symmetric(X, None, M), True)
    if name == "nlnr":
        if not isinstance(f, SymmetricMomentumPair):
            raise ValueError("nlnr needs a two-particle factor")
        R = right_half_operator(M, grid_size).dense()
        Lh = np.eye(R.shape[0]) - R
        two = np.kron(R, Lh) + np.kron(Lh, R)
        op = _pair_symmetric(R, two, M)
        return LinOp(particle, 0.5 * (op + op.conj().T), True)
    raise ValueError(f"unknown particle observable {name!r}")


def mean_kx(state: Union[StateVector, DensityOperator], grid_size: int = GRID_SIZE) -> float:
    """<Kx> of the particle factor, averaged over particles for N=2."""
    idx = None
    for i, f in enumerate(state.basis.factors):
        if isinstance(f, (MomentumModes, SymmetricMomentumPair)):
            idx = i
            break
    if idx is None:
        raise ValueError("state has no momentum-basis particle factor")
    rho = partial_trace(state, [idx])
    op = particle_observable("kx", rho.basis, grid_size)
    return float(expectation(op, rho).real)


def bh_kx_operator(wannier: WannierPair, n_max: int, grid_size: int = GRID_SIZE) -> LinOp:
    """<Kx> for one particle in the two-site model, from Wannier matrix elements.

    Basis order follows BHOccupation(1): index 0 = |0,1> (right), 1 = |1,0> (left).
    """
    X = kx_operator(wannier.M, grid_size).matrix
    orbs = [wannier.right.amplitudes, wannier.left.amplitudes]
    x2 = np.array([[np.vdot(a, X @ b) for b in orbs] for a in orbs])
    x2 = 0.5 * (x2 + x2.conj().T)
    part = LinOp(BasisDescriptor.of(BHOccupation(1)), sp.csr_matrix(x2), True)
    return kron(part, identity(BasisDescriptor.of(FockSpace(n_max))))


def photon_number_op(basis: BasisDescriptor) -> LinOp:
    idx = basis.index_of(FockSpace)
    out = None
    for i, f in enumerate(basis.factors):
        piece = number(f.n_max) if i == idx else identity(BasisDescriptor.of(f))
        out = piece if out is None else kron(out, piece)
    return out


# --------------------------------------------------------------------------
# relaxation time
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RelaxationFit:
    tau: float
    omega: float
    regime: str
    residual: float
    amplitude: float = float("nan")
    phase: float = 0.0


def _damped_cos(t, A, rate, omega, phi):
    return A * np.exp(-rate * t) * np.cos(omega * t + phi)


def _damped_exp(t, A, rate):
    return A * np.exp(-rate * t)


def _crossings(d: np.ndarray, floor: float) -> np.ndarray:
    sig = np.where(np.abs(d) > floor, np.sign(d), 0.0)
    nz = np.flatnonzero(sig)
    if nz.size < 2:
        return np.array([], dtype=int)
    s = sig[nz]
    return nz[1:][s[1:] != s[:-1]]


def _envelope_rate(t, d) -> float:
    """Log-linear slope through the local maxima of |d|."""
    a = np.abs(d)
    peaks = np.flatnonzero((a[1:-1] >= a[:-2]) & (a[1:-1] >= a[2:])) + 1
    peaks = np.concatenate([[0], peaks]) if a[0] >= a[1] else peaks
    peaks = peaks[a[peaks] > 1e-12 * a.max()]
    if peaks.size < 2:
        return 0.0
    slope = np.polyfit(t[peaks], np.log(a[peaks]), 1)[0]
    return float(-slope)


def relaxation_time(times, series, steady_value: float = 0.0,
                    undefined_factor: float = 10.0) -> RelaxationFit:
    """Fit the approach of ``series`` to ``steady_value``.

    With at least two zero crossings of the deviation the model is
    A exp(-t/tau) cos(omega t + phi) (underdamped); otherwise a pure
    exponential (overdamped).  A decay time beyond ``undefined_factor``
    times the series length raises :class:`UndefinedRelaxationError`.
    """
    t = np.asarray(times, dtype=float)
    d = np.asarray(series, dtype=float) - steady_value
    if t.size != d.size or t.size < 8:
        raise ValueError("need matching times/series with at least 8 samples")
    t = t - t[0]
    span = t[-1]
    amp = float(np.max(np.abs(d)))
    if amp == 0.0:
        raise UndefinedRelaxationError("series equals its steady value")
    cross = _crossings(d, 1e-9 * amp)
    max_tau = undefined_factor * span
    if cross.size >= 2:
        tc = t[cross]
        omega0 = math.pi / float(np.mean(np.diff(tc)))
        rate0 = max(_envelope_rate(t, d), 0.1 / max_tau)
        phi0 = math.acos(max(-1.0, min(1.0, d[0] / amp)))
        # the sign of phi is fixed by the initial slope
        if d.size > 1 and d[1] > d[0] * math.cos(omega0 * (t[1] - t[0])):
            phi0 = -phi0
        try:
            popt, _ = curve_fit(_damped_cos, t, d, p0=(amp, rate0, omega0, phi0),
                                bounds=([0, -np.inf, 0, -2 * math.pi], [np.inf, np.inf, np.inf, 2 * math.pi]),
                                maxfev=20000)
        except RuntimeError as exc:
            raise RelaxationError(f"damped-cosine fit failed: {exc}") from exc
        A, rate, omega, phi = popt
        model = _damped_cos(t, *popt)
        regime = "underdamped"
    else:
        a = np.abs(d)
        keep = a > 1e-3 * amp
        if keep.sum() >= 2:
            rate0 = max(-np.polyfit(t[keep], np.log(a[keep]), 1)[0], 0.1 / max_tau)
        else:
            rate0 = 1.0 / span
        try:
            popt, _ = curve_fit(_damped_exp, t, d, p0=(d[0] if d[0] != 0 else amp, rate0),
                                maxfev=20000)
        except RuntimeError as exc:
            raise RelaxationError(f"exponential fit failed: {exc}") from exc
        A, rate = popt
        omega, phi = 0.0, 0.0
        model = _damped_exp(t, *popt)
        regime = "overdamped"
    if not np.isfinite(rate) or rate <= 1.0 / max_tau:
        raise UndefinedRelaxationError(
            f"no resolvable damping over t = {span:g} (rate {rate:.3g})")
    resid = float(np.sqrt(np.mean((model - d) ** 2)))
    return RelaxationFit(tau=float(1.0 / rate), omega=float(omega), regime=regime,
                         residual=resid, amplitude=float(A), phase=float(phi))


def adaptive_relaxation(simulate: Callable[[float], tuple], t_max: float,
                        steady_value: float = 0.0, min_cover: float = 3.0,
                        max_rounds: int = 8) -> tuple[RelaxationFit, float]:
    """Re-run ``simulate(t_max) -> (times, series)`` with doubled ``t_max``
    until the series spans ``min_cover`` fitted decay times."""
    for _ in range(max_rounds):
        times, series = simulate(t_max)
        try:
            fit = relaxation_time(times, series, steady_value)
        except UndefinedRelaxationError:
            fit = None
        if fit is not None and (times[-1] - times[0]) >= min_cover * fit.tau:
            return fit, t_max
        t_max *= 2
    if fit is None:
        raise UndefinedRelaxationError(f"no damping resolved up to t_max = {t_max / 2:g}")
    return fit, t_max / 2


# --------------------------------------------------------------------------
# two-particle diagnostics
# --------------------------------------------------------------------------

def organization_weight(rho: Union[DensityOperator, StateVector]) -> float:
    """w = <n_l n_r>: 1 for the Mott state, 0 inside the organised subspace."""
    f = rho.basis.factors
    if len(f) != 2 or not isinstance(f[0], BHOccupation) or not isinstance(f[1], FockSpace):
        raise ValueError("organization_weight expects a BHOccupation x Fock state")
    if f[0].N != 2:
        raise ValueError("organization_weight needs N=2")
    return float(expectation(density_correlation_op(2, f[1].n_max), rho).real)


@dataclass
class BuildupResult:
    times: np.ndarray
    mi: np.ndarray
    sf: np.ndarray
    probe_time: float
    mi_at_probe: float
    sf_at_probe: float
    steady_mi: float
    steady_sf: float
    steady_state_distance: float


def buildup_compare(params: ModelParams, t_grid, bh: Optional[BHParams] = None,
                    probe_time: Optional[float] = None) -> BuildupResult:
    """Photon-number build-up from the Mott and superfluid states (N=2).

    Both runs share the Hamiltonian; they differ only in the initial state.
    ``steady_mi`` / ``steady_sf`` are the photon numbers of each run's
    long-time limit.
    """
    if params.N != 2:
        raise ValueError("buildup_compare needs N=2")
    bh = bh if bh is not None else BHParams.from_model(params)
    H = build_bh_hamiltonian(bh)
    ch = cavity_decay(bh.kappa, H.basis)
    states = bh_states(2, bh.n_max)
    nph = photon_number_op(H.basis)
    t_grid = np.asarray(t_grid, dtype=float)
    probe = 5.0 / bh.kappa if probe_time is None else probe_time
    out = {}
    finals = {}
    for key in ("mi", "sf"):
        sol = me_evolve(H, ch, states[key], t_grid, {"n": nph})
        out[key] = sol.observables["n"]
        finals[key] = steady_state(H, ch, method="relax", rho0=states[key])
    interp = {k: float(np.interp(probe, t_grid, v)) for k, v in out.items()}
    return BuildupResult(
        times=t_grid, mi=out["mi"], sf=out["sf"], probe_time=probe,
        mi_at_probe=interp["mi"], sf_at_probe=interp["sf"],
        steady_mi=float(expectation(nph, finals["mi"]).real),
        steady_sf=float(expectation(nph, finals["sf"]).real),
        steady_state_distance=finals["mi"].trace_distance(finals["sf"]))
