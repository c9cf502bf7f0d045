"""
Full lattice-cavity model in the plane-wave basis.

One lattice wavelength with periodic boundary: particle states are expanded
in exp(i m K x), m = -M..M, so ``Kx`` lives on (-pi, pi].  Energies are in
units of the recoil frequency.  For V0 < 0 the potential minima (sites) sit at
Kx = -pi/2 (left) and Kx = +pi/2 (right).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .hilbert import (BasisDescriptor, FockSpace, LinOp, MomentumModes,
                      StateVector, SymmetricMomentumPair, destroy,
                      fock_state, identity, kron, number)

__all__ = [
    "ModelParams", "WannierPair", "DegenerateBandError",
    "build_kinetic", "build_sin", "build_sin2", "particle_hamiltonian",
    "build_full_hamiltonian", "wannier_states", "initial_state_full",
    "symmetrize_two_particle", "mirror", "default_fock_cutoff",
    "coupling_strength", "field_operators",
]


class DegenerateBandError(ValueError):
    """The two lowest bands are not separated from the rest of the spectrum."""


def coupling_strength(U0: float, V0: float) -> float:
    """sign(U0) * sqrt(U0 V0); both arguments must share a sign."""
    prod = U0 * V0
    if prod < 0:
        raise ValueError(f"U0*V0 must be non-negative, got U0={U0}, V0={V0}")
    return float(np.sign(U0)) * math.sqrt(prod)


def default_fock_cutoff(V0: float, U0: float, kappa: float, delta_c: float,
                        N: int = 1) -> int:
    """max(8, ceil(10 |N alpha_max|^2) + 4) with alpha_max the site field."""
    from .dynamics import steady_field_amplitude

    alpha = steady_field_amplitude(math.pi / 2, V0=V0, U0=U0, kappa=kappa,
                                   delta_c=delta_c, N=N)
    return max(8, math.ceil(10 * abs(N * alpha) ** 2) + 4)


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters in recoil units.

    ``DeltaC=None`` applies the resonance rule DeltaC = N U0 - kappa.
    ``M`` and ``n_max`` default to 32 (N=1) / 16 (N=2) and to the
    coherent-field rule of :func:`default_fock_cutoff`.
    """
    V0: float = -10.0
    U0: float = 0.0
    kappa: float = 10.0
    DeltaC: Optional[float] = None
    N: int = 1
    M: Optional[int] = None
    n_max: Optional[int] = None

    def __post_init__(self):
        if self.N not in (1, 2):
            raise ValueError(f"N must be 1 or 2, got {self.N}")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.U0 > 0:
            raise ValueError("U0 must be <= 0 (red detuning)")
        coupling_strength(self.U0, self.V0)
        if self.M is not None and self.M < 8:
            raise ValueError(f"M must be >= 8, got {self.M}")
        if self.n_max is not None and self.n_max < 4:
            raise ValueError(f"n_max must be >= 4, got {self.n_max}")

    @property
    def resonance(self) -> bool:
        return self.DeltaC is None

    @property
    def delta_c(self) -> float:
        if self.DeltaC is None:
            return self.N * self.U0 - self.kappa
        return float(self.DeltaC)

    @property
    def m_cutoff(self) -> int:
        if self.M is not None:
            return self.M
        return 32 if self.N == 1 else 16

    @property
    def fock_cutoff(self) -> int:
        if self.n_max is not None:
            return self.n_max
        return default_fock_cutoff(self.V0, self.U0, self.kappa, self.delta_c, self.N)

    @property
    def coupling(self) -> float:
        return coupling_strength(self.U0, self.V0)

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)


# --------------------------------------------------------------------------
# single-particle operators
# --------------------------------------------------------------------------

def _momentum(M: int) -> BasisDescriptor:
    return BasisDescriptor.of(MomentumModes(M))


def build_kinetic(M: int) -> LinOp:
    """p^2/2mu: diagonal m^2."""
    if M < 1:
        raise ValueError("M must be >= 1")
    m = np.arange(-M, M + 1, dtype=float)
    return LinOp(_momentum(M), sp.dia_matrix((m ** 2, 0), shape=(2 * M + 1,) * 2), True)


def build_sin(M: int) -> LinOp:
    """sin(Kx) = (e^{iKx} - e^{-iKx}) / 2i; e^{iKx}|m> = |m+1>."""
    if M < 2:
        raise ValueError("M must be >= 2")
    d = 2 * M + 1
    up = np.full(d, 1 / 2j)
    mat = sp.dia_matrix((np.vstack([up, -up]), [-1, 1]), shape=(d, d))
    return LinOp(_momentum(M), mat, True)


def build_sin2(M: int) -> LinOp:
    """sin^2(Kx) = 1/2 - (e^{2iKx} + e^{-2iKx}) / 4."""
    if M < 2:
        raise ValueError("M must be >= 2")
    d = 2 * M + 1
    mat = sp.dia_matrix((np.vstack([np.full(d, 0.5), np.full(d, -0.25), np.full(d, -0.25)]),
                         [0, -2, 2]), shape=(d, d))
    return LinOp(_momentum(M), mat, True)


def particle_hamiltonian(V0: float, M: int) -> LinOp:
    return build_kinetic(M) + V0 * build_sin2(M)


def mirror(psi: StateVector) -> StateVector:
    """x -> -x on a single momentum factor: |m> -> |-m>."""
    if len(psi.basis.factors) != 1 or not isinstance(psi.basis.factors[0], MomentumModes):
        raise ValueError("mirror expects a single MomentumModes factor")
    return StateVector(psi.basis, psi.amplitudes[::-1])


# --------------------------------------------------------------------------
# Wannier states
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class WannierPair:
    """Lowest-band Wannier states on the two-site ring.

    ``J`` is the positive tunnelling scale (E_1 - E_0)/2; ``hopping`` is the
    signed matrix element <l|p^2/2mu + V0 sin^2|r> in the phase convention
    used here (real, positive amplitude at each site centre), which equals
    -J.  ``s`` is <l|sin(Kx)|l> (negative).
    """
    left: StateVector
    right: StateVector
    J: float
    hopping: float
    s: float
    energies: np.ndarray
    V0: float
    M: int


def _value_at(coeffs: np.ndarray, M: int, kx: float) -> complex:
    m = np.arange(-M, M + 1)
    return complex(np.exp(1j * m * kx) @ coeffs)


def wannier_states(V0: float, M: int, gap_ratio: float = 5.0) -> WannierPair:
    """Diagonalize p^2/2mu + V0 sin^2 and localize the two lowest states.

    The lowest two eigenvalues must be separated from the third by at least
    ``gap_ratio`` times their own splitting.
    """
    if V0 >= 0:
        raise ValueError("wannier_states needs V0 < 0 (sites at Kx = +-pi/2)")
    h = particle_hamiltonian(V0, M).dense()
    E, V = np.linalg.eigh(h)
    split = E[1] - E[0]
    if E[2] - E[1] < gap_ratio * split:
        raise DegenerateBandError(
            f"lowest band not isolated at V0={V0}: E={E[:3]}")
    sym, anti = V[:, 0].copy(), V[:, 1].copy()
    for vec in (sym, anti):
        val = _value_at(vec, M, math.pi / 2)
        if abs(val) < 1e-8:
            raise DegenerateBandError("band state vanishes at the site centre")
        vec *= np.exp(-1j * np.angle(val))
    right = (sym + anti) / math.sqrt(2)
    left = (sym - anti) / math.sqrt(2)
    b = _momentum(M)
    sin = build_sin(M).matrix
    s = float(np.vdot(left, sin @ left).real)
    hop = complex(np.vdot(left, h @ right))
    return WannierPair(left=StateVector(b, left), right=StateVector(b, right),
                       J=float(split / 2), hopping=float(hop.real), s=s,
                       energies=E[:3].copy(), V0=V0, M=M)


# --------------------------------------------------------------------------
# two bosons
# --------------------------------------------------------------------------

def symmetrize_two_particle(M: int) -> sp.csr_matrix:
    """Isometry from the symmetric subspace into the (2M+1)^2 product space.

    Column k is the normalized symmetrization of the k-th label of
    :class:`SymmetricMomentumPair`.  ``S @ S.T`` is the symmetric projector.
    """
    d = 2 * M + 1
    rows, cols, vals = [], [], []
    k = 0
    for i in range(d):
        for j in range(i, d):
            if i == j:
                rows.append(i * d + i); cols.append(k); vals.append(1.0)
            else:
                w = 1 / math.sqrt(2)
                rows += [i * d + j, j * d + i]; cols += [k, k]; vals += [w, w]
            k += 1
    return sp.csr_matrix((vals, (rows, cols)), shape=(d * d, k), dtype=complex)


def _two_body(op: sp.spmatrix, S: sp.csr_matrix) -> sp.csr_matrix:
    """Restrict op x 1 + 1 x op to the symmetric subspace."""
    eye = sp.identity(op.shape[0], dtype=complex, format="csr")
    full = sp.kron(op, eye, format="csr") + sp.kron(eye, op, format="csr")
    return (S.T @ full @ S).tocsr()


def particle_basis(N: int, M: int) -> BasisDescriptor:
    return BasisDescriptor.of(MomentumModes(M) if N == 1 else SymmetricMomentumPair(M))


def field_operators(particle: BasisDescriptor, n_max: int) -> tuple[LinOp, LinOp]:
    """(1 x a, 1 x a^+ a) on particle x Fock."""
    eye = identity(particle)
    return kron(eye, destroy(n_max)), kron(eye, number(n_max))


def build_full_hamiltonian(params: ModelParams) -> LinOp:
    """Single-particle-resolved Hamiltonian of particles plus cavity mode.

    H = sum_i [p_i^2/2mu + V0 sin^2(Kx_i)] - (DeltaC - N U0) a^+a
        + sign(U0) sqrt(U0 V0) sum_i sin(Kx_i) (a^+ + a)

    The dispersive shift is position independent (mode function constant
    along the lattice), so it enters only through the detuning.
    """
    M, n_max, N = params.m_cutoff, params.fock_cutoff, params.N
    g = params.coupling
    h1 = particle_hamiltonian(params.V0, M).matrix
    s1 = build_sin(M).matrix
    if N == 1:
        hp, sp_ = h1.tocsr(), s1.tocsr()
    else:
        S = symmetrize_two_particle(M)
        hp, sp_ = _two_body(h1, S), _two_body(s1, S)
    pb = particle_basis(N, M)
    hp_op = LinOp(pb, hp)
    sin_op = LinOp(pb, sp_)
    field_eye = identity(BasisDescriptor.of(FockSpace(n_max)))
    a = destroy(n_max)
    x = a + a.dag()
    H = kron(hp_op, field_eye) \
        - (params.delta_c - N * params.U0) * kron(identity(pb), number(n_max))
    if g != 0.0:
        H = H + g * kron(sin_op, x)
    return LinOp(H.basis, H.matrix, hermitian=True)


# --------------------------------------------------------------------------
# initial states
# --------------------------------------------------------------------------

def _gaussian_packet(M: int, center: float, width: float) -> np.ndarray:
    """Momentum coefficients of a periodic Gaussian packet centred at ``center``."""
    m = np.arange(-M, M + 1)
    c = np.exp(-0.5 * (m * width) ** 2 - 1j * m * center)
    return c / np.linalg.norm(c)


def initial_state_full(params: ModelParams, which: str = "right",
                       wannier: Optional[WannierPair] = None,
                       width: Optional[float] = None) -> StateVector:
    """Particle state(s) built from Wannier orbitals, cavity in vacuum.

    ``which`` is one of ``right``, ``left`` (every particle on that site),
    ``mi`` or ``sf`` (two particles).  Passing ``width`` replaces the
    Wannier orbital of a localized single particle by a Gaussian packet of
    that rms width in Kx, approximating a point-like preparation.
    """
    which = which.lower()
    M, N = params.m_cutoff, params.N
    if which in ("mi", "sf") and N != 2:
        raise ValueError(f"initial state {which!r} needs N=2")
    if which not in ("right", "left", "mi", "sf"):
        raise ValueError(f"unknown initial state {which!r}")
    if width is not None and (N != 1 or which not in ("right", "left")):
        raise ValueError("Gaussian packets are only offered for one localized particle")
    vac = fock_state(params.fock_cutoff, 0)
    if width is not None:
        center = math.pi / 2 if which == "right" else -math.pi / 2
        orb = StateVector(_momentum(M), _gaussian_packet(M, center, width))
        return orb.tensor(vac)
    w = wannier if wannier is not None else wannier_states(params.V0, M)
    if w.M != M:
        raise ValueError("Wannier pair built with a different momentum cutoff")
    l, r = w.left.amplitudes, w.right.amplitudes
    if N == 1:
        orb = r if which == "right" else l
        return StateVector(_momentum(M), orb).tensor(vac)
    prod = {
        "right": np.kron(r, r),
        "left": np.kron(l, l),
        "mi": (np.kron(l, r) + np.kron(r, l)) / math.sqrt(2),
    }
    if which == "sf":
        sym = (l + r) / math.sqrt(2)
        vec = np.kron(sym, sym)
    else:
        vec = prod[which]
    S = symmetrize_two_particle(M)
    coeffs = S.T @ vec
    particle = StateVector(particle_basis(2, M), coeffs).normalize()
    return particle.tensor(vac)
