"""
Two-site Bose-Hubbard model coupled to the cavity mode.

    H_BH = J (b_l^+ b_r + b_r^+ b_l) - (DeltaC - N U0) a^+ a
           + Jt (n_l - n_r)(a^+ + a)

Basis ordering: occupations (n_l, n_r) sorted by n_l ascending, then Fock
index.  For N=2 that is |0,2> = |+>, |1,1> = |0> (MI), |2,0> = |->.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .hilbert import (BasisDescriptor, BHOccupation, FockSpace, LinOp,
                      StateVector, destroy, fock_state, identity, kron, number)
from .lattice import ModelParams, WannierPair, wannier_states

__all__ = ["BHParams", "occupation_ops", "build_bh_hamiltonian", "bh_states",
           "density_correlation_op", "imbalance_op"]


@dataclass(frozen=True)
class BHParams:
    J: float
    Jtilde: float
    U0: float
    DeltaC: float
    kappa: float
    N: int
    n_max: int

    def __post_init__(self):
        if self.N not in (1, 2):
            raise ValueError(f"N must be 1 or 2, got {self.N}")
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")

    @classmethod
    def from_model(cls, params: ModelParams, wannier: Optional[WannierPair] = None,
                   J: Optional[float] = None, Jtilde: Optional[float] = None) -> "BHParams":
        """Derive (J, Jt) from the lattice through the Wannier pair.

        J is the signed hopping element <l|h|r> (the tunnelling scale |J| is
        what the dynamics resolves); Jt = sign(U0) sqrt(U0 V0) <l|sin|l>.
        Explicit ``J`` / ``Jtilde`` override the derived values.
        """
        if J is None or Jtilde is None:
            w = wannier if wannier is not None else wannier_states(params.V0, params.m_cutoff)
            if J is None:
                J = w.hopping
            if Jtilde is None:
                Jtilde = params.coupling * w.s
        return cls(J=float(J), Jtilde=float(Jtilde), U0=params.U0,
                   DeltaC=params.delta_c, kappa=params.kappa, N=params.N,
                   n_max=params.fock_cutoff)

    @property
    def cavity_detuning(self) -> float:
        """Coefficient of a^+a, i.e. -(DeltaC - N U0)."""
        return -(self.DeltaC - self.N * self.U0)

    @property
    def basis(self) -> BasisDescriptor:
        return BasisDescriptor.of(BHOccupation(self.N), FockSpace(self.n_max))


def occupation_ops(N: int) -> dict[str, LinOp]:
    """b_l^+ b_r, n_l, n_r on BHOccupation(N)."""
    b = BasisDescriptor.of(BHOccupation(N))
    nl = np.arange(N + 1, dtype=float)
    nr = N - nl
    # b_l^+ b_r |nl, nr> = sqrt((nl+1) nr) |nl+1, nr-1>: index k -> k+1
    hop = np.sqrt((nl[:-1] + 1) * nr[:-1])
    lr = sp.diags(hop, -1, shape=(N + 1, N + 1), dtype=complex, format="csr")
    return {
        "hop_lr": LinOp(b, lr),
        "n_l": LinOp(b, sp.diags(nl, 0, dtype=complex, format="csr"), True),
        "n_r": LinOp(b, sp.diags(nr, 0, dtype=complex, format="csr"), True),
    }


def imbalance_op(N: int) -> LinOp:
    ops = occupation_ops(N)
    return ops["n_l"] - ops["n_r"]


def build_bh_hamiltonian(p: BHParams) -> LinOp:
    ops = occupation_ops(p.N)
    hop = ops["hop_lr"]
    field = BasisDescriptor.of(FockSpace(p.n_max))
    particles = BasisDescriptor.of(BHOccupation(p.N))
    a = destroy(p.n_max)
    H = kron(p.J * (hop + hop.dag()), identity(field)) \
        + p.cavity_detuning * kron(identity(particles), number(p.n_max)) \
        + p.Jtilde * kron(ops["n_l"] - ops["n_r"], a + a.dag())
    return LinOp(H.basis, H.matrix, hermitian=True)


def _occ(N: int, nl: int) -> np.ndarray:
    v = np.zeros(N + 1, dtype=complex)
    v[nl] = 1.0
    return v


def bh_states(N: int, n_max: int = 8) -> dict[str, StateVector]:
    """Named particle states, each tensored with the cavity vacuum.

    N=1: ``right`` = |0,1>, ``left`` = |1,0>.
    N=2: ``mi`` = |1,1>, ``minus`` = |2,0>, ``plus`` = |0,2>,
    ``sf`` ~ |1,1> + (|2,0> + |0,2>)/sqrt(2), and ``right``/``left`` as
    aliases of ``plus``/``minus`` (both particles on one site).
    """
    if N not in (1, 2):
        raise ValueError(f"N must be 1 or 2, got {N}")
    pb = BasisDescriptor.of(BHOccupation(N))
    vac = fock_state(n_max, 0)
    if N == 1:
        vecs = {"right": _occ(1, 0), "left": _occ(1, 1)}
    else:
        plus, mi, minus = _occ(2, 0), _occ(2, 1), _occ(2, 2)
        sf = (mi + (minus + plus) / math.sqrt(2)) / math.sqrt(2)
        vecs = {"mi": mi, "plus": plus, "minus": minus, "sf": sf,
                "right": plus, "left": minus}
    return {k: StateVector(pb, v).tensor(vac) for k, v in vecs.items()}


def density_correlation_op(N: int, n_max: int) -> LinOp:
    """n_l n_r tensored with the field identity."""
    if N != 2:
        raise ValueError("the density correlation is defined for N=2")
    ops = occupation_ops(N)
    nlnr = ops["n_l"] @ ops["n_r"]
    nlnr = LinOp(nlnr.basis, nlnr.matrix, True)
    return kron(nlnr, identity(BasisDescriptor.of(FockSpace(n_max))))
