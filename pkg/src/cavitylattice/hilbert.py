"""
Basis-aware state vectors and operators on small tensor-product spaces.

Every object carries a :class:`BasisDescriptor` listing its tensor factors in
order.  Operators are stored as scipy sparse matrices (``dia`` for banded
single-factor operators, ``csr`` for products); states and density operators
are dense complex arrays.  Binary operations insist on identical descriptors.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Sequence, Union

import numpy as np
import scipy.sparse as sp

__all__ = [
    "MomentumModes", "FockSpace", "BHOccupation", "SymmetricMomentumPair",
    "BasisDescriptor", "BasisMismatch", "StateVector", "DensityOperator",
    "LinOp", "kron", "apply", "expectation", "partial_trace",
    "identity", "destroy", "create", "number", "fock_state", "coherent_state",
]


class BasisMismatch(ValueError):
    """Raised when operands live on different bases."""


# --------------------------------------------------------------------------
# factor descriptors
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MomentumModes:
    """Plane waves exp(i m K x), m = -M..M."""
    M: int

    @property
    def dim(self) -> int:
        return 2 * self.M + 1

    @property
    def labels(self) -> np.ndarray:
        return np.arange(-self.M, self.M + 1)


@dataclass(frozen=True)
class FockSpace:
    """Photon numbers 0..n_max."""
    n_max: int

    @property
    def dim(self) -> int:
        return self.n_max + 1

    @property
    def labels(self) -> np.ndarray:
        return np.arange(self.n_max + 1)


@dataclass(frozen=True)
class BHOccupation:
    """Two-site occupations (n_l, n_r) with n_l + n_r = N, ordered by n_l."""
    N: int

    @property
    def dim(self) -> int:
        return self.N + 1

    @property
    def labels(self) -> list[tuple[int, int]]:
        return [(nl, self.N - nl) for nl in range(self.N + 1)]


@dataclass(frozen=True)
class SymmetricMomentumPair:
    """Symmetric two-boson subspace of MomentumModes(M) x MomentumModes(M).

    Labels are pairs (m1, m2) with m1 <= m2, in lexicographic order.
    """
    M: int

    @property
    def dim(self) -> int:
        d = 2 * self.M + 1
        return comb(d + 1, 2)

    @property
    def labels(self) -> list[tuple[int, int]]:
        ms = range(-self.M, self.M + 1)
        return [(a, b) for a in ms for b in ms if a <= b]


Factor = Union[MomentumModes, FockSpace, BHOccupation, SymmetricMomentumPair]


@dataclass(frozen=True)
class BasisDescriptor:
    factors: tuple[Factor, ...]

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))

    @classmethod
    def of(cls, *factors: Factor) -> "BasisDescriptor":
        return cls(tuple(factors))

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.dim for f in self.factors)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims)) if self.factors else 1

    def __add__(self, other: "BasisDescriptor") -> "BasisDescriptor":
        return BasisDescriptor(self.factors + other.factors)

    def index_of(self, kind) -> int:
        """Position of the first factor of type ``kind``."""
        for i, f in enumerate(self.factors):
            if isinstance(f, kind):
                return i
        raise KeyError(f"no {kind.__name__} factor in {self}")


def _check_same(a: BasisDescriptor, b: BasisDescriptor) -> None:
    if a != b:
        raise BasisMismatch(f"basis mismatch: {a} vs {b}")


# --------------------------------------------------------------------------
# states
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StateVector:
    basis: BasisDescriptor
    amplitudes: np.ndarray

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amp.size != self.basis.dim:
            raise BasisMismatch(
                f"{amp.size} amplitudes for basis of dimension {self.basis.dim}")
        object.__setattr__(self, "amplitudes", amp)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalize(self) -> "StateVector":
        n = self.norm()
        if n == 0.0:
            raise ZeroDivisionError("cannot normalize the zero vector")
        return StateVector(self.basis, self.amplitudes / n)

    def inner(self, other: "StateVector") -> complex:
        """<self|other>."""
        _check_same(self.basis, other.basis)
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def projector(self) -> "DensityOperator":
        v = self.amplitudes
        return DensityOperator(self.basis, np.outer(v, v.conj()))

    def tensor(self, other: "StateVector") -> "StateVector":
        return StateVector(self.basis + other.basis,
                           np.kron(self.amplitudes, other.amplitudes))

    def __add__(self, other: "StateVector") -> "StateVector":
        _check_same(self.basis, other.basis)
        return StateVector(self.basis, self.amplitudes + other.amplitudes)

    def __sub__(self, other: "StateVector") -> "StateVector":
        _check_same(self.basis, other.basis)
        return StateVector(self.basis, self.amplitudes - other.amplitudes)

    def __mul__(self, c) -> "StateVector":
        return StateVector(self.basis, self.amplitudes * c)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class DensityOperator:
    basis: BasisDescriptor
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        d = self.basis.dim
        if m.shape != (d, d):
            raise BasisMismatch(f"matrix of shape {m.shape} for dimension {d}")
        object.__setattr__(self, "matrix", m)

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def min_eigenvalue(self) -> float:
        h = 0.5 * (self.matrix + self.matrix.conj().T)
        return float(np.linalg.eigvalsh(h)[0])

    def trace_distance(self, other: "DensityOperator") -> float:
        _check_same(self.basis, other.basis)
        diff = self.matrix - other.matrix
        diff = 0.5 * (diff + diff.conj().T)
        return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(diff))))

    def __add__(self, other: "DensityOperator") -> "DensityOperator":
        _check_same(self.basis, other.basis)
        return DensityOperator(self.basis, self.matrix + other.matrix)

    def __mul__(self, c) -> "DensityOperator":
        return DensityOperator(self.basis, self.matrix * c)

    __rmul__ = __mul__


# --------------------------------------------------------------------------
# operators
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LinOp:
    """Sparse complex operator with a basis.

    ``hermitian`` is a declaration checked at construction time to 1e-12.
    """
    basis: BasisDescriptor
    matrix: sp.spmatrix
    hermitian: bool = False

    def __post_init__(self):
        m = self.matrix
        if not sp.issparse(m):
            m = sp.csr_matrix(np.asarray(m, dtype=complex))
        elif m.dtype != complex:
            m = m.astype(complex)
        d = self.basis.dim
        if m.shape != (d, d):
            raise BasisMismatch(f"operator of shape {m.shape} for dimension {d}")
        object.__setattr__(self, "matrix", m)
        if self.hermitian and self.hermiticity_error() >= 1e-12:
            raise ValueError(
                f"operator flagged hermitian but |A - A^+|_max = {self.hermiticity_error():.3g}")

    def hermiticity_error(self) -> float:
        diff = (self.matrix - self.matrix.conj().T).tocoo()
        return float(np.max(np.abs(diff.data))) if diff.nnz else 0.0

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def csr(self) -> sp.csr_matrix:
        return sp.csr_matrix(self.matrix)

    def dag(self) -> "LinOp":
        return LinOp(self.basis, self.matrix.conj().T.tocsr(), self.hermitian)

    def __add__(self, other: "LinOp") -> "LinOp":
        _check_same(self.basis, other.basis)
        return LinOp(self.basis, (self.matrix + other.matrix).tocsr(),
                     self.hermitian and other.hermitian)

    def __sub__(self, other: "LinOp") -> "LinOp":
        _check_same(self.basis, other.basis)
        return LinOp(self.basis, (self.matrix - other.matrix).tocsr(),
                     self.hermitian and other.hermitian)

    def __neg__(self) -> "LinOp":
        return LinOp(self.basis, -self.matrix, self.hermitian)

    def __mul__(self, c) -> "LinOp":
        c = complex(c)
        return LinOp(self.basis, self.matrix * c, self.hermitian and c.imag == 0)

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, LinOp):
            _check_same(self.basis, other.basis)
            return LinOp(self.basis, (self.matrix @ other.matrix).tocsr())
        if isinstance(other, StateVector):
            return apply(self, other)
        return NotImplemented


def identity(basis: BasisDescriptor) -> LinOp:
    return LinOp(basis, sp.identity(basis.dim, dtype=complex, format="dia"), True)


def destroy(n_max: int) -> LinOp:
    """Truncated annihilation operator; a|n> = sqrt(n)|n-1>."""
    data = np.sqrt(np.arange(1, n_max + 1, dtype=float))
    m = sp.diags(data, 1, shape=(n_max + 1, n_max + 1), dtype=complex, format="dia")
    return LinOp(BasisDescriptor.of(FockSpace(n_max)), m)


def create(n_max: int) -> LinOp:
    return destroy(n_max).dag()


def number(n_max: int) -> LinOp:
    m = sp.diags(np.arange(n_max + 1, dtype=float), 0, dtype=complex, format="dia")
    return LinOp(BasisDescriptor.of(FockSpace(n_max)), m, True)


def fock_state(n_max: int, n: int) -> StateVector:
    if not 0 <= n <= n_max:
        raise ValueError(f"Fock index {n} outside 0..{n_max}")
    v = np.zeros(n_max + 1, dtype=complex)
    v[n] = 1.0
    return StateVector(BasisDescriptor.of(FockSpace(n_max)), v)


def coherent_state(n_max: int, alpha: complex, normalize: bool = True) -> StateVector:
    """Coherent state expanded in the truncated Fock basis.

    With ``normalize=False`` the coefficients are the exact (untruncated)
    expansion coefficients exp(-|alpha|^2/2) alpha^n / sqrt(n!).
    """
    n = np.arange(n_max + 1)
    logfact = np.cumsum(np.log(np.maximum(n, 1)))
    with np.errstate(divide="ignore"):
        mag = np.exp(-0.5 * abs(alpha) ** 2 - 0.5 * logfact)
    coeffs = mag * np.power(complex(alpha), n)
    psi = StateVector(BasisDescriptor.of(FockSpace(n_max)), coeffs)
    return psi.normalize() if normalize else psi


# --------------------------------------------------------------------------
# core operations
# --------------------------------------------------------------------------

def kron(A: LinOp, B: LinOp) -> LinOp:
    """Tensor product; the result's factors are A's followed by B's."""
    return LinOp(A.basis + B.basis, sp.kron(A.matrix, B.matrix, format="csr"),
                 A.hermitian and B.hermitian)


def apply(A: LinOp, psi: StateVector) -> StateVector:
    """Matrix-vector product.  The result is not renormalized."""
    _check_same(A.basis, psi.basis)
    return StateVector(psi.basis, A.matrix @ psi.amplitudes)


def expectation(A: LinOp, state: Union[StateVector, DensityOperator]) -> complex:
    """<psi|A|psi> for a vector, Tr(A rho) for a density operator."""
    _check_same(A.basis, state.basis)
    if isinstance(state, StateVector):
        v = state.amplitudes
        return complex(np.vdot(v, A.matrix @ v))
    return complex(np.sum(A.matrix.multiply(state.matrix.T)))


def partial_trace(rho: Union[DensityOperator, StateVector],
                  keep: Sequence[int]) -> DensityOperator:
    """Trace out every factor whose index is not in ``keep``.

    Kept factors retain their original order.
    """
    if isinstance(rho, StateVector):
        rho = rho.projector()
    nf = len(rho.basis.factors)
    keep = sorted(set(int(k) for k in keep))
    for k in keep:
        if not 0 <= k < nf:
            raise IndexError(f"factor index {k} out of range for {nf} factors")
    dims = rho.basis.dims
    t = rho.matrix.reshape(dims + dims)
    drop = [i for i in range(nf) if i not in keep]
    # contract each dropped ket index with its bra partner
    letters = "abcdefghijklmnopqrstuvwxyz"
    ket = [letters[i] for i in range(nf)]
    bra = [letters[nf + i] for i in range(nf)]
    for i in drop:
        bra[i] = ket[i]
    out = "".join(ket[i] for i in keep) + "".join(bra[i] for i in keep)
    reduced = np.einsum("".join(ket) + "".join(bra) + "->" + out, t)
    d = int(np.prod([dims[i] for i in keep])) if keep else 1
    basis = BasisDescriptor(tuple(rho.basis.factors[i] for i in keep))
    return DensityOperator(basis, reduced.reshape(d, d))
