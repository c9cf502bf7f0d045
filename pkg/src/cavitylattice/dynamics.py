"""
Open-system time evolution: quantum trajectories and master equation.

The master equation is

    d rho/dt = -i[H, rho] + sum_k (c_k rho c_k^+ - {c_k^+ c_k, rho}/2)

which for the single cavity channel c = sqrt(2 kappa) a reproduces
kappa (2 a rho a^+ - {a^+ a, rho}).

Trajectories use the waiting-time formulation: the unnormalized state evolves
under H_eff = H - (i/2) sum c^+ c until its squared norm falls to a uniform
random threshold, the crossing time is located by safeguarded Newton
bisection, a channel is applied and the state renormalized.  Small systems
are propagated exactly through the eigendecomposition of H_eff; fixed-step
RK4 is available for large ones.

Random streams are Philox counter-based generators keyed by
(seed, trajectory index), so any trajectory can be regenerated alone.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .hilbert import (BasisDescriptor, DensityOperator, FockSpace, LinOp,
                      StateVector, destroy, identity, kron)

__all__ = [
    "RNG_STREAM", "SimulationError", "DegenerateSteadyStateWarning",
    "JumpChannel", "cavity_decay", "TrajectoryResult", "EnsembleResult",
    "MESolution", "trajectory_rng", "mcwf_trajectory", "mcwf_ensemble",
    "liouvillian", "liouvillian_apply", "me_evolve", "steady_state",
    "steady_field_amplitude", "rk4_step_size",
]

log = logging.getLogger(__name__)

RNG_STREAM = "numpy.random.Philox(key=[seed, traj_index])"


class SimulationError(RuntimeError):
    """Integration failure: non-finite values, norm growth or trace drift."""


class DegenerateSteadyStateWarning(RuntimeWarning):
    """The Liouvillian kernel is (numerically) more than one-dimensional."""


# --------------------------------------------------------------------------
# channels
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class JumpChannel:
    op: LinOp
    rate_op: LinOp

    @classmethod
    def from_op(cls, op: LinOp) -> "JumpChannel":
        r = op.dag() @ op
        return cls(op, LinOp(r.basis, r.matrix, hermitian=True))


def _embed(op: LinOp, basis: BasisDescriptor, index: int) -> LinOp:
    """Place a single-factor operator at position ``index`` of ``basis``."""
    out = None
    for i, f in enumerate(basis.factors):
        piece = op if i == index else identity(BasisDescriptor.of(f))
        out = piece if out is None else kron(out, piece)
    return out


def cavity_decay(kappa: float, basis: BasisDescriptor) -> JumpChannel:
    """sqrt(2 kappa) a acting on the Fock factor of ``basis``."""
    idx = basis.index_of(FockSpace)
    a = _embed(destroy(basis.factors[idx].n_max), basis, idx)
    return JumpChannel.from_op(math.sqrt(2 * kappa) * a)


def steady_field_amplitude(x_or_site: Union[float, str] = "right", params=None, *,
                           V0: Optional[float] = None, U0: Optional[float] = None,
                           kappa: Optional[float] = None, delta_c: Optional[float] = None,
                           N: Optional[int] = None, sin_value: Optional[float] = None) -> complex:
    """Coherent cavity amplitude radiated by a point particle at Kx.

        alpha(x) = sqrt(U0 V0) sin(Kx) / (N U0 - DeltaC - i kappa)

    ``x_or_site`` is Kx or ``"right"`` / ``"left"`` (Kx = +-pi/2).  The
    denominator carries the N-particle dispersive shift, so the resonance
    rule DeltaC - N U0 = -kappa gives sqrt(U0 V0) sin(Kx) / (kappa (1 - i))
    for every N.  ``sin_value`` overrides sin(Kx), e.g. with a Wannier
    expectation value.
    """
    if params is not None:
        V0 = params.V0 if V0 is None else V0
        U0 = params.U0 if U0 is None else U0
        kappa = params.kappa if kappa is None else kappa
        delta_c = params.delta_c if delta_c is None else delta_c
        N = params.N if N is None else N
    N = 1 if N is None else N
    if kappa is None or kappa <= 0:
        raise ValueError("kappa must be positive")
    if delta_c is None:
        delta_c = N * U0 - kappa
    if sin_value is None:
        if isinstance(x_or_site, str):
            kx = {"right": math.pi / 2, "left": -math.pi / 2}[x_or_site]
        else:
            kx = float(x_or_site)
        sin_value = math.sin(kx)
    if U0 * V0 < 0:
        raise ValueError("U0*V0 must be non-negative")
    # the Heisenberg equation gives -sign(U0) sqrt(U0 V0); equal for U0 < 0
    g = float(np.sign(U0)) * math.sqrt(U0 * V0)
    return complex(-g * sin_value / (N * U0 - delta_c - 1j * kappa))


# --------------------------------------------------------------------------
# results
# --------------------------------------------------------------------------

@dataclass
class TrajectoryResult:
    times: np.ndarray
    observables: dict
    jump_times: np.ndarray
    seed: int
    traj_index: int
    norm_deficit: np.ndarray = None
    jump_channels: np.ndarray = None

    @property
    def n_jumps(self) -> int:
        return len(self.jump_times)


@dataclass
class EnsembleResult:
    times: np.ndarray
    mean: dict
    stderr: dict
    n_traj: int
    n_jumps_total: int
    jump_counts: np.ndarray
    seed: int
    trajectories: Optional[list] = None


@dataclass
class MESolution:
    times: np.ndarray
    observables: dict
    states: Optional[list]
    trace_drift: float
    final: DensityOperator


# --------------------------------------------------------------------------
# propagators
# --------------------------------------------------------------------------

def _heff(H: LinOp, channels: Sequence[JumpChannel]) -> sp.csr_matrix:
    m = H.csr().astype(complex)
    for c in channels:
        m = m - 0.5j * c.rate_op.csr()
    return m.tocsr()


def rk4_step_size(H: LinOp, channels: Sequence[JumpChannel]) -> float:
    """0.01 / omega_fast, omega_fast a spectral-radius bound of H_eff."""
    m = _heff(H, channels)
    radius = float(np.max(np.asarray(abs(m).sum(axis=1)).ravel())) if m.nnz else 1.0
    return 0.01 / max(radius, 1e-12)


class _EigenPropagator:
    """exp(-i H_eff s) through a dense eigendecomposition."""

    def __init__(self, heff: np.ndarray, cond_limit: float = 1e10):
        w, V = np.linalg.eig(heff)
        Vinv = np.linalg.inv(V)
        cond = np.linalg.norm(V, 2) * np.linalg.norm(Vinv, 2)
        scale = max(np.linalg.norm(heff, 1), 1.0)
        resid = np.linalg.norm(V @ (w[:, None] * Vinv) - heff, 1) / scale
        if not np.isfinite(cond) or cond > cond_limit or resid > 1e-9:
            raise np.linalg.LinAlgError(
                f"ill-conditioned H_eff eigenbasis (cond={cond:.3g}, resid={resid:.3g})")
        self.w, self.V, self.Vinv = w, V, Vinv
        self._cache = {}

    def step_matrix(self, h: float) -> np.ndarray:
        key = float(h)
        P = self._cache.get(key)
        if P is None:
            P = self.V @ (np.exp(-1j * self.w * h)[:, None] * self.Vinv)
            self._cache[key] = P
        return P

    def coeffs(self, psi: np.ndarray) -> np.ndarray:
        return self.Vinv @ psi

    def from_coeffs(self, C: np.ndarray, s: np.ndarray) -> np.ndarray:
        """States at offsets ``s`` (one per column of C)."""
        return self.V @ (np.exp(-1j * np.outer(self.w, s)) * C)


class _RK4Propagator:
    """Fixed-step classical RK4 on the sparse H_eff."""

    def __init__(self, heff: sp.csr_matrix, dt: float):
        self.A = (-1j * heff).tocsr()
        self.dt = dt

    def _rk4(self, Y: np.ndarray, h: float) -> np.ndarray:
        A = self.A
        k1 = A @ Y
        k2 = A @ (Y + 0.5 * h * k1)
        k3 = A @ (Y + 0.5 * h * k2)
        k4 = A @ (Y + h * k3)
        return Y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    def evolve(self, Y: np.ndarray, s: np.ndarray) -> np.ndarray:
        out = np.empty_like(Y)
        for j in range(Y.shape[1]):
            n = max(1, math.ceil(s[j] / self.dt - 1e-9)) if s[j] > 0 else 0
            y = Y[:, j:j + 1]
            for _ in range(n):
                y = self._rk4(y, s[j] / n)
            out[:, j] = y[:, 0]
        return out

    def coeffs(self, psi):
        return psi

    def from_coeffs(self, C, s):
        return self.evolve(C, np.asarray(s, dtype=float))


def _make_propagator(H: LinOp, channels, method: str, dt: Optional[float]):
    heff = _heff(H, channels)
    if method == "auto":
        method = "exact" if heff.shape[0] <= 3000 else "rk4"
    if method == "exact":
        try:
            return _EigenPropagator(heff.toarray())
        except np.linalg.LinAlgError as exc:
            log.warning("falling back to RK4: %s", exc)
            method = "rk4"
    if method == "rk4":
        return _RK4Propagator(heff, dt if dt is not None else rk4_step_size(H, channels))
    raise ValueError(f"unknown propagation method {method!r}")


# --------------------------------------------------------------------------
# trajectories
# --------------------------------------------------------------------------

def trajectory_rng(seed: int, traj_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[int(seed), int(traj_index)]))


def _colnorm2(Y: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->j", Y.conj(), Y).real


def _expect_cols(ops: Sequence[sp.csr_matrix], Y: np.ndarray, n2: np.ndarray) -> list:
    return [np.einsum("ij,ij->j", Y.conj(), op @ Y).real / n2 for op in ops]


def _locate_crossing(prop, C, target, hi, rates, rtol):
    """Offsets s in (0, hi] where |psi(s)|^2 = target, vectorized over columns.

    ``rates`` is sum c^+ c; d|psi|^2/ds = -<psi|rates|psi>.  Newton steps are
    accepted only inside the current bracket, otherwise the bracket is bisected.
    """
    lo = np.zeros_like(hi)
    up = hi.copy()
    s = 0.5 * (lo + up)
    tol = rtol * np.maximum(hi, 1e-300)
    for _ in range(200):
        Y = prop.from_coeffs(C, s)
        f = _colnorm2(Y) - target
        fp = -np.einsum("ij,ij->j", Y.conj(), rates @ Y).real
        above = f > 0
        lo = np.where(above, s, lo)
        up = np.where(above, up, s)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = s - f / fp
        ok = np.isfinite(newton) & (newton > lo) & (newton < up)
        s_new = np.where(ok, newton, 0.5 * (lo + up))
        done = (np.abs(s_new - s) <= tol) | (up - lo <= tol)
        s = s_new
        if done.all():
            break
    else:
        raise SimulationError("jump-time search did not converge")
    return s, prop.from_coeffs(C, s)


def _run_batch(prop, ops, rates, jump_ops, psi0, t_grid, rngs, rtol=1e-6,
               norm_tol=1e-9):
    """Propagate a batch of trajectories in lockstep over ``t_grid``."""
    B = len(rngs)
    K = len(t_grid)
    Psi = np.repeat(psi0[:, None], B, axis=1).astype(complex)
    r = np.array([g.random() for g in rngs])
    obs = np.zeros((len(ops), K, B))
    deficit = np.zeros((K, B))
    jumps = [[] for _ in range(B)]
    chans = [[] for _ in range(B)]
    n2 = _colnorm2(Psi)
    for i, v in enumerate(_expect_cols(ops, Psi, n2)):
        obs[i, 0] = v
    for k in range(K - 1):
        t0 = t_grid[k]
        h = t_grid[k + 1] - t_grid[k]
        if isinstance(prop, _EigenPropagator):
            Phi = prop.step_matrix(h) @ Psi
        else:
            Phi = prop.evolve(Psi, np.full(B, h))
        n2_new = _colnorm2(Phi)
        if not np.all(np.isfinite(n2_new)):
            raise SimulationError(f"non-finite state at t={t_grid[k + 1]}")
        if np.any(n2_new > _colnorm2(Psi) * (1 + norm_tol) + norm_tol):
            raise SimulationError(f"norm increased during step ending at t={t_grid[k + 1]}")
        idx = np.flatnonzero(n2_new <= r)
        if idx.size:
            start = Psi[:, idx]
            offset = np.zeros(idx.size)
            active = np.ones(idx.size, bool)
            while active.any():
                sel = np.flatnonzero(active)
                cols = idx[sel]
                C = prop.coeffs(start[:, sel])
                remaining = h - offset[sel]
                s, Y = _locate_crossing(prop, C, r[cols], remaining, rates, rtol)
                for j, col in enumerate(cols):
                    y = Y[:, j]
                    weights = np.array([np.linalg.norm(c @ y) ** 2 for c in jump_ops])
                    g = rngs[col]
                    if len(jump_ops) == 1:
                        ch = 0
                    else:
                        ch = int(np.searchsorted(np.cumsum(weights) / weights.sum(), g.random()))
                    yj = jump_ops[ch] @ y
                    nj = np.linalg.norm(yj)
                    if nj == 0 or not np.isfinite(nj):
                        raise SimulationError("jump produced a null state")
                    start[:, sel[j]] = yj / nj
                    jumps[col].append(t0 + offset[sel[j]] + s[j])
                    chans[col].append(ch)
                    r[col] = g.random()
                offset[sel] += s
                rem = h - offset[sel]
                Cn = prop.coeffs(start[:, sel])
                Yend = prop.from_coeffs(Cn, rem)
                still = _colnorm2(Yend) <= r[cols]
                Phi[:, cols] = Yend
                active[sel[~still]] = False
            n2_new = _colnorm2(Phi)
        Psi = Phi
        deficit[k + 1] = 1.0 - n2_new
        for i, v in enumerate(_expect_cols(ops, Psi, n2_new)):
            obs[i, k + 1] = v
        if np.any(n2_new < 1e-200):
            raise SimulationError("state norm underflow")
    return obs, deficit, jumps, chans


def _prepare(H, channels, psi0, t_grid, observables):
    if isinstance(channels, JumpChannel):
        channels = [channels]
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size < 1 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be strictly increasing")
    if psi0.basis != H.basis:
        raise ValueError("initial state and Hamiltonian bases differ")
    if abs(psi0.norm() - 1.0) > 1e-10:
        raise ValueError("initial state must be normalized")
    names = list(observables or {})
    ops = [observables[n].csr() for n in names]
    rates = sum((c.rate_op.csr() for c in channels), sp.csr_matrix(H.matrix.shape, dtype=complex))
    jump_ops = [c.op.csr() for c in channels]
    return list(channels), t_grid, names, ops, rates.tocsr(), jump_ops


def mcwf_trajectory(H: LinOp, channels, psi0: StateVector, t_grid, seed: int = 0,
                    traj_index: int = 0, observables: Optional[Mapping[str, LinOp]] = None,
                    method: str = "auto", dt: Optional[float] = None) -> TrajectoryResult:
    """One Monte Carlo wave-function trajectory.

    Observables are recorded on ``t_grid`` from the renormalized state.  The
    result depends only on ``(seed, traj_index)`` and the inputs.
    """
    channels, t_grid, names, ops, rates, jump_ops = _prepare(H, channels, psi0, t_grid, observables)
    prop = _make_propagator(H, channels, method, dt)
    obs, deficit, jumps, chans = _run_batch(
        prop, ops, rates, jump_ops, psi0.amplitudes, t_grid, [trajectory_rng(seed, traj_index)])
    return TrajectoryResult(
        times=t_grid, observables={n: obs[i, :, 0] for i, n in enumerate(names)},
        jump_times=np.array(jumps[0]), seed=seed, traj_index=traj_index,
        norm_deficit=deficit[:, 0], jump_channels=np.array(chans[0], dtype=int))


def _ensemble_chunk(args):
    H, channels, psi0, t_grid, observables, seed, first, count, method, dt = args
    channels, t_grid, names, ops, rates, jump_ops = _prepare(H, channels, psi0, t_grid, observables)
    prop = _make_propagator(H, channels, method, dt)
    rngs = [trajectory_rng(seed, first + j) for j in range(count)]
    try:
        obs, deficit, jumps, chans = _run_batch(prop, ops, rates, jump_ops, psi0.amplitudes, t_grid, rngs)
    except SimulationError as exc:
        raise SimulationError(f"trajectories {first}..{first + count - 1}: {exc}") from exc
    return names, obs, jumps


def mcwf_ensemble(H: LinOp, channels, psi0: StateVector, t_grid, n_traj: int, seed: int = 0,
                  observables: Optional[Mapping[str, LinOp]] = None, method: str = "auto",
                  dt: Optional[float] = None, batch_size: int = 128, workers: int = 1,
                  keep_trajectories: bool = False) -> EnsembleResult:
    """Mean and standard error over trajectories 0..n_traj-1.

    Trajectories are grouped into fixed batches of ``batch_size`` indices and
    reduced in index order, so results do not depend on ``workers``.
    The standard error is the sample standard deviation over sqrt(n_traj),
    and zero for a single trajectory.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    chunks = [(H, channels, psi0, t_grid, observables, seed, first,
               min(batch_size, n_traj - first), method, dt)
              for first in range(0, n_traj, batch_size)]
    if workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_ensemble_chunk, chunks))
    else:
        results = [_ensemble_chunk(c) for c in chunks]
    names = results[0][0]
    series = np.concatenate([r[1] for r in results], axis=2)
    jumps = [j for r in results for j in r[2]]
    mean, stderr = {}, {}
    for i, n in enumerate(names):
        x = series[i]
        mean[n] = x.mean(axis=1)
        stderr[n] = (x.std(axis=1, ddof=1) / math.sqrt(n_traj)) if n_traj > 1 else np.zeros(x.shape[0])
    counts = np.array([len(j) for j in jumps], dtype=int)
    trajs = None
    if keep_trajectories:
        trajs = [TrajectoryResult(times=np.asarray(t_grid, float),
                                  observables={n: series[i, :, j] for i, n in enumerate(names)},
                                  jump_times=np.array(jumps[j]), seed=seed, traj_index=j)
                 for j in range(n_traj)]
    return EnsembleResult(times=np.asarray(t_grid, float), mean=mean, stderr=stderr,
                          n_traj=n_traj, n_jumps_total=int(counts.sum()),
                          jump_counts=counts, seed=seed, trajectories=trajs)


# --------------------------------------------------------------------------
# master equation
# --------------------------------------------------------------------------

def liouvillian(H: LinOp, channels) -> sp.csr_matrix:
    """Superoperator on column-stacked vec(rho): vec(A rho B) = (B^T kron A) vec(rho)."""
    if isinstance(channels, JumpChannel):
        channels = [channels]
    h = H.csr()
    eye = sp.identity(h.shape[0], dtype=complex, format="csr")
    L = -1j * (sp.kron(eye, h) - sp.kron(h.T, eye))
    for c in channels:
        op, r = c.op.csr(), c.rate_op.csr()
        L = L + sp.kron(op.conj(), op) - 0.5 * (sp.kron(eye, r) + sp.kron(r.T, eye))
    return L.tocsr()


def _rhs(h, cs, rs, rho):
    out = -1j * (h @ rho - (h.T @ rho.T).T)
    for c, r in zip(cs, rs):
        out += (c @ (c @ rho.conj().T).conj().T) - 0.5 * (r @ rho + (r.T @ rho.T).T)
    return out


def liouvillian_apply(H: LinOp, channels, rho: DensityOperator) -> DensityOperator:
    """d rho/dt as a (traceless) operator on the same basis."""
    if isinstance(channels, JumpChannel):
        channels = [channels]
    if rho.basis != H.basis:
        raise ValueError("density operator and Hamiltonian bases differ")
    cs = [c.op.csr() for c in channels]
    rs = [c.rate_op.csr() for c in channels]
    return DensityOperator(rho.basis, _rhs(H.csr(), cs, rs, rho.matrix))


def _as_density(rho0) -> DensityOperator:
    return rho0.projector() if isinstance(rho0, StateVector) else rho0


def me_evolve(H: LinOp, channels, rho0, t_grid, observables: Optional[Mapping[str, LinOp]] = None,
              method: str = "auto", dt: Optional[float] = None, store_states: bool = False,
              trace_tol: float = 1e-8) -> MESolution:
    """Integrate the master equation and record observables on ``t_grid``.

    Methods: ``expm`` (exact propagation of the vectorized Liouvillian, dense
    propagator for small systems, Krylov action otherwise) and ``rk4``
    (classical fixed step on the operator form).
    """
    if isinstance(channels, JumpChannel):
        channels = [channels]
    rho0 = _as_density(rho0)
    if rho0.basis != H.basis:
        raise ValueError("density operator and Hamiltonian bases differ")
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be strictly increasing")
    names = list(observables or {})
    ops = [observables[n].csr() for n in names]
    D = H.basis.dim
    if method == "auto":
        method = "expm"
    obs = np.zeros((len(names), t_grid.size))
    states = [] if store_states else None
    tr0 = np.trace(rho0.matrix).real
    drift = 0.0

    def record(k, rho):
        nonlocal drift
        if not np.all(np.isfinite(rho)):
            raise SimulationError(f"non-finite density matrix at t={t_grid[k]}")
        drift = max(drift, abs(np.trace(rho) - tr0))
        for i, op in enumerate(ops):
            obs[i, k] = np.sum(op.multiply(rho.T)).real
        if store_states:
            states.append(DensityOperator(H.basis, rho.copy()))

    rho = rho0.matrix.copy()
    record(0, rho)
    if method == "expm":
        L = liouvillian(H, channels)
        v = rho.reshape(-1, order="F")
        steps = np.diff(t_grid)
        uniform = steps.size and np.allclose(steps, steps[0], rtol=1e-12, atol=0)
        if D * D <= 1600:
            Ld = L.toarray()
            cache = {}
            for k, h in enumerate(steps):
                key = float(steps[0]) if uniform else float(h)
                P = cache.get(key)
                if P is None:
                    P = cache[key] = sla.expm(Ld * key)
                v = P @ v
                record(k + 1, v.reshape(D, D, order="F"))
        elif uniform:
            vs = spla.expm_multiply(L.tocsc(), v, start=t_grid[0], stop=t_grid[-1],
                                    num=t_grid.size, endpoint=True)
            for k in range(1, t_grid.size):
                record(k, vs[k].reshape(D, D, order="F"))
            v = vs[-1]
        else:
            for k, h in enumerate(steps):
                v = spla.expm_multiply(L.tocsc() * h, v)
                record(k + 1, v.reshape(D, D, order="F"))
        rho = v.reshape(D, D, order="F")
    elif method == "rk4":
        h_ = H.csr()
        cs = [c.op.csr() for c in channels]
        rs = [c.rate_op.csr() for c in channels]
        step = dt if dt is not None else rk4_step_size(H, channels)
        for k in range(t_grid.size - 1):
            span = t_grid[k + 1] - t_grid[k]
            n = max(1, math.ceil(span / step - 1e-9))
            hh = span / n
            for _ in range(n):
                k1 = _rhs(h_, cs, rs, rho)
                k2 = _rhs(h_, cs, rs, rho + 0.5 * hh * k1)
                k3 = _rhs(h_, cs, rs, rho + 0.5 * hh * k2)
                k4 = _rhs(h_, cs, rs, rho + hh * k3)
                rho = rho + (hh / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
            record(k + 1, rho)
    else:
        raise ValueError(f"unknown method {method!r}")
    if drift > trace_tol:
        raise SimulationError(f"trace drift {drift:.3g} exceeds {trace_tol:g}")
    return MESolution(times=t_grid, observables={n: obs[i] for i, n in enumerate(names)},
                      states=states, trace_drift=float(drift),
                      final=DensityOperator(H.basis, rho))


# --------------------------------------------------------------------------
# steady state
# --------------------------------------------------------------------------

def _kernel_gap(L: sp.csr_matrix) -> float:
    """Second-smallest singular value (dense) or eigenvalue modulus (sparse)."""
    n = L.shape[0]
    if n <= 1600:
        sv = sla.svdvals(L.toarray())
        return float(np.sort(sv)[1])
    shift = -1e-7
    vals = spla.eigs(L.tocsc(), k=3, sigma=shift, which="LM", return_eigenvectors=False)
    return float(np.sort(np.abs(vals))[1])


def _finish(basis, vec, D) -> DensityOperator:
    rho = vec.reshape(D, D, order="F")
    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / np.trace(rho).real
    return DensityOperator(basis, rho)


def steady_state(H: LinOp, channels, method: str = "auto", rho0=None,
                 gap_tol: float = 1e-10, relax_step: float = 1e6,
                 tol: float = 1e-8, max_iter: int = 500) -> DensityOperator:
    """Stationary state of the master equation.

    ``linear`` solves L rho = 0 with the trace row replacing the first
    equation.  ``relax`` integrates from ``rho0`` (default: maximally mixed)
    with L-stable implicit Euler steps of length ``relax_step`` until
    |L rho|_1 < ``tol``; it returns the long-time limit of that initial state
    even when the kernel is degenerate.  A degenerate kernel (gap below
    ``gap_tol``) triggers :class:`DegenerateSteadyStateWarning` and switches
    ``linear`` to ``relax``.
    """
    if isinstance(channels, JumpChannel):
        channels = [channels]
    D = H.basis.dim
    L = liouvillian(H, channels)
    if method == "auto":
        method = "linear" if D * D <= 40000 else "relax"
    if method not in ("linear", "relax"):
        raise ValueError(f"unknown method {method!r}")
    gap = None
    if method == "linear" or D * D <= 40000:
        gap = _kernel_gap(L)
        if gap < gap_tol:
            warnings.warn(f"Liouvillian kernel is degenerate (gap {gap:.3g} < {gap_tol:g})",
                          DegenerateSteadyStateWarning, stacklevel=2)
            # the linear system is singular; fall back to the limit of rho0
            method = "relax"
    if method == "linear":
        A = L.tolil()
        A[0, :] = np.eye(D).reshape(1, -1, order="F")
        b = np.zeros(D * D, dtype=complex)
        b[0] = 1.0
        vec = spla.spsolve(A.tocsc(), b)
        return _finish(H.basis, vec, D)
    if rho0 is None:
        v = (np.eye(D, dtype=complex) / D).reshape(-1, order="F")
    else:
        v = _as_density(rho0).matrix.reshape(-1, order="F").astype(complex)
    lu = spla.splu((sp.identity(D * D, dtype=complex, format="csc") - relax_step * L).tocsc())
    for _ in range(max_iter):
        v = lu.solve(v)
        v = v / np.trace(v.reshape(D, D, order="F"))
        if np.abs(L @ v).sum() < tol:
            break
    else:
        raise SimulationError("implicit relaxation did not reach the steady state")
    return _finish(H.basis, v, D)
