"""Simulator for lattice particles self-organising through a lossy cavity mode."""

__version__ = "0.1.0"

from .hilbert import (BasisDescriptor, BHOccupation, DensityOperator, FockSpace, LinOp,
                      MomentumModes, StateVector, SymmetricMomentumPair)
from .lattice import ModelParams, WannierPair, build_full_hamiltonian, wannier_states
from .bh import BHParams, bh_states, build_bh_hamiltonian
from .dynamics import (cavity_decay, mcwf_ensemble, mcwf_trajectory, me_evolve,
                       steady_field_amplitude, steady_state)
from .analysis import mean_kx, organization_weight, relaxation_time

__all__ = [
    "__version__", "BasisDescriptor", "BHOccupation", "DensityOperator", "FockSpace",
    "LinOp", "MomentumModes", "StateVector", "SymmetricMomentumPair", "ModelParams",
    "WannierPair", "build_full_hamiltonian", "wannier_states", "BHParams", "bh_states",
    "build_bh_hamiltonian", "cavity_decay", "mcwf_ensemble", "mcwf_trajectory",
    "me_evolve", "steady_field_amplitude", "steady_state", "mean_kx",
    "organization_weight", "relaxation_time",
]
