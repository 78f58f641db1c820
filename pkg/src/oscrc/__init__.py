"""Coupled driven-dissipative quantum oscillators as a reservoir computer."""

from .fock import (
    DensityMatrix,
    ModeSpace,
    Operator,
    StateReport,
    annihilation,
    basis_index,
    basis_projector,
    creation,
    embed,
    expectation,
    identity,
    number,
    vacuum_state,
    validate_state,
)
from .lindblad import (
    IntegratorConfig,
    InvariantSummary,
    InvariantViolationError,
    LeakageError,
    SystemSpec,
    Trajectory,
    build_collapse,
    build_hamiltonian,
    dissipator,
    liouvillian_matrix,
    occupation_probabilities,
    photon_numbers,
    propagate,
    rhs,
    unvectorize,
    vectorize,
)
from .reservoir import (
    DegenerateTargetError,
    EncodingSpec,
    MemoryCapacities,
    collect_features,
    default_watched_states,
    encode_input,
    memory_capacity,
    nonlinearity_score,
    predict,
    pseudo_inverse,
    train_readout,
)

__version__ = "0.1.0"
