"""Dense complex operator algebra on truncated multi-mode Fock spaces.

Basis ordering is row-major over mode occupations: for two modes with
truncations (k_a, k_b) the product state |n_a n_b> sits at index
n_a * k_b + n_b.  All matrices are dense complex128.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import prod

import numpy as np

# Tolerances for a physically valid density matrix.  Hermiticity is checked
# element-wise, trace and positivity carry the looser bound because they
# accumulate roundoff over long integrations.
HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-8
POSITIVITY_TOL = 1e-8


def _readonly(matrix: np.ndarray) -> np.ndarray:
    out = np.array(matrix, dtype=complex)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ModeSpace:
    """Per-mode truncation levels and the resulting tensor-product dimension."""

    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(k) for k in self.dims)
        if len(dims) == 0:
            raise ValueError("ModeSpace needs at least one mode")
        if any(k < 2 for k in dims):
            raise ValueError(f"every truncation must be >= 2, got {dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def total_dim(self) -> int:
        return prod(self.dims)

    @property
    def n_modes(self) -> int:
        return len(self.dims)

    def occupations(self) -> np.ndarray:
        """All basis occupations as an (total_dim, n_modes) integer array, basis order."""
        grids = np.indices(self.dims).reshape(self.n_modes, -1)
        return grids.T


@dataclass(frozen=True, eq=False)
class Operator:
    """Dense operator on the tensor-product space."""

    space: ModeSpace
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        d = self.space.total_dim
        if m.shape != (d, d):
            raise ValueError(f"operator matrix must be {d}x{d}, got {m.shape}")
        object.__setattr__(self, "matrix", _readonly(m))

    def dagger(self) -> "Operator":
        return Operator(self.space, self.matrix.conj().T)


@dataclass(frozen=True)
class StateReport:
    """Diagnostics of a candidate density matrix against the validity tolerances."""

    hermiticity_defect: float
    trace_defect: float
    min_eigenvalue: float

    @property
    def hermitian_ok(self) -> bool:
        return self.hermiticity_defect <= HERMITICITY_TOL

    @property
    def trace_ok(self) -> bool:
        return self.trace_defect <= TRACE_TOL

    @property
    def positive_ok(self) -> bool:
        return self.min_eigenvalue >= -POSITIVITY_TOL

    @property
    def is_valid(self) -> bool:
        return self.hermitian_ok and self.trace_ok and self.positive_ok


def validate_state(matrix: np.ndarray) -> StateReport:
    """Report Hermiticity, trace and positivity defects of a square matrix.

    Reporting only; never raises on an invalid state.
    """
    m = np.asarray(matrix, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    herm = float(np.max(np.abs(m - m.conj().T)))
    trace = float(abs(m.trace() - 1.0))
    # eigvalsh needs an exactly Hermitian input; symmetrize first
    min_eig = float(np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min())
    return StateReport(herm, trace, min_eig)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, unit-trace, positive-semidefinite state of the coupled system."""

    space: ModeSpace
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        d = self.space.total_dim
        if m.shape != (d, d):
            raise ValueError(f"density matrix must be {d}x{d}, got {m.shape}")
        report = validate_state(m)
        if not report.is_valid:
            raise ValueError(
                "invalid density matrix: "
                f"hermiticity defect {report.hermiticity_defect:.3e}, "
                f"trace defect {report.trace_defect:.3e}, "
                f"min eigenvalue {report.min_eigenvalue:.3e}"
            )
        object.__setattr__(self, "matrix", _readonly(m))


def annihilation(k: int) -> Operator:
    """Single-mode annihilation operator on the lowest k Fock levels."""
    if k < 2:
        raise ValueError(f"truncation must be >= 2, got {k}")
    m = np.diag(np.sqrt(np.arange(1.0, k)), k=1).astype(complex)
    return Operator(ModeSpace((k,)), m)


def creation(k: int) -> Operator:
    """Single-mode creation operator, the adjoint of annihilation."""
    return annihilation(k).dagger()


def number(k: int) -> Operator:
    """Single-mode photon-number operator diag(0, 1, ..., k-1)."""
    if k < 2:
        raise ValueError(f"truncation must be >= 2, got {k}")
    return Operator(ModeSpace((k,)), np.diag(np.arange(k, dtype=float)).astype(complex))


def identity(space: ModeSpace) -> Operator:
    return Operator(space, np.eye(space.total_dim, dtype=complex))


def embed(op: Operator, mode_index: int, space: ModeSpace) -> Operator:
    """Embed a single-mode operator into the product space.

    Kronecker product with identities on every other mode; mode 0 is the
    leftmost tensor factor.
    """
    if not 0 <= mode_index < space.n_modes:
        raise ValueError(f"mode index {mode_index} out of range for {space.n_modes} modes")
    k = space.dims[mode_index]
    if op.space.dims != (k,):
        raise ValueError(
            f"operator dimension {op.space.dims} does not match mode {mode_index} "
            f"truncation {k}"
        )
    out = np.eye(1, dtype=complex)
    for m, d in enumerate(space.dims):
        factor = op.matrix if m == mode_index else np.eye(d, dtype=complex)
        out = np.kron(out, factor)
    return Operator(space, out)


def expectation(op: Operator, rho: DensityMatrix) -> complex:
    """Tr(op . rho)."""
    if op.space != rho.space:
        raise ValueError("operator and state live on different spaces")
    return complex(np.einsum("ij,ji->", op.matrix, rho.matrix))


def basis_index(occupations: tuple[int, ...], space: ModeSpace) -> int:
    """Row-major index of the basis state with the given per-mode occupations."""
    occ = tuple(int(n) for n in occupations)
    if len(occ) != space.n_modes:
        raise ValueError(f"expected {space.n_modes} occupations, got {len(occ)}")
    for n, k in zip(occ, space.dims):
        if not 0 <= n < k:
            raise ValueError(f"occupation {occ} outside truncation {space.dims}")
    return int(np.ravel_multi_index(occ, space.dims))


def basis_projector(occupations: tuple[int, ...], space: ModeSpace) -> Operator:
    """Rank-1 projector |n_1 ... n_M><n_1 ... n_M|."""
    idx = basis_index(occupations, space)
    m = np.zeros((space.total_dim, space.total_dim), dtype=complex)
    m[idx, idx] = 1.0
    return Operator(space, m)


def vacuum_state(space: ModeSpace) -> DensityMatrix:
    """All modes in their ground state."""
    m = np.zeros((space.total_dim, space.total_dim), dtype=complex)
    m[0, 0] = 1.0
    return DensityMatrix(space, m)
