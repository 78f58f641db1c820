"""Lindblad master-equation engine for two coupled driven-dissipative oscillators.

Physical rates are angular (rad/s) throughout this module; the config layer
converts ordinary frequencies (Hz) by multiplying with 2*pi.  Drive
amplitudes are in sqrt(Hz) and enter the Hamiltonian as eps*sqrt(2*kappa).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .fock import (
    DensityMatrix,
    ModeSpace,
    Operator,
    annihilation,
    basis_index,
    embed,
    validate_state,
    HERMITICITY_TOL,
    TRACE_TOL,
    POSITIVITY_TOL,
)

TWO_PI = 2.0 * math.pi

# Tolerance for stored probabilities and photon numbers.
PROBABILITY_TOL = 1e-8

COLLAPSE_MODES = ("combined", "independent")
FRAMES = ("lab", "rotating")
METHODS = ("rk4_fixed", "expm_oracle")


class LeakageError(RuntimeError):
    """Population on a top truncation level exceeded the configured tolerance."""


class InvariantViolationError(RuntimeError):
    """A propagated state broke a validity tolerance mid-run."""


@dataclass(frozen=True)
class SystemSpec:
    """Physical parameters of the coupled two-oscillator system (angular units)."""

    omega_a: float
    omega_b: float
    g: float
    kappa_a: float
    kappa_b: float
    eps_a: float
    eps_b: float
    collapse_mode: str = "combined"
    frame: str = "lab"
    delta_a: float = 0.0
    delta_b: float = 0.0

    def __post_init__(self):
        for name in ("g", "kappa_a", "kappa_b", "eps_a", "eps_b"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.frame not in FRAMES:
            raise ValueError(f"frame must be one of {FRAMES}, got {self.frame!r}")
        if self.collapse_mode not in COLLAPSE_MODES:
            raise ValueError(
                f"collapse_mode must be one of {COLLAPSE_MODES}, got {self.collapse_mode!r}"
            )
        if self.frame == "lab" and (self.omega_a <= 0 or self.omega_b <= 0):
            raise ValueError("mode frequencies must be positive in the lab frame")

    @classmethod
    def from_hz(
        cls,
        omega_a: float,
        omega_b: float,
        g: float,
        kappa_a: float,
        kappa_b: float,
        eps_a: float,
        eps_b: float,
        collapse_mode: str = "combined",
        frame: str = "lab",
        delta_a: float = 0.0,
        delta_b: float = 0.0,
    ) -> "SystemSpec":
        """Build a spec from ordinary frequencies in Hz (amplitudes stay sqrt(Hz))."""
        return cls(
            omega_a=TWO_PI * omega_a,
            omega_b=TWO_PI * omega_b,
            g=TWO_PI * g,
            kappa_a=TWO_PI * kappa_a,
            kappa_b=TWO_PI * kappa_b,
            eps_a=eps_a,
            eps_b=eps_b,
            collapse_mode=collapse_mode,
            frame=frame,
            delta_a=TWO_PI * delta_a,
            delta_b=TWO_PI * delta_b,
        )


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step integration and sampling schedule."""

    dt: float = 1e-12
    t_end: float = 100e-9
    sample_interval: float = 2e-9
    method: str = "rk4_fixed"
    leakage_tol: float = 1e-4

    def __post_init__(self):
        if not 0 < self.dt <= self.sample_interval <= self.t_end:
            raise ValueError(
                f"need 0 < dt <= sample_interval <= t_end, got "
                f"dt={self.dt}, sample_interval={self.sample_interval}, t_end={self.t_end}"
            )
        if self.leakage_tol <= 0:
            raise ValueError("leakage_tol must be > 0")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        for whole, part, name in (
            (self.sample_interval, self.dt, "sample_interval/dt"),
            (self.t_end, self.sample_interval, "t_end/sample_interval"),
        ):
            ratio = whole / part
            if abs(ratio - round(ratio)) > 1e-6:
                raise ValueError(f"{name} must be an integer, got {ratio}")

    @property
    def steps_per_sample(self) -> int:
        return round(self.sample_interval / self.dt)

    @property
    def n_samples(self) -> int:
        return round(self.t_end / self.sample_interval)


@dataclass(frozen=True)
class InvariantSummary:
    """Worst-case validity defects observed over the samples of one or more runs."""

    max_trace_defect: float = 0.0
    max_hermiticity_defect: float = 0.0
    min_eigenvalue: float = 1.0
    max_leakage: float = 0.0

    def merged(self, other: "InvariantSummary") -> "InvariantSummary":
        return InvariantSummary(
            max(self.max_trace_defect, other.max_trace_defect),
            max(self.max_hermiticity_defect, other.max_hermiticity_defect),
            min(self.min_eigenvalue, other.min_eigenvalue),
            max(self.max_leakage, other.max_leakage),
        )

    @property
    def within_tolerances(self) -> bool:
        return (
            self.max_trace_defect <= TRACE_TOL
            and self.max_hermiticity_defect <= HERMITICITY_TOL
            and self.min_eigenvalue >= -POSITIVITY_TOL
        )


@dataclass(frozen=True)
class Trajectory:
    """Sampled observables of one propagation plus the final state."""

    times: np.ndarray
    occupations: dict[tuple[int, ...], np.ndarray]
    photon_numbers: np.ndarray  # shape (n_samples, n_modes)
    final_state: DensityMatrix
    checks: InvariantSummary


def mode_operators(space: ModeSpace) -> list[np.ndarray]:
    """Embedded annihilation matrices, one per mode."""
    return [embed(annihilation(k), m, space).matrix for m, k in enumerate(space.dims)]


def build_hamiltonian(spec: SystemSpec, space: ModeSpace) -> Operator:
    """Total Hamiltonian: bare modes, coherent exchange coupling and static drives.

    H = w_a a'a + w_b b'b + g (a b' + a' b)
        + i eps_a sqrt(2 kappa_a) (a - a') + i eps_b sqrt(2 kappa_b) (b - b')

    with hbar = 1.  In the rotating frame the bare frequencies are replaced by
    the detunings.  Constructed term-by-term as X + X^dagger so the result is
    Hermitian to the last bit.
    """
    if space.n_modes != 2:
        raise ValueError(f"the coupled-oscillator Hamiltonian needs 2 modes, got {space.n_modes}")
    a, b = mode_operators(space)
    if spec.frame == "lab":
        w_a, w_b = spec.omega_a, spec.omega_b
    else:
        w_a, w_b = spec.delta_a, spec.delta_b
    occ = space.occupations()
    h = np.diag(w_a * occ[:, 0] + w_b * occ[:, 1]).astype(complex)
    exchange = spec.g * (a @ b.conj().T)
    h += exchange + exchange.conj().T
    for eps, kappa, op in ((spec.eps_a, spec.kappa_a, a), (spec.eps_b, spec.kappa_b, b)):
        drive = 1j * eps * math.sqrt(2.0 * kappa) * op
        h += drive + drive.conj().T
    return Operator(space, h)


def build_collapse(spec: SystemSpec, space: ModeSpace) -> list[Operator]:
    """Dissipation channels: one combined operator (default) or one per mode."""
    if space.n_modes != 2:
        raise ValueError(f"collapse operators are defined for 2 modes, got {space.n_modes}")
    a, b = mode_operators(space)
    ca = math.sqrt(spec.kappa_a) * a
    cb = math.sqrt(spec.kappa_b) * b
    if spec.collapse_mode == "combined":
        return [Operator(space, ca + cb)]
    return [Operator(space, ca), Operator(space, cb)]


def dissipator(c: Operator, rho: DensityMatrix) -> np.ndarray:
    """Lindblad superoperator C rho C' - (1/2){C'C, rho} applied to the state."""
    if c.space != rho.space:
        raise ValueError("collapse operator and state live on different spaces")
    return _dissipator_matrix(c.matrix, rho.matrix)


def _dissipator_matrix(c: np.ndarray, rho: np.ndarray) -> np.ndarray:
    cd = c.conj().T
    cdc = cd @ c
    return c @ rho @ cd - 0.5 * (cdc @ rho + rho @ cdc)


def rhs(h: Operator, collapses: list[Operator], rho: DensityMatrix) -> np.ndarray:
    """Right-hand side of the master equation: -i[H, rho] + sum_C L[C] rho."""
    if h.space != rho.space:
        raise ValueError("Hamiltonian and state live on different spaces")
    out = -1j * (h.matrix @ rho.matrix - rho.matrix @ h.matrix)
    for c in collapses:
        if c.space != rho.space:
            raise ValueError("collapse operator and state live on different spaces")
        out += _dissipator_matrix(c.matrix, rho.matrix)
    return out


def vectorize(rho: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(rho, dtype=complex).reshape(-1, order="F")


def unvectorize(v: np.ndarray, dim: int) -> np.ndarray:
    return np.asarray(v, dtype=complex).reshape((dim, dim), order="F")


def liouvillian_matrix(h: Operator, collapses: list[Operator]) -> np.ndarray:
    """Matrix L with vec(rhs(rho)) = L vec(rho) under column stacking.

    exp(L t) applied to vec(rho0) propagates the state to machine precision and
    serves as the verification oracle for the time stepper.
    """
    hm = h.matrix
    d = hm.shape[0]
    eye = np.eye(d, dtype=complex)
    lv = -1j * (np.kron(eye, hm) - np.kron(hm.T, eye))
    for c in collapses:
        if c.space != h.space:
            raise ValueError("collapse operator and Hamiltonian live on different spaces")
        cm = c.matrix
        cdc = cm.conj().T @ cm
        lv += np.kron(cm.conj(), cm)
        lv -= 0.5 * (np.kron(eye, cdc) + np.kron(cdc.T, eye))
    return lv


def occupation_probabilities(
    rho: DensityMatrix, labels: list[tuple[int, ...]]
) -> np.ndarray:
    """Diagonal matrix elements <n|rho|n> for the requested basis states."""
    idx = [basis_index(lbl, rho.space) for lbl in labels]
    probs = np.real(np.diagonal(rho.matrix))[idx]
    if probs.min() < -PROBABILITY_TOL or probs.max() > 1.0 + PROBABILITY_TOL:
        raise InvariantViolationError(
            f"occupation probability outside [0, 1] tolerance: "
            f"min {probs.min():.3e}, max {probs.max():.3e}"
        )
    return probs


def photon_numbers(rho: DensityMatrix) -> tuple[float, ...]:
    """Mean photon number of every mode, <n_m>."""
    diag = np.real(np.diagonal(rho.matrix))
    occ = rho.space.occupations()
    n = tuple(float(diag @ occ[:, m]) for m in range(rho.space.n_modes))
    if min(n) < -PROBABILITY_TOL:
        raise InvariantViolationError(f"negative photon number: {n}")
    return n


class _Recorder:
    """Accumulates samples and enforces the validity and leakage gates."""

    def __init__(self, space: ModeSpace, cfg: IntegratorConfig, watched: list[tuple[int, ...]]):
        self.space = space
        self.cfg = cfg
        self.watched = list(watched)
        self.watched_idx = np.array([basis_index(w, space) for w in self.watched], dtype=int)
        occ = space.occupations()
        self.number_weights = occ.astype(float)  # (total_dim, n_modes)
        self.top_masks = [occ[:, m] == (k - 1) for m, k in enumerate(space.dims)]
        self.occupations: list[np.ndarray] = []
        self.photons: list[np.ndarray] = []
        self.max_trace = 0.0
        self.max_herm = 0.0
        self.min_eig = 1.0
        self.max_leak = 0.0

    def record(self, rho: np.ndarray, t: float) -> None:
        herm = float(np.max(np.abs(rho - rho.conj().T)))
        diag = np.real(np.diagonal(rho))
        trace = float(abs(diag.sum() - 1.0))
        min_eig = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min())
        self.max_trace = max(self.max_trace, trace)
        self.max_herm = max(self.max_herm, herm)
        self.min_eig = min(self.min_eig, min_eig)
        if herm > HERMITICITY_TOL or trace > TRACE_TOL or min_eig < -POSITIVITY_TOL:
            raise InvariantViolationError(
                f"state invariant broken at t={t:.3e} s: hermiticity {herm:.3e}, "
                f"trace defect {trace:.3e}, min eigenvalue {min_eig:.3e}; "
                "reduce dt or check the configuration"
            )
        for m, mask in enumerate(self.top_masks):
            leak = float(diag[mask].sum())
            self.max_leak = max(self.max_leak, leak)
            if leak > self.cfg.leakage_tol:
                raise LeakageError(
                    f"population {leak:.3e} on the top level of mode {m} at "
                    f"t={t:.3e} s exceeds leakage_tol={self.cfg.leakage_tol:.1e}; "
                    "raise the truncation for this mode"
                )
        probs = diag[self.watched_idx] if len(self.watched_idx) else np.zeros(0)
        if len(probs) and (probs.min() < -PROBABILITY_TOL or probs.max() > 1 + PROBABILITY_TOL):
            raise InvariantViolationError(
                f"watched occupation outside [0, 1] tolerance at t={t:.3e} s"
            )
        self.occupations.append(probs)
        self.photons.append(diag @ self.number_weights)

    def summary(self) -> InvariantSummary:
        return InvariantSummary(self.max_trace, self.max_herm, self.min_eig, self.max_leak)


class _LoweringSandwich:
    """Adds sum_i C_i x C_i' to a matrix for collapses built from mode lowering
    operators, using strided views of the two-mode index structure instead of
    dense products.  C_i = w_i0 * a + w_i1 * b."""

    def __init__(self, space: ModeSpace, weights: np.ndarray):
        ka, kb = space.dims
        self.shape4 = (ka, kb, ka, kb)
        coef = weights.T @ weights.conj()  # coef[m, m'] multiplies a_m x a_m''
        sa = np.sqrt(np.arange(1.0, ka))
        sb = np.sqrt(np.arange(1.0, kb))
        self.terms = []
        shifts = {0: np.s_[1:], 1: np.s_[:-1]}  # src / dst slices along a shifted axis
        for m, mp, w_left, w_right, axes in (
            (0, 0, sa, sa, (0, 2)),
            (1, 1, sb, sb, (1, 3)),
            (0, 1, sa, sb, (0, 3)),
            (1, 0, sb, sa, (1, 2)),
        ):
            c = coef[m, mp]
            if c == 0:
                continue
            weight = c * np.multiply.outer(w_left, w_right)
            expand = [None] * 4
            src = [slice(None)] * 4
            dst = [slice(None)] * 4
            for ax in axes:
                src[ax] = shifts[0]
                dst[ax] = shifts[1]
                expand[ax] = slice(None)
            self.terms.append((weight[tuple(expand)], tuple(src), tuple(dst)))

    def add_to(self, dst: np.ndarray, x: np.ndarray) -> None:
        x4 = x.reshape(self.shape4)
        d4 = dst.reshape(self.shape4)
        for weight, src, out in self.terms:
            d4[out] += weight * x4[src]


def _rk4_span(
    rho: np.ndarray,
    g_eff: np.ndarray,
    sandwich: _LoweringSandwich,
    dt: float,
    n_steps: int,
    buffers: list[np.ndarray],
) -> None:
    """Advance rho in place by n_steps classical RK4 steps, re-Hermitizing each step.

    The master equation is linear and autonomous, so the classical RK4 update
    equals the degree-4 Taylor polynomial of exp(dt L); it is evaluated in
    Horner form, which needs one generator application per stage like the
    textbook scheme but fewer temporaries.  Every stage input is Hermitian,
    so rho G' = (G rho)' and one product per stage is a conjugate transpose.
    """
    v, w, u1 = buffers

    def lapply(src: np.ndarray, dst: np.ndarray) -> None:
        np.matmul(g_eff, src, out=u1)
        np.conjugate(u1.T, out=dst)
        dst += u1
        sandwich.add_to(dst, src)

    for _ in range(n_steps):
        lapply(rho, v)
        np.multiply(v, dt / 4.0, out=w)
        w += rho
        lapply(w, v)
        np.multiply(v, dt / 3.0, out=w)
        w += rho
        lapply(w, v)
        np.multiply(v, dt / 2.0, out=w)
        w += rho
        lapply(w, v)
        v *= dt
        rho += v
        # (rho + rho^dagger)/2 scrubs roundoff asymmetry without touching physics
        np.conjugate(rho.T, out=w)
        rho += w
        rho *= 0.5


def propagate(
    spec: SystemSpec,
    space: ModeSpace,
    rho0: DensityMatrix,
    cfg: IntegratorConfig,
    watched_states: list[tuple[int, ...]],
) -> Trajectory:
    """Integrate the master equation and sample observables on a fixed schedule.

    The default method is fixed-step classical RK4 on the density matrix; the
    expm_oracle method applies the exact sample-interval propagator obtained
    from the vectorized Liouvillian and exists to cross-check the stepper.
    Aborts when a validity tolerance or the truncation-leakage gate is hit.
    """
    if rho0.space != space:
        raise ValueError("initial state lives on a different space")
    h = build_hamiltonian(spec, space)
    collapses = build_collapse(spec, space)
    recorder = _Recorder(space, cfg, watched_states)
    d = space.total_dim
    rho = np.array(rho0.matrix, dtype=complex)
    times = np.arange(cfg.n_samples + 1) * cfg.sample_interval

    recorder.record(rho, 0.0)
    if cfg.method == "rk4_fixed":
        cs = [c.matrix for c in collapses]
        cdc = sum(c.conj().T @ c for c in cs)
        cdc = 0.5 * (cdc + cdc.conj().T)  # exact Hermiticity of the decay part
        g_eff = -1j * h.matrix - 0.5 * cdc
        if spec.collapse_mode == "combined":
            weights = np.array([[math.sqrt(spec.kappa_a), math.sqrt(spec.kappa_b)]])
        else:
            weights = np.diag([math.sqrt(spec.kappa_a), math.sqrt(spec.kappa_b)])
        sandwich = _LoweringSandwich(space, weights)
        buffers = [np.empty((d, d), dtype=complex) for _ in range(3)]
        for i in range(cfg.n_samples):
            _rk4_span(rho, g_eff, sandwich, cfg.dt, cfg.steps_per_sample, buffers)
            recorder.record(rho, times[i + 1])
    else:
        lv = liouvillian_matrix(h, collapses)
        prop = scipy.linalg.expm(lv * cfg.sample_interval)
        v = vectorize(rho)
        for i in range(cfg.n_samples):
            v = prop @ v
            rho = unvectorize(v, d)
            rho = 0.5 * (rho + rho.conj().T)
            v = vectorize(rho)
            recorder.record(rho, times[i + 1])

    occ = {
        w: np.array([row[j] for row in recorder.occupations])
        for j, w in enumerate(recorder.watched)
    }
    return Trajectory(
        times=times,
        occupations=occ,
        photon_numbers=np.array(recorder.photons),
        final_state=DensityMatrix(space, rho),
        checks=recorder.summary(),
    )
