"""Reservoir-computing layer: input encoding, feature collection, linear readout.

Neuron outputs are basis-state occupation probabilities read from simulated
trajectories.  Features are arranged samples-by-rows with a trailing constant
bias column; the readout is trained in one shot through the Moore-Penrose
pseudo-inverse (optionally ridge-regularized).
"""

from __future__ import annotations

import functools
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .fock import ModeSpace, vacuum_state
from .lindblad import IntegratorConfig, InvariantSummary, SystemSpec, propagate


class DegenerateTargetError(RuntimeError):
    """Training data carries no usable signal (constant target or features)."""


@dataclass(frozen=True)
class EncodingSpec:
    """How a scalar input in [0, 1] turns into drive amplitudes and a readout time."""

    eps_a_max: float
    eps_b_max: float
    duration: float
    readout_time: float

    def __post_init__(self):
        if self.eps_a_max < 0 or self.eps_b_max < 0:
            raise ValueError("drive maxima must be >= 0")
        if not 0 < self.readout_time <= self.duration:
            raise ValueError(
                f"need 0 < readout_time <= duration, got "
                f"readout_time={self.readout_time}, duration={self.duration}"
            )


def encode_input(s: float, enc: EncodingSpec) -> tuple[float, float]:
    """Scale both drive amplitudes by the same normalized input."""
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"input must lie in [0, 1], got {s}")
    return (s * enc.eps_a_max, s * enc.eps_b_max)


def feature_row(
    s: float,
    enc: EncodingSpec,
    system: SystemSpec,
    space: ModeSpace,
    cfg: IntegratorConfig,
    watched: tuple[tuple[int, ...], ...],
    feature_times: tuple[float, ...],
) -> tuple[np.ndarray, InvariantSummary]:
    """Propagate one encoded input from vacuum and read the watched occupations.

    Returns the feature row (without bias) and the run's invariant summary.
    Module-level so it can cross process boundaries in a parallel sweep.
    """
    eps_a, eps_b = encode_input(s, enc)
    sys_s = replace(system, eps_a=eps_a, eps_b=eps_b)
    cfg_s = replace(cfg, t_end=enc.duration)
    traj = propagate(sys_s, space, vacuum_state(space), cfg_s, list(watched))
    row = []
    for t in feature_times:
        idx = np.flatnonzero(np.isclose(traj.times, t, rtol=1e-9, atol=1e-15))
        if len(idx) != 1:
            raise ValueError(f"feature time {t} is not on the sampling grid")
        row.extend(traj.occupations[w][idx[0]] for w in watched)
    return np.array(row), traj.checks


def parallel_map(fn, items, workers: int = 1) -> list:
    """Deterministic ordered map, optionally fanned out over worker processes."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    ctx = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(max_workers=min(workers, len(items)), mp_context=ctx) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def collect_features(
    inputs,
    enc: EncodingSpec,
    system: SystemSpec,
    space: ModeSpace,
    cfg: IntegratorConfig,
    watched,
    feature_times=None,
    workers: int = 1,
) -> np.ndarray:
    """Feature matrix for a batch of inputs: one row per input, bias column last."""
    inputs = [float(s) for s in inputs]
    times = tuple(feature_times) if feature_times is not None else (enc.readout_time,)
    fn = functools.partial(
        feature_row,
        enc=enc,
        system=system,
        space=space,
        cfg=cfg,
        watched=tuple(tuple(w) for w in watched),
        feature_times=times,
    )
    rows = [row for row, _ in parallel_map(fn, inputs, workers)]
    features = np.vstack(rows) if rows else np.zeros((0, len(watched) * len(times)))
    bias = np.ones((features.shape[0], 1))
    return np.hstack([features, bias])


def pseudo_inverse(f: np.ndarray, rel_tol: float = 1e-10) -> np.ndarray:
    """SVD pseudo-inverse; singular values below rel_tol * s_max are dropped."""
    f = np.atleast_2d(np.asarray(f, dtype=float))
    if f.size == 0:
        raise ValueError("cannot invert an empty matrix")
    # np.linalg.pinv raises LinAlgError if the SVD fails to converge
    return np.linalg.pinv(f, rcond=rel_tol)


def train_readout(
    f: np.ndarray,
    targets: np.ndarray,
    rel_tol: float = 1e-10,
    ridge: float = 0.0,
) -> np.ndarray:
    """One-shot linear readout: weights W such that predictions are F @ W.T.

    ridge = 0 uses the pseudo-inverse (minimum-norm least squares); ridge > 0
    solves the Tikhonov-regularized normal equations instead.
    """
    f = np.atleast_2d(np.asarray(f, dtype=float))
    targets = np.asarray(targets, dtype=float)
    squeeze = targets.ndim == 1
    if squeeze:
        targets = targets[:, None]
    if f.shape[0] != targets.shape[0]:
        raise ValueError(
            f"row counts differ: {f.shape[0]} feature rows vs {targets.shape[0]} targets"
        )
    if ridge < 0:
        raise ValueError("ridge must be >= 0")
    if ridge == 0.0:
        w = (pseudo_inverse(f, rel_tol) @ targets).T
    else:
        gram = f.T @ f + ridge * np.eye(f.shape[1])
        w = np.linalg.solve(gram, f.T @ targets).T
    return w


def predict(w: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Apply trained weights to a feature matrix."""
    w = np.atleast_2d(np.asarray(w, dtype=float))
    f = np.atleast_2d(np.asarray(f, dtype=float))
    if f.shape[1] != w.shape[1]:
        raise ValueError(
            f"feature count mismatch: features have {f.shape[1]} columns, "
            f"weights expect {w.shape[1]}"
        )
    return f @ w.T


def nonlinearity_score(xs, ys) -> float:
    """Residual of the best affine fit of ys on xs, normalized by max |ys|.

    Zero for exactly affine data, positive otherwise.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 1 or ys.ndim != 1 or len(xs) != len(ys):
        raise ValueError("xs and ys must be equal-length 1-D sequences")
    if len(xs) < 3:
        raise ValueError("need at least 3 points")
    if np.any(np.diff(xs) <= 0):
        raise ValueError("xs must be strictly increasing")
    design = np.column_stack([xs, np.ones_like(xs)])
    coef, _, _, _ = np.linalg.lstsq(design, ys, rcond=None)
    resid = float(np.linalg.norm(ys - design @ coef))
    return resid / max(float(np.max(np.abs(ys))), 1e-12)


@dataclass(frozen=True)
class MemoryCapacities:
    """Per-delay recall capacities of a driven reservoir plus run diagnostics."""

    per_delay: tuple[float, ...]
    checks: InvariantSummary

    def delayed_sum(self) -> float:
        """Summed capacity over delays >= 1."""
        return float(sum(self.per_delay[1:]))


def memory_capacity(
    system: SystemSpec,
    space: ModeSpace,
    enc: EncodingSpec,
    cfg: IntegratorConfig,
    seq_len: int,
    max_delay: int,
    seed: int,
    watched=None,
    rel_tol: float = 1e-10,
    ridge: float = 0.0,
    train_fraction: float = 0.7,
) -> MemoryCapacities:
    """Delayed-recall capacity of the reservoir on a random drive sequence.

    Drives the system with seq_len piecewise-constant segments whose amplitudes
    encode u_t drawn uniformly from [0, 1), carrying the state across segments
    (no reset).  For each delay d a linear readout is trained to recover
    u_{t-d} from the segment-end features on the first train_fraction of the
    samples; the capacity is the squared Pearson correlation between the
    prediction and the target on the held-out remainder.  A small ridge acts
    as a recovery floor: the simulated features are exact expectations, and an
    unregularized readout will happily amplify arbitrarily faint traces of
    past inputs that no finite-precision measurement could expose.
    """
    if max_delay < 0:
        raise ValueError("max_delay must be >= 0")
    if seq_len < 10 * max(1, max_delay):
        raise ValueError(f"need seq_len >= 10*max_delay, got {seq_len} < {10 * max_delay}")
    if watched is None:
        watched = default_watched_states(space)
    watched = tuple(tuple(w) for w in watched)

    rng = np.random.default_rng(seed)
    u = rng.random(seq_len)
    rho = vacuum_state(space)
    cfg_seg = replace(cfg, t_end=enc.duration)
    rows = []
    checks = InvariantSummary()
    for s in u:
        eps_a, eps_b = encode_input(float(s), enc)
        sys_s = replace(system, eps_a=eps_a, eps_b=eps_b)
        traj = propagate(sys_s, space, rho, cfg_seg, list(watched))
        rho = traj.final_state
        idx = np.flatnonzero(np.isclose(traj.times, enc.readout_time, rtol=1e-9, atol=1e-15))
        if len(idx) != 1:
            raise ValueError("readout_time is not on the sampling grid")
        rows.append([traj.occupations[w][idx[0]] for w in watched])
        checks = checks.merged(traj.checks)

    features = np.asarray(rows)
    if float(np.ptp(features, axis=0).max(initial=0.0)) < 1e-14:
        raise DegenerateTargetError(
            "all reservoir features are constant; the drive encoding carries no signal"
        )
    f = np.hstack([features, np.ones((seq_len, 1))])

    capacities = []
    for d in range(max_delay + 1):
        x = f[d:]
        y = u[: seq_len - d]
        n_train = int(round(train_fraction * len(y)))
        if n_train < 2 or len(y) - n_train < 2:
            raise ValueError(f"not enough samples to split at delay {d}")
        if np.std(y[n_train:]) < 1e-12:
            raise DegenerateTargetError(f"target at delay {d} has no variance")
        w = train_readout(x[:n_train], y[:n_train], rel_tol=rel_tol, ridge=ridge)
        pred = predict(w, x[n_train:]).ravel()
        if np.std(pred) == 0.0:
            raise DegenerateTargetError(f"prediction at delay {d} is constant")
        r = float(np.corrcoef(pred, y[n_train:])[0, 1])
        capacities.append(min(1.0, max(0.0, r * r)))
    return MemoryCapacities(tuple(capacities), checks)


def default_watched_states(space: ModeSpace) -> tuple[tuple[int, int], ...]:
    """The eight low-lying two-mode states excluding vacuum, in reporting order."""
    if space.n_modes != 2 or min(space.dims) < 3:
        raise ValueError("watched states need a two-mode space with truncations >= 3")
    return ((0, 1), (1, 0), (1, 1), (0, 2), (2, 0), (1, 2), (2, 1), (2, 2))
