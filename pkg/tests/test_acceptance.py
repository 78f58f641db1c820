"""Acceptance suite.

Each test exercises one release criterion at its stated tolerance and prints
one line on success; a failing assertion is the fail line.  The three heavy
experiment commands run once each in module-scoped fixtures on the bundled
configs and are shared by the criteria that read their outputs.  Full suite
runtime is dominated by those commands (roughly 16 minutes on one core).
"""

import configparser
import csv
import dataclasses
import math
import os
import time

import numpy as np
import pytest

from oscrc import (
    IntegratorConfig,
    ModeSpace,
    SystemSpec,
    nonlinearity_score,
    predict,
    propagate,
    pseudo_inverse,
    train_readout,
    vacuum_state,
)
from oscrc.config import load_config
from oscrc.experiments import cmd_dynamics, cmd_memory, cmd_nonlinearity

REPO = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIGS = os.path.join(REPO, "configs")
WATCH_COLS = ["p01", "p10", "p11", "p02", "p20", "p12", "p21", "p22"]


def read_columns(path):
    with open(path) as f:
        rows = list(csv.DictReader(f))
    return {key: np.array([float(r[key]) for r in rows]) for key in rows[0]}


def read_manifest(path):
    out = {}
    for line in open(path):
        key, _, value = line.partition(" = ")
        out[key.strip()] = value.strip()
    return out


def strict_maxima(y):
    return int(np.sum((y[1:-1] > y[:-2]) & (y[1:-1] > y[2:])))


@pytest.fixture(scope="module")
def dynamics_results(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("dynamics"))
    cfg = dataclasses.replace(load_config(os.path.join(CONFIGS, "dynamics.cfg")), out_dir=out)
    start = time.perf_counter()
    paths = cmd_dynamics(cfg)
    duration = time.perf_counter() - start
    cases = {
        os.path.basename(p).split("_dynamics_")[1].removesuffix(".csv"): read_columns(p)
        for p in paths
    }
    manifest = read_manifest(os.path.join(out, "manifest.txt"))
    return {"cases": cases, "manifest": manifest, "duration": duration}


@pytest.fixture(scope="module")
def sweep_results(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("sweep"))
    cfg = dataclasses.replace(load_config(os.path.join(CONFIGS, "nonlinearity.cfg")), out_dir=out)
    (path,) = cmd_nonlinearity(cfg, threads=1)
    return read_columns(path)


@pytest.fixture(scope="module")
def memory_results(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("memory"))
    cfg = dataclasses.replace(load_config(os.path.join(CONFIGS, "memory.cfg")), out_dir=out)
    start = time.perf_counter()
    (path,) = cmd_memory(cfg)
    duration = time.perf_counter() - start
    with open(path) as f:
        rows = list(csv.DictReader(f))
    sums, d0 = {}, {}
    for r in rows:
        kappa = float(r["kappa"])
        if r["delay"] == "sum_d_ge_1":
            sums[kappa] = float(r["capacity"])
        elif r["delay"] == "0":
            d0[kappa] = float(r["capacity"])
    return {"sums": sums, "d0": d0, "duration": duration}


def test_criterion_1_oracle_equivalence():
    # RK4 vs matrix-exponential propagation, k = 3 per mode, 10 ns
    spec = SystemSpec.from_hz(
        omega_a=10e9, omega_b=9.5e9, g=700e6, kappa_a=17e6, kappa_b=21e6,
        eps_a=1e6, eps_b=2e5, collapse_mode="independent",
    )
    space = ModeSpace((3, 3))
    kw = dict(dt=2e-13, t_end=10e-9, sample_interval=2e-9, leakage_tol=1.0)
    start = time.perf_counter()
    t_rk = propagate(spec, space, vacuum_state(space), IntegratorConfig(**kw), [(0, 1)])
    t_ex = propagate(
        spec, space, vacuum_state(space),
        IntegratorConfig(**kw, method="expm_oracle"), [(0, 1)],
    )
    elapsed = time.perf_counter() - start
    diff = float(np.max(np.abs(t_rk.final_state.matrix - t_ex.final_state.matrix)))
    assert diff <= 1e-6
    assert elapsed < 10.0
    print(f"criterion 1 oracle equivalence: PASS (|diff| = {diff:.2e}, {elapsed:.1f} s)")


def test_criterion_2_analytic_steady_state():
    # single driven decaying mode: N_a -> 2 kappa eps^2 / (omega^2 + kappa^2/4)
    spec = SystemSpec.from_hz(
        omega_a=10e9, omega_b=9.5e9, g=0.0, kappa_a=100e6, kappa_b=100e6,
        eps_a=1e6, eps_b=0.0, collapse_mode="independent",
    )
    space = ModeSpace((8, 2))
    cfg = IntegratorConfig(dt=1e-12, t_end=40e-9, sample_interval=2e-9)
    start = time.perf_counter()
    traj = propagate(spec, space, vacuum_state(space), cfg, [(0, 0)])
    elapsed = time.perf_counter() - start
    n_exact = 2 * spec.kappa_a * spec.eps_a**2 / (spec.omega_a**2 + spec.kappa_a**2 / 4)
    rel = abs(traj.photon_numbers[-1, 0] - n_exact) / n_exact
    assert rel < 0.01
    assert elapsed < 30.0
    print(f"criterion 2 analytic steady state: PASS (rel err {rel:.2e}, {elapsed:.1f} s)")


def test_criterion_3_conservation_suite(dynamics_results):
    m = dynamics_results["manifest"]
    assert m["status"] == "PASSED"
    assert float(m["max_trace_defect"]) <= 1e-8
    assert float(m["max_hermiticity_defect"]) <= 1e-10
    assert float(m["min_eigenvalue"]) >= -1e-8
    assert float(m["max_leakage"]) <= 1e-4
    assert dynamics_results["duration"] < 300.0
    print(
        "criterion 3 conservation suite: PASS "
        f"(trace {m['max_trace_defect']}, eig {m['min_eigenvalue']}, "
        f"leak {m['max_leakage']}, {dynamics_results['duration']:.0f} s)"
    )


def test_criterion_4_dissipation_regimes(dynamics_results):
    fast = dynamics_results["cases"]["fast_decay"]
    i50 = int(np.argmin(np.abs(fast["t"] - 50e-9)))
    settle = abs(fast["N_a"][-1] - fast["N_a"][i50]) / fast["N_a"][-1]
    assert settle < 0.05
    assert fast["N_a"][-1] > fast["N_b"][-1]

    slow = dynamics_results["cases"]["slow_decay"]
    t, na = slow["t"], slow["N_a"]
    sustain = np.ptp(na[t >= 80e-9]) / np.ptp(na[t <= 20e-9])
    assert sustain >= 0.5
    print(
        "criterion 4 dissipation regimes: PASS "
        f"(settle {settle:.2e}, beat sustain {sustain:.2f})"
    )


def test_criterion_5_coupling_regimes(dynamics_results):
    strong = strict_maxima(dynamics_results["cases"]["strong_coupling"]["N_a"])
    weak = strict_maxima(dynamics_results["cases"]["weak_coupling"]["N_a"])
    assert strong >= 3
    assert weak < strong
    print(f"criterion 5 coupling regimes: PASS (strong {strong} maxima, weak {weak})")


def test_criterion_6_nonlinearity_sweep(sweep_results):
    s = sweep_results["s"]
    assert len(s) == 51
    curves = [sweep_results[c] for c in WATCH_COLS]
    for curve in curves:
        assert curve.min() >= -1e-8 and curve.max() <= 1.0 + 1e-8
    # threshold frozen from the exact-propagator sweep, where the smallest of
    # the eight curve scores is 0.53
    scores = [nonlinearity_score(s, curve) for curve in curves]
    assert sum(score > 0.1 for score in scores) >= 4
    positive = 0
    for i in range(8):
        for j in range(i + 1, 8):
            design = np.column_stack([curves[i], np.ones_like(curves[i])])
            coef, _, _, _ = np.linalg.lstsq(design, curves[j], rcond=None)
            resid = np.linalg.norm(curves[j] - design @ coef)
            if resid / max(np.max(np.abs(curves[j])), 1e-12) > 1e-6:
                positive += 1
    assert positive >= 14
    print(
        "criterion 6 nonlinearity: PASS "
        f"(scores {min(scores):.2f}..{max(scores):.2f}, {positive}/28 non-affine pairs)"
    )


def test_criterion_7_readout_algebra():
    rng = np.random.default_rng(123)
    for shape in ((12, 7), (6, 11)):
        f = rng.normal(size=shape)
        p = pseudo_inverse(f)
        scale = np.linalg.norm(f)
        assert np.linalg.norm(f @ p @ f - f) <= 1e-8 * scale
        assert np.linalg.norm(p @ f @ p - p) <= 1e-8 * np.linalg.norm(p)
        assert np.linalg.norm((f @ p).conj().T - f @ p) <= 1e-8
        assert np.linalg.norm((p @ f).conj().T - p @ f) <= 1e-8
    f = rng.normal(size=(10, 20))  # full row rank
    w0 = rng.normal(size=(2, 20))
    targets = f @ w0.T
    w = train_readout(f, targets)
    assert np.linalg.norm(predict(w, f) - targets) <= 1e-8
    assert train_readout(f, targets).tobytes() == w.tobytes()
    print("criterion 7 readout algebra: PASS")


def test_criterion_8_fading_memory(memory_results):
    sums = memory_results["sums"]
    s5, s20, s100 = sums[5e6], sums[20e6], sums[100e6]
    assert s5 > s20 > s100
    assert memory_results["d0"][20e6] > 0.5
    assert memory_results["duration"] < 600.0
    print(
        "criterion 8 fading memory: PASS "
        f"(sums {s5:.3f} > {s20:.3f} > {s100:.3f}, d0 {memory_results['d0'][20e6]:.2f}, "
        f"{memory_results['duration']:.0f} s)"
    )


def test_criterion_9_thread_determinism(tmp_path):
    parser = configparser.ConfigParser(interpolation=None)
    parser.read(os.path.join(CONFIGS, "nonlinearity.cfg"))
    parser.set("sweep", "num_points", "5")
    reduced = tmp_path / "reduced.cfg"
    with open(reduced, "w") as f:
        parser.write(f)
    outputs = []
    for threads, sub in ((1, "a"), (3, "b")):
        out = tmp_path / sub
        cfg = dataclasses.replace(load_config(str(reduced)), out_dir=str(out))
        (path,) = cmd_nonlinearity(cfg, threads=threads)
        outputs.append(open(path, "rb").read())
    assert outputs[0] == outputs[1]
    print("criterion 9 determinism: PASS (1 vs 3 workers byte-identical)")
