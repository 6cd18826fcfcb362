"""Acceptance criteria, each checked at its stated tolerance.

Every test reports one PASS/FAIL line, collected into the terminal summary.
Training criteria go through the same per-seed job runner as the CLI.
"""

import csv
import dataclasses
import json
import time

import numpy as np
import pytest

from qgdm import circuits, denoise, diffusion, qstate
from qgdm import train as tr
from qgdm.cli import config, runs, stats
from qgdm.generate import density_from_json
from oracles import random_density

SEEDS = list(range(10))
T = 30


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


def run_experiment(workdir, name, **values):
    cfg = config.build_config(dict(values, seeds=SEEDS))
    results = runs.run_seeds(cfg, workdir / name)
    failed = [r for r in results if not r.ok]
    assert not failed, failed
    return np.array([r.final_fidelity for r in results])


def describe(values):
    return f"median {np.median(values):.6f}, min {values.min():.6f}"


@pytest.fixture(scope="module")
def qgdm_n2_pure(workdir):
    return run_experiment(workdir, "qgdm_n2_pure", variant="qgdm", n=2, target="pure")


def test_direct_jump_equals_iterated_channel(acceptance):
    start = time.perf_counter()
    sched = diffusion.cosine_schedule(T, 0.008)
    rng = np.random.default_rng(1)
    worst = 0.0
    for n in (1, 2, 3):
        states = [qstate.from_pure(circuits.random_pure_state(n, rng)) for _ in range(20)]
        states += [circuits.random_mixed_state(n, rng) for _ in range(20)]
        for rho0 in states:
            rho = rho0
            for t in range(1, T + 1):
                rho = diffusion.forward_step(rho, t, sched)
                worst = max(worst, np.linalg.norm(rho - diffusion.forward_to(rho0, t, sched)))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-12 and elapsed < 10
    acceptance(1, ok, f"max Frobenius gap {worst:.2e} (< 1e-12), {elapsed:.1f} s (< 10 s)")
    assert ok


def test_fidelity_bounds(acceptance):
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    low_gap = high_gap = pure_gap = mixed_gap = 0.0
    for n in (1, 2, 3):
        d = 2**n
        eye = np.eye(d, dtype=complex) / d
        for i in range(200):
            if i % 2 == 0:
                rho = qstate.from_pure(circuits.random_pure_state(n, rng))
                pure_gap = max(pure_gap, abs(qstate.fidelity(rho, eye) - 1 / d))
            else:
                rho = random_density(n, rng, rank=int(rng.integers(1, d + 1)))
            f = qstate.fidelity(rho, eye)
            low_gap = max(low_gap, 1 / d - f)
            high_gap = max(high_gap, f - 1)
        mixed_gap = max(mixed_gap, abs(qstate.fidelity(eye, eye) - 1))
    elapsed = time.perf_counter() - start
    ok = low_gap <= 1e-8 and high_gap <= 1e-8 and pure_gap < 1e-8 and mixed_gap < 1e-10 and elapsed < 30
    acceptance(
        2,
        ok,
        f"below 1/d by {max(low_gap, 0):.1e}, above 1 by {max(high_gap, 0):.1e}, "
        f"pure off 1/d by {pure_gap:.1e}, F(I/d, I/d) off 1 by {mixed_gap:.1e}, {elapsed:.1f} s",
    )
    assert ok


def test_cosine_schedule_exactness(acceptance):
    sched = diffusion.cosine_schedule(T, 0.008)
    bars = np.array([sched.alpha_bar_at(t) for t in range(T + 1)])
    ok = bars[0] == 1.0 and bars[T] < 1e-12 and np.all((sched.alpha >= 0) & (sched.alpha <= 1)) and np.all(
        np.diff(bars) <= 0
    )
    acceptance(3, ok, f"alpha_bar_0 = {bars[0]}, alpha_bar_T = {bars[T]:.1e}, alpha in [0, 1], monotone")
    assert ok


def test_qgdm_single_qubit_pure_generation(acceptance, workdir):
    f = run_experiment(workdir, "qgdm_n1_pure", variant="qgdm", n=1, target="pure")
    ok = np.median(f) >= 0.99 and f.min() >= 0.95
    acceptance(4, ok, f"{describe(f)} (need median >= 0.99, min >= 0.95)")
    assert ok


@pytest.mark.slow
def test_qgdm_two_qubit_pure_generation(acceptance, qgdm_n2_pure):
    f = qgdm_n2_pure
    ok = np.median(f) >= 0.98
    acceptance(5, ok, f"{describe(f)} (need median >= 0.98)")
    assert ok


def test_qgdm_single_qubit_mixed_generation(acceptance, workdir):
    f = run_experiment(workdir, "qgdm_n1_mixed", variant="qgdm", n=1, target="mixed")
    ok = np.median(f) >= 0.97
    acceptance(6, ok, f"{describe(f)} (need median >= 0.97)")
    assert ok


@pytest.mark.slow
def test_rqgdm_two_qubit_generation(acceptance, workdir):
    pure = run_experiment(workdir, "rqgdm_n2_pure", variant="rqgdm", n=2, target="pure")
    mixed = run_experiment(workdir, "rqgdm_n2_mixed", variant="rqgdm", n=2, target="mixed")
    ok = np.median(pure) >= 0.97 and np.median(mixed) >= 0.97
    acceptance(7, ok, f"pure {describe(pure)}; mixed {describe(mixed)} (need medians >= 0.97)")
    assert ok


@pytest.fixture(scope="module")
def failure_study(workdir):
    cfg = config.build_config({"variant": "naive", "n": 1, "seeds": [0]})
    result = runs.run_seeds(cfg, workdir / "failure", command="failure-study")[0]
    assert result.ok, result.error
    run_dir = workdir / "failure" / "seed_0000"

    def column(name, key):
        return np.array([float(r[key]) for r in csv.DictReader((run_dir / name).open())])

    target = json.loads((run_dir / "target_state.json").read_text())
    return {
        "loss": column("train.csv", "loss"),
        "composite_hs": column("hs_distance.csv", "composite_hs"),
        "register_hs": column("hs_distance.csv", "register_hs"),
        "fidelity": column("generation.csv", "fidelity"),
        "target": target,
    }


def test_naive_variant_loss_decreases(acceptance, failure_study):
    loss = failure_study["loss"]
    first, last = loss[:20].mean(), loss[-20:].mean()
    ok = first > last
    acceptance("8a", ok, f"first-20 mean loss {first:.4f} > last-20 mean {last:.4f}")
    assert ok


@pytest.mark.xfail(
    strict=True,
    reason="the loss cannot see unitaries on the traced-out embedding register, so the full circuit "
    "never approaches the identity; only the reduced input/output distance can shrink",
)
def test_naive_variant_circuit_becomes_identity(acceptance, failure_study):
    final = failure_study["composite_hs"][-1]
    register = failure_study["register_hs"][-1]
    ok = final < 0.05
    acceptance(
        "8b",
        ok,
        f"final input/output HS distance {final:.4f} (need < 0.05); data-register distance {register:.2e}",
    )
    assert ok


def test_naive_variant_generation_is_flat(acceptance, failure_study):
    rho0 = density_from_json(failure_study["target"])
    baseline = qstate.fidelity(np.eye(2) / 2, rho0)
    deviation = np.abs(failure_study["fidelity"] - baseline).max()
    ok = deviation < 0.05
    acceptance("8c", ok, f"max deviation from F(I/d, rho_0) = {baseline:.4f} is {deviation:.2e} (< 0.05)")
    assert ok


@pytest.mark.slow
def test_embedding_register_sweep_ordering(acceptance, workdir, qgdm_n2_pure):
    one = run_experiment(workdir, "qgdm_n2_ntau1", variant="qgdm", n=2, n_tau=1, target="pure")
    ok = np.median(qgdm_n2_pure) >= np.median(one)
    acceptance(
        9, ok, f"median at n_tau=2 {np.median(qgdm_n2_pure):.6f} >= median at n_tau=1 {np.median(one):.6f}"
    )
    assert ok


def test_gradient_step_halving(acceptance):
    cfg = tr.TrainConfig()
    arch = tr.architecture_for(cfg, "qgdm", 1)
    sched = diffusion.cosine_schedule(cfg.T, cfg.s)
    rng = np.random.default_rng(10)
    ratios = []
    insensitive = 0
    while len(ratios) < 20:
        model = denoise.BackwardModel.from_flat(arch, rng.uniform(0, np.pi, arch.n_params))
        rho0 = qstate.from_pure(circuits.random_pure_state(1, rng))
        ts = tr.sample_timesteps(rng, cfg.T, cfg.batch_size)
        k = int(rng.integers(arch.n_params))
        h = 0.1
        g = [tr.gradient(model, rho0, ts, sched, cfg.lam, h=h / 2**j)[k] for j in range(3)]
        if abs(g[1] - g[2]) < 1e-12 and abs(g[0] - g[1]) < 1e-12:
            # The loss does not depend on this coordinate at all.
            insensitive += 1
            continue
        ratios.append(abs(g[0] - g[1]) / abs(g[1] - g[2]))
    ratios = np.array(ratios)
    ok = ratios.size > 0 and np.all((ratios >= 2) & (ratios <= 8))
    acceptance(
        10,
        ok,
        f"ratios in [{ratios.min():.3f}, {ratios.max():.3f}] over {ratios.size} parameters "
        f"({insensitive} loss-independent draws skipped)",
    )
    assert ok


def test_relative_change_arithmetic(acceptance):
    ours = [0.995, 0.999, 0.999, 0.996, 0.993, 0.990, 0.992, 0.993]
    baseline = [0.972, 0.867, 0.741, 0.676, 0.602, 0.555, 0.463, 0.324]
    percent = 100 * stats.relative_change(ours, baseline)
    ok = abs(percent - 53.02) <= 0.01
    acceptance(11, ok, f"relative change {percent:.4f}% (53.02% within 0.01 points)")
    assert ok


def test_default_config_is_the_reference_setup():
    cfg = config.build_config({})
    assert dataclasses.replace(cfg.train, seed=0) == tr.TrainConfig()
