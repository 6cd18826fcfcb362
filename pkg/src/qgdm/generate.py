"""Generation: run the trained backward map from the completely mixed state."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from qgdm import diffusion, qstate
from qgdm.denoise import BackwardModel, apply_backward, projectors


@dataclass(frozen=True)
class GenerationStep:
    t: int
    fidelity: float | None
    bloch: tuple[float, float, float] | None = None


@dataclass(frozen=True)
class GenerationTrace:
    steps: tuple[GenerationStep, ...]
    final_state: np.ndarray

    @property
    def final_fidelity(self) -> float | None:
        return self.steps[-1].fidelity


def generate(model: BackwardModel, reference=None) -> GenerationTrace:
    """Apply the backward map for t = T, ..., 1 starting from I/d.

    ``reference`` is only used to score each intermediate state; it never
    enters the model. Fidelity is recorded after every step.
    """
    T = model.T
    if T < 1:
        raise ValueError("model has no timesteps")
    n = model.arch.n
    if reference is not None:
        reference = np.asarray(reference, dtype=np.complex128)
        if reference.shape != (2**n,) * 2:
            raise ValueError("reference state does not match the model register")
        sqrt_ref = qstate.sqrt_density(reference)
    rho = qstate.completely_mixed(n)
    units = model.unitaries()
    psis = model.embedding_states(np.arange(1, T + 1))
    taus = projectors(psis)
    steps = []
    for t in range(T, 0, -1):
        rho = apply_backward(model.arch, taus[t - 1 : t], units, rho[None])[0]
        qstate._checked(rho)
        fid = float(qstate.fidelity_from_sqrt(sqrt_ref, rho)) if reference is not None else None
        bloch = qstate.bloch_coordinates(rho) if n == 1 else None
        steps.append(GenerationStep(t, fid, bloch))
    return GenerationTrace(tuple(steps), rho)


def diffusion_reference_curve(rho0, sched: diffusion.NoiseSchedule) -> list[float]:
    """``F(rho_t, rho_0)`` along the forward process for t = 1..T."""
    sqrt0 = qstate.sqrt_density(np.asarray(rho0, dtype=np.complex128))
    states = diffusion.forward_stack(rho0, np.arange(1, sched.T + 1), sched)
    return [float(f) for f in qstate.fidelity_from_sqrt(sqrt0, states)]


def write_trace_csv(trace: GenerationTrace, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "fidelity", "x", "y", "z"])
        for s in trace.steps:
            fid = "" if s.fidelity is None else repr(s.fidelity)
            xyz = ["", "", ""] if s.bloch is None else [repr(c) for c in s.bloch]
            w.writerow([s.t, fid, *xyz])


def density_to_json(rho) -> dict:
    rho = np.asarray(rho, dtype=np.complex128)
    return {
        "n_qubits": qstate.n_qubits_of(rho.shape[0]),
        "data": [[float(z.real), float(z.imag)] for z in rho.ravel()],
    }


def density_from_json(d: dict) -> np.ndarray:
    dim = 2 ** int(d["n_qubits"])
    flat = np.array([complex(re, im) for re, im in d["data"]], dtype=np.complex128)
    return flat.reshape(dim, dim)


def write_state_json(rho, path) -> None:
    Path(path).write_text(json.dumps(density_to_json(rho)) + "\n")
