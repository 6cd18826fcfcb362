"""Trainable backward (denoising) maps.

Three variants share one timestep-embedding circuit and differ in how the
embedding state ``tau_t`` is combined with the noisy input ``rho_t``:

``qgdm``
    ``U`` acts on ``tau_t (x) rho_t``; the first ``n`` qubits are kept.
``rqgdm``
    ``U1`` compresses ``rho_t`` into its last qubit, ``U2`` acts on
    ``tau_t (x) rho'_t`` (``n + 1`` qubits) and the last qubit is discarded.
``naive``
    ``U`` acts on ``tau_t (x) rho_t`` and the embedding register is traced out.
    This is the design that collapses to copying its input.

In every layout the embedding register occupies the high-order qubits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from qgdm import circuits, linalg, qstate

VARIANTS = ("qgdm", "rqgdm", "naive")
CHECKPOINT_FORMAT = "qgdm-checkpoint"
CHECKPOINT_VERSION = 1


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class Architecture:
    variant: str
    n: int
    n_tau: int
    T: int
    embed_layers: int = 5
    layers: int = 1

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ModelError(f"unknown variant {self.variant!r}")
        if self.n < 1 or self.n_tau < 1 or self.T < 1:
            raise ModelError("n, n_tau and T must be positive")
        if self.variant == "rqgdm":
            if self.n < 2:
                raise ModelError("rqgdm needs n >= 2")
            if self.n_tau != self.n:
                raise ModelError("rqgdm uses an n-qubit embedding register (n_tau == n)")

    @cached_property
    def embed_template(self) -> circuits.CircuitTemplate:
        return circuits.timestep_embedding_template(self.n_tau, self.embed_layers)

    @cached_property
    def denoise_templates(self) -> dict[str, circuits.CircuitTemplate]:
        if self.variant == "rqgdm":
            return {
                "theta1": circuits.denoising_template(self.n, self.layers),
                "theta2": circuits.denoising_template(self.n + 1, self.layers),
            }
        return {"theta": circuits.denoising_template(self.n_tau + self.n, self.layers)}

    @property
    def block_names(self) -> tuple[str, ...]:
        return ("omega",) + tuple(self.denoise_templates)

    def block_sizes(self) -> dict[str, int]:
        sizes = {"omega": self.embed_template.n_params}
        sizes.update({k: t.n_params for k, t in self.denoise_templates.items()})
        return sizes

    @property
    def n_params(self) -> int:
        return sum(self.block_sizes().values())

    def split(self, flat) -> dict[str, np.ndarray]:
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (self.n_params,):
            raise ModelError(f"expected {self.n_params} parameters, got shape {flat.shape}")
        out, i = {}, 0
        for name, size in self.block_sizes().items():
            out[name] = flat[i : i + size].copy()
            i += size
        return out

    def block_slices(self) -> dict[str, slice]:
        out, i = {}, 0
        for name, size in self.block_sizes().items():
            out[name] = slice(i, i + size)
            i += size
        return out


@dataclass(frozen=True, eq=False)
class ModelParams:
    omega: np.ndarray
    theta: np.ndarray | None = None
    theta1: np.ndarray | None = None
    theta2: np.ndarray | None = None

    def blocks(self) -> dict[str, np.ndarray]:
        return {k: v for k, v in vars(self).items() if v is not None}


@dataclass(frozen=True, eq=False)
class BackwardModel:
    arch: Architecture
    params: ModelParams
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        sizes = self.arch.block_sizes()
        blocks = self.params.blocks()
        if set(blocks) != set(sizes):
            raise ModelError(f"parameter blocks {sorted(blocks)} do not match {sorted(sizes)}")
        for k, v in blocks.items():
            if np.shape(v) != (sizes[k],):
                raise ModelError(f"block {k} has shape {np.shape(v)}, expected ({sizes[k]},)")

    @classmethod
    def from_flat(cls, arch: Architecture, flat) -> BackwardModel:
        return cls(arch, ModelParams(**arch.split(flat)))

    @property
    def variant(self) -> str:
        return self.arch.variant

    @property
    def T(self) -> int:
        return self.arch.T

    def flat_params(self) -> np.ndarray:
        blocks = self.params.blocks()
        return np.concatenate([np.asarray(blocks[k], dtype=float) for k in self.arch.block_names])

    def unitaries(self) -> dict[str, np.ndarray]:
        if "u" not in self._cache:
            blocks = self.params.blocks()
            self._cache["u"] = {
                k: circuits.circuit_unitary(t, blocks[k]) for k, t in self.arch.denoise_templates.items()
            }
        return self._cache["u"]

    def embedding_states(self, ts) -> np.ndarray:
        return embedding_states(self.arch, self.params.omega, ts)

    def backward_batch(self, rhos: np.ndarray, ts) -> np.ndarray:
        taus = projectors(self.embedding_states(ts))
        return apply_backward(self.arch, taus, self.unitaries(), rhos)


def init_params(arch: Architecture, rng: np.random.Generator) -> ModelParams:
    """Every angle drawn from U(0, pi)."""
    return ModelParams(**arch.split(rng.uniform(0.0, np.pi, size=arch.n_params)))


def scaled_timestep(t, T: int):
    return np.asarray(t, dtype=float) * np.pi / T


def _check_ts(ts, T: int) -> np.ndarray:
    ts = np.atleast_1d(np.asarray(ts, dtype=int))
    if np.any(ts < 1) or np.any(ts > T):
        raise ModelError(f"timesteps must lie in 1..{T}")
    return ts


def embedding_states(arch: Architecture, omega, ts) -> np.ndarray:
    """Amplitude vectors of ``tau_t`` for each ``t``, shape ``(len(ts), 2**n_tau)``."""
    ts = _check_ts(ts, arch.T)
    u = circuits.circuit_unitary(arch.embed_template, omega, scaled_timestep(ts, arch.T))
    return u[..., :, 0]


def projectors(psis: np.ndarray) -> np.ndarray:
    return psis[..., :, None] * psis[..., None, :].conj()


def _conj(u: np.ndarray, x: np.ndarray) -> np.ndarray:
    return u @ x @ u.conj().T


def apply_backward(arch: Architecture, taus: np.ndarray, unitaries: dict, rhos: np.ndarray) -> np.ndarray:
    """Batched backward map given embedding projectors and circuit unitaries."""
    n, n_tau = arch.n, arch.n_tau
    if arch.variant == "qgdm":
        y = _conj(unitaries["theta"], linalg.kron(taus, rhos))
        return linalg.partial_trace(y, (2**n, 2**n_tau), keep="A")
    if arch.variant == "naive":
        y = _conj(unitaries["theta"], linalg.kron(taus, rhos))
        return linalg.partial_trace(y, (2**n_tau, 2**n), keep="B")
    compressed = linalg.partial_trace(_conj(unitaries["theta1"], rhos), (2 ** (n - 1), 2), keep="B")
    y = _conj(unitaries["theta2"], linalg.kron(taus, compressed))
    return linalg.partial_trace(y, (2**n, 2), keep="A")


def embed_timestep(model: BackwardModel, t: int) -> np.ndarray:
    """Embedding state ``tau_t`` as a density matrix."""
    psi = model.embedding_states([t])[0]
    return np.outer(psi, psi.conj())


def _backward_one(model: BackwardModel, rho, t: int, variant: str) -> np.ndarray:
    if model.variant != variant:
        raise ModelError(f"model variant is {model.variant!r}, not {variant!r}")
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.shape != (2**model.arch.n,) * 2:
        raise ModelError(f"input of shape {rho.shape} is not a {model.arch.n}-qubit state")
    out = model.backward_batch(rho[None], [t])[0]
    return qstate._checked(out)


def backward_qgdm(model: BackwardModel, rho, t: int) -> np.ndarray:
    return _backward_one(model, rho, t, "qgdm")


def backward_rqgdm(model: BackwardModel, rho, t: int) -> np.ndarray:
    return _backward_one(model, rho, t, "rqgdm")


def backward_naive(model: BackwardModel, rho, t: int) -> np.ndarray:
    return _backward_one(model, rho, t, "naive")


def backward(model: BackwardModel, rho, t: int) -> np.ndarray:
    return _backward_one(model, rho, t, model.variant)


def circuit_io_distance(model: BackwardModel, rho, t: int) -> float:
    """HS distance between ``tau_t (x) rho_t`` and its image under the denoising circuit.

    Defined for the single-circuit variants (``qgdm`` and ``naive``).
    """
    if model.variant == "rqgdm":
        raise ModelError("input/output distance is defined for single-circuit variants")
    x = np.kron(embed_timestep(model, t), np.asarray(rho, dtype=np.complex128))
    return qstate.hs_distance(x, _conj(model.unitaries()["theta"], x))


# Checkpoints ---------------------------------------------------------------


def model_to_dict(model: BackwardModel) -> dict:
    a = model.arch
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "variant": a.variant,
        "n": a.n,
        "n_tau": a.n_tau,
        "T": a.T,
        "embed_layers": a.embed_layers,
        "layers": a.layers,
        "params": {k: [float(x) for x in v] for k, v in model.params.blocks().items()},
    }


def model_from_dict(d: dict) -> BackwardModel:
    if d.get("format") != CHECKPOINT_FORMAT:
        raise ModelError("not a model checkpoint")
    if d.get("version") != CHECKPOINT_VERSION:
        raise ModelError(f"unsupported checkpoint version {d.get('version')}")
    arch = Architecture(d["variant"], d["n"], d["n_tau"], d["T"], d["embed_layers"], d["layers"])
    params = ModelParams(**{k: np.array(v, dtype=float) for k, v in d["params"].items()})
    return BackwardModel(arch, params)


def save_checkpoint(model: BackwardModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n")


def load_checkpoint(path) -> BackwardModel:
    return model_from_dict(json.loads(Path(path).read_text()))
