"""Loss, finite-difference gradients, Adam and the training loop."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from qgdm import diffusion, qstate
from qgdm.denoise import (
    Architecture,
    BackwardModel,
    projectors,
    apply_backward,
    embedding_states,
    init_params,
)
from qgdm import circuits


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    T: int = 30
    s: float = 0.008
    batch_size: int = 16
    lam: float = 0.02
    epochs: int = 200
    lr_initial: float = 0.3
    lr_final: float = 0.01
    lr_decay_steps: int = 200
    embed_layers: int = 5
    layers: int = 1
    fd_step: float = 1e-3
    seed: int = 0
    converge_window: int = 10
    converge_tol: float = 1e-6

    def validate(self) -> None:
        if self.T < 2:
            raise ConfigError("T must be at least 2")
        if not 1 <= self.batch_size <= self.T - 1:
            raise ConfigError(f"batch_size must lie in 1..T-1 = 1..{self.T - 1}, got {self.batch_size}")
        if self.lam < 0:
            raise ConfigError("lam must be non-negative")
        if not self.lr_initial >= self.lr_final > 0:
            raise ConfigError("need lr_initial >= lr_final > 0")
        if self.epochs < 1 or self.lr_decay_steps < 1:
            raise ConfigError("epochs and lr_decay_steps must be positive")
        if self.embed_layers < 1 or self.layers < 1:
            raise ConfigError("layer counts must be positive")
        if self.fd_step <= 0:
            raise ConfigError("fd_step must be positive")
        if self.s <= 0:
            raise ConfigError("schedule offset s must be positive")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, size: int) -> AdamState:
        return cls(np.zeros(size), np.zeros(size))


@dataclass(frozen=True)
class TrainRecord:
    epoch: int
    loss: float
    loss_L0: float
    loss_batch_mean: float
    learning_rate: float
    wall_time: float = field(default=0.0, compare=False)


def lr_at(step: int, cfg: TrainConfig) -> float:
    """Cosine decay from ``lr_initial`` to ``lr_final``, flat afterwards."""
    if step < 0:
        raise ValueError("step must be non-negative")
    frac = min(step, cfg.lr_decay_steps) / cfg.lr_decay_steps
    return cfg.lr_final + 0.5 * (cfg.lr_initial - cfg.lr_final) * (1.0 + math.cos(math.pi * frac))


def adam_step(state: AdamState, params, grad, lr: float) -> np.ndarray:
    """Bias-corrected Adam update. ``state`` is advanced in place."""
    params = np.asarray(params, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if params.shape != grad.shape or state.m.shape != params.shape:
        raise ValueError("params, grad and optimizer state must have equal length")
    state.step += 1
    state.m = state.beta1 * state.m + (1 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1 - state.beta2) * grad**2
    m_hat = state.m / (1 - state.beta1**state.step)
    v_hat = state.v / (1 - state.beta2**state.step)
    return params - lr * m_hat / (np.sqrt(v_hat) + state.eps)


def sample_timesteps(rng: np.random.Generator, T: int, batch_size: int) -> np.ndarray:
    """``batch_size`` distinct timesteps drawn uniformly from 2..T."""
    return rng.choice(np.arange(2, T + 1), size=batch_size, replace=False)


class LossProblem:
    """Everything about the loss that does not depend on the parameters.

    Noisy inputs ``rho_t`` and the square roots of the targets ``rho_{t-1}``
    are computed once for every timestep and indexed per batch.
    """

    def __init__(self, arch: Architecture, rho0, sched: diffusion.NoiseSchedule):
        if sched.T != arch.T:
            raise ConfigError(f"schedule has T={sched.T}, model has T={arch.T}")
        rho0 = np.asarray(rho0, dtype=np.complex128)
        if rho0.shape != (2**arch.n,) * 2:
            raise ConfigError(f"target of shape {rho0.shape} is not a {arch.n}-qubit state")
        self.arch = arch
        self.rho0 = rho0
        self.sched = sched
        all_t = np.arange(0, sched.T + 1)
        self._states = diffusion.forward_stack(rho0, all_t, sched)
        self._sqrt = np.stack([qstate.sqrt_density(r) for r in self._states])

    def inputs(self, ts) -> np.ndarray:
        return self._states[np.asarray(ts)]

    def losses_from_parts(self, ts, psis, unitaries) -> np.ndarray:
        ts = np.asarray(ts)
        out = apply_backward(self.arch, projectors(psis), unitaries, self._states[ts])
        return 1.0 - qstate.fidelity_from_sqrt(self._sqrt[ts - 1], out)

    def losses(self, flat, ts) -> np.ndarray:
        blocks = self.arch.split(flat)
        psis = embedding_states(self.arch, blocks["omega"], ts)
        return self.losses_from_parts(ts, psis, _unitaries(self.arch, blocks))

    def combine(self, per_t: np.ndarray, lam: float) -> tuple[float, float, float]:
        """``(total, L0, batch mean)``; ``per_t[0]`` is the t=1 term."""
        l0 = float(per_t[0])
        mean = float(per_t[1:].mean()) if per_t.size > 1 else 0.0
        return l0 + lam * mean, l0, mean


def _unitaries(arch: Architecture, blocks: dict) -> dict:
    return {k: circuits.circuit_unitary(t, blocks[k]) for k, t in arch.denoise_templates.items()}


def _batch_ts(sampled_ts) -> np.ndarray:
    sampled = np.asarray(sampled_ts, dtype=int)
    if len(set(sampled.tolist())) != sampled.size:
        raise ValueError("sampled timesteps must be unique")
    if np.any(sampled == 1):
        raise ValueError("t=1 belongs to the L0 term, not the batch")
    return np.concatenate([[1], sampled])


def loss_t(model: BackwardModel, rho0, t: int, sched: diffusion.NoiseSchedule) -> float:
    """``1 - F(rho_{t-1}, f(rho_t, t))`` for a single timestep."""
    if not 1 <= t <= sched.T:
        raise ValueError(f"timestep {t} outside 1..{sched.T}")
    target = diffusion.forward_to(rho0, t - 1, sched)
    pred = model.backward_batch(diffusion.forward_to(rho0, t, sched)[None], [t])[0]
    return 1.0 - qstate.fidelity(target, pred)


def total_loss(model: BackwardModel, rho0, sampled_ts, sched, lam: float) -> float:
    problem = LossProblem(model.arch, rho0, sched)
    per_t = problem.losses(model.flat_params(), _batch_ts(sampled_ts))
    return problem.combine(per_t, lam)[0]


def finite_difference_gradient(fn: Callable[[np.ndarray], float], x, h: float) -> np.ndarray:
    """Central differences ``(f(x + h e_i) - f(x - h e_i)) / 2h``."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fn(x + e) - fn(x - e)) / (2 * h)
    return g


def problem_gradient(problem: LossProblem, flat, ts, lam: float, h: float) -> np.ndarray:
    """FD gradient of the combined loss on one fixed batch ``ts``.

    A perturbed coordinate only invalidates its own block: embedding states
    are reused when a circuit angle moves and vice versa.
    """
    arch = problem.arch
    flat = np.asarray(flat, dtype=float)
    blocks = arch.split(flat)
    psis = embedding_states(arch, blocks["omega"], ts)
    units = _unitaries(arch, blocks)
    grad = np.empty_like(flat)
    for name, sl in arch.block_slices().items():
        for i in range(sl.start, sl.stop):
            vals = []
            for sign in (1.0, -1.0):
                b = blocks[name].copy()
                b[i - sl.start] += sign * h
                if name == "omega":
                    per_t = problem.losses_from_parts(ts, embedding_states(arch, b, ts), units)
                else:
                    tmpl = arch.denoise_templates[name]
                    u = dict(units, **{name: circuits.circuit_unitary(tmpl, b)})
                    per_t = problem.losses_from_parts(ts, psis, u)
                vals.append(problem.combine(per_t, lam)[0])
            grad[i] = (vals[0] - vals[1]) / (2 * h)
    return grad


def gradient(model: BackwardModel, rho0, sampled_ts, sched, lam: float, h: float = 1e-3) -> np.ndarray:
    if h <= 0:
        raise ValueError("step h must be positive")
    problem = LossProblem(model.arch, rho0, sched)
    return problem_gradient(problem, model.flat_params(), _batch_ts(sampled_ts), lam, h)


def make_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent Philox streams for target preparation, initialization and batching."""
    children = np.random.SeedSequence(seed).spawn(3)
    names = ("target", "init", "batch")
    return {k: np.random.Generator(np.random.Philox(c)) for k, c in zip(names, children)}


def architecture_for(cfg: TrainConfig, variant: str, n: int, n_tau: int | None = None) -> Architecture:
    if n_tau is None:
        n_tau = n
    return Architecture(variant, n, n_tau, cfg.T, cfg.embed_layers, cfg.layers)


def train(
    cfg: TrainConfig,
    variant: str,
    rho0,
    *,
    n_tau: int | None = None,
    streams: dict[str, np.random.Generator] | None = None,
    on_epoch: Callable[[BackwardModel, TrainRecord], None] | None = None,
) -> tuple[BackwardModel, list[TrainRecord]]:
    """Fit a backward model to ``rho0``.

    Each epoch evaluates the t=1 term plus a batch of distinct timesteps from
    2..T, takes one Adam step on the combined loss and records it. Training
    ends at ``cfg.epochs`` or once the last ``converge_window`` losses all lie
    within ``converge_tol`` of each other.
    """
    cfg.validate()
    rho0 = np.asarray(rho0, dtype=np.complex128)
    n = qstate.n_qubits_of(rho0.shape[0])
    arch = architecture_for(cfg, variant, n, n_tau)
    sched = diffusion.cosine_schedule(cfg.T, cfg.s)
    problem = LossProblem(arch, rho0, sched)
    if streams is None:
        streams = make_streams(cfg.seed)

    init = init_params(arch, streams["init"])
    flat = np.concatenate([init.blocks()[k] for k in arch.block_names])
    opt = AdamState.zeros(flat.size)
    records: list[TrainRecord] = []
    start = time.perf_counter()
    for epoch in range(cfg.epochs):
        ts = np.concatenate([[1], sample_timesteps(streams["batch"], cfg.T, cfg.batch_size)])
        loss, l0, mean = problem.combine(problem.losses(flat, ts), cfg.lam)
        grad = problem_gradient(problem, flat, ts, cfg.lam, cfg.fd_step)
        lr = lr_at(epoch, cfg)
        rec = TrainRecord(epoch, loss, l0, mean, lr, time.perf_counter() - start)
        records.append(rec)
        if on_epoch is not None:
            on_epoch(BackwardModel.from_flat(arch, flat), rec)
        flat = adam_step(opt, flat, grad, lr)
        window = [r.loss for r in records[-cfg.converge_window :]]
        if len(window) == cfg.converge_window and max(window) - min(window) < cfg.converge_tol:
            break
    return BackwardModel.from_flat(arch, flat), records
