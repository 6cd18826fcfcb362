"""Forward (noising) process: cosine schedule and depolarizing steps."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from qgdm import qstate


@dataclass(frozen=True)
class NoiseSchedule:
    """``alpha[t - 1]`` and ``alpha_bar[t - 1]`` hold the values for timestep ``t``."""

    T: int
    s: float
    alpha: np.ndarray
    alpha_bar: np.ndarray

    def alpha_bar_at(self, t: int) -> float:
        """Cumulative signal weight, with ``alpha_bar_at(0) == 1``."""
        if not 0 <= t <= self.T:
            raise ValueError(f"timestep {t} outside 0..{self.T}")
        return 1.0 if t == 0 else float(self.alpha_bar[t - 1])

    def alpha_at(self, t: int) -> float:
        _check_t(t, self)
        return float(self.alpha[t - 1])


def _check_t(t: int, sched: NoiseSchedule) -> None:
    if not 1 <= t <= sched.T:
        raise ValueError(f"timestep {t} outside 1..{sched.T}")


def cosine_schedule(T: int, s: float = 0.008) -> NoiseSchedule:
    """``alpha_bar_t = g(t)/g(0)`` with ``g(t) = cos(((t/T + s)/(1 + s)) * pi/2)**2``.

    ``alpha_t`` is the ratio of consecutive ``alpha_bar`` values. The final
    value ``alpha_bar_T`` is pinned to exactly zero: ``g(T)`` is ``cos(pi/2)**2``
    which is zero analytically but about 4e-33 in floating point.
    """
    if T < 2:
        raise ValueError("schedule needs T >= 2")
    if s <= 0:
        raise ValueError("offset s must be positive")

    def g(t):
        return np.cos(((t / T + s) / (1 + s)) * np.pi / 2) ** 2

    ts = np.arange(0, T + 1, dtype=float)
    bar = g(ts) / g(0.0)
    bar[0] = 1.0
    bar[T] = 0.0
    if bar[T - 1] <= 0.0:
        raise ValueError("alpha_bar vanishes before the final step")
    alpha = bar[1:] / bar[:-1]
    return NoiseSchedule(T=T, s=s, alpha=np.clip(alpha, 0.0, 1.0), alpha_bar=bar[1:].copy())


def forward_step(rho_prev, t: int, sched: NoiseSchedule) -> np.ndarray:
    """One depolarizing step ``rho_{t-1} -> rho_t``."""
    _check_t(t, sched)
    return qstate.depolarize(rho_prev, sched.alpha_at(t))


def forward_to(rho0, t: int, sched: NoiseSchedule) -> np.ndarray:
    """Closed-form jump ``rho_t = (1 - alpha_bar_t) I/d + alpha_bar_t rho_0``.

    ``t == 0`` returns ``rho0`` itself.
    """
    if t == 0:
        return np.asarray(rho0, dtype=np.complex128)
    _check_t(t, sched)
    return qstate.depolarize(rho0, sched.alpha_bar_at(t))


def forward_stack(rho0, ts, sched: NoiseSchedule) -> np.ndarray:
    """``forward_to`` for several timesteps at once, shape ``(len(ts), d, d)``."""
    rho0 = np.asarray(rho0, dtype=np.complex128)
    d = rho0.shape[0]
    bars = np.array([sched.alpha_bar_at(int(t)) for t in ts])
    eye = np.eye(d, dtype=np.complex128) / d
    return bars[:, None, None] * rho0 + (1.0 - bars)[:, None, None] * eye


def write_schedule_csv(sched: NoiseSchedule, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "alpha", "alpha_bar"])
        for t in range(1, sched.T + 1):
            w.writerow([t, repr(float(sched.alpha[t - 1])), repr(float(sched.alpha_bar[t - 1]))])
