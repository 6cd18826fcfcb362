"""Experiment configuration: flat TOML files plus command-line overrides."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from qgdm.denoise import VARIANTS
from qgdm.train import ConfigError, TrainConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

TARGETS = ("pure", "mixed")
QGDM_MAX_QUBITS = 4

_TRAIN_FIELDS = {f.name for f in dataclasses.fields(TrainConfig)} - {"seed"}


def default_layers(variant: str, n: int, target: str) -> int:
    """Denoising-circuit depth used for each size in the reference runs."""
    mixed = target == "mixed"
    if variant == "rqgdm":
        if n <= 2:
            return 1
        if n <= 4:
            return 2 if mixed else 1
        if n <= 6:
            return 3 if mixed else 1
        return 4 if mixed else 1
    if n <= 2:
        return 1
    if n == 3:
        return 2 if mixed else 1
    return 3 if mixed else 2


def reference_train_config(variant: str, n: int, target: str) -> TrainConfig:
    """Reference hyperparameters for ``(variant, n, target)``."""
    fields = {"layers": default_layers(variant, n, target)}
    if variant == "rqgdm" and n >= 6:
        mixed = target == "mixed"
        fields.update(
            epochs=500 if mixed else 200,
            lr_decay_steps=500 if mixed else 200,
            lr_initial=0.5,
            lr_final=0.07,
        )
        if n == 8 and mixed:
            fields["T"] = 90
    return TrainConfig(**fields)


@dataclass(frozen=True)
class ExperimentConfig:
    variant: str = "qgdm"
    n: int = 1
    n_tau: int | None = None
    target: str = "pure"
    k: int = 2
    seeds: tuple[int, ...] = tuple(range(10))
    out: str = "runs/experiment"
    allow_large: bool = False
    train: TrainConfig = field(default_factory=TrainConfig)

    @property
    def effective_n_tau(self) -> int:
        return self.n if self.n_tau is None else self.n_tau

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.target not in TARGETS:
            raise ConfigError(f"target must be one of {TARGETS}, got {self.target!r}")
        if self.n < 1 or self.effective_n_tau < 1:
            raise ConfigError("n and n_tau must be positive")
        if self.variant == "qgdm" and self.n > QGDM_MAX_QUBITS and not self.allow_large:
            raise ConfigError(
                f"qgdm with n={self.n} exceeds the n <= {QGDM_MAX_QUBITS} budget; set allow_large to override"
            )
        if self.variant == "rqgdm":
            if self.n < 2:
                raise ConfigError("rqgdm requires n >= 2 (it reduces to qgdm at n=1)")
            if self.effective_n_tau != self.n:
                raise ConfigError("rqgdm requires n_tau == n")
        if self.target == "mixed" and self.k < 2:
            raise ConfigError("mixed targets need k >= 2 components")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        self.train.validate()

    def to_dict(self) -> dict:
        """Everything that determines results; the output location is left out."""
        d = dataclasses.asdict(self)
        d.pop("out")
        d["seeds"] = list(self.seeds)
        d["train"].pop("seed")
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def build_config(values: dict) -> ExperimentConfig:
    """Resolve a flat mapping into a validated config.

    Training fields missing from ``values`` take the reference values for
    the chosen variant, size and target kind.
    """
    values = dict(values)
    unknown = set(values) - _TRAIN_FIELDS - {f.name for f in dataclasses.fields(ExperimentConfig)}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    train_vals = {k: values.pop(k) for k in list(values) if k in _TRAIN_FIELDS}
    values.pop("train", None)
    if "seeds" in values:
        values["seeds"] = tuple(int(s) for s in values["seeds"])
    base = ExperimentConfig(**values)
    preset = reference_train_config(base.variant, base.n, base.target)
    cfg = dataclasses.replace(base, train=dataclasses.replace(preset, **train_vals))
    cfg.validate()
    return cfg


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    with Path(path).open("rb") as fh:
        try:
            values = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    nested = [k for k, v in values.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"config must be flat; found tables {nested}")
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return build_config(values)
