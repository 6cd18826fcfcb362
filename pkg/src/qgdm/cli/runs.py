"""Per-seed experiment jobs and their on-disk artifacts.

Each seed owns one subdirectory. Everything except ``timing.csv`` is a pure
function of the configuration and the seed, so repeated runs produce
byte-identical files.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from qgdm import circuits, denoise, diffusion, generate, qstate
from qgdm import train as training
from qgdm.cli.config import ExperimentConfig

MANIFEST_VERSION = 1
FORMAT_VERSIONS = {
    "checkpoint": denoise.CHECKPOINT_VERSION,
    "train_csv": 1,
    "generation_csv": 1,
    "state_json": 1,
    "manifest": MANIFEST_VERSION,
}


@dataclass(frozen=True)
class RunResult:
    seed: int
    run_dir: str
    final_fidelity: float | None = None
    epochs: int = 0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def make_target(cfg: ExperimentConfig, rng: np.random.Generator) -> np.ndarray:
    if cfg.target == "pure":
        return qstate.from_pure(circuits.random_pure_state(cfg.n, rng))
    return circuits.random_mixed_state(cfg.n, rng, k=cfg.k)


def _write_rows(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_train_csv(records, path) -> None:
    _write_rows(
        Path(path),
        ["epoch", "loss", "loss_L0", "loss_batch_mean", "lr"],
        ([r.epoch, _fmt(r.loss), _fmt(r.loss_L0), _fmt(r.loss_batch_mean), _fmt(r.learning_rate)] for r in records),
    )


def write_timing_csv(records, path) -> None:
    _write_rows(Path(path), ["epoch", "wall_time"], ([r.epoch, f"{r.wall_time:.6f}"] for r in records))


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(cfg: ExperimentConfig, seed: int, run_dir: Path, command: str) -> None:
    files = sorted(p for p in run_dir.iterdir() if p.is_file() and p.name not in ("MANIFEST.json", "timing.csv"))
    manifest = {
        "command": command,
        "config_sha256": cfg.config_hash(),
        "config": cfg.to_dict(),
        "seed": seed,
        "formats": FORMAT_VERSIONS,
        "files": {p.name: _sha256(p) for p in files},
    }
    (run_dir / "MANIFEST.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")


class FailureDiagnostics:
    """Per-epoch distances between the denoising circuit's input and output.

    ``composite`` compares ``tau_t (x) rho_t`` with its image under ``U``;
    ``register`` compares ``rho_t`` with the reduced output. Both are
    averaged over t = 1..T.
    """

    def __init__(self, rho0, sched: diffusion.NoiseSchedule):
        self.sched = sched
        self.inputs = diffusion.forward_stack(rho0, np.arange(1, sched.T + 1), sched)
        self.rows: list[tuple[int, float, float]] = []

    def __call__(self, model: denoise.BackwardModel, rec: training.TrainRecord) -> None:
        ts = np.arange(1, self.sched.T + 1)
        composite = np.mean([denoise.circuit_io_distance(model, r, t) for r, t in zip(self.inputs, ts)])
        outs = model.backward_batch(self.inputs, ts)
        register = np.mean([qstate.hs_distance(a, b) for a, b in zip(self.inputs, outs)])
        self.rows.append((rec.epoch, float(composite), float(register)))


def density_comparison(generated, target) -> dict:
    gen = np.asarray(generated)
    tgt = np.asarray(target)
    return {
        "generated": {"real": gen.real.tolist(), "imag": gen.imag.tolist()},
        "target": {"real": tgt.real.tolist(), "imag": tgt.imag.tolist()},
        "fidelity": qstate.fidelity(tgt, gen),
        "hs_distance": qstate.hs_distance(tgt, gen),
    }


def run_seed(cfg: ExperimentConfig, seed: int, run_dir, command: str = "train") -> RunResult:
    """Train and evaluate one seed, writing every artifact into ``run_dir``."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    streams = training.make_streams(seed)
    rho0 = make_target(cfg, streams["target"])
    tcfg = dataclasses.replace(cfg.train, seed=seed)
    sched = diffusion.cosine_schedule(tcfg.T, tcfg.s)

    diagnostics = FailureDiagnostics(rho0, sched) if command == "failure-study" else None
    model, records = training.train(tcfg, cfg.variant, rho0, n_tau=cfg.n_tau, streams=streams, on_epoch=diagnostics)
    trace = generate.generate(model, rho0)

    denoise.save_checkpoint(model, run_dir / "checkpoint.json")
    write_train_csv(records, run_dir / "train.csv")
    write_timing_csv(records, run_dir / "timing.csv")
    generate.write_trace_csv(trace, run_dir / "generation.csv")
    generate.write_state_json(trace.final_state, run_dir / "final_state.json")
    generate.write_state_json(rho0, run_dir / "target_state.json")
    diffusion.write_schedule_csv(sched, run_dir / "schedule.csv")
    if diagnostics is not None:
        _write_rows(
            run_dir / "hs_distance.csv",
            ["epoch", "composite_hs", "register_hs"],
            ([e, _fmt(c), _fmt(r)] for e, c, r in diagnostics.rows),
        )
        comparison = density_comparison(trace.final_state, rho0)
        (run_dir / "density_comparison.json").write_text(json.dumps(comparison, indent=1) + "\n")
    result = {"seed": seed, "final_fidelity": trace.final_fidelity, "epochs": len(records)}
    (run_dir / "result.json").write_text(json.dumps(result, sort_keys=True) + "\n")
    write_manifest(cfg, seed, run_dir, command)
    return RunResult(seed, str(run_dir), trace.final_fidelity, len(records))


def _job(args) -> RunResult:
    cfg, seed, run_dir, command = args
    try:
        return run_seed(cfg, seed, run_dir, command)
    except Exception as exc:
        detail = "".join(traceback.format_exception_only(type(exc), exc)).strip()
        return RunResult(seed, str(run_dir), error=detail)


def run_seeds(cfg: ExperimentConfig, out_dir, command: str = "train", jobs: int = 1) -> list[RunResult]:
    """Run every seed of ``cfg`` under ``out_dir/seed_XXXX``. Failures are captured, not raised."""
    out_dir = Path(out_dir)
    tasks = [(cfg, s, out_dir / f"seed_{s:04d}", command) for s in cfg.seeds]
    if jobs <= 1:
        return [_job(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_job, tasks))


def read_result(run_dir) -> dict:
    return json.loads((Path(run_dir) / "result.json").read_text())
