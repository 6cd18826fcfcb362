"""Command-line entry point: ``qgdm <command> [options]``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

from qgdm import denoise, qstate
from qgdm.cli import runs
from qgdm.cli.config import ExperimentConfig, build_config, load_config
from qgdm.cli.stats import relative_change, summarize_values
from qgdm.train import ConfigError

log = logging.getLogger("qgdm")

EXIT_OK = 0
EXIT_RUN_FAILED = 1
EXIT_CONFIG = 2


def parse_int_list(text: str) -> list[int]:
    """``"0,2,5"`` or ``"0-9"`` or a mix such as ``"0-3,7"``."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = (int(x) for x in part.split("-", 1))
            if hi < lo:
                raise argparse.ArgumentTypeError(f"empty range {part!r}")
            out.extend(range(lo, hi + 1))
        else:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("empty integer list")
    return out


def parse_float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.replace(",", " ").split()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat TOML experiment file")
    p.add_argument("--seed", type=int, help="run a single seed")
    p.add_argument("--seeds", type=parse_int_list, help="seed list such as 0-9 or 1,4,7")
    p.add_argument("--out", help="output directory")
    p.add_argument("--variant", choices=denoise.VARIANTS)
    p.add_argument("--n", type=int, help="number of data qubits")
    p.add_argument("--ntau", type=int, help="embedding-register qubits (defaults to n)")
    p.add_argument("--target", choices=("pure", "mixed"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--allow-large", action="store_true", default=None, help="lift the qgdm n <= 4 limit")
    p.add_argument("--jobs", type=int, default=1, help="seeds run in parallel")


def resolve_config(args: argparse.Namespace, **forced) -> ExperimentConfig:
    overrides = {
        "variant": args.variant,
        "n": args.n,
        "n_tau": args.ntau,
        "target": args.target,
        "out": args.out,
        "epochs": args.epochs,
        "allow_large": args.allow_large,
    }
    if args.seed is not None and args.seeds is not None:
        raise ConfigError("give either --seed or --seeds, not both")
    if args.seed is not None:
        overrides["seeds"] = [args.seed]
    elif args.seeds is not None:
        overrides["seeds"] = args.seeds
    overrides.update(forced)
    if args.config is not None:
        return load_config(args.config, overrides)
    return build_config({k: v for k, v in overrides.items() if v is not None})


def _report(cfg: ExperimentConfig, results: list[runs.RunResult], out_dir: Path) -> dict:
    done = [r for r in results if r.ok]
    failed = [r for r in results if not r.ok]
    for r in failed:
        log.error("seed %d failed: %s", r.seed, r.error)
    summary = {
        "config_sha256": cfg.config_hash(),
        "variant": cfg.variant,
        "n": cfg.n,
        "n_tau": cfg.effective_n_tau,
        "target": cfg.target,
        "runs": [{"seed": r.seed, "final_fidelity": r.final_fidelity, "epochs": r.epochs} for r in done],
        "failed": [{"seed": r.seed, "error": r.error} for r in failed],
        "summary": summarize_values(r.final_fidelity for r in done).to_dict() if done else None,
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    if done:
        s = summary["summary"]
        log.info("%s n=%d: median %.6f mean %.6f std %.2e over %d seeds", cfg.variant, cfg.n, s["median"], s["mean"], s["std"], s["count"])
    return summary


def cmd_train(args, command: str = "train", **forced) -> int:
    cfg = resolve_config(args, **forced)
    out_dir = Path(cfg.out)
    results = runs.run_seeds(cfg, out_dir, command=command, jobs=args.jobs)
    _report(cfg, results, out_dir)
    return EXIT_OK if all(r.ok for r in results) else EXIT_RUN_FAILED


def cmd_failure_study(args) -> int:
    return cmd_train(args, command="failure-study", variant="naive")


def cmd_sweep_ntau(args) -> int:
    base = resolve_config(args)
    if base.variant != "qgdm":
        raise ConfigError("sweep-ntau requires variant = qgdm")
    configs = [dataclasses.replace(base, n_tau=k) for k in args.ntaus]
    for cfg in configs:
        cfg.validate()
    rows, status = [], EXIT_OK
    for cfg in configs:
        out_dir = Path(base.out) / f"ntau_{cfg.n_tau}"
        results = runs.run_seeds(cfg, out_dir, jobs=args.jobs)
        summary = _report(cfg, results, out_dir)
        if not all(r.ok for r in results):
            status = EXIT_RUN_FAILED
        s = summary["summary"]
        if s is not None:
            rows.append([cfg.n_tau, s["count"], repr(s["median"]), repr(s["mean"]), repr(s["std"])])
    with (Path(base.out) / "sweep.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n_tau", "count", "median", "mean", "std"])
        w.writerows(rows)
    return status


def bloch_trajectory(model: denoise.BackwardModel) -> list[tuple[int, float, float, float]]:
    if model.arch.n_tau != 1:
        raise ConfigError(f"export-bloch needs a single-qubit embedding register, checkpoint has n_tau={model.arch.n_tau}")
    return [(t, *qstate.bloch_coordinates(denoise.embed_timestep(model, t))) for t in range(1, model.T + 1)]


def cmd_export_bloch(args) -> int:
    model = denoise.load_checkpoint(args.checkpoint)
    rows = bloch_trajectory(model)
    out = Path(args.out) if args.out else Path(args.checkpoint).with_name("bloch.csv")
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "y", "z"])
        w.writerows([t, repr(x), repr(y), repr(z)] for t, x, y, z in rows)
    log.info("wrote %d rows to %s", len(rows), out)
    return EXIT_OK


def _fidelities_from_dirs(dirs) -> list[float]:
    values = []
    for d in dirs:
        d = Path(d)
        results = [d / "result.json"] if (d / "result.json").exists() else sorted(d.glob("seed_*/result.json"))
        if not results:
            raise ConfigError(f"no completed runs under {d}")
        values.extend(json.loads(p.read_text())["final_fidelity"] for p in results)
    return values


def cmd_summarize(args) -> int:
    if args.dirs and args.values:
        raise ConfigError("give run directories or --values, not both")
    values = args.values if args.values else _fidelities_from_dirs(args.dirs)
    if not values:
        raise ConfigError("nothing to summarize")
    report = {"summary": summarize_values(values).to_dict()}
    if args.baseline_values or args.baseline_dirs:
        base = args.baseline_values if args.baseline_values else _fidelities_from_dirs(args.baseline_dirs)
        change = relative_change(values, base)
        report["baseline"] = summarize_values(base).to_dict()
        report["relative_change"] = change
        report["relative_change_percent"] = 100.0 * change
    text = json.dumps(report, indent=1, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qgdm", description="Density-matrix diffusion-model experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train and evaluate one configuration over seeds")
    _experiment_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep-ntau", help="repeat training over embedding-register sizes")
    _experiment_flags(p)
    p.add_argument("--ntaus", type=parse_int_list, required=True, help="e.g. 1,2,3")
    p.set_defaults(func=cmd_sweep_ntau)

    p = sub.add_parser("failure-study", help="train the naive variant and record its diagnostics")
    _experiment_flags(p)
    p.set_defaults(func=cmd_failure_study)

    p = sub.add_parser("export-bloch", help="Bloch coordinates of the embedding states of a checkpoint")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("--out", help="CSV path (default: bloch.csv next to the checkpoint)")
    p.set_defaults(func=cmd_export_bloch)

    p = sub.add_parser("summarize", help="median/mean/std over runs and optional relative change")
    p.add_argument("dirs", nargs="*", type=Path, help="run or experiment directories")
    p.add_argument("--values", type=parse_float_list, help="fidelities given directly")
    p.add_argument("--baseline-dirs", nargs="+", type=Path)
    p.add_argument("--baseline-values", type=parse_float_list)
    p.add_argument("--out", help="also write the report to this JSON file")
    p.set_defaults(func=cmd_summarize)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (denoise.ModelError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUN_FAILED


if __name__ == "__main__":
    sys.exit(main())
