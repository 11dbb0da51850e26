"""Command-line front end: run / sweep / cost / describe.

Every run resolves to (validated config, seed) and emits history.csv,
cost.json/cost.csv and manifest.json under its own directory; sweeps add
a merged.csv aggregating final metrics per grid point. Grid points are
independent and may execute across worker processes; results depend only
on (config, seed), never on scheduling.
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .analog import AnalogBackend, DigitalBackend
from .config import (ConfigError, PRESETS, apply_override, canonical_json,
                     config_hash, load_preset, resolve_config, resolve_dataset_paths,
                     resolve_synthetic_specs, validate_config)
from .dataio import Dataset, idx_sample_count, load_idx, synthetic
from .hwcost import (UnitCosts, build_cost_report, build_floorplan, load_unit_costs)
from .network import xavier_init
from .numerics import derive_rng
from .training import FeedbackBank, TrainerKind, train, write_history_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def _load_datasets(cfg: dict) -> tuple[Dataset, Dataset, dict]:
    """Returns (train, test, file-paths-for-hashing)."""
    ds = cfg["dataset"]
    if ds["kind"] == "synthetic":
        train_spec, test_spec = resolve_synthetic_specs(cfg)
        return synthetic(train_spec, "train"), synthetic(test_spec, "test"), {}
    paths = resolve_dataset_paths(cfg)
    train_ds = load_idx(paths["train_images"], paths["train_labels"], "train")
    test_ds = load_idx(paths["test_images"], paths["test_labels"], "test")
    if ds.get("limit_train"):
        k = ds["limit_train"]
        train_ds = Dataset(train_ds.images[:, :k], train_ds.labels[:k], "train")
    if ds.get("limit_test"):
        k = ds["limit_test"]
        test_ds = Dataset(test_ds.images[:, :k], test_ds.labels[:k], "test")
    return train_ds, test_ds, paths


def _dataset_sample_count(cfg: dict) -> int:
    """Training-set size without loading pixel data (for cost-only runs)."""
    ds = cfg["dataset"]
    if ds["kind"] == "synthetic":
        return ds.get("classes", 10) * ds.get("samples_per_class", 128)
    n = idx_sample_count(resolve_dataset_paths(cfg)["train_images"])
    if ds.get("limit_train"):
        n = min(n, ds["limit_train"])
    return n


def _make_backend(resolved, seed: int):
    if resolved.backend_kind == "analog":
        return AnalogBackend(resolved.crossbar, derive_rng(seed, "analog"))
    return DigitalBackend()


def _unit_costs(resolved) -> UnitCosts:
    if resolved.unit_costs_path:
        return load_unit_costs(resolved.unit_costs_path)
    return UnitCosts()


def run_single(cfg: dict, seed: int, out_dir: str,
               measured_wall_in_history: bool = False) -> dict:
    """Execute one (config, seed) point and write its artifact set."""
    os.makedirs(out_dir, exist_ok=True)
    resolved = resolve_config(cfg, seed)
    t_start = time.perf_counter()

    summary: dict = {"seed": seed, "diverged": False}
    dataset_files: dict = {}
    n_train = _dataset_sample_count(cfg)
    n_batches = -(-n_train // resolved.hyperparams.batch_size)

    history = None
    diagnostics: dict = {}
    if not resolved.cost_only:
        train_ds, test_ds, dataset_files = _load_datasets(cfg)
        n_batches = -(-train_ds.n_samples // resolved.hyperparams.batch_size)
        backend = _make_backend(resolved, seed)
        mlp = xavier_init(resolved.topology, derive_rng(seed, "init"))
        bank = None
        if resolved.trainer is TrainerKind.DFA:
            bank = FeedbackBank.create(resolved.topology, derive_rng(seed, "feedback"))
        mlp, history, bank = train(mlp, (train_ds, test_ds), resolved.hyperparams,
                                   resolved.trainer, backend, bank=bank)
        write_history_csv(history, os.path.join(out_dir, "history.csv"),
                          measured_wall=measured_wall_in_history)
        diagnostics = backend.diagnostics()
        summary["diverged"] = history.diverged
        for split in ("train", "test"):
            row = history.final(split)
            if row is not None:
                summary[f"final_{split}_loss"] = row.loss
                summary[f"final_{split}_accuracy"] = row.accuracy

    report = build_cost_report(
        resolved.topology, resolved.trainer, resolved.crossbar, _unit_costs(resolved),
        resolved.hyperparams.batch_size, n_batches, resolved.hyperparams.epochs,
        resolved.tile_dim, analog_backend=(resolved.backend_kind == "analog"))
    report.write_json(os.path.join(out_dir, "cost.json"))
    report.write_csv(os.path.join(out_dir, "cost.csv"))
    summary["area_total"] = report.area_total
    summary["energy_total"] = report.energy_total
    summary["latency_total"] = report.latency_total
    summary["utilization"] = report.utilization

    manifest = {
        "package": {"name": "cimtrain", "version": __version__},
        "seed": seed,
        "config": cfg,
        "inputs_hash": config_hash({**cfg, "seed": seed}, dataset_files),
        "n_batches_per_epoch": n_batches,
        "diagnostics": diagnostics,
        "diverged": summary["diverged"],
        # volatile section: excluded from the inputs hash by construction
        "timing": {"wall_seconds": time.perf_counter() - t_start},
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    summary["out_dir"] = out_dir
    return summary


def expand_grid(cfg: dict) -> list[tuple[str, dict, dict]]:
    """Cartesian product of sweep axes: (tag, axis-values, derived config)."""
    axes = cfg.get("sweep", {}).get("axes", [])
    if not axes:
        return [("run", {}, cfg)]
    points = []
    names = [axis["param"].split(".")[-1] for axis in axes]
    for combo in itertools.product(*(axis["values"] for axis in axes)):
        derived = cfg
        for axis, value in zip(axes, combo):
            derived = apply_override(derived, axis["param"], value)
        derived = {**derived, "sweep": {"axes": []}}
        tag = "_".join(f"{n}={v}" for n, v in zip(names, combo))
        axis_values = dict(zip(names, combo))
        points.append((tag, axis_values, derived))
    return points


def _grid_job(args) -> tuple[str, dict, dict]:
    tag, axis_values, derived, seed, out_dir = args
    summary = run_single(derived, seed, out_dir)
    return tag, axis_values, summary


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.10g}"
    return "" if x is None else str(x)


def write_merged_csv(path, axis_names: list[str], rows: dict) -> None:
    """Aggregate per-grid-point summaries: mean and std across seeds."""
    metrics = ("final_train_accuracy", "final_test_accuracy", "final_test_loss")
    cost_cols = ("area_total", "energy_total", "latency_total", "utilization")
    with open(path, "w", newline="") as f:
        header = list(axis_names) + ["n_seeds"]
        for m in metrics:
            header += [f"{m}_mean", f"{m}_std"]
        header += list(cost_cols)
        f.write(",".join(header) + "\n")
        for tag in rows:
            axis_values, summaries = rows[tag]
            out = [_fmt(axis_values.get(n)) for n in axis_names]
            out.append(str(len(summaries)))
            for m in metrics:
                vals = [s[m] for s in summaries if m in s]
                if vals:
                    out.append(_fmt(float(np.mean(vals))))
                    out.append(_fmt(float(np.std(vals))))
                else:
                    out += ["", ""]
            for c in cost_cols:
                out.append(_fmt(summaries[0].get(c)))
            f.write(",".join(out) + "\n")


def run_grid(cfg: dict, out: str, workers: int = 1) -> tuple[dict, bool]:
    """Run every (grid point, seed) pair; returns (merged rows, any_diverged)."""
    points = expand_grid(cfg)
    jobs = []
    for tag, axis_values, derived in points:
        for seed in cfg["seeds"]:
            job_dir = os.path.join(out, tag, f"seed{seed}")
            jobs.append((tag, axis_values, derived, seed, job_dir))

    rows: dict = {tag: (axis_values, []) for tag, axis_values, _ in points}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_grid_job, jobs))
    else:
        results = [_grid_job(job) for job in jobs]
    any_diverged = False
    for tag, _, summary in results:
        rows[tag][1].append(summary)
        any_diverged |= summary.get("diverged", False)
    for tag in rows:
        rows[tag][1].sort(key=lambda s: s["seed"])
    return rows, any_diverged


def _load_config(args) -> dict:
    if args.preset and args.config:
        raise ConfigError("pass either --preset or --config, not both")
    if args.preset:
        cfg = load_preset(args.preset)
    elif args.config:
        with open(args.config) as f:
            try:
                raw = json.load(f)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{args.config}:{exc.lineno}:{exc.colno}: {exc.msg}")
        cfg = validate_config(raw)
    else:
        raise ConfigError("one of --preset or --config is required")
    if args.seed_list:
        cfg["seeds"] = [int(s) for s in args.seed_list.split(",") if s != ""]
        if not cfg["seeds"]:
            raise ConfigError("config.seeds: must be a non-empty list of integers")
    return cfg


def cmd_run(args) -> int:
    cfg = _load_config(args)
    if cfg.get("sweep", {}).get("axes"):
        raise ConfigError("config declares sweep axes; use the `sweep` command")
    rows, diverged = run_grid(cfg, args.out, args.workers)
    for _, summaries in rows.values():
        for s in summaries:
            status = "diverged" if s.get("diverged") else "ok"
            acc = s.get("final_test_accuracy")
            print(f"seed {s['seed']}: {status}"
                  + (f", final test accuracy {acc:.4f}" if acc is not None else "")
                  + f" -> {s['out_dir']}")
    return EXIT_DIVERGED if diverged else EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    if not cfg.get("sweep", {}).get("axes"):
        raise ConfigError("config.sweep.axes: at least one axis is required for sweep")
    axis_names = [a["param"].split(".")[-1] for a in cfg["sweep"]["axes"]]
    rows, diverged = run_grid(cfg, args.out, args.workers)
    merged = os.path.join(args.out, "merged.csv")
    write_merged_csv(merged, axis_names, rows)
    print(f"{sum(len(s) for _, s in rows.values())} runs -> {merged}")
    return EXIT_DIVERGED if diverged else EXIT_OK


def cmd_cost(args) -> int:
    cfg = _load_config(args)
    cfg = {**cfg, "cost_only": True}
    points = expand_grid(cfg)
    for tag, _, derived in points:
        out_dir = os.path.join(args.out, tag) if len(points) > 1 else args.out
        summary = run_single(derived, cfg["seeds"][0], out_dir)
        print(f"{tag}: area {summary['area_total']:.6g} um^2, "
              f"energy {summary['energy_total']:.6g} pJ, "
              f"latency {summary['latency_total']:.6g} ns -> {summary['out_dir']}")
    return EXIT_OK


def cmd_describe(args) -> int:
    cfg = _load_config(args)
    resolved = resolve_config(cfg, cfg["seeds"][0])
    print(canonical_json(cfg))
    fp = build_floorplan(resolved.topology, resolved.trainer, resolved.crossbar,
                         resolved.tile_dim)
    print(f"\nfloorplan ({resolved.trainer.value}, tile_dim={resolved.tile_dim}):")
    for lp in fp.layers:
        print(f"  layer {lp.layer}: {lp.d_out}x{lp.d_in}, "
              f"subarrays {lp.subarray_grid[0]}x{lp.subarray_grid[1]}, "
              f"tiles {lp.tile_grid[0]}x{lp.tile_grid[1]}, "
              f"adc {lp.adc_count}, transposable {lp.transposable}")
    print(f"  wgu_count {fp.wgu_count}, wgu_capacity {fp.wgu_capacity_cells} cells")
    print(f"  feedback cells {fp.feedback_cells} on {fp.feedback_subarrays} subarrays")
    print(f"  utilization {fp.utilization:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cimtrain",
        description="Train fully connected nets with BP or DFA on a modeled "
                    "compute-in-memory crossbar and estimate chip area/energy/latency.")
    parser.add_argument("--version", action="version", version=f"cimtrain {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, helptext in (
        ("run", cmd_run, "execute a single configuration (all seeds)"),
        ("sweep", cmd_sweep, "run the Cartesian sweep grid and merge results"),
        ("cost", cmd_cost, "closed-form cost report only, no training"),
        ("describe", cmd_describe, "print the resolved config and floorplan"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="path to a JSON experiment config")
        p.add_argument("--preset", help=f"named preset ({', '.join(sorted(PRESETS))})")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--seed-list", help="comma-separated seed overrides")
        p.add_argument("--workers", type=int, default=1,
                       help="parallel worker processes for grid points")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
