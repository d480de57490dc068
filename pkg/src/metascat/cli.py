"""Command-line entry points for the full pipeline.

Subcommands: gen-dataset, train, sample, evaluate, cmaes, compare.
Every run resolves its configuration (flags > config file > built-in
defaults), archives it as resolved_config.json in the output directory,
and is reproducible bit-for-bit from that file and the seed (wall-clock
fields excepted). Exit codes: 0 success, 1 runtime failure, 2 usage
error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import dataset as ds
from .cmaes import CmaesConfig, optimize, write_history_csv
from .diffusion import TrainingConfig, list_checkpoints, train
from .evaluation import (
    checkpoint_eval,
    compare,
    ood_eval,
    random_target,
    target_hash,
)
from .geometry import GridSpec, decode, geometry_to_json
from .nn.denoiser import DenoiserConfig
from .scattering import AngleGrid, DscsProfile, Illumination, dscs


def _read_config_file(path: Path | None) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        return json.load(fh)


class Resolver:
    """flags > config file > defaults, tracking the resolved values."""

    def __init__(self, args: argparse.Namespace, file_config: dict):
        self.args = vars(args)
        self.file = file_config
        self.resolved: dict = {}

    def get(self, key: str, default):
        flag = self.args.get(key.replace("-", "_"))
        if flag is not None:
            value = flag
        elif key in self.file:
            value = self.file[key]
        else:
            value = default
        self.resolved[key] = value
        return value


def _grid_from(resolver: Resolver) -> GridSpec:
    return GridSpec(
        n=int(resolver.get("grid_n", 2)),
        cell_length=float(resolver.get("cell_length", 5.0)),
        refractive_index=float(resolver.get("refractive_index", 2.0)),
    )


def _angles_from(resolver: Resolver) -> AngleGrid:
    k = int(resolver.get("n_angles", 10))
    azimuth = int(resolver.get("azimuth_samples", 36))
    from .scattering import default_polar_angles

    return AngleGrid(
        polar_angles=tuple(default_polar_angles(k)), azimuth_samples=azimuth
    )


def _archive(out: Path, resolver: Resolver, command: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    payload = {"command": command, **resolver.resolved}
    with open(out / "resolved_config.json", "w") as fh:
        json.dump(payload, fh, indent=1, default=str)
        fh.write("\n")


def _load_target(
    spec: str,
    grid: GridSpec,
    angles: AngleGrid,
    illumination: Illumination,
) -> tuple[DscsProfile, np.ndarray | None]:
    """Target from a profile file, a geometry file, or ``random:<seed>``."""
    if spec.startswith("random:"):
        return random_target(int(spec.split(":", 1)[1]), grid, angles, illumination)
    with open(spec) as fh:
        obj = json.load(fh)
    if "vector" in obj:
        g = GridSpec.from_dict(obj["grid"]) if "grid" in obj else grid
        vector = np.array(obj["vector"], dtype=float)
        return dscs(decode(vector, g), illumination, angles), vector
    if "values" in obj:
        if "polar_angles" in obj:
            angles = AngleGrid(
                polar_angles=tuple(obj["polar_angles"]),
                azimuth_samples=int(obj.get("azimuth_samples", angles.azimuth_samples)),
            )
        return DscsProfile(values=np.array(obj["values"], dtype=float), angles=angles), None
    raise ValueError(f"target file {spec} has neither 'vector' nor 'values'")


def _write_target(out: Path, target: DscsProfile, vector: np.ndarray | None) -> None:
    payload = {
        "values": target.values.tolist(),
        "polar_angles": list(target.angles.polar_angles),
        "azimuth_samples": target.angles.azimuth_samples,
        "hash": target_hash(target),
    }
    if vector is not None:
        payload["vector"] = vector.tolist()
    with open(out / "target.json", "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_gen_dataset(args) -> int:
    resolver = Resolver(args, _read_config_file(args.config))
    out = Path(args.out)
    count = int(resolver.get("count", 11_000))
    seed = int(resolver.get("seed", 0))
    threads = int(resolver.get("threads", 1))
    grid = _grid_from(resolver)
    angles = _angles_from(resolver)
    illumination = Illumination()
    _archive(out, resolver, "gen-dataset")
    records = ds.generate(count, seed, grid, angles, illumination, threads=threads)
    meta = ds.build_meta(count, seed, grid, angles, illumination)
    path = ds.write_dataset(out / "dataset.jsonl", records, meta)
    print(f"wrote {count} records to {path}")
    return 0


def cmd_train(args) -> int:
    resolver = Resolver(args, _read_config_file(args.config))
    out = Path(args.out)
    dataset_path = Path(resolver.get("dataset", args.dataset))
    records, meta = ds.read_dataset(dataset_path)
    grid = GridSpec.from_dict(meta["grid"])

    count_limit = resolver.get("count_limit", None)
    if count_limit is not None:
        records = records[: int(count_limit)]
    val_fraction = float(resolver.get("val_fraction", 0.05))
    split_seed = int(resolver.get("split_seed", 0))
    if val_fraction > 0.0:
        train_records, val_records = ds.split(
            records, (1.0 - val_fraction, val_fraction), seed=split_seed
        )
    else:
        train_records, val_records = list(records), []

    vectors, dscs_values = ds.vectors_and_dscs(train_records)
    stats = ds.NormalizationStats.from_values(dscs_values)

    config = TrainingConfig(
        timesteps=int(resolver.get("timesteps", 1000)),
        schedule_offset=float(resolver.get("schedule_offset", 0.008)),
        learning_rate=float(resolver.get("lr", 4e-6)),
        batch_size=int(resolver.get("batch_size", 16)),
        epochs=int(resolver.get("epochs", 116)),
        ema_decay=float(resolver.get("ema_decay", 0.995)),
        seed=int(resolver.get("seed", 0)),
        checkpoint_every=int(resolver.get("checkpoint_every", 1000)),
        checkpoint_dir=str(out / "checkpoints"),
        data_scaling=str(resolver.get("data_scaling", "unit")),
        model=DenoiserConfig(
            input_length=grid.vector_length,
            cond_size=len(meta["angles"]["polar_angles"]),
        ),
    )
    resolver.resolved["resolved_training"] = config.to_dict()
    _archive(out, resolver, "train")
    print(json.dumps(config.to_dict(), indent=1))

    split_info = {
        "val_fraction": val_fraction,
        "split_seed": split_seed,
        "train_count": len(train_records),
        "val_count": len(val_records),
        "count_limit": count_limit,
    }
    with open(out / "stats.json", "w") as fh:
        json.dump({"normalization": stats.to_dict(), "split": split_info}, fh, indent=1)
        fh.write("\n")
    if meta.get("normalization") is None and count_limit is None:
        ds.attach_stats(dataset_path, stats, split_info)

    started = time.perf_counter()
    result = train(
        vectors,
        stats.normalize(dscs_values),
        config,
        resume_from=resolver.get("resume", None),
        checkpoint_extra={
            "normalization": stats.to_dict(),
            "dataset": str(dataset_path),
            "split": split_info,
        },
    )
    elapsed = time.perf_counter() - started

    with open(out / "training_log.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss"])
        start_step = result.step - len(result.losses)
        for i, loss in enumerate(result.losses):
            writer.writerow([start_step + i + 1, loss])
    with open(out / "train_summary.json", "w") as fh:
        json.dump(
            {
                "steps": result.step,
                "train_count": len(train_records),
                "dataset": str(dataset_path),
                "checkpoints": [str(p) for p in result.checkpoint_paths],
                "final_loss": float(result.losses[-1]) if len(result.losses) else None,
                "wall_clock_seconds": elapsed,
            },
            fh,
            indent=1,
        )
        fh.write("\n")
    print(f"trained {result.step} steps in {elapsed:.1f}s; "
          f"checkpoints in {out / 'checkpoints'}")
    return 0


def cmd_sample(args) -> int:
    resolver = Resolver(args, _read_config_file(args.config))
    out = Path(args.out)
    checkpoint = resolver.get("checkpoint", args.checkpoint)
    n = int(resolver.get("n", 40))
    seed = int(resolver.get("seed", 0))
    threads = int(resolver.get("threads", 1))
    grid = _grid_from(resolver)
    angles = _angles_from(resolver)
    illumination = Illumination()
    target, target_vector = _load_target(
        resolver.get("target", args.target), grid, angles, illumination
    )
    _archive(out, resolver, "sample")
    _write_target(out, target, target_vector)
    report, export = ood_eval(
        checkpoint,
        target,
        n_samples=n,
        seed=seed,
        grid=grid,
        illumination=illumination,
        target_vector=target_vector,
        out_json=out / "ood_report.json",
        threads=threads,
    )
    with open(out / "geometries.jsonl", "w") as fh:
        for vector in report.vectors:
            fh.write(geometry_to_json(vector, grid))
            fh.write("\n")
    print(
        f"sampled {n} designs: best MPE {report.best_mpe:.2f}%, "
        f"median {report.median:.2f}%"
    )
    return 0


def cmd_evaluate(args) -> int:
    resolver = Resolver(args, _read_config_file(args.config))
    out = Path(args.out)
    ckpt_dir = resolver.get("checkpoints", args.checkpoints)
    n = int(resolver.get("n", 10))
    seed = int(resolver.get("seed", 0))
    threads = int(resolver.get("threads", 1))
    grid = _grid_from(resolver)
    angles = _angles_from(resolver)
    illumination = Illumination()
    target, target_vector = _load_target(
        resolver.get("target", args.target), grid, angles, illumination
    )
    _archive(out, resolver, "evaluate")
    _write_target(out, target, target_vector)
    checkpoints = list_checkpoints(ckpt_dir)
    rows = checkpoint_eval(
        checkpoints,
        target,
        n_samples=n,
        seed=seed,
        grid=grid,
        illumination=illumination,
        out_csv=out / "mpe_over_training.csv",
        threads=threads,
    )
    for step, report in rows:
        print(f"step {step}: mean {report.mean:.2f}% median {report.median:.2f}%")
    return 0


def cmd_cmaes(args) -> int:
    resolver = Resolver(args, _read_config_file(args.config))
    out = Path(args.out)
    grid = _grid_from(resolver)
    angles = _angles_from(resolver)
    illumination = Illumination()
    threads = int(resolver.get("threads", 1))
    seeds = resolver.get("cma_seeds", [0, 1, 2, 3])
    config = CmaesConfig(
        dimension=grid.vector_length,
        sigma0=float(resolver.get("sigma0", 0.07)),
        population=int(resolver.get("population", 70)),
        iterations=int(resolver.get("iterations", 1500)),
        seeds=tuple(int(s) for s in seeds),
    )
    target, target_vector = _load_target(
        resolver.get("target", args.target), grid, angles, illumination
    )
    resolver.resolved["resolved_cmaes"] = config.to_dict()
    _archive(out, resolver, "cmaes")
    _write_target(out, target, target_vector)
    results = optimize(target, config, grid, illumination, threads=threads)
    write_history_csv(out / "cmaes_results.csv", results)
    summary = [
        {
            "seed": r.seed,
            "best_mpe": r.best_mpe,
            "evaluations": r.evaluations,
            "elapsed_seconds": r.elapsed_seconds,
            "best_vector": r.best_vector.tolist(),
        }
        for r in results
    ]
    with open(out / "cmaes_summary.json", "w") as fh:
        json.dump(summary, fh, indent=1)
        fh.write("\n")
    best = min(results, key=lambda r: r.best_mpe)
    print(
        f"cmaes best MPE {best.best_mpe:.2f}% (seed {best.seed}, "
        f"{best.evaluations} evaluations)"
    )
    return 0


def cmd_compare(args) -> int:
    resolver = Resolver(args, _read_config_file(args.config))
    out = Path(args.out)
    checkpoint = resolver.get("checkpoint", args.checkpoint)
    grid = _grid_from(resolver)
    angles = _angles_from(resolver)
    illumination = Illumination()
    threads = int(resolver.get("threads", 1))
    n = int(resolver.get("n", 40))
    seed = int(resolver.get("seed", 0))
    seeds = resolver.get("cma_seeds", [0, 1, 2, 3])
    config = CmaesConfig(
        dimension=grid.vector_length,
        sigma0=float(resolver.get("sigma0", 0.07)),
        population=int(resolver.get("population", 70)),
        iterations=int(resolver.get("iterations", 1500)),
        seeds=tuple(int(s) for s in seeds),
    )
    target, target_vector = _load_target(
        resolver.get("target", args.target), grid, angles, illumination
    )
    train_seconds = None
    summary_path = resolver.get("train_summary", None)
    if summary_path:
        with open(summary_path) as fh:
            train_seconds = json.load(fh).get("wall_clock_seconds")
    resolver.resolved["resolved_cmaes"] = config.to_dict()
    _archive(out, resolver, "compare")
    _write_target(out, target, target_vector)
    diffusion_report, cmaes_report, details = compare(
        target,
        checkpoint,
        config,
        n_samples=n,
        sample_seed=seed,
        grid=grid,
        illumination=illumination,
        train_seconds=train_seconds,
        out_csv=out / "comparison.csv",
        threads=threads,
    )
    with open(out / "compare_details.json", "w") as fh:
        json.dump(details, fh, indent=1)
        fh.write("\n")
    for report in (diffusion_report, cmaes_report):
        print(
            f"{report.method}: best MPE {report.best_mpe:.2f}%, "
            f"{report.solver_calls} solver calls, "
            f"{report.wall_clock_seconds:.1f}s"
        )
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file")
    common.add_argument("--seed", type=int, help="run seed")
    common.add_argument("--threads", type=int, help="solver worker threads")
    common.add_argument("--out", type=Path, required=True, help="output directory")

    parser = argparse.ArgumentParser(
        prog="metascat",
        description="Inverse design of sphere metasurfaces from DSCS targets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-dataset", parents=[common],
                       help="generate (geometry, DSCS) training pairs")
    p.add_argument("--count", type=int, help="number of records (default 11000)")
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("train", parents=[common], help="train the diffusion model")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--epochs", type=int, dest="epochs")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--lr", type=float, dest="lr")
    p.add_argument("--timesteps", type=int)
    p.add_argument("--ema-decay", type=float, dest="ema_decay")
    p.add_argument("--checkpoint-every", type=int, dest="checkpoint_every")
    p.add_argument("--count-limit", type=int, dest="count_limit",
                   help="truncate the dataset (smoke runs)")
    p.add_argument("--val-fraction", type=float, dest="val_fraction")
    p.add_argument("--resume", type=Path, help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", parents=[common],
                       help="generate designs for a target profile")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--target", required=True,
                   help="target JSON (profile or geometry) or random:<seed>")
    p.add_argument("--n", type=int)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("evaluate", parents=[common],
                       help="score a checkpoint series against a target")
    p.add_argument("--checkpoints", type=Path, required=True,
                   help="directory of ckpt_<step>.bin files")
    p.add_argument("--target", required=True)
    p.add_argument("--n", type=int)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("cmaes", parents=[common],
                       help="CMA-ES inverse-design baseline")
    p.add_argument("--target", required=True)
    p.add_argument("--sigma0", type=float)
    p.add_argument("--population", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--cma-seeds", type=int, nargs="+", dest="cma_seeds")
    p.set_defaults(func=cmd_cmaes)

    p = sub.add_parser("compare", parents=[common],
                       help="diffusion vs CMA-ES on one target")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--sigma0", type=float)
    p.add_argument("--population", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--cma-seeds", type=int, nargs="+", dest="cma_seeds")
    p.add_argument("--train-summary", type=Path, dest="train_summary",
                   help="train_summary.json for the one-time training cost")
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - single CLI failure boundary
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
