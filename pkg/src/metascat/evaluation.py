"""Scoring and experiment protocols for generated designs.

The headline metric is the mean percentage error (MPE) between a
generated structure's DSCS and the conditioning target: the mean over
angles of the absolute relative deviation, times 100. Absolute values
keep per-angle errors from cancelling; this choice affects every
reported number.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import NormalizationStats
from .diffusion import load_for_sampling, sample
from .geometry import GridSpec, decode
from .scattering import AngleGrid, DscsProfile, Illumination, dscs, dscs_curve


def mpe(generated, target) -> float:
    """Mean percentage error: (100 / K) * sum_k |g_k - t_k| / t_k.

    Accepts DscsProfile objects (angle grids must match) or raw arrays.
    Rejects targets with nonpositive entries, where relative error is
    ill-posed.
    """
    if isinstance(generated, DscsProfile) and isinstance(target, DscsProfile):
        if generated.angles != target.angles:
            raise ValueError("profiles use different angle grids")
    g = generated.values if isinstance(generated, DscsProfile) else np.asarray(generated, dtype=float)
    t = target.values if isinstance(target, DscsProfile) else np.asarray(target, dtype=float)
    if g.shape != t.shape:
        raise ValueError(f"shape mismatch: {g.shape} vs {t.shape}")
    if np.any(t <= 0.0):
        raise ValueError("target contains nonpositive values; MPE undefined")
    return float(100.0 * np.mean(np.abs(g - t) / t))


@dataclass(frozen=True)
class MpeReport:
    """Per-sample MPE values with their summary statistics."""

    per_sample: np.ndarray
    vectors: np.ndarray
    mean: float
    median: float
    std: float
    iqr: float
    best_index: int

    @classmethod
    def from_samples(cls, mpes: np.ndarray, vectors: np.ndarray) -> "MpeReport":
        mpes = np.asarray(mpes, dtype=float)
        q25, q75 = np.percentile(mpes, [25, 75])
        return cls(
            per_sample=mpes,
            vectors=np.asarray(vectors, dtype=float),
            mean=float(mpes.mean()),
            median=float(np.median(mpes)),
            std=float(mpes.std()),
            iqr=float(q75 - q25),
            best_index=int(np.argmin(mpes)),
        )

    @property
    def best_vector(self) -> np.ndarray:
        return self.vectors[self.best_index]

    @property
    def best_mpe(self) -> float:
        return float(self.per_sample[self.best_index])

    def to_dict(self) -> dict:
        return {
            "per_sample": self.per_sample.tolist(),
            "vectors": self.vectors.tolist(),
            "mean": self.mean,
            "median": self.median,
            "std": self.std,
            "iqr": self.iqr,
            "best_index": self.best_index,
        }


def target_hash(target: DscsProfile) -> str:
    """Stable identifier of a target profile (angles + values)."""
    payload = json.dumps(
        {
            "polar_angles": list(target.angles.polar_angles),
            "azimuth_samples": target.angles.azimuth_samples,
            "values": target.values.tolist(),
        }
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _stats_from_manifest(manifest: dict) -> NormalizationStats:
    extra = manifest.get("extra") or {}
    if "normalization" not in extra:
        raise ValueError(
            "checkpoint carries no normalization statistics; retrain with stats"
        )
    return NormalizationStats.from_dict(extra["normalization"])


def evaluate_samples(
    vectors: np.ndarray,
    target: DscsProfile,
    grid: GridSpec,
    illumination: Illumination,
    threads: int = 1,
) -> MpeReport:
    """Solve each sampled design and score it against the target."""
    from .scattering import dscs_batch

    surfaces = [decode(v, grid) for v in vectors]
    profiles = dscs_batch(surfaces, illumination, target.angles, threads=threads)
    mpes = np.array([mpe(p, target) for p in profiles])
    return MpeReport.from_samples(mpes, vectors)


def sample_and_evaluate(
    checkpoint: Path | str,
    target: DscsProfile,
    n_samples: int,
    seed: int,
    grid: GridSpec | None = None,
    illumination: Illumination | None = None,
    threads: int = 1,
) -> tuple[MpeReport, dict]:
    """Draw designs from a checkpoint and score them; returns (report, manifest)."""
    grid = grid or GridSpec()
    illumination = illumination or Illumination()
    model, ema, schedule, scaling, manifest = load_for_sampling(checkpoint)
    stats = _stats_from_manifest(manifest)
    cond = stats.normalize(target.values)
    vectors = sample(
        model, ema, schedule, cond, n_samples=n_samples, seed=seed,
        data_scaling=scaling,
    )
    report = evaluate_samples(vectors, target, grid, illumination, threads=threads)
    return report, manifest


def checkpoint_eval(
    checkpoints: list[Path | str],
    target: DscsProfile,
    n_samples: int = 10,
    seed: int = 0,
    grid: GridSpec | None = None,
    illumination: Illumination | None = None,
    out_csv: Path | str | None = None,
    threads: int = 1,
) -> list[tuple[int, MpeReport]]:
    """Score a checkpoint series against one target; optional CSV export."""
    if not checkpoints:
        raise ValueError("need at least one checkpoint")
    rows = []
    for path in checkpoints:
        report, manifest = sample_and_evaluate(
            path, target, n_samples, seed, grid, illumination, threads=threads
        )
        rows.append((int(manifest["step"]), report))
    if out_csv is not None:
        out_csv = Path(out_csv)
        out_csv.parent.mkdir(parents=True, exist_ok=True)
        with open(out_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "mean", "median", "std"])
            for step, report in rows:
                writer.writerow([step, report.mean, report.median, report.std])
    return rows


def ood_eval(
    checkpoint: Path | str,
    target: DscsProfile,
    n_samples: int = 40,
    seed: int = 0,
    grid: GridSpec | None = None,
    illumination: Illumination | None = None,
    curve_points: int = 181,
    target_vector: np.ndarray | None = None,
    out_json: Path | str | None = None,
    threads: int = 1,
) -> tuple[MpeReport, dict]:
    """Out-of-distribution protocol: sample n designs for an unseen target.

    Returns the MPE report plus an export dict holding every sampled
    vector with its MPE, the best design's geometry and its full-angle
    DSCS curve (and the target structure's curve when its vector is
    known).
    """
    grid = grid or GridSpec()
    illumination = illumination or Illumination()
    report, manifest = sample_and_evaluate(
        checkpoint, target, n_samples, seed, grid, illumination, threads=threads
    )
    best_surface = decode(report.best_vector, grid)
    theta, best_curve = dscs_curve(
        best_surface, illumination, n_polar=curve_points
    )
    export = {
        "checkpoint": str(checkpoint),
        "checkpoint_step": int(manifest["step"]),
        "seed": seed,
        "target": {
            "values": target.values.tolist(),
            "polar_angles": list(target.angles.polar_angles),
            "hash": target_hash(target),
        },
        "samples": [
            {"index": i, "vector": report.vectors[i].tolist(), "mpe": float(m)}
            for i, m in enumerate(report.per_sample)
        ],
        "statistics": {
            "mean": report.mean,
            "median": report.median,
            "std": report.std,
            "iqr": report.iqr,
        },
        "best": {
            "index": report.best_index,
            "mpe": report.best_mpe,
            "vector": report.best_vector.tolist(),
            "spheres": [[s.x, s.y, s.r] for s in best_surface.spheres],
            "curve": {"theta": theta.tolist(), "dscs": best_curve.tolist()},
        },
    }
    if target_vector is not None:
        t_theta, t_curve = dscs_curve(
            decode(np.asarray(target_vector, dtype=float), grid),
            illumination,
            n_polar=curve_points,
        )
        export["target"]["vector"] = np.asarray(target_vector, dtype=float).tolist()
        export["target"]["curve"] = {
            "theta": t_theta.tolist(),
            "dscs": t_curve.tolist(),
        }
    if out_json is not None:
        out_json = Path(out_json)
        out_json.parent.mkdir(parents=True, exist_ok=True)
        with open(out_json, "w") as fh:
            json.dump(export, fh, indent=1)
            fh.write("\n")
    return report, export


@dataclass(frozen=True)
class ComparisonReport:
    """One method's side of the diffusion vs CMA-ES comparison."""

    method: str
    best_mpe: float
    solver_calls: int
    wall_clock_seconds: float  # per-design cost (training excluded)
    train_seconds: float | None  # one-time cost; None for methods without it
    seed: int
    target_hash: str

    def csv_row(self) -> list:
        return [
            self.method,
            self.best_mpe,
            self.solver_calls,
            self.wall_clock_seconds,
            self.seed,
        ]


def compare(
    target: DscsProfile,
    checkpoint: Path | str,
    cmaes_config=None,
    n_samples: int = 40,
    sample_seed: int = 0,
    grid: GridSpec | None = None,
    illumination: Illumination | None = None,
    train_seconds: float | None = None,
    cmaes_iterations: int | None = None,
    out_csv: Path | str | None = None,
    threads: int = 1,
) -> tuple[ComparisonReport, ComparisonReport, dict]:
    """Run both inverse-design routes on one target and account their costs.

    Diffusion solver calls = training-dataset size (one-time, amortized)
    plus the evaluation calls for its samples; CMA-ES solver calls =
    population x iterations x seeds, all actually executed.
    """
    from .cmaes import CmaesConfig, optimize

    cmaes_config = cmaes_config or CmaesConfig()
    grid = grid or GridSpec()
    illumination = illumination or Illumination()
    thash = target_hash(target)

    start = time.perf_counter()
    report, manifest = sample_and_evaluate(
        checkpoint, target, n_samples, sample_seed, grid, illumination,
        threads=threads,
    )
    diffusion_wall = time.perf_counter() - start
    dataset_size = int(manifest["config"]["dataset_size"])
    diffusion = ComparisonReport(
        method="diffusion",
        best_mpe=report.best_mpe,
        solver_calls=dataset_size + n_samples,
        wall_clock_seconds=diffusion_wall,
        train_seconds=train_seconds,
        seed=sample_seed,
        target_hash=thash,
    )

    results = optimize(
        target, cmaes_config, grid, illumination, iterations=cmaes_iterations,
        threads=threads,
    )
    best = min(results, key=lambda r: r.best_mpe)
    cmaes_report = ComparisonReport(
        method="cmaes",
        best_mpe=best.best_mpe,
        solver_calls=sum(r.evaluations for r in results),
        wall_clock_seconds=sum(r.elapsed_seconds for r in results),
        train_seconds=None,
        seed=best.seed,
        target_hash=thash,
    )

    details = {
        "target_hash": thash,
        "diffusion": {
            "per_sample_mpe": report.per_sample.tolist(),
            "dataset_size": dataset_size,
            "n_samples": n_samples,
        },
        "cmaes": {
            "per_seed": [
                {
                    "seed": r.seed,
                    "best_mpe": r.best_mpe,
                    "evaluations": r.evaluations,
                    "elapsed_seconds": r.elapsed_seconds,
                }
                for r in results
            ]
        },
    }
    if out_csv is not None:
        out_csv = Path(out_csv)
        out_csv.parent.mkdir(parents=True, exist_ok=True)
        with open(out_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["method", "best_mpe", "solver_calls", "wall_clock_s", "seed"])
            writer.writerow(diffusion.csv_row())
            writer.writerow(cmaes_report.csv_row())
    return diffusion, cmaes_report, details


def random_target(
    seed: int,
    grid: GridSpec | None = None,
    angles: AngleGrid | None = None,
    illumination: Illumination | None = None,
) -> tuple[DscsProfile, np.ndarray]:
    """A physically realizable target: the DSCS of a random decoded design.

    Drawn from a stream disjoint from dataset generation, so the target
    structure is excluded from training (up to measure-zero collisions).
    """
    grid = grid or GridSpec()
    angles = angles or AngleGrid()
    illumination = illumination or Illumination()
    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(9,)))
    )
    vector = rng.random(grid.vector_length)
    profile = dscs(decode(vector, grid), illumination, angles)
    return profile, vector
