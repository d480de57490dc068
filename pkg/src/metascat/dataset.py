"""Generation, persistence and normalization of (geometry, DSCS) pairs.

Records are stored as JSON Lines ({"id", "vector", "dscs"} per line, one
record per line) next to a sidecar ``*.meta.json`` carrying everything
needed to reproduce or reinterpret the file: grid, angle grid,
illumination, seed, and (once computed) the conditioning normalization
statistics. Floats serialize via ``repr`` and so round-trip exactly.

DSCS values span orders of magnitude, so the conditioning vector fed to
the generative model is the per-angle standardized log10: c_k =
(log10(s_k + delta) - mean_k) / std_k with the statistics taken from the
training split only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .geometry import GridSpec, decode
from .scattering import AngleGrid, DscsProfile, Illumination, dscs_batch

FORMAT_VERSION = 1
LOG_OFFSET = 1e-12  # guards log10 at zero DSCS values
GENERATOR_NAME = "pcg64"  # numpy PCG64 behind np.random.Generator


@dataclass(frozen=True)
class DatasetRecord:
    """One training pair: normalized geometry vector and raw DSCS values."""

    id: int
    vector: np.ndarray
    dscs: np.ndarray
    seed: int  # seed of the generation run this record came from

    def to_line(self) -> str:
        return json.dumps(
            {"id": self.id, "vector": self.vector.tolist(), "dscs": self.dscs.tolist()}
        )


@dataclass(frozen=True)
class NormalizationStats:
    """Per-angle mean/std of log10(dscs + delta) over the training split."""

    mean: np.ndarray
    std: np.ndarray
    delta: float = LOG_OFFSET

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        std = np.asarray(self.std, dtype=float)
        if mean.shape != std.shape or mean.ndim != 1:
            raise ValueError("mean and std must be 1-d arrays of equal length")
        if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(std)):
            raise ValueError("statistics must be finite")
        # constant columns leave only rounding noise in std; reject those too
        if np.any(std <= 1e-12):
            raise ValueError("std must be positive for every angle")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @classmethod
    def from_values(cls, dscs_values: np.ndarray, delta: float = LOG_OFFSET):
        """Fit statistics from an (n_records, k) array of raw DSCS values."""
        logs = np.log10(np.asarray(dscs_values, dtype=float) + delta)
        return cls(mean=logs.mean(axis=0), std=logs.std(axis=0), delta=delta)

    def normalize(self, dscs_values: np.ndarray) -> np.ndarray:
        """Raw DSCS values (k,) or (n, k) -> conditioning vector(s)."""
        logs = np.log10(np.asarray(dscs_values, dtype=float) + self.delta)
        return (logs - self.mean) / self.std

    def denormalize(self, conditioning: np.ndarray) -> np.ndarray:
        return 10.0 ** (np.asarray(conditioning) * self.std + self.mean) - self.delta

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "delta": self.delta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationStats":
        return cls(
            mean=np.array(d["mean"]), std=np.array(d["std"]), delta=float(d["delta"])
        )


def generate(
    count: int,
    seed: int,
    grid: GridSpec | None = None,
    angles: AngleGrid | None = None,
    illumination: Illumination | None = None,
    threads: int = 1,
    batch: int = 256,
) -> Iterator[DatasetRecord]:
    """Yield ``count`` records with uniform design vectors and solved DSCS.

    Vectors are drawn up front from PCG64(seed), so the stream is fully
    determined by (count, seed, grid, angles, illumination) regardless of
    the solver thread count. Records are yielded in id order.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    grid = grid or GridSpec()
    angles = angles or AngleGrid()
    illumination = illumination or Illumination()
    rng = np.random.Generator(np.random.PCG64(seed))
    vectors = rng.random((count, grid.vector_length))
    for start in range(0, count, batch):
        chunk = vectors[start : start + batch]
        surfaces = [decode(v, grid) for v in chunk]
        profiles = dscs_batch(surfaces, illumination, angles, threads=threads)
        for offset, profile in enumerate(profiles):
            i = start + offset
            yield DatasetRecord(
                id=i, vector=vectors[i], dscs=profile.values, seed=seed
            )


def build_meta(
    count: int,
    seed: int,
    grid: GridSpec,
    angles: AngleGrid,
    illumination: Illumination,
    stats: NormalizationStats | None = None,
    split_info: dict | None = None,
) -> dict:
    meta = {
        "format_version": FORMAT_VERSION,
        "generator": GENERATOR_NAME,
        "count": count,
        "seed": seed,
        "grid": grid.to_dict(),
        "angles": angles.to_dict(),
        "illumination": illumination.to_dict(),
        "normalization": stats.to_dict() if stats is not None else None,
    }
    if split_info is not None:
        meta["split"] = split_info
    return meta


def meta_path_for(dataset_path: Path | str) -> Path:
    p = Path(dataset_path)
    return p.with_suffix(".meta.json")


def write_dataset(
    path: Path | str, records: Iterable[DatasetRecord], meta: dict
) -> Path:
    """Write records as JSON Lines plus the sidecar metadata file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with open(path, "w") as fh:
        for record in records:
            fh.write(record.to_line())
            fh.write("\n")
            n += 1
    if n != meta["count"]:
        raise ValueError(f"wrote {n} records but metadata claims {meta['count']}")
    with open(meta_path_for(path), "w") as fh:
        json.dump(meta, fh, indent=1)
        fh.write("\n")
    return path


def read_meta(path: Path | str) -> dict:
    with open(meta_path_for(path)) as fh:
        return json.load(fh)


def iter_records(path: Path | str, seed: int | None = None) -> Iterator[DatasetRecord]:
    """Stream records from a JSON Lines file without loading the full set."""
    if seed is None:
        seed = read_meta(path).get("seed", -1)
    with open(path) as fh:
        for line in fh:
            obj = json.loads(line)
            yield DatasetRecord(
                id=int(obj["id"]),
                vector=np.array(obj["vector"], dtype=float),
                dscs=np.array(obj["dscs"], dtype=float),
                seed=seed,
            )


def read_dataset(path: Path | str) -> tuple[list[DatasetRecord], dict]:
    meta = read_meta(path)
    records = list(iter_records(path, seed=meta.get("seed", -1)))
    if len(records) != meta["count"]:
        raise ValueError(
            f"{path}: found {len(records)} records, metadata claims {meta['count']}"
        )
    return records, meta


def split(
    records: Sequence[DatasetRecord], fractions: Sequence[float], seed: int
) -> list[list[DatasetRecord]]:
    """Disjoint, exhaustive, seed-deterministic partitions of the records.

    Partition sizes are the rounded cumulative fractions, so 11,000 at
    (0.95, 0.05) gives exactly 10,450 / 550.
    """
    fractions = np.asarray(fractions, dtype=float)
    if abs(fractions.sum() - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {fractions.sum()}")
    n = len(records)
    boundaries = np.round(np.cumsum(fractions) * n).astype(int)
    boundaries[-1] = n
    sizes = np.diff(np.concatenate([[0], boundaries]))
    if np.any(sizes <= 0):
        raise ValueError(f"empty partition requested: sizes {sizes.tolist()}")
    order = np.random.Generator(np.random.PCG64(seed)).permutation(n)
    parts = []
    start = 0
    for size in sizes:
        parts.append([records[i] for i in order[start : start + size]])
        start += size
    return parts


def vectors_and_dscs(records: Sequence[DatasetRecord]) -> tuple[np.ndarray, np.ndarray]:
    """Stack records into (n, 3n^2) vector and (n, k) DSCS arrays."""
    return (
        np.stack([r.vector for r in records]),
        np.stack([r.dscs for r in records]),
    )


def attach_stats(
    dataset_path: Path | str, stats: NormalizationStats, split_info: dict
) -> None:
    """Record normalization statistics (and the split that produced them)."""
    meta = read_meta(dataset_path)
    meta["normalization"] = stats.to_dict()
    meta["split"] = split_info
    with open(meta_path_for(dataset_path), "w") as fh:
        json.dump(meta, fh, indent=1)
        fh.write("\n")


def profile_from_record(record: DatasetRecord, angles: AngleGrid) -> DscsProfile:
    return DscsProfile(values=record.dscs, angles=angles)
