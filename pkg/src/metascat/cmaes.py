"""CMA-ES baseline for inverse design by direct profile-error minimization.

Standard (mu/mu_w, lambda) covariance matrix adaptation with log-rank
recombination weights, cumulative step-size adaptation and rank-one plus
rank-mu covariance updates. Candidates are clipped to the unit box, which
is the decoder's whole domain, so every objective evaluation is a valid
solver call.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .evaluation import mpe
from .geometry import GridSpec, decode
from .scattering import DscsProfile, Illumination


def default_lambda(dimension: int) -> int:
    """Recommended population size 4 + floor(3 ln d)."""
    if dimension < 1:
        raise ValueError("dimension must be >= 1")
    return 4 + int(np.floor(3.0 * np.log(dimension)))


@dataclass(frozen=True)
class CmaesConfig:
    """Inverse-design run configuration (defaults follow the baseline setup)."""

    dimension: int = 12
    sigma0: float = 0.07
    population: int = 70
    iterations: int = 1500
    seeds: tuple[int, ...] = (0, 1, 2, 3)

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if self.sigma0 <= 0:
            raise ValueError("sigma0 must be > 0")
        if self.dimension < 1 or self.iterations < 1 or len(self.seeds) < 1:
            raise ValueError("dimension, iterations and seeds must be nonempty")

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "sigma0": self.sigma0,
            "population": self.population,
            "iterations": self.iterations,
            "seeds": list(self.seeds),
        }


class CmaEs:
    """One optimization run on [0,1]^d via the ask/tell interface."""

    EIGEN_FLOOR = 1e-14

    def __init__(
        self,
        dimension: int,
        sigma0: float,
        population: int | None = None,
        seed: int = 0,
        initial_mean: np.ndarray | None = None,
    ):
        d = dimension
        self.dimension = d
        self.rng = np.random.Generator(np.random.PCG64(seed))
        self.sigma = float(sigma0)
        self.lam = population if population is not None else default_lambda(d)
        if initial_mean is None:
            initial_mean = self.rng.uniform(0.0, 1.0, d)
        self.mean = np.array(initial_mean, dtype=float)
        if self.mean.shape != (d,):
            raise ValueError(f"initial mean must have shape ({d},)")

        # log-rank recombination weights over the better half
        self.mu = self.lam // 2
        w = np.log(self.mu + 0.5) - np.log(np.arange(1, self.mu + 1))
        self.weights = w / w.sum()
        self.mu_eff = 1.0 / np.sum(self.weights**2)

        self.c_sigma = (self.mu_eff + 2.0) / (d + self.mu_eff + 5.0)
        self.d_sigma = (
            1.0
            + 2.0 * max(0.0, np.sqrt((self.mu_eff - 1.0) / (d + 1.0)) - 1.0)
            + self.c_sigma
        )
        self.c_c = (4.0 + self.mu_eff / d) / (d + 4.0 + 2.0 * self.mu_eff / d)
        self.c_1 = 2.0 / ((d + 1.3) ** 2 + self.mu_eff)
        self.c_mu = min(
            1.0 - self.c_1,
            2.0 * (self.mu_eff - 2.0 + 1.0 / self.mu_eff)
            / ((d + 2.0) ** 2 + self.mu_eff),
        )
        self.chi_n = np.sqrt(d) * (1.0 - 1.0 / (4.0 * d) + 1.0 / (21.0 * d**2))

        self.C = np.eye(d)
        self.p_sigma = np.zeros(d)
        self.p_c = np.zeros(d)
        self.generation = 0
        self.evaluations = 0
        self.best_vector: np.ndarray | None = None
        self.best_value = np.inf
        self._pending: np.ndarray | None = None

    def _decompose(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenfactorize C with symmetrization and eigenvalue flooring."""
        sym = (self.C + self.C.T) / 2.0
        try:
            eigvals, basis = np.linalg.eigh(sym)
        except np.linalg.LinAlgError:
            # degenerate C: repair toward the floored diagonal
            sym = sym + self.EIGEN_FLOOR * np.eye(self.dimension)
            eigvals, basis = np.linalg.eigh(sym)
        eigvals = np.maximum(eigvals, self.EIGEN_FLOOR)
        return np.sqrt(eigvals), basis

    def sample_candidates(self, count: int) -> np.ndarray:
        """Raw draws mean + sigma * N(0, C), before box clipping."""
        scales, basis = self._decompose()
        z = self.rng.standard_normal((count, self.dimension))
        return self.mean + self.sigma * (z * scales) @ basis.T

    def ask(self) -> np.ndarray:
        """Population for this generation, clipped to the unit box."""
        candidates = np.clip(self.sample_candidates(self.lam), 0.0, 1.0)
        self._pending = candidates
        return candidates

    def tell(self, candidates: np.ndarray, values: np.ndarray) -> None:
        """Standard CMA-ES update; the incumbent best never worsens."""
        candidates = np.asarray(candidates, dtype=float)
        values = np.asarray(values, dtype=float)
        if candidates.shape != (self.lam, self.dimension) or values.shape != (
            self.lam,
        ):
            raise ValueError(
                f"expected {self.lam} (candidate, value) pairs, got "
                f"{candidates.shape} / {values.shape}"
            )
        finite = np.isfinite(values)
        if not np.all(finite):
            if not np.any(finite):
                raise ValueError("every objective value is non-finite")
            worst = values[finite].max()
            # discard by penalty; objectives here are nonnegative
            penalty = worst * 10.0 if worst > 0 else worst + 1.0
            values = np.where(finite, values, penalty)

        order = np.argsort(values, kind="stable")
        if values[order[0]] < self.best_value:
            self.best_value = float(values[order[0]])
            self.best_vector = candidates[order[0]].copy()

        selected = candidates[order[: self.mu]]
        old_mean = self.mean
        self.mean = self.weights @ selected
        y_w = (self.mean - old_mean) / self.sigma

        scales, basis = self._decompose()
        c_inv_sqrt_y = basis @ ((basis.T @ y_w) / scales)
        self.p_sigma = (1.0 - self.c_sigma) * self.p_sigma + np.sqrt(
            self.c_sigma * (2.0 - self.c_sigma) * self.mu_eff
        ) * c_inv_sqrt_y

        self.generation += 1
        self.evaluations += self.lam
        norm_p = np.linalg.norm(self.p_sigma)
        h_sigma = norm_p / np.sqrt(
            1.0 - (1.0 - self.c_sigma) ** (2.0 * self.generation)
        ) < (1.4 + 2.0 / (self.dimension + 1.0)) * self.chi_n

        self.p_c = (1.0 - self.c_c) * self.p_c + h_sigma * np.sqrt(
            self.c_c * (2.0 - self.c_c) * self.mu_eff
        ) * y_w

        steps = (selected - old_mean) / self.sigma
        rank_mu = (self.weights[:, None] * steps).T @ steps
        self.C = (
            (1.0 - self.c_1 - self.c_mu) * self.C
            + self.c_1
            * (
                np.outer(self.p_c, self.p_c)
                + (1.0 - h_sigma) * self.c_c * (2.0 - self.c_c) * self.C
            )
            + self.c_mu * rank_mu
        )
        self.sigma *= np.exp(
            (self.c_sigma / self.d_sigma) * (norm_p / self.chi_n - 1.0)
        )
        self._pending = None


@dataclass
class SeedResult:
    """Outcome of one independent CMA-ES run."""

    seed: int
    best_vector: np.ndarray
    best_mpe: float
    evaluations: int
    elapsed_seconds: float
    history: list = field(default_factory=list)  # (generation, best, evals, elapsed)


def minimize(
    batch_objective,
    config: CmaesConfig,
    seed: int,
    iterations: int | None = None,
) -> SeedResult:
    """Run one seed of CMA-ES on [0,1]^d.

    ``batch_objective`` maps a (population, d) candidate array to a
    (population,) value array; within one generation the evaluations are
    independent and may run in parallel.
    """
    iterations = config.iterations if iterations is None else iterations
    es = CmaEs(
        dimension=config.dimension,
        sigma0=config.sigma0,
        population=config.population,
        seed=seed,
    )
    start = time.perf_counter()
    history = []
    for _ in range(iterations):
        candidates = es.ask()
        values = np.asarray(batch_objective(candidates), dtype=float)
        es.tell(candidates, values)
        history.append(
            (
                es.generation,
                es.best_value,
                es.evaluations,
                time.perf_counter() - start,
            )
        )
    return SeedResult(
        seed=seed,
        best_vector=es.best_vector,
        best_mpe=es.best_value,
        evaluations=es.evaluations,
        elapsed_seconds=time.perf_counter() - start,
        history=history,
    )


def mpe_objective(
    target: DscsProfile,
    grid: GridSpec,
    illumination: Illumination,
    threads: int = 1,
):
    """Batch objective: decode candidates, solve them, score MPE vs target."""
    from .scattering import dscs_batch

    def batch_objective(candidates: np.ndarray) -> np.ndarray:
        surfaces = [decode(x, grid) for x in candidates]
        profiles = dscs_batch(surfaces, illumination, target.angles, threads=threads)
        return np.array([mpe(p, target) for p in profiles])

    return batch_objective


def optimize(
    target: DscsProfile,
    config: CmaesConfig | None = None,
    grid: GridSpec | None = None,
    illumination: Illumination | None = None,
    iterations: int | None = None,
    threads: int = 1,
) -> list[SeedResult]:
    """Inverse design by MPE minimization, one independent run per seed."""
    config = config or CmaesConfig()
    grid = grid or GridSpec()
    illumination = illumination or Illumination()
    if config.dimension != grid.vector_length:
        raise ValueError(
            f"config dimension {config.dimension} != 3n^2 = {grid.vector_length}"
        )
    objective = mpe_objective(target, grid, illumination, threads=threads)
    return [
        minimize(objective, config, seed=s, iterations=iterations)
        for s in config.seeds
    ]


def write_history_csv(path: Path | str, results: list[SeedResult]) -> Path:
    """One row per generation: seed, generation, best_mpe, evals, elapsed."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "generation", "best_mpe", "evals", "elapsed_seconds"])
        for result in results:
            for generation, best, evals, elapsed in result.history:
                writer.writerow([result.seed, generation, best, evals, elapsed])
    return path
