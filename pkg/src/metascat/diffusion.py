"""Denoising diffusion over design vectors, conditioned on target profiles.

Forward process: y_t = sqrt(abar_t) y_0 + sqrt(1 - abar_t) eps with a
cosine noise schedule. Training minimizes the mean squared error between
the drawn noise and the U-Net prediction, with the timestep drawn
uniformly per batch element. Sampling runs the ancestral reverse chain
from pure noise and clamps the final vector to [0, 1], so every sample
decodes to a valid structure.

All randomness is derived functionally from (seed, role, index) seed
sequences: epoch shuffles, per-step batches and per-sample chains do not
depend on execution history, which makes checkpoint resume bit-exact and
sampling independent of batching.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.denoiser import Denoiser, DenoiserConfig
from .nn.optim import Adam, ema_update, init_ema
from .nn.tensor import mse_loss, parameter

BETA_MAX = 0.999

# spawn_key roles for derived PRNG streams
_ROLE_EPOCH = 0
_ROLE_STEP = 1
_ROLE_INIT = 2
_ROLE_SAMPLE = 3


def _rng(seed: int, role: int, index: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(role, index)))
    )


@dataclass(frozen=True)
class NoiseSchedule:
    """Cosine schedule tables indexed by t = 0..T.

    beta is clipped at 0.999 and alpha_bar is recomputed from the clipped
    betas, so alpha_bar[t] = prod(alpha[1..t]) holds exactly;
    alpha_bar_raw keeps the unclipped values for diagnostics.
    """

    timesteps: int
    offset: float
    alpha_bar: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    alpha_bar_raw: np.ndarray

    def __post_init__(self):
        T = self.timesteps
        for name in ("alpha_bar", "alpha", "beta", "alpha_bar_raw"):
            if getattr(self, name).shape != (T + 1,):
                raise ValueError(f"{name} must have length T + 1")
        if self.alpha_bar[0] != 1.0:
            raise ValueError("alpha_bar[0] must be 1")
        if np.any(np.diff(self.alpha_bar) >= 0):
            raise ValueError("alpha_bar must be strictly decreasing")
        if np.any(self.beta[1:] <= 0.0) or np.any(self.beta[1:] > BETA_MAX):
            raise ValueError(f"beta must lie in (0, {BETA_MAX}]")
        if np.max(np.abs(self.alpha[1:] - (1.0 - self.beta[1:]))) > 1e-15:
            raise ValueError("alpha must equal 1 - beta")
        cumulative = np.concatenate([[1.0], np.cumprod(self.alpha[1:])])
        if np.max(np.abs(cumulative - self.alpha_bar)) > 1e-12:
            raise ValueError("alpha_bar inconsistent with the beta products")


def build_schedule(timesteps: int = 1000, offset: float = 0.008) -> NoiseSchedule:
    """Cosine schedule: f(tau) = cos^2((tau + s)/(1 + s) * pi/2), abar = f/f(0)."""
    if timesteps < 1:
        raise ValueError("timesteps must be >= 1")
    if not 0.0 <= offset < 1.0:
        raise ValueError("offset must lie in [0, 1)")
    tau = np.arange(timesteps + 1) / timesteps
    f = np.cos((tau + offset) / (1.0 + offset) * np.pi / 2.0) ** 2
    alpha_bar_raw = f / f[0]
    beta = np.zeros(timesteps + 1)
    beta[1:] = np.minimum(
        1.0 - alpha_bar_raw[1:] / alpha_bar_raw[:-1], BETA_MAX
    )
    alpha = np.ones(timesteps + 1)
    alpha[1:] = 1.0 - beta[1:]
    alpha_bar = np.concatenate([[1.0], np.cumprod(alpha[1:])])
    return NoiseSchedule(
        timesteps=timesteps,
        offset=offset,
        alpha_bar=alpha_bar,
        alpha=alpha,
        beta=beta,
        alpha_bar_raw=alpha_bar_raw,
    )


def forward_noise(
    y0: np.ndarray, t: np.ndarray | int, eps: np.ndarray, schedule: NoiseSchedule
) -> np.ndarray:
    """y_t = sqrt(abar_t) y_0 + sqrt(1 - abar_t) eps, per batch element."""
    t = np.asarray(t)
    if np.any(t < 1) or np.any(t > schedule.timesteps):
        raise ValueError("t must lie in [1, T]")
    abar = schedule.alpha_bar[t]
    scale = np.sqrt(abar)
    noise_scale = np.sqrt(1.0 - abar)
    if y0.ndim == 2:
        scale = scale[:, None] if np.ndim(t) else scale
        noise_scale = noise_scale[:, None] if np.ndim(t) else noise_scale
    return scale * y0 + noise_scale * eps


@dataclass(frozen=True)
class TrainingConfig:
    """Hyperparameters of a training run; defaults are the full-scale setup."""

    timesteps: int = 1000
    schedule_offset: float = 0.008
    learning_rate: float = 4e-6
    batch_size: int = 16
    epochs: int = 116
    ema_decay: float = 0.995
    seed: int = 0
    checkpoint_every: int = 1000
    checkpoint_dir: str | None = None
    data_scaling: str = "unit"  # "unit" keeps y0 in [0,1]; "symmetric" maps to [-1,1]
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    model: DenoiserConfig = field(default_factory=DenoiserConfig)

    def __post_init__(self):
        if self.data_scaling not in ("unit", "symmetric"):
            raise ValueError(f"unknown data_scaling {self.data_scaling!r}")
        if self.batch_size < 1 or self.epochs < 1 or self.checkpoint_every < 1:
            raise ValueError("batch_size, epochs and checkpoint_every must be >= 1")

    def to_dict(self) -> dict:
        d = {
            "timesteps": self.timesteps,
            "schedule_offset": self.schedule_offset,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "ema_decay": self.ema_decay,
            "seed": self.seed,
            "checkpoint_every": self.checkpoint_every,
            "data_scaling": self.data_scaling,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_eps": self.adam_eps,
            "model": self.model.to_dict(),
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        d = dict(d)
        d["model"] = DenoiserConfig.from_dict(d["model"])
        d.pop("checkpoint_dir", None)
        return cls(**d)


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    ema_params: dict[str, np.ndarray]
    step: int
    losses: np.ndarray
    checkpoint_paths: list[Path]
    config: TrainingConfig


def _to_model_domain(y: np.ndarray, scaling: str) -> np.ndarray:
    return 2.0 * y - 1.0 if scaling == "symmetric" else y


def _from_model_domain(y: np.ndarray, scaling: str) -> np.ndarray:
    return (y + 1.0) / 2.0 if scaling == "symmetric" else y


def train(
    vectors: np.ndarray,
    conditioning: np.ndarray,
    config: TrainingConfig,
    resume_from: Path | str | None = None,
    checkpoint_extra: dict | None = None,
) -> TrainResult:
    """Train the denoiser on (vector, conditioning) rows.

    ``conditioning`` must already be normalized. Checkpoints are written
    to ``config.checkpoint_dir`` every ``checkpoint_every`` steps and at
    the end; a run resumed from any of them continues bit-exactly.
    ``checkpoint_extra`` (for example the normalization statistics the
    conditioning was built with) is stored verbatim in every manifest so
    checkpoints stay self-contained for evaluation.
    """
    vectors = np.asarray(vectors, dtype=float)
    conditioning = np.asarray(conditioning, dtype=float)
    if vectors.ndim != 2 or conditioning.ndim != 2:
        raise ValueError("vectors and conditioning must be 2-d arrays")
    if len(vectors) != len(conditioning) or len(vectors) == 0:
        raise ValueError("vectors and conditioning must be nonempty and aligned")
    count = len(vectors)
    model = Denoiser(config.model)
    schedule = build_schedule(config.timesteps, config.schedule_offset)
    y0_all = _to_model_domain(vectors, config.data_scaling)

    optimizer = Adam(config.adam_beta1, config.adam_beta2, config.adam_eps)
    losses: list[float] = []
    if resume_from is not None:
        manifest, collections = load_checkpoint(resume_from)
        saved = TrainingConfig.from_dict(manifest["config"]["train"])
        if saved.to_dict() != config.to_dict():
            raise ValueError("resume config differs from the checkpoint's")
        params = collections["params"]
        ema = collections["ema"]
        optimizer.load_state(
            collections["adam_m"], collections["adam_v"], manifest["step"]
        )
        start_step = manifest["step"]
    else:
        params = model.init_params(
            seed=int(_rng(config.seed, _ROLE_INIT, 0).integers(0, 2**31))
        )
        ema = init_ema(params)
        start_step = 0

    steps_per_epoch = -(-count // config.batch_size)
    total_steps = steps_per_epoch * config.epochs
    checkpoint_paths: list[Path] = []
    perm_epoch = -1
    perm = None

    def save(step: int) -> None:
        if config.checkpoint_dir is None:
            return
        path = Path(config.checkpoint_dir) / f"ckpt_{step}.bin"
        save_checkpoint(
            path,
            step=step,
            config={"train": config.to_dict(), "dataset_size": count},
            collections={
                "params": params,
                "ema": ema,
                "adam_m": optimizer.m,
                "adam_v": optimizer.v,
            },
            extra=checkpoint_extra,
        )
        checkpoint_paths.append(path)

    for step in range(start_step, total_steps):
        epoch = step // steps_per_epoch
        if epoch != perm_epoch:
            perm = _rng(config.seed, _ROLE_EPOCH, epoch).permutation(count)
            perm_epoch = epoch
        offset = (step % steps_per_epoch) * config.batch_size
        batch = perm[offset : offset + config.batch_size]
        y0 = y0_all[batch]
        cond = conditioning[batch]

        rng = _rng(config.seed, _ROLE_STEP, step)
        t = rng.integers(1, config.timesteps + 1, size=len(batch))
        eps = rng.standard_normal(y0.shape)
        y_t = forward_noise(y0, t, eps, schedule)

        tensors = {k: parameter(v) for k, v in params.items()}
        loss = mse_loss(model.forward(tensors, y_t, t, cond), eps)
        value = float(loss.data)
        if not np.isfinite(value):
            raise FloatingPointError(
                f"non-finite training loss at step {step + 1} "
                f"(t range {t.min()}..{t.max()})"
            )
        loss.backward()
        grads = {k: tensors[k].grad for k in params}
        optimizer.step(params, grads, config.learning_rate)
        ema_update(ema, params, config.ema_decay)
        losses.append(value)
        done = step + 1
        if done % config.checkpoint_every == 0 and done != total_steps:
            save(done)
    save(total_steps)

    return TrainResult(
        params=params,
        ema_params=ema,
        step=total_steps,
        losses=np.array(losses),
        checkpoint_paths=checkpoint_paths,
        config=config,
    )


def sample(
    model: Denoiser,
    params: dict[str, np.ndarray],
    schedule: NoiseSchedule,
    conditioning: np.ndarray,
    n_samples: int,
    seed: int,
    data_scaling: str = "unit",
) -> np.ndarray:
    """Ancestral sampling of design vectors for one conditioning vector.

    Use the EMA weights for ``params``. Each sample owns an independent
    PRNG stream keyed by its index, so any batch split yields the same
    draws. The variance coefficient vanishes at t = 1 (alpha_bar[0] = 1),
    making the last step deterministic; the result is clamped to [0, 1].
    """
    cond = np.asarray(conditioning, dtype=float)
    if cond.ndim != 1 or cond.size != model.config.cond_size:
        raise ValueError(f"expected conditioning of shape ({model.config.cond_size},)")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    T = schedule.timesteps
    dim = model.config.input_length
    streams = [_rng(seed, _ROLE_SAMPLE, i) for i in range(n_samples)]
    y = np.stack([g.standard_normal(dim) for g in streams])
    cond_batch = np.tile(cond, (n_samples, 1))

    abar = schedule.alpha_bar
    for t in range(T, 0, -1):
        eps_hat = model.predict(
            params, y, np.full(n_samples, t), cond_batch
        ).astype(float)
        y0_hat = (y - np.sqrt(1.0 - abar[t]) * eps_hat) / np.sqrt(abar[t])
        beta_t = schedule.beta[t]
        alpha_t = schedule.alpha[t]
        mean = (
            np.sqrt(abar[t - 1]) * beta_t / (1.0 - abar[t]) * y0_hat
            + np.sqrt(alpha_t) * (1.0 - abar[t - 1]) / (1.0 - abar[t]) * y
        )
        if t > 1:
            sigma = np.sqrt((1.0 - abar[t - 1]) / (1.0 - abar[t]) * beta_t)
            z = np.stack([g.standard_normal(dim) for g in streams])
            y = mean + sigma * z
        else:
            y = mean
    return np.clip(_from_model_domain(y, data_scaling), 0.0, 1.0)


def list_checkpoints(directory: Path | str) -> list[Path]:
    """Checkpoints in a directory, ordered by training step."""
    paths = list(Path(directory).glob("ckpt_*.bin"))
    return sorted(paths, key=lambda p: int(p.stem.split("_")[1]))


def load_for_sampling(path: Path | str) -> tuple[Denoiser, dict, NoiseSchedule, str, dict]:
    """Load a checkpoint for inference: (model, EMA params, schedule, scaling, manifest)."""
    manifest, collections = load_checkpoint(path)
    config = TrainingConfig.from_dict(manifest["config"]["train"])
    model = Denoiser(config.model)
    schedule = build_schedule(config.timesteps, config.schedule_offset)
    return model, collections["ema"], schedule, config.data_scaling, manifest
