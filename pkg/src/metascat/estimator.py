"""Scikit-learn style front end for the conditional generative designer.

``DiffusionDesigner`` follows the estimator contract: hyperparameters in
``__init__`` (so ``get_params`` / ``set_params`` / ``clone`` work),
learned state in trailing-underscore attributes set by ``fit``, and
array-in / array-out methods validated with sklearn helpers. ``fit``
takes raw DSCS profiles as X and design vectors as y; ``sample`` draws
candidate designs for one target profile; ``predict`` returns one design
per target row.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .dataset import NormalizationStats
from .diffusion import TrainingConfig, build_schedule
from .diffusion import sample as sample_vectors
from .diffusion import train as train_denoiser
from .nn.denoiser import Denoiser, DenoiserConfig


class DiffusionDesigner(BaseEstimator):
    """Generates design vectors conditioned on target scattering profiles.

    Parameters mirror the training configuration; defaults are the
    full-scale setup (1000 steps, lr 4e-6, batch 16, 116 epochs, EMA
    0.995).
    """

    def __init__(
        self,
        timesteps: int = 1000,
        schedule_offset: float = 0.008,
        learning_rate: float = 4e-6,
        batch_size: int = 16,
        epochs: int = 116,
        ema_decay: float = 0.995,
        seed: int = 0,
        checkpoint_every: int = 1000,
        checkpoint_dir: str | None = None,
        data_scaling: str = "unit",
        channels: tuple[int, int, int, int] = (16, 32, 64, 128),
        film_hidden: int = 128,
    ):
        self.timesteps = timesteps
        self.schedule_offset = schedule_offset
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.ema_decay = ema_decay
        self.seed = seed
        self.checkpoint_every = checkpoint_every
        self.checkpoint_dir = checkpoint_dir
        self.data_scaling = data_scaling
        self.channels = channels
        self.film_hidden = film_hidden

    def _training_config(self, n_dims: int, n_cond: int) -> TrainingConfig:
        return TrainingConfig(
            timesteps=self.timesteps,
            schedule_offset=self.schedule_offset,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            ema_decay=self.ema_decay,
            seed=self.seed,
            checkpoint_every=self.checkpoint_every,
            checkpoint_dir=self.checkpoint_dir,
            data_scaling=self.data_scaling,
            model=DenoiserConfig(
                input_length=n_dims,
                cond_size=n_cond,
                channels=tuple(self.channels),
                film_hidden=self.film_hidden,
            ),
        )

    def fit(self, X, y):
        """Learn the profile-conditioned design distribution.

        X: (n_samples, n_angles) raw DSCS values; y: (n_samples, n_dims)
        normalized design vectors in [0, 1].
        """
        X = check_array(X, dtype=float)
        y = check_array(y, dtype=float)
        if len(X) != len(y):
            raise ValueError(f"X has {len(X)} rows but y has {len(y)}")
        if y.min() < 0.0 or y.max() > 1.0:
            raise ValueError("design vectors must lie in [0, 1]")
        self.n_features_in_ = X.shape[1]
        self.n_dims_ = y.shape[1]
        self.stats_ = NormalizationStats.from_values(X)
        config = self._training_config(self.n_dims_, self.n_features_in_)
        result = train_denoiser(
            y,
            self.stats_.normalize(X),
            config,
            checkpoint_extra={"normalization": self.stats_.to_dict()},
        )
        self.denoiser_ = Denoiser(config.model)
        self.params_ = result.params
        self.ema_params_ = result.ema_params
        self.schedule_ = build_schedule(self.timesteps, self.schedule_offset)
        self.train_losses_ = result.losses
        self.checkpoints_ = result.checkpoint_paths
        return self

    def sample(self, target_dscs, n_samples: int = 1, seed: int | None = None):
        """Draw candidate design vectors for one raw target profile."""
        check_is_fitted(self, "ema_params_")
        target = np.asarray(target_dscs, dtype=float).reshape(-1)
        if target.size != self.n_features_in_:
            raise ValueError(
                f"expected a profile of {self.n_features_in_} values, "
                f"got {target.size}"
            )
        cond = self.stats_.normalize(target)
        return sample_vectors(
            self.denoiser_,
            self.ema_params_,
            self.schedule_,
            cond,
            n_samples=n_samples,
            seed=self.seed if seed is None else seed,
            data_scaling=self.data_scaling,
        )

    def predict(self, X):
        """One generated design vector per target profile row."""
        check_is_fitted(self, "ema_params_")
        X = check_array(X, dtype=float)
        return np.vstack([self.sample(row, n_samples=1) for row in X])
