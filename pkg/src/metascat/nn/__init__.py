"""Minimal deterministic neural-network core for the denoiser.

Array-valued reverse-mode autodiff over exactly the layer set the
denoiser needs (1D convolution, linear, group normalization, SiLU, FiLM,
nearest upsampling, concatenation), plus Adam, EMA shadow weights and a
binary checkpoint container. Everything runs on numpy; float32 by
default, float64 for gradient checks.
"""

from .tensor import (
    Tensor,
    concat,
    conv1d,
    crop,
    linear,
    mean_all,
    mse_loss,
    parameter,
    silu,
    upsample2,
)
from .denoiser import Denoiser, DenoiserConfig, film, group_norm, sinusoidal_embedding
from .optim import Adam, ema_update, init_ema
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "Tensor",
    "concat",
    "conv1d",
    "crop",
    "linear",
    "mean_all",
    "mse_loss",
    "parameter",
    "silu",
    "upsample2",
    "Denoiser",
    "DenoiserConfig",
    "film",
    "group_norm",
    "sinusoidal_embedding",
    "Adam",
    "ema_update",
    "init_ema",
    "load_checkpoint",
    "save_checkpoint",
]
