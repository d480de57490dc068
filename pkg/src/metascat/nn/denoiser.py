"""Conditional 1D U-Net predicting the noise added to a design vector.

Layout for the default 12-long input: encoder channels 16-32-64-128 at
lengths 12-12-6-3 (stride-2 convolutions on the last two transitions), a
128-channel bottleneck block, and a mirrored 128-64-32-16 decoder using
nearest-neighbor upsampling with skip concatenation at matching lengths.
Every block is conv -> group norm -> FiLM -> SiLU.

Conditioning: a sinusoidal timestep embedding is concatenated with a
learned embedding of the target-profile vector; each block owns a
two-layer FiLM generator mapping that embedding to per-channel scale and
shift. The generators' final layers start at 1% of the usual weight
scale, so every FiLM begins near the identity (scale ~1, shift ~0)
while the conditioning path still reaches the output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, concat, conv1d, crop, linear, silu, upsample2


@dataclass(frozen=True)
class DenoiserConfig:
    input_length: int = 12
    cond_size: int = 10
    channels: tuple[int, int, int, int] = (16, 32, 64, 128)
    film_hidden: int = 128
    time_embed_dim: int = 128
    cond_embed_dim: int = 128
    norm_groups: int = 8
    kernel: int = 3
    dtype: str = "float32"

    def __post_init__(self):
        if self.input_length < 4:
            raise ValueError("input_length must allow two halvings (>= 4)")
        if self.cond_size < 1:
            raise ValueError("cond_size must be >= 1")
        if self.time_embed_dim % 2:
            raise ValueError("time_embed_dim must be even")

    @property
    def embed_dim(self) -> int:
        return self.time_embed_dim + self.cond_embed_dim

    def to_dict(self) -> dict:
        return {
            "input_length": self.input_length,
            "cond_size": self.cond_size,
            "channels": list(self.channels),
            "film_hidden": self.film_hidden,
            "time_embed_dim": self.time_embed_dim,
            "cond_embed_dim": self.cond_embed_dim,
            "norm_groups": self.norm_groups,
            "kernel": self.kernel,
            "dtype": self.dtype,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DenoiserConfig":
        d = dict(d)
        d["channels"] = tuple(d["channels"])
        return cls(**d)


def sinusoidal_embedding(t: np.ndarray, dim: int, dtype) -> np.ndarray:
    """Transformer-style embedding of integer timesteps, shape (B, dim)."""
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / (half - 1))
    args = np.asarray(t, dtype=float)[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1).astype(dtype)


def film(features: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
    """Per-channel affine modulation of (B, C, L) features.

    gamma and beta have shape (B, C) or (C,); both broadcast along length.
    """
    if gamma.shape != beta.shape:
        raise ValueError(f"gamma {gamma.shape} and beta {beta.shape} differ")
    channels = features.shape[1]
    if gamma.shape[-1] != channels:
        raise ValueError(
            f"expected {channels} modulation channels, got {gamma.shape[-1]}"
        )
    if len(gamma.shape) == 1:
        gamma = gamma.reshape(1, channels, 1)
        beta = beta.reshape(1, channels, 1)
    else:
        gamma = gamma.reshape(gamma.shape[0], channels, 1)
        beta = beta.reshape(beta.shape[0], channels, 1)
    return features * gamma + beta


def group_norm(x: Tensor, groups: int, gamma: Tensor, beta: Tensor, eps: float) -> Tensor:
    """Normalize (B, C, L) features over channel groups, then scale/shift."""
    batch, channels, length = x.shape
    g = x.reshape(batch, groups, (channels // groups) * length)
    mu = g.mean(axis=2, keepdims=True)
    centered = g - mu
    var = centered.power(2.0).mean(axis=2, keepdims=True)
    normed = centered * (var + eps).power(-0.5)
    normed = normed.reshape(batch, channels, length)
    return normed * gamma.reshape(1, channels, 1) + beta.reshape(1, channels, 1)


class Denoiser:
    """Parameter construction and forward pass of the conditional U-Net."""

    NORM_EPS = 1e-5

    def __init__(self, config: DenoiserConfig | None = None):
        self.config = config or DenoiserConfig()
        c1, c2, c3, c4 = self.config.channels
        # (name, in_channels, out_channels, stride) per conv block; decoder
        # inputs include the concatenated skip channels
        self.blocks = [
            ("enc1", 1, c1, 1),
            ("enc2", c1, c2, 1),
            ("enc3", c2, c3, 2),
            ("enc4", c3, c4, 2),
            ("mid", c4, c4, 1),
            ("dec3", c4 + c3, c3, 1),
            ("dec2", c3 + c2, c2, 1),
            ("dec1", c2 + c1, c1, 1),
        ]

    # -- parameters ----------------------------------------------------------

    def init_params(self, seed: int) -> dict[str, np.ndarray]:
        """Kaiming-uniform weights; FiLM generators end at the identity."""
        cfg = self.config
        dtype = np.dtype(cfg.dtype)
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        params: dict[str, np.ndarray] = {}

        def uniform(shape, fan_in):
            bound = 1.0 / np.sqrt(fan_in)
            return rng.uniform(-bound, bound, size=shape).astype(dtype)

        params["cond.w"] = uniform((cfg.cond_embed_dim, cfg.cond_size), cfg.cond_size)
        params["cond.b"] = uniform((cfg.cond_embed_dim,), cfg.cond_size)
        for name, c_in, c_out, _ in self.blocks:
            fan = c_in * cfg.kernel
            params[f"{name}.conv.w"] = uniform((c_out, c_in, cfg.kernel), fan)
            params[f"{name}.conv.b"] = uniform((c_out,), fan)
            params[f"{name}.norm.gamma"] = np.ones(c_out, dtype=dtype)
            params[f"{name}.norm.beta"] = np.zeros(c_out, dtype=dtype)
            params[f"{name}.film.w1"] = uniform(
                (cfg.film_hidden, cfg.embed_dim), cfg.embed_dim
            )
            params[f"{name}.film.b1"] = uniform((cfg.film_hidden,), cfg.embed_dim)
            # near-identity start: scale ~1, shift ~0, but the conditioning
            # path stays alive (an exactly zero layer would silence it)
            params[f"{name}.film.w2"] = 0.01 * uniform(
                (2 * c_out, cfg.film_hidden), cfg.film_hidden
            )
            params[f"{name}.film.b2"] = np.zeros(2 * c_out, dtype=dtype)
        c1 = cfg.channels[0]
        fan = c1 * cfg.kernel
        params["head.w"] = uniform((1, c1, cfg.kernel), fan)
        params["head.b"] = uniform((1,), fan)
        return params

    def parameter_count(self) -> int:
        return sum(v.size for v in self.init_params(seed=0).values())

    # -- forward ---------------------------------------------------------------

    def _groups_for(self, channels: int) -> int:
        g = self.config.norm_groups
        return g if channels % g == 0 and channels >= g else 1

    def _block(self, name, x, emb, p, stride):
        cfg = self.config
        h = conv1d(
            x, p[f"{name}.conv.w"], p[f"{name}.conv.b"],
            stride=stride, padding=cfg.kernel // 2,
        )
        channels = h.shape[1]
        h = group_norm(
            h,
            self._groups_for(channels),
            p[f"{name}.norm.gamma"],
            p[f"{name}.norm.beta"],
            self.NORM_EPS,
        )
        hidden = silu(linear(emb, p[f"{name}.film.w1"], p[f"{name}.film.b1"]))
        gamma_beta = linear(hidden, p[f"{name}.film.w2"], p[f"{name}.film.b2"])
        b = gamma_beta.shape[0]
        gb = gamma_beta.reshape(b, 2, channels)
        one = Tensor(np.ones((), dtype=x.dtype))
        gamma = crop_channel(gb, 0) + one
        beta = crop_channel(gb, 1)
        return silu(film(h, gamma, beta))

    def forward(
        self,
        params: dict[str, np.ndarray] | dict[str, Tensor],
        y_t: np.ndarray,
        t: np.ndarray,
        cond: np.ndarray,
    ) -> Tensor:
        """Predicted noise for a batch: y_t (B, L), t (B,), cond (B, K)."""
        cfg = self.config
        dtype = np.dtype(cfg.dtype)
        y_t = np.asarray(y_t, dtype=dtype)
        cond = np.asarray(cond, dtype=dtype)
        if y_t.ndim != 2 or y_t.shape[1] != cfg.input_length:
            raise ValueError(f"expected y_t of shape (B, {cfg.input_length})")
        if cond.shape != (y_t.shape[0], cfg.cond_size):
            raise ValueError(f"expected cond of shape (B, {cfg.cond_size})")
        p = {
            k: v if isinstance(v, Tensor) else Tensor(v) for k, v in params.items()
        }

        t_emb = Tensor(sinusoidal_embedding(t, cfg.time_embed_dim, dtype))
        c_emb = silu(linear(Tensor(cond), p["cond.w"], p["cond.b"]))
        emb = concat([t_emb, c_emb], axis=1)

        x = Tensor(y_t).reshape(y_t.shape[0], 1, cfg.input_length)
        e1 = self._block("enc1", x, emb, p, stride=1)
        e2 = self._block("enc2", e1, emb, p, stride=1)
        e3 = self._block("enc3", e2, emb, p, stride=2)
        e4 = self._block("enc4", e3, emb, p, stride=2)
        mid = self._block("mid", e4, emb, p, stride=1)
        u3 = crop(upsample2(mid), e3.shape[2])
        d3 = self._block("dec3", concat([u3, e3], axis=1), emb, p, stride=1)
        u2 = crop(upsample2(d3), e2.shape[2])
        d2 = self._block("dec2", concat([u2, e2], axis=1), emb, p, stride=1)
        d1 = self._block("dec1", concat([d2, e1], axis=1), emb, p, stride=1)
        out = conv1d(d1, p["head.w"], p["head.b"], stride=1, padding=cfg.kernel // 2)
        out = out.reshape(y_t.shape[0], cfg.input_length)
        if not np.all(np.isfinite(out.data)):
            raise FloatingPointError("denoiser produced non-finite activations")
        return out

    def predict(
        self, params: dict[str, np.ndarray], y_t, t, cond
    ) -> np.ndarray:
        """Forward pass returning a plain array (no gradient use)."""
        return self.forward(params, y_t, t, cond).data


def crop_channel(x: Tensor, index: int) -> Tensor:
    """Select x[:, index, :] from a (B, 2, C) tensor."""

    def grad_fn(g):
        out = np.zeros(x.shape, dtype=g.dtype)
        out[:, index, :] = g
        return (out,)

    return Tensor(x.data[:, index, :], parents=(x,), grad_fn=grad_fn)
