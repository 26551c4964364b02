"""Conditional flow-matching acoustic model.

Generates normalized mel frames from semantic token indices, a direction flag
and a masked mel condition.  Training follows the straight-line path from
Gaussian noise to data; the L1 velocity loss is restricted to masked frames.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import torch
import torch.nn as nn

from . import tensorio
from .tokenizer import Block, NumericError, load_state, save_model


class Direction(enum.IntEnum):
    W2N = 0
    N2W = 1

    @classmethod
    def parse(cls, value) -> "Direction":
        if isinstance(value, cls):
            return value
        try:
            return cls[str(value).upper()]
        except KeyError:
            raise ValueError(f"unknown direction {value!r}; expected w2n or n2w") from None


class DegenerateBatchError(ValueError):
    pass


@dataclass
class FlowConfig:
    mel_bins: int = 80
    codebook_size: int = 1000
    dim_model: int = 64
    dim_ff: int = 128
    heads: int = 4
    layers: int = 2
    fsmn_left: int = 3
    fsmn_right: int = 3
    time_dim: int = 32


def time_features(t: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(1000.0) * torch.arange(half, dtype=t.dtype) / half)
    angle = 100.0 * t[..., None] * freqs
    return torch.cat([torch.sin(angle), torch.cos(angle)], dim=-1)


class FlowModel(nn.Module):
    role = "flow"

    def __init__(self, cfg: FlowConfig = FlowConfig()):
        super().__init__()
        self.cfg = cfg
        d = cfg.dim_model
        self.token_embedding = nn.Embedding(cfg.codebook_size, d)
        self.direction_embedding = nn.Embedding(len(Direction), d)
        self.time_proj = nn.Linear(cfg.time_dim, d)
        self.y_proj = nn.Linear(cfg.mel_bins, d)
        self.condition_proj = nn.Linear(cfg.mel_bins, d)
        self.blocks = nn.ModuleList(
            Block(d, cfg.dim_ff, cfg.heads, cfg.fsmn_left, cfg.fsmn_right) for _ in range(cfg.layers)
        )
        self.head = nn.Linear(d, cfg.mel_bins)

    def forward(self, y_t, t, tokens, direction, condition):
        """Velocity for ``y_t``; all frame-indexed inputs share (batch, frames)."""
        if not (y_t.shape[:-1] == tokens.shape == condition.shape[:-1]):
            raise ValueError(
                f"frame mismatch: y_t {tuple(y_t.shape)}, tokens {tuple(tokens.shape)}, "
                f"condition {tuple(condition.shape)}"
            )
        t = torch.as_tensor(t, dtype=y_t.dtype).reshape(-1)
        if t.numel() == 1 and y_t.dim() == 3:
            t = t.expand(y_t.shape[0])
        direction = torch.as_tensor(direction, dtype=torch.long).reshape(-1)
        time = self.time_proj(time_features(t, self.cfg.time_dim))
        x = (
            self.token_embedding(tokens)
            + self.y_proj(y_t)
            + self.condition_proj(condition)
            + (self.direction_embedding(direction) + time)[..., None, :]
        )
        for block in self.blocks:
            x = block(x)
        return self.head(x)


def velocity_forward(model: FlowModel, y_t, t, tokens, direction, condition) -> torch.Tensor:
    squeeze = y_t.dim() == 2
    if squeeze:
        y_t, tokens, condition = y_t[None], tokens[None], condition[None]
    out = model(y_t, t, tokens, direction, condition)
    return out[0] if squeeze else out


# -- probability path and batches -------------------------------------------


def ot_interpolate(y0, y1, t):
    """Point at time ``t`` on the straight path from ``y0`` to ``y1``.

    ``t`` is a scalar or one value per leading batch item.
    """
    t = torch.as_tensor(t, dtype=y1.dtype)
    if torch.any((t < 0) | (t > 1)):
        raise ValueError("t must lie in [0, 1]")
    if t.dim() == 1:
        t = t.reshape(-1, *([1] * (y1.dim() - 1)))
    return (1 - t) * y0 + t * y1


def make_masked_condition(y1: torch.Tensor, mask: torch.Tensor, noise_seed: int) -> torch.Tensor:
    """``y1`` on unmasked frames, seeded unit Gaussian noise on masked frames."""
    gen = torch.Generator().manual_seed(int(noise_seed))
    noise = torch.randn(y1.shape, generator=gen, dtype=y1.dtype)
    return torch.where(mask[..., None], noise, y1)


@dataclass
class FlowBatch:
    y0: torch.Tensor
    y1: torch.Tensor
    t: torch.Tensor
    mask: torch.Tensor
    tokens: torch.Tensor
    direction: torch.Tensor
    condition: torch.Tensor

    @property
    def y_t(self):
        return ot_interpolate(self.y0, self.y1, self.t)


def random_span_mask(batch: int, frames: int, gen: torch.Generator, low: float = 0.4, high: float = 0.9) -> torch.Tensor:
    """One contiguous masked span per item covering a uniform low..high fraction."""
    mask = torch.zeros(batch, frames, dtype=torch.bool)
    for b in range(batch):
        frac = low + (high - low) * torch.rand((), generator=gen).item()
        length = min(frames, max(1, int(round(frac * frames))))
        start = int(torch.randint(0, frames - length + 1, (), generator=gen))
        mask[b, start : start + length] = True
    return mask


def make_flow_batch(y1, tokens, direction, seed: int, mask=None) -> FlowBatch:
    """Sample noise, time and mask for a (batch, frames, bins) target."""
    gen = torch.Generator().manual_seed(int(seed))
    B, T, _ = y1.shape
    y0 = torch.randn(y1.shape, generator=gen, dtype=y1.dtype)
    t = torch.rand(B, generator=gen, dtype=y1.dtype)
    if mask is None:
        mask = random_span_mask(B, T, gen)
    direction = torch.as_tensor(direction, dtype=torch.long).reshape(-1).expand(B)
    condition = make_masked_condition(y1, mask, int(torch.randint(0, 2**31 - 1, (), generator=gen)))
    return FlowBatch(y0, y1, t, mask, tokens, direction, condition)


# -- objective ---------------------------------------------------------------


def masked_l1(velocity: torch.Tensor, batch: FlowBatch) -> torch.Tensor:
    """L1 between predicted and target velocity, averaged over masked frames and bins."""
    mask = batch.mask
    if not bool(mask.any()):
        raise DegenerateBatchError("mask selects no frames")
    err = (batch.y1 - batch.y0 - velocity).abs()
    weight = mask[..., None].to(err.dtype)
    return (err * weight).sum() / (weight.sum() * err.shape[-1])


def cfm_loss(model: FlowModel, batch: FlowBatch) -> torch.Tensor:
    velocity = model(batch.y_t, batch.t, batch.tokens, batch.direction, batch.condition)
    return masked_l1(velocity, batch)


# -- sampling ----------------------------------------------------------------


@torch.no_grad()
def euler_sample_batch(model: FlowModel, tokens, direction, prompt_mel, target_frames: int, steps: int = 10, seed: int = 0):
    """Integrate the velocity field over the target region of each item.

    ``tokens`` is (batch, prompt + target), ``prompt_mel`` (batch, prompt, bins).
    Prompt frames stay fixed; the target region starts from seeded noise.
    Returns (batch, target_frames, bins).
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    B, P, M = prompt_mel.shape
    if tokens.shape != (B, P + target_frames):
        raise ValueError(f"tokens must cover prompt + target frames: expected {(B, P + target_frames)}, got {tuple(tokens.shape)}")
    gen = torch.Generator().manual_seed(int(seed))
    dtype = prompt_mel.dtype
    noise = torch.randn(B, target_frames, M, generator=gen, dtype=dtype)
    cond_noise = torch.randn(B, target_frames, M, generator=gen, dtype=dtype)
    y = torch.cat([prompt_mel, noise], dim=1)
    condition = torch.cat([prompt_mel, cond_noise], dim=1)
    direction = torch.as_tensor(direction, dtype=torch.long).reshape(-1).expand(B)
    for k in range(steps):
        t = torch.full((B,), k / steps, dtype=dtype)
        v = model(y, t, tokens, direction, condition)
        if not torch.isfinite(v).all():
            raise NumericError(f"non-finite velocity at step {k}")
        y = torch.cat([y[:, :P], y[:, P:] + v[:, P:] / steps], dim=1)
    return y[:, P:]


def euler_sample(model, tokens, direction, prompt_mel, target_frames: int, steps: int = 10, seed: int = 0):
    out = euler_sample_batch(model, tokens[None], direction, prompt_mel[None], target_frames, steps, seed)
    return out[0]


# -- checkpoints -------------------------------------------------------------


def save_flow(directory, model: FlowModel, seed: int, extra: dict | None = None) -> None:
    save_model(directory, model, "flow", model.cfg, seed, extra)


def load_flow(directory, dtype=torch.float32) -> FlowModel:
    from .tokenizer import RoleError

    manifest, tensors = tensorio.load_checkpoint(directory)
    if manifest["role"] != "flow":
        raise RoleError(f"{directory} holds a {manifest['role']!r} checkpoint, not a flow model")
    model = FlowModel(FlowConfig(**manifest["config"])).to(dtype)
    load_state(model, tensors)
    return model
