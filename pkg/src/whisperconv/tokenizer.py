"""Semantic tokenizer family.

A small sequence model (pre-norm blocks of RoPE self-attention, FSMN memory and
a feed-forward layer), finite scalar quantization, the distillation and
unified-tokenizer objectives, and exact-gradient training steps.
"""

from __future__ import annotations

import contextlib
import copy
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from . import tensorio

ROLES = ("distilled", "w2n", "n2w")


class NumericError(ArithmeticError):
    pass


class AlignmentRequiredError(ValueError):
    """Paired inputs differ in frame count; align them first."""


class RoleError(RuntimeError):
    pass


# -- building blocks ---------------------------------------------------------


def rope_rotate(x: torch.Tensor, positions=None, base: float = 10000.0) -> torch.Tensor:
    """Rotate consecutive channel pairs of ``x`` (..., frames, dim) by position.

    Pair ``i`` at position ``p`` turns by ``p * base ** (-2i / dim)``.
    """
    dim = x.shape[-1]
    if dim % 2:
        raise ValueError(f"rotary dimension must be even, got {dim}")
    if positions is None:
        positions = torch.arange(x.shape[-2], dtype=x.dtype, device=x.device)
    positions = torch.as_tensor(positions, dtype=x.dtype, device=x.device)
    inv_freq = base ** (-torch.arange(0, dim, 2, dtype=x.dtype, device=x.device) / dim)
    angle = positions[:, None] * inv_freq[None, :]
    cos, sin = torch.cos(angle), torch.sin(angle)
    even, odd = x[..., 0::2], x[..., 1::2]
    out = torch.empty_like(x)
    out[..., 0::2] = even * cos - odd * sin
    out[..., 1::2] = even * sin + odd * cos
    return out


def fsmn_memory(hidden: torch.Tensor, coeffs: torch.Tensor, left: int, right: int) -> torch.Tensor:
    """Sum_{i=-left..right} coeffs[i + left] * hidden[t + i], zero-padded."""
    taps = left + right + 1
    if coeffs.shape != (taps, hidden.shape[-1]):
        raise ValueError(f"expected coefficients of shape {(taps, hidden.shape[-1])}, got {tuple(coeffs.shape)}")
    frames = hidden.shape[-2]
    padded = F.pad(hidden, (0, 0, left, right))
    out = torch.zeros_like(hidden)
    for k in range(taps):
        out = out + coeffs[k] * padded[..., k : k + frames, :]
    return out


def fsmn_apply(hidden: torch.Tensor, coeffs: torch.Tensor, left: int, right: int) -> torch.Tensor:
    return hidden + fsmn_memory(hidden, coeffs, left, right)


class RotaryAttention(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        if dim % heads or (dim // heads) % 2:
            raise ValueError("dim must split into heads of even size")
        self.heads = heads
        self.q = nn.Linear(dim, dim)
        self.k = nn.Linear(dim, dim)
        self.v = nn.Linear(dim, dim)
        self.out = nn.Linear(dim, dim)

    def forward(self, x):
        *lead, t, d = x.shape
        h = self.heads

        def split(y):
            return y.reshape(*lead, t, h, d // h).transpose(-3, -2)

        q = rope_rotate(split(self.q(x)))
        k = rope_rotate(split(self.k(x)))
        v = split(self.v(x))
        att = torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(d // h), dim=-1)
        y = (att @ v).transpose(-3, -2).reshape(*lead, t, d)
        return self.out(y)


class Fsmn(nn.Module):
    def __init__(self, dim: int, left: int, right: int):
        super().__init__()
        self.left, self.right = left, right
        self.coeffs = nn.Parameter(torch.randn(left + right + 1, dim) * 0.1)

    def forward(self, x):
        return fsmn_memory(x, self.coeffs, self.left, self.right)


class Block(nn.Module):
    """Pre-norm residual block: attention, FSMN memory, feed-forward."""

    def __init__(self, dim: int, dim_ff: int, heads: int, left: int, right: int):
        super().__init__()
        self.norm_att = nn.LayerNorm(dim)
        self.attention = RotaryAttention(dim, heads)
        self.norm_fsmn = nn.LayerNorm(dim)
        self.fsmn = Fsmn(dim, left, right)
        self.norm_ff = nn.LayerNorm(dim)
        self.ff = nn.Sequential(nn.Linear(dim, dim_ff), nn.GELU(), nn.Linear(dim_ff, dim))

    def forward(self, x):
        x = x + self.attention(self.norm_att(x))
        x = x + self.fsmn(self.norm_fsmn(x))
        return x + self.ff(self.norm_ff(x))


@dataclass
class SeqModelConfig:
    feature_dim: int = 80
    embed_dim: int = 4
    dim_model: int = 64
    dim_ff: int = 128
    heads: int = 4
    layers: int = 2
    fsmn_left: int = 3
    fsmn_right: int = 3


class SeqModel(nn.Module):
    """Tokenizer network; ``role`` is fixed at construction."""

    def __init__(self, cfg: SeqModelConfig = SeqModelConfig(), role: str = "distilled"):
        super().__init__()
        if role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}")
        self._role = role
        self.cfg = cfg
        self.input_proj = nn.Linear(cfg.feature_dim, cfg.dim_model)
        self.blocks = nn.ModuleList(
            Block(cfg.dim_model, cfg.dim_ff, cfg.heads, cfg.fsmn_left, cfg.fsmn_right) for _ in range(cfg.layers)
        )
        self.output_proj = nn.Linear(cfg.dim_model, cfg.embed_dim)

    @property
    def role(self) -> str:
        return self._role

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        if features.shape[-1] != self.cfg.feature_dim:
            raise ValueError(f"expected feature dim {self.cfg.feature_dim}, got {features.shape[-1]}")
        x = self.input_proj(features)
        for block in self.blocks:
            x = block(x)
        return self.output_proj(x)

    def derive(self, role: str) -> "SeqModel":
        """Copy of this model's weights under another role."""
        clone = SeqModel(self.cfg, role).to(next(self.parameters()).dtype)
        clone.load_state_dict(copy.deepcopy(self.state_dict()))
        return clone


def seq_forward(model: SeqModel, features) -> torch.Tensor:
    return model(torch.as_tensor(features, dtype=next(model.parameters()).dtype))


# -- finite scalar quantization -------------------------------------------


@dataclass(frozen=True)
class FsqConfig:
    levels: tuple[int, ...] = (8, 5, 5, 5)
    eps: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(int(l) for l in self.levels))
        if any(l < 2 for l in self.levels):
            raise ValueError("every FSQ level count must be >= 2")

    @property
    def embed_dim(self) -> int:
        return len(self.levels)

    @property
    def codebook_size(self) -> int:
        return int(np.prod(self.levels))

    def _consts(self, like: torch.Tensor):
        levels = torch.tensor(self.levels, dtype=like.dtype, device=like.device)
        half_l = (levels - 1) * (1 + self.eps) / 2
        offset = torch.where(levels % 2 == 0, 0.5, 0.0).to(like.dtype)
        shift = torch.atanh(offset / half_l)
        return levels, half_l, offset, shift

    def bound(self, z: torch.Tensor) -> torch.Tensor:
        _, half_l, offset, shift = self._consts(z)
        return torch.tanh(z + shift) * half_l - offset

    def unbound(self, q: torch.Tensor) -> torch.Tensor:
        """Embedding whose bounded value is exactly the grid value ``q``."""
        _, half_l, offset, shift = self._consts(q)
        return torch.atanh((q + offset) / half_l) - shift


@dataclass
class SemanticTokens:
    codes: torch.Tensor  # (..., frames, embed_dim) integer coordinates
    indices: torch.Tensor  # (..., frames) flat codebook index
    dequantized: torch.Tensor  # (..., frames, embed_dim) real

    @property
    def frames(self) -> int:
        return self.indices.shape[-1]


def codes_to_indices(codes: torch.Tensor, cfg: FsqConfig) -> torch.Tensor:
    basis = torch.tensor(np.cumprod((1,) + cfg.levels[:-1]), dtype=torch.long, device=codes.device)
    return (codes.long() * basis).sum(-1)


def indices_to_codes(indices: torch.Tensor, cfg: FsqConfig) -> torch.Tensor:
    basis = torch.tensor(np.cumprod((1,) + cfg.levels[:-1]), dtype=torch.long, device=indices.device)
    levels = torch.tensor(cfg.levels, dtype=torch.long, device=indices.device)
    return (indices.long()[..., None] // basis) % levels


def codes_to_dequantized(codes: torch.Tensor, cfg: FsqConfig, dtype=torch.float64) -> torch.Tensor:
    levels = torch.tensor(cfg.levels, device=codes.device)
    return cfg.unbound((codes - levels // 2).to(dtype))


def fsq_quantize(embeddings: torch.Tensor, cfg: FsqConfig) -> SemanticTokens:
    """Quantize each dimension to its level grid.

    The bounded value ``tanh(z + shift) * half_l - offset`` is rounded to the
    nearest integer level.  ``dequantized`` is the point in embedding space that
    bounds exactly onto that level, so re-quantizing it returns the same codes.
    Gradients flow straight through the rounding: d(dequantized)/dz equals the
    derivative of the bounding function.
    """
    if embeddings.shape[-1] != cfg.embed_dim:
        raise ValueError(f"expected embed dim {cfg.embed_dim}, got {embeddings.shape[-1]}")
    bounded = cfg.bound(embeddings)
    q = torch.round(bounded).detach()
    levels = torch.tensor(cfg.levels, device=embeddings.device)
    codes = (q + (levels // 2)).long()
    exact = cfg.unbound(q)
    dequantized = exact + (bounded - bounded.detach())
    return SemanticTokens(codes, codes_to_indices(codes, cfg), dequantized)


# -- objectives ------------------------------------------------------------


def distill_loss(student_out: torch.Tensor, teacher_out: torch.Tensor) -> torch.Tensor:
    """Mean over frames of the squared Euclidean distance."""
    if student_out.shape != teacher_out.shape:
        raise ValueError(f"shape mismatch {tuple(student_out.shape)} vs {tuple(teacher_out.shape)}")
    return ((student_out - teacher_out) ** 2).sum(-1).mean()


def unified_loss(model: SeqModel, x_primary, x_consistency, z_target, lam: float) -> torch.Tensor:
    """Cross-mode objective: map ``x_primary`` onto ``z_target`` while keeping
    the model consistent on same-mode input ``x_consistency``."""
    if lam < 0:
        raise ValueError("consistency weight must be >= 0")
    z_target = torch.as_tensor(z_target)
    frames = z_target.shape[-2]
    if x_primary.shape[-2] != frames or (x_consistency is not None and x_consistency.shape[-2] != frames):
        raise AlignmentRequiredError("inputs and targets must share a frame count")
    loss = distill_loss(model(x_primary), z_target)
    if lam and x_consistency is not None:
        loss = loss + lam * distill_loss(model(x_consistency), z_target)
    return loss


# -- gradients and optimization ---------------------------------------------


@contextlib.contextmanager
def _nonfinite_watch(model: nn.Module):
    first = []

    def hook(name):
        def fn(_module, _inputs, output):
            if not first and isinstance(output, torch.Tensor) and not torch.isfinite(output).all():
                first.append(name)

        return fn

    handles = [m.register_forward_hook(hook(n)) for n, m in model.named_modules() if n]
    try:
        yield first
    finally:
        for h in handles:
            h.remove()


def _checked_loss(model: nn.Module, loss_fn: Callable[[nn.Module], torch.Tensor]) -> torch.Tensor:
    with _nonfinite_watch(model) as first:
        loss = loss_fn(model)
    if not torch.isfinite(loss):
        where = first[0] if first else "loss"
        raise NumericError(f"non-finite value produced in {where}")
    return loss


def grad(model: nn.Module, loss_fn: Callable[[nn.Module], torch.Tensor]) -> dict[str, torch.Tensor]:
    """Reverse-mode gradients of ``loss_fn(model)`` for every named parameter."""
    model.zero_grad(set_to_none=True)
    loss = _checked_loss(model, loss_fn)
    loss.backward()
    grads = {}
    for name, p in model.named_parameters():
        g = p.grad if p.grad is not None else torch.zeros_like(p)
        if not torch.isfinite(g).all():
            raise NumericError(f"non-finite gradient for {name}")
        grads[name] = g.detach().clone()
    model.zero_grad(set_to_none=True)
    return grads


def make_optimizer(model: nn.Module, lr: float) -> torch.optim.Optimizer:
    return torch.optim.Adam(model.parameters(), lr=lr, betas=(0.9, 0.999), eps=1e-8)


def train_step(model: nn.Module, optimizer: torch.optim.Optimizer, loss_fn) -> float:
    """One Adam update; returns the loss before the update."""
    optimizer.zero_grad(set_to_none=True)
    loss = _checked_loss(model, loss_fn)
    loss.backward()
    optimizer.step()
    return float(loss.detach())


# -- frozen tokenizer --------------------------------------------------------


@dataclass
class Tokenizer:
    model: SeqModel
    fsq: FsqConfig = field(default_factory=FsqConfig)

    def __post_init__(self):
        if self.model.cfg.embed_dim != self.fsq.embed_dim:
            raise ValueError("model output dim must equal the number of FSQ levels")


def tokenize(tokenizer: Tokenizer, features, role: str = "distilled") -> SemanticTokens:
    """Quantized tokens of ``features`` under a model with the expected role."""
    if tokenizer.model.role != role:
        raise RoleError(f"expected a {role!r} tokenizer, got {tokenizer.model.role!r}")
    with torch.no_grad():
        return fsq_quantize(seq_forward(tokenizer.model, features), tokenizer.fsq)


# -- teachers ---------------------------------------------------------------


class SyntheticTeacher:
    """Fixed-seed two-layer random projection standing in for a large encoder."""

    def __init__(self, feature_dim: int, embed_dim: int, seed: int = 0, hidden: int = 32, scale: float = 0.5):
        gen = torch.Generator().manual_seed(seed)
        self.w1 = torch.randn(feature_dim, hidden, generator=gen, dtype=torch.float64) / math.sqrt(feature_dim)
        self.b1 = torch.randn(hidden, generator=gen, dtype=torch.float64) * 0.1
        self.w2 = torch.randn(hidden, embed_dim, generator=gen, dtype=torch.float64) * (scale / math.sqrt(hidden))
        self.embed_dim = embed_dim

    def __call__(self, features) -> torch.Tensor:
        x = torch.as_tensor(features, dtype=torch.float64)
        return torch.tanh(x @ self.w1 + self.b1) @ self.w2


class FileTeacher:
    """Teacher embeddings precomputed as tensor files ``<utt_id>.wft``."""

    def __init__(self, directory, embed_dim: int):
        from pathlib import Path

        self.directory = Path(directory)
        self.embed_dim = embed_dim

    def embeddings(self, utt_id: str) -> torch.Tensor:
        arr = tensorio.read_tensor(self.directory / f"{utt_id}.wft")
        if arr.ndim != 2 or arr.shape[1] != self.embed_dim:
            raise ValueError(f"teacher embeddings for {utt_id} must be frames x {self.embed_dim}")
        return torch.from_numpy(arr.astype(np.float64))


# -- checkpoints ------------------------------------------------------------


def save_model(directory, model: nn.Module, role: str, config, seed: int, extra: dict | None = None) -> None:
    manifest = {"role": role, "config": asdict(config), "seed": int(seed)}
    manifest.update(extra or {})
    tensors = {name: p.detach().cpu().numpy() for name, p in model.state_dict().items()}
    tensorio.save_checkpoint(directory, manifest, tensors)


def load_state(model: nn.Module, tensors: dict) -> None:
    dtype = next(model.parameters()).dtype
    model.load_state_dict({k: torch.from_numpy(v).to(dtype) for k, v in tensors.items()})


def save_tokenizer(directory, tok: Tokenizer, seed: int) -> None:
    save_model(directory, tok.model, tok.model.role, tok.model.cfg, seed, {"fsq_levels": list(tok.fsq.levels)})


def load_tokenizer(directory, dtype=torch.float32) -> Tokenizer:
    manifest, tensors = tensorio.load_checkpoint(directory)
    if manifest["role"] not in ROLES:
        raise RoleError(f"{directory} holds a {manifest['role']!r} checkpoint, not a tokenizer")
    model = SeqModel(SeqModelConfig(**manifest["config"]), manifest["role"]).to(dtype)
    load_state(model, tensors)
    return Tokenizer(model, FsqConfig(tuple(manifest["fsq_levels"])))
