"""Training loops for the three stages and the pseudo-data scaling study.

Everything here works on in-memory arrays so the same code drives the CLI,
the tests and the synthetic acceptance runs.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from .features import cmvn, normalize_mel
from .flow import Direction, FlowModel, cfm_loss, euler_sample_batch, make_flow_batch
from .synthetic import BimodalCorpus
from .tokenizer import (
    FsqConfig,
    RoleError,
    SeqModel,
    SeqModelConfig,
    SyntheticTeacher,
    Tokenizer,
    distill_loss,
    fsq_quantize,
    make_optimizer,
    tokenize,
    train_step,
    unified_loss,
)

log = logging.getLogger(__name__)


def derive_seed(component: str, seed: int) -> int:
    """Independent 31-bit seed for a named component of a run."""
    digest = hashlib.sha256(f"{component}:{int(seed)}".encode()).digest()
    return int.from_bytes(digest[:4], "little") & 0x7FFFFFFF


class LossLog:
    """Tab-separated ``step<TAB>loss`` lines, header first."""

    HEADER = "step\tloss"

    def __init__(self, path=None):
        self.path = Path(path) if path else None
        self.rows: list[tuple[int, float]] = []

    def add(self, step: int, loss: float) -> None:
        self.rows.append((step, loss))

    def write(self) -> None:
        if self.path is None:
            return
        body = "".join(f"{s}\t{l:.8g}\n" for s, l in self.rows)
        self.path.write_text(self.HEADER + "\n" + body)

    @staticmethod
    def read(path) -> list[tuple[int, float]]:
        lines = Path(path).read_text().splitlines()
        if not lines or lines[0] != LossLog.HEADER:
            raise ValueError(f"{path}: missing loss-log header")
        return [(int(s), float(l)) for s, l in (line.split("\t") for line in lines[1:])]


def crop_batch(arrays: Sequence[Sequence[np.ndarray]], batch: int, frames: int, rng: np.random.Generator):
    """Stack random equal-length windows drawn from parallel sequences.

    ``arrays`` is a list of streams (e.g. features and targets); stream items
    at the same index share a frame axis.  Utterances shorter than ``frames``
    shrink the window for the whole batch.
    """
    n = len(arrays[0])
    picks = rng.integers(n, size=batch)
    length = min(frames, min(len(arrays[0][i]) for i in picks))
    starts = [int(rng.integers(len(arrays[0][i]) - length + 1)) for i in picks]
    return [np.stack([stream[i][s : s + length] for i, s in zip(picks, starts)]) for stream in arrays]


@dataclass
class TrainConfig:
    steps: int = 500
    lr: float = 1e-4
    batch: int = 8
    frames: int = 64
    log_every: int = 10
    seed: int = 0
    dtype: torch.dtype = torch.float32


def _tensor(x, dtype):
    return torch.as_tensor(np.asarray(x), dtype=dtype)


# -- stage 1 ---------------------------------------------------------------


def train_distill(model: SeqModel, features: Sequence[np.ndarray], targets: Sequence[np.ndarray], cfg: TrainConfig, loss_log: LossLog | None = None) -> list[float]:
    """Fit the student to teacher embeddings frame by frame."""
    rng = np.random.default_rng(derive_seed("stage1.batches", cfg.seed))
    losses = []
    opt = make_optimizer(model, cfg.lr)
    for step in range(cfg.steps):
        x, y = crop_batch([features, targets], cfg.batch, cfg.frames, rng)
        x, y = _tensor(x, cfg.dtype), _tensor(y, cfg.dtype)
        loss = train_step(model, opt, lambda m: distill_loss(m(x), y))
        losses.append(loss)
        if loss_log is not None and step % cfg.log_every == 0:
            loss_log.add(step, loss)
    return losses


# -- stage 2 ---------------------------------------------------------------


@dataclass
class FlowItem:
    tokens: np.ndarray  # (frames,) codebook indices
    mel: np.ndarray  # (frames, bins) normalized log-mel
    direction: Direction


def flow_items(distilled: Tokenizer, pairs, dtype=torch.float32) -> list[FlowItem]:
    """Stage-2 examples from frame-matched (whisper, normal) log-mel pairs.

    Normal targets are generated in the w2n direction and whisper targets in
    the n2w direction.
    """
    items = []
    for p in pairs:
        for mel, direction in ((p.normal, Direction.W2N), (p.whisper, Direction.N2W)):
            tokens = tokenize(distilled, _tensor(cmvn(mel), dtype)).indices.numpy()
            items.append(FlowItem(tokens, normalize_mel(mel), direction))
    return items


def train_flow(model: FlowModel, items: Sequence[FlowItem], cfg: TrainConfig, loss_log: LossLog | None = None) -> list[float]:
    rng = np.random.default_rng(derive_seed("stage2.batches", cfg.seed))
    opt = make_optimizer(model, cfg.lr)
    groups = {d: [it for it in items if it.direction == d] for d in Direction}
    groups = {d: g for d, g in groups.items() if g}
    losses = []
    for step in range(cfg.steps):
        # one direction per batch so the flag is constant within it
        directions = sorted(groups)
        d = directions[step % len(directions)]
        g = groups[d]
        tok, mel = crop_batch([[it.tokens for it in g], [it.mel for it in g]], cfg.batch, cfg.frames, rng)
        batch = make_flow_batch(
            _tensor(mel, cfg.dtype), torch.as_tensor(tok, dtype=torch.long), int(d), derive_seed(f"stage2.noise.{step}", cfg.seed)
        )
        loss = train_step(model, opt, lambda m: cfm_loss(m, batch))
        losses.append(loss)
        if loss_log is not None and step % cfg.log_every == 0:
            loss_log.add(step, loss)
    return losses


# -- stage 3 ---------------------------------------------------------------


@dataclass
class UnifiedData:
    primary: list[np.ndarray] = field(default_factory=list)
    consistency: list[np.ndarray] = field(default_factory=list)
    target: list[np.ndarray] = field(default_factory=list)

    def __len__(self):
        return len(self.primary)

    def extend(self, other: "UnifiedData") -> "UnifiedData":
        return UnifiedData(self.primary + other.primary, self.consistency + other.consistency, self.target + other.target)


def unified_data(distilled: Tokenizer, whisper_feats, normal_feats, direction: Direction, dtype=torch.float32) -> UnifiedData:
    """Inputs and quantized targets for one unified tokenizer.

    w2n reads whisper features and targets the frozen tokenizer's normal-mode
    embeddings; n2w is the mirror image.  Features are already normalized.
    """
    if distilled.model.role != "distilled":
        raise RoleError("targets must come from the frozen distilled tokenizer")
    data = UnifiedData()
    for w, n in zip(whisper_feats, normal_feats):
        if len(w) != len(n):
            raise ValueError("unified-tokenizer pairs must be frame-matched")
        src, same = (w, n) if direction == Direction.W2N else (n, w)
        z = tokenize(distilled, _tensor(same, dtype)).dequantized.detach().to(torch.float64).numpy()
        data.primary.append(np.asarray(src))
        data.consistency.append(np.asarray(same))
        data.target.append(z)
    return data


def train_unified(model: SeqModel, data: UnifiedData, lam: float, cfg: TrainConfig, loss_log: LossLog | None = None, offset: int = 0) -> list[float]:
    if len(data) == 0:
        raise ValueError("no training pairs")
    rng = np.random.default_rng(derive_seed(f"stage3.{model.role}.batches.{offset}", cfg.seed))
    opt = make_optimizer(model, cfg.lr)
    losses = []
    for step in range(cfg.steps):
        xp, xc, z = crop_batch([data.primary, data.consistency, data.target], cfg.batch, cfg.frames, rng)
        xp, xc, z = (_tensor(a, cfg.dtype) for a in (xp, xc, z))
        loss = train_step(model, opt, lambda m: unified_loss(m, xp, xc, z, lam))
        losses.append(loss)
        if loss_log is not None and step % cfg.log_every == 0:
            loss_log.add(offset + step, loss)
    return losses


@torch.no_grad()
def embedding_mse(model: SeqModel, features: Sequence[np.ndarray], targets: Sequence[np.ndarray], dtype=torch.float32) -> float:
    """Frame-weighted mean squared embedding distance over utterances."""
    total, frames = 0.0, 0
    for x, z in zip(features, targets):
        out = model(_tensor(x, dtype)).double()
        total += float(((out - torch.as_tensor(z, dtype=torch.float64)) ** 2).sum())
        frames += len(x)
    return total / frames


def pseudo_whisper_features(n2w: Tokenizer, distilled: Tokenizer, flow: FlowModel, normal_mels, prompt_frames: int = 20, steps: int = 10, seed: int = 0, dtype=torch.float32):
    """Whisper-mode log-mels synthesized from normal log-mels in feature space.

    The n2w tokenizer supplies the target tokens; the first ``prompt_frames``
    of the utterance itself act as the prompt.  Outputs are frame-matched with
    their sources by construction.
    """
    from .features import denormalize_mel

    if n2w.model.role != "n2w":
        raise RoleError(f"expected an 'n2w' tokenizer, got {n2w.model.role!r}")
    out = []
    for k, mel in enumerate(normal_mels):
        feats = _tensor(cmvn(mel), dtype)
        target = fsq_quantize(n2w.model(feats), n2w.fsq).indices
        p = min(prompt_frames, len(mel) // 2)
        prompt_tokens = tokenize(distilled, feats[:p]).indices
        gen = euler_sample_batch(
            flow,
            torch.cat([prompt_tokens, target])[None],
            Direction.N2W,
            _tensor(normalize_mel(mel[:p]), dtype)[None],
            len(mel),
            steps,
            derive_seed(f"pseudo.{k}", seed),
        )[0]
        out.append(denormalize_mel(gen.double().numpy()))
    return out


# -- scaling study -----------------------------------------------------------


SCALE_HEADER = ("tier", "setting", "seed", "metric", "value")
SETTINGS = ("pretrain", "pretrain+SFT")


@dataclass
class ScaleConfig:
    tiers: tuple[int, ...] = (200, 1000, 2000)
    seeds: tuple[int, ...] = (0, 1, 2)
    feature_dim: int = 80
    frames: int = 20
    real_pairs: int = 16
    val_pairs: int = 32
    epochs: int = 4
    sft_steps: int = 200
    sft_lr: float = 1e-4
    batch: int = 16
    lr: float = 1e-3
    lam: float = 0.5
    pseudo_gap: float = 0.5
    teacher_steps: int = 300
    model: SeqModelConfig = field(default_factory=lambda: SeqModelConfig(feature_dim=80, dim_model=32, dim_ff=64))
    fsq_levels: tuple[int, ...] = (8, 5, 5, 5)
    seed: int = 0


@dataclass
class ScaleRow:
    tier: int
    setting: str
    seed: int
    metric: str
    value: float

    def line(self) -> str:
        return f"{self.tier}\t{self.setting}\t{self.seed}\t{self.metric}\t{self.value:.8g}"


def write_scale_data(rows: Sequence[ScaleRow], path) -> None:
    Path(path).write_text("\t".join(SCALE_HEADER) + "\n" + "".join(r.line() + "\n" for r in rows))


def read_scale_data(path) -> list[ScaleRow]:
    lines = Path(path).read_text().splitlines()
    if tuple(lines[0].split("\t")) != SCALE_HEADER:
        raise ValueError(f"{path}: unexpected header {lines[0]!r}")
    rows = []
    for line in lines[1:]:
        tier, setting, seed, metric, value = line.split("\t")
        rows.append(ScaleRow(int(tier), setting, int(seed), metric, float(value)))
    return rows


def scale_table(rows: Sequence[ScaleRow]) -> str:
    """Seed-mean value per (tier, setting)."""
    cells: dict[tuple[int, str], list[float]] = {}
    for r in rows:
        cells.setdefault((r.tier, r.setting), []).append(r.value)
    lines = ["tier\tsetting\tmean_val_loss\tseeds"]
    for (tier, setting), vals in sorted(cells.items()):
        lines.append(f"{tier}\t{setting}\t{np.mean(vals):.4f}\t{len(vals)}")
    return "\n".join(lines)


def scale_study(cfg: ScaleConfig, progress: Callable[[str], None] | None = None) -> list[ScaleRow]:
    """Pseudo-data pretraining tiers with and without fine-tuning on real pairs.

    A synthetic bimodal corpus stands in for real data; pseudo pairs follow an
    imperfect copy of its whisper/normal relation.  Each tier pretrains a w2n
    tokenizer (initialized from the shared distilled model) for a fixed number
    of epochs over its pseudo pairs, is scored on held-out real pairs, then
    fine-tuned on a small real set and scored again.
    """
    tiers = tuple(sorted(cfg.tiers))
    if any(t < 1 for t in tiers):
        raise ValueError("tiers must be positive pair counts")
    corpus = BimodalCorpus.create(cfg.feature_dim, seed=derive_seed("scale.corpus", cfg.seed) % 10_000)
    pseudo_warp = corpus.pseudo_warp(cfg.pseudo_gap, seed=derive_seed("scale.pseudo-warp", cfg.seed))
    model_cfg = SeqModelConfig(**{**cfg.model.__dict__, "feature_dim": cfg.feature_dim, "embed_dim": len(cfg.fsq_levels)})
    fsq = FsqConfig(cfg.fsq_levels)

    torch.manual_seed(derive_seed("scale.teacher-init", cfg.seed))
    teacher_model = SeqModel(model_cfg, "distilled")
    oracle = SyntheticTeacher(cfg.feature_dim, model_cfg.embed_dim, seed=derive_seed("scale.oracle", cfg.seed))
    tw, tn = corpus.pairs(64, cfg.frames * 2, seed=derive_seed("scale.teacher-data", cfg.seed))
    mixed = list(tw) + list(tn)
    train_distill(teacher_model, mixed, [oracle(x).numpy() for x in mixed], TrainConfig(cfg.teacher_steps, cfg.lr, cfg.batch, cfg.frames * 2, seed=cfg.seed))
    distilled = Tokenizer(teacher_model, fsq)

    real_w, real_n = corpus.pairs(cfg.real_pairs, cfg.frames, seed=derive_seed("scale.real", cfg.seed))
    val_w, val_n = corpus.pairs(cfg.val_pairs, cfg.frames, seed=derive_seed("scale.val", cfg.seed))
    real = unified_data(distilled, real_w, real_n, Direction.W2N)
    val = unified_data(distilled, val_w, val_n, Direction.W2N)
    rows = []
    for tier in tiers:
        for seed in cfg.seeds:
            pw, pn = corpus.pairs(tier, cfg.frames, seed=derive_seed(f"scale.pseudo.{tier}.{seed}", cfg.seed), warp=pseudo_warp)
            pseudo = unified_data(distilled, pw, pn, Direction.W2N)
            model = teacher_model.derive("w2n")
            steps = max(1, cfg.epochs * tier // cfg.batch)
            torch.manual_seed(derive_seed(f"scale.run.{tier}.{seed}", cfg.seed))
            train_unified(model, pseudo, cfg.lam, TrainConfig(steps, cfg.lr, cfg.batch, cfg.frames, seed=seed))
            rows.append(ScaleRow(tier, "pretrain", seed, "val_loss", embedding_mse(model, val.primary, val.target)))
            train_unified(model, real, cfg.lam, TrainConfig(cfg.sft_steps, cfg.sft_lr, cfg.batch, cfg.frames, seed=seed + 7919), offset=steps)
            rows.append(ScaleRow(tier, "pretrain+SFT", seed, "val_loss", embedding_mse(model, val.primary, val.target)))
            if progress:
                progress(f"tier {tier} seed {seed}: pretrain {rows[-2].value:.4f}, +SFT {rows[-1].value:.4f}")
    return rows
