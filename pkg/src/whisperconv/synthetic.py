"""Reproducible synthetic data for tests, acceptance runs and the scaling study.

Nothing here touches real recordings.  Utterances are sequences of "phone"
units with random durations; each unit owns a spectral envelope (for audio)
or a prototype feature vector (for feature-level tasks).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from .dsp import SAMPLE_RATE, Waveform


def unit_sequence(rng: np.random.Generator, frames: int, units: int, min_dur: int = 3, max_dur: int = 8) -> np.ndarray:
    """Per-frame unit labels built from runs of random length."""
    labels = np.empty(frames, dtype=np.int64)
    t = 0
    while t < frames:
        d = int(rng.integers(min_dur, max_dur + 1))
        labels[t : t + d] = rng.integers(units)
        t += d
    return labels


# -- feature-level tasks -------------------------------------------------------


@dataclass
class FeatureSpace:
    """Prototype feature vectors for phone-like units."""

    prototypes: np.ndarray
    noise: float = 0.3

    @classmethod
    def create(cls, feature_dim: int = 80, units: int = 12, seed: int = 0, noise: float = 0.3) -> "FeatureSpace":
        rng = np.random.default_rng(seed)
        return cls(rng.normal(size=(units, feature_dim)), noise)

    @property
    def units(self) -> int:
        return len(self.prototypes)

    def sample(self, utterances: int, frames: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
        """Features (utterances, frames, dim) and their unit labels."""
        rng = np.random.default_rng(seed)
        labels = np.stack([unit_sequence(rng, frames, self.units) for _ in range(utterances)])
        feats = self.prototypes[labels] + self.noise * rng.normal(size=labels.shape + (self.prototypes.shape[1],))
        return feats, labels


class ModeWarp:
    """Fixed invertible affine map taking normal-mode features to whisper mode."""

    def __init__(self, feature_dim: int, seed: int = 0, strength: float = 1.0):
        rng = np.random.default_rng(seed)
        q, _ = np.linalg.qr(rng.normal(size=(feature_dim, feature_dim)))
        scales = np.exp(rng.uniform(-0.5, 0.5, size=feature_dim))
        self.matrix = np.eye(feature_dim) * (1 - strength) + strength * (q * scales)
        self.bias = strength * rng.normal(size=feature_dim) * 0.5

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return x @ self.matrix.T + self.bias

    def inverse(self, y: np.ndarray) -> np.ndarray:
        return np.linalg.solve(self.matrix, (y - self.bias).T).T


@dataclass
class BimodalCorpus:
    """Frame-aligned normal/whisper feature pairs related by a ModeWarp."""

    space: FeatureSpace
    warp: ModeWarp
    mode_noise: float = 0.05

    @classmethod
    def create(cls, feature_dim: int = 80, seed: int = 0) -> "BimodalCorpus":
        return cls(FeatureSpace.create(feature_dim, seed=seed), ModeWarp(feature_dim, seed=seed + 1))

    def pairs(self, count: int, frames: int, seed: int, warp: ModeWarp | None = None):
        """(whisper, normal) arrays of shape (count, frames, dim).

        Passing a different ``warp`` yields pairs whose whisper side follows a
        perturbed mapping, as pseudo data from an imperfect generator would.
        """
        normal, _ = self.space.sample(count, frames, seed)
        rng = np.random.default_rng(seed + 7919)
        whisper = (warp or self.warp)(normal) + self.mode_noise * rng.normal(size=normal.shape)
        return whisper, normal

    def pseudo_warp(self, gap: float = 0.15, seed: int = 99) -> ModeWarp:
        """Imperfect copy of the true warp (an N2W generator with a domain gap)."""
        rng = np.random.default_rng(seed)
        dim = self.warp.matrix.shape[0]
        approx = ModeWarp.__new__(ModeWarp)
        approx.matrix = self.warp.matrix + gap * rng.normal(size=(dim, dim)) / math.sqrt(dim)
        approx.bias = self.warp.bias + gap * rng.normal(size=dim) * 0.5
        return approx


class TokenMelTask:
    """Deterministic token -> mel frames map given by a frozen random network."""

    def __init__(self, codebook: int = 16, mel_bins: int = 80, seed: int = 0, hidden: int = 32):
        gen = torch.Generator().manual_seed(seed)
        self.codebook = codebook
        self.mel_bins = mel_bins
        self.embedding = torch.randn(codebook, hidden, generator=gen, dtype=torch.float64)
        self.proj = torch.randn(hidden, mel_bins, generator=gen, dtype=torch.float64) / math.sqrt(hidden)

    def mel(self, tokens: torch.Tensor) -> torch.Tensor:
        return torch.tanh(self.embedding[tokens] @ self.proj) * 1.5

    def sample(self, batch: int, frames: int, seed: int) -> tuple[torch.Tensor, torch.Tensor]:
        rng = np.random.default_rng(seed)
        tokens = torch.from_numpy(
            np.stack([unit_sequence(rng, frames, self.codebook, 2, 6) for _ in range(batch)])
        )
        return tokens, self.mel(tokens)


# -- audio ------------------------------------------------------------------


@dataclass
class VoiceUnits:
    """Spectral envelopes (formant triples) for a small phone inventory."""

    formants: np.ndarray  # units x 3, Hz
    bandwidths: np.ndarray  # units x 3, Hz

    @classmethod
    def create(cls, units: int = 10, seed: int = 0) -> "VoiceUnits":
        rng = np.random.default_rng(seed)
        f1 = rng.uniform(300, 900, units)
        f2 = rng.uniform(1000, 2400, units)
        f3 = rng.uniform(2500, 3800, units)
        return cls(np.stack([f1, f2, f3], 1), np.tile([80.0, 120.0, 180.0], (units, 1)))

    def envelope(self, unit: int, freqs: np.ndarray) -> np.ndarray:
        env = np.zeros_like(freqs, dtype=np.float64)
        for f, bw, gain in zip(self.formants[unit], self.bandwidths[unit], (1.0, 0.6, 0.35)):
            env += gain * np.exp(-0.5 * ((freqs - f) / bw) ** 2)
        return env + 0.01


def synthesize(
    units: VoiceUnits,
    labels,
    durations,
    voiced: bool = True,
    f0: float = 140.0,
    sample_rate: int = SAMPLE_RATE,
    seed: int = 0,
    amplitude: float = 0.3,
) -> Waveform:
    """Render a unit sequence; ``durations`` are in seconds.

    Voiced speech sums harmonics of a slowly drifting F0 weighted by the unit
    envelope; unvoiced (whisper-like) speech shapes white noise with the same
    envelope.  Units are joined with 5 ms raised-cosine crossfades.
    """
    rng = np.random.default_rng(seed)
    pieces = []
    phase = 0.0
    fade = int(0.005 * sample_rate)
    for unit, dur in zip(labels, durations):
        n = max(int(round(dur * sample_rate)), 2 * fade + 1)
        if voiced:
            drift = f0 * (1 + 0.05 * np.sin(2 * np.pi * rng.uniform(0.5, 2) * np.arange(n) / sample_rate))
            inst = phase + 2 * np.pi * np.cumsum(drift) / sample_rate
            phase = float(inst[-1])
            seg = np.zeros(n)
            for k in range(1, int((sample_rate / 2 - 200) // f0)):
                seg += units.envelope(unit, np.array([k * f0]))[0] * np.sin(k * inst)
        else:
            spec = np.fft.rfft(rng.normal(size=n))
            spec *= units.envelope(unit, np.fft.rfftfreq(n, 1 / sample_rate)) * 3.0
            seg = np.fft.irfft(spec, n)
        ramp = 0.5 - 0.5 * np.cos(np.linspace(0, np.pi, fade))
        seg[:fade] *= ramp
        seg[-fade:] *= ramp[::-1]
        pieces.append(seg)
    x = np.concatenate(pieces)
    x *= amplitude / max(np.max(np.abs(x)), 1e-12)
    return Waveform(x, sample_rate)


def random_script(rng: np.random.Generator, units: int, count: int, min_dur: float = 0.06, max_dur: float = 0.16):
    labels = rng.integers(units, size=count)
    durations = rng.uniform(min_dur, max_dur, size=count)
    return labels, durations


def pad_silence(w: Waveform, lead: float, trail: float) -> Waveform:
    z0 = np.zeros(int(lead * w.sample_rate))
    z1 = np.zeros(int(trail * w.sample_rate))
    return Waveform(np.concatenate([z0, w.samples, z1]), w.sample_rate)


def write_paired_corpus(directory, pairs: int = 10, speakers: int = 3, seed: int = 0, stretch: float = 1.3, whisper_voiced: bool = False, units: int = 10):
    """Write WAV pairs plus ``manifest.tsv``; returns the manifest path.

    Each normal utterance is voiced; its twin reads the same unit script at
    ``stretch`` times the duration (unvoiced unless ``whisper_voiced``) with
    different leading and trailing silence.
    """
    from pathlib import Path

    from .corpus import UtteranceRecord, write_manifest
    from .dsp import write_wav

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    inventory = VoiceUnits.create(units, seed)
    records = []
    for k in range(pairs):
        rng = np.random.default_rng([seed, k])
        labels, durations = random_script(rng, units, int(rng.integers(6, 10)))
        spk = f"spk{k % speakers}"
        normal = synthesize(inventory, labels, durations, True, f0=110 + 15 * (k % speakers), seed=seed * 1000 + k)
        whisper = synthesize(inventory, labels, durations * stretch, whisper_voiced, f0=110 + 15 * (k % speakers), seed=seed * 1000 + 500 + k)
        write_wav(pad_silence(normal, 0.2, 0.15), directory / f"n{k}.wav")
        write_wav(pad_silence(whisper, 0.3, 0.1), directory / f"w{k}.wav")
        text = " ".join(f"u{u}" for u in labels)
        records.append(UtteranceRecord(f"w{k}", spk, "whisper", "EN", f"w{k}.wav", f"p{k}", "real", text))
        records.append(UtteranceRecord(f"n{k}", spk, "normal", "EN", f"n{k}.wav", f"p{k}", "real", text))
    path = directory / "manifest.tsv"
    write_manifest(records, path)
    return path
