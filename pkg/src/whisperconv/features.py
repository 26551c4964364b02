"""Waveform-to-feature frontend shared by the corpus tools and training stages."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dsp
from .dsp import MelSpectrogram, StftConfig, Waveform

# fixed affine map bringing log-mel values to roughly unit scale for the flow model
MEL_OFFSET = -2.0
MEL_SCALE = 4.0


@dataclass(frozen=True)
class Frontend:
    sample_rate: int = dsp.SAMPLE_RATE
    peak: float = 0.95
    stft: StftConfig = field(default_factory=StftConfig)
    mel_bins: int = 80
    trim_db: float = -40.0
    min_silence: float = 0.1

    def condition(self, w: Waveform) -> Waveform:
        """Resample to the analysis rate and peak-normalize."""
        w = dsp.resample(w, self.sample_rate)
        return dsp.peak_normalize(w, self.peak)

    def trim(self, w: Waveform) -> Waveform:
        out, _ = dsp.trim_silence(w, self.trim_db, self.min_silence)
        if len(out) < self.stft.window_length:
            raise dsp.DegenerateInputError("nothing left after silence trimming")
        return out

    def mel(self, w: Waveform) -> MelSpectrogram:
        return dsp.mel_spectrogram(w, self.stft, self.mel_bins)

    def load(self, path, trim: bool = False) -> Waveform:
        w = self.condition(dsp.load_wav(path))
        return self.trim(w) if trim else w

    def vocode(self, mel: MelSpectrogram, iterations: int = 32, seed: int = 0) -> Waveform:
        mag = dsp.mel_to_linear(mel, self.stft)
        w = dsp.griffin_lim(mag, self.stft, iterations, mel.sample_rate, seed=seed)
        if np.any(w.samples):
            w = dsp.peak_normalize(w, self.peak)
        return w


def cmvn(values: np.ndarray) -> np.ndarray:
    """Per-utterance mean and variance normalization over frames."""
    values = np.asarray(values, dtype=np.float64)
    return (values - values.mean(0)) / (values.std(0) + 1e-5)


def normalize_mel(values: np.ndarray) -> np.ndarray:
    return (np.asarray(values, dtype=np.float64) - MEL_OFFSET) / MEL_SCALE


def denormalize_mel(values: np.ndarray) -> np.ndarray:
    return np.asarray(values, dtype=np.float64) * MEL_SCALE + MEL_OFFSET
