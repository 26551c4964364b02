"""Signal-processing frontend: WAV I/O, resampling, mel analysis, Griffin-Lim,
silence trimming and autocorrelation F0 tracking.

Everything here is a pure function of its inputs.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass, field
from math import gcd

import numpy as np
from scipy import signal
from scipy.linalg import solve_toeplitz
from scipy.optimize import nnls

SAMPLE_RATE = 16000
EPS = 1e-10


class AudioFormatError(ValueError):
    """Malformed or unreadable WAV container."""


class UnsupportedFormatError(AudioFormatError):
    """Well-formed WAV that is not 16-bit PCM mono."""


class DegenerateInputError(ValueError):
    pass


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int
    channel_count: int = field(default=1, init=False)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("waveform samples must be one-dimensional")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        self.sample_rate = int(self.sample_rate)
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class StftConfig:
    window_length: int = 400
    hop_length: int = 160
    fft_size: int = 1024
    window_kind: str = "hann"

    def __post_init__(self):
        if min(self.window_length, self.hop_length, self.fft_size) <= 0:
            raise ValueError("STFT sizes must be positive")
        if not self.hop_length <= self.window_length <= self.fft_size:
            raise ValueError("require hop_length <= window_length <= fft_size")

    def window(self) -> np.ndarray:
        return signal.get_window(self.window_kind, self.window_length, fftbins=True)

    @property
    def bins(self) -> int:
        return self.fft_size // 2 + 1


@dataclass
class MelSpectrogram:
    values: np.ndarray
    hop_length: int = 160
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("mel values must be a frames x bins matrix")

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def bins(self) -> int:
        return self.values.shape[1]


@dataclass
class F0Track:
    f0: np.ndarray
    hop_length: int

    @property
    def frames(self) -> int:
        return len(self.f0)

    @property
    def voiced(self) -> np.ndarray:
        return self.f0 > 0


# -- WAV I/O ---------------------------------------------------------------


def load_wav(path) -> Waveform:
    try:
        with wave.open(str(path), "rb") as fh:
            channels = fh.getnchannels()
            width = fh.getsampwidth()
            rate = fh.getframerate()
            payload = fh.readframes(fh.getnframes())
    except (wave.Error, EOFError) as exc:
        raise AudioFormatError(f"{path}: {exc}") from exc
    if channels != 1:
        raise UnsupportedFormatError(f"{path}: {channels} channels, only mono is supported")
    if width != 2:
        raise UnsupportedFormatError(f"{path}: {8 * width}-bit samples, only 16-bit PCM is supported")
    pcm = np.frombuffer(payload, dtype="<i2")
    return Waveform(pcm.astype(np.float64) / 32768.0, rate)


def to_pcm16(samples: np.ndarray) -> np.ndarray:
    scaled = np.round(np.asarray(samples, dtype=np.float64) * 32768.0)
    return np.clip(scaled, -32768, 32767).astype("<i2")


def write_wav(w: Waveform, path) -> None:
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(w.sample_rate)
        fh.writeframes(to_pcm16(w.samples).tobytes())


def wav_duration(path) -> float:
    """Duration in seconds read from the header only."""
    try:
        with wave.open(str(path), "rb") as fh:
            return fh.getnframes() / fh.getframerate()
    except (wave.Error, EOFError) as exc:
        raise AudioFormatError(f"{path}: {exc}") from exc


# -- waveform conditioning -------------------------------------------------


def resample(w: Waveform, target_rate: int) -> Waveform:
    """Polyphase windowed-sinc resampling (Kaiser-windowed FIR)."""
    if target_rate is None or int(target_rate) <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    target_rate = int(target_rate)
    if target_rate == w.sample_rate:
        return Waveform(w.samples.copy(), w.sample_rate)
    g = gcd(target_rate, w.sample_rate)
    up, down = target_rate // g, w.sample_rate // g
    out = signal.resample_poly(w.samples, up, down, window=("kaiser", 5.0))
    return Waveform(out, target_rate)


def peak_normalize(w: Waveform, target_peak: float = 0.95) -> Waveform:
    peak = np.max(np.abs(w.samples)) if len(w.samples) else 0.0
    if peak == 0:
        raise DegenerateInputError("cannot normalize a silent waveform")
    if peak == target_peak:
        return Waveform(w.samples.copy(), w.sample_rate)
    return Waveform(w.samples * (target_peak / peak), w.sample_rate)


# -- spectral analysis -----------------------------------------------------


def frame_count(length: int, window_length: int, hop_length: int) -> int:
    if length < window_length:
        return 0
    return 1 + (length - window_length) // hop_length


def stft(samples: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """One-sided STFT without centering, frames x (fft_size // 2 + 1)."""
    samples = np.asarray(samples, dtype=np.float64)
    n = frame_count(len(samples), cfg.window_length, cfg.hop_length)
    if n == 0:
        raise DegenerateInputError(
            f"input of {len(samples)} samples is shorter than the {cfg.window_length}-sample window"
        )
    frames = np.lib.stride_tricks.sliding_window_view(samples, cfg.window_length)[:: cfg.hop_length][:n]
    return np.fft.rfft(frames * cfg.window(), n=cfg.fft_size, axis=1)


def istft(spec: np.ndarray, cfg: StftConfig, floor: float = 1e-3) -> np.ndarray:
    """Least-squares inverse of :func:`stft` (window-weighted overlap-add).

    The squared-window normalizer is floored at ``floor`` times its maximum so
    the first and last few samples, where the taper vanishes, stay bounded.
    """
    n = spec.shape[0]
    win = cfg.window()
    length = (n - 1) * cfg.hop_length + cfg.window_length
    frames = np.fft.irfft(spec, n=cfg.fft_size, axis=1)[:, : cfg.window_length] * win
    out = np.zeros(length)
    norm = np.zeros(length)
    for t in range(n):
        s = t * cfg.hop_length
        out[s : s + cfg.window_length] += frames[t]
        norm[s : s + cfg.window_length] += win**2
    return out / np.maximum(norm, floor * norm.max())


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_frequencies(mel_bins: int, sample_rate: int = SAMPLE_RATE, fmin: float = 0.0, fmax=None) -> np.ndarray:
    fmax = sample_rate / 2 if fmax is None else fmax
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), mel_bins + 2))
    return edges[1:-1]


def mel_filterbank(mel_bins: int, fft_size: int, sample_rate: int = SAMPLE_RATE, fmin: float = 0.0, fmax=None) -> np.ndarray:
    """Triangular HTK-scale filters with unit peak, shape mel_bins x fft_bins."""
    fmax = sample_rate / 2 if fmax is None else fmax
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), mel_bins + 2))
    freqs = np.fft.rfftfreq(fft_size, 1.0 / sample_rate)
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lower) / (center - lower)
    falling = (upper - freqs[None, :]) / (upper - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def power_spectrogram(w: Waveform, cfg: StftConfig) -> np.ndarray:
    return np.abs(stft(w.samples, cfg)) ** 2


def mel_spectrogram(w: Waveform, cfg: StftConfig = StftConfig(), mel_bins: int = 80, eps: float = EPS) -> MelSpectrogram:
    power = power_spectrogram(w, cfg)
    fb = mel_filterbank(mel_bins, cfg.fft_size, w.sample_rate)
    return MelSpectrogram(np.log(power @ fb.T + eps), cfg.hop_length, w.sample_rate)


def mel_to_linear(mel: MelSpectrogram, cfg: StftConfig = StftConfig(), eps: float = EPS) -> np.ndarray:
    """Magnitude spectrogram recovered from log-mel by per-frame non-negative least squares."""
    fb = mel_filterbank(mel.bins, cfg.fft_size, mel.sample_rate)
    power_mel = np.maximum(np.exp(mel.values) - eps, 0.0)
    out = np.zeros((mel.frames, cfg.bins))
    for t in range(mel.frames):
        if power_mel[t].max() <= 0:
            continue
        out[t], _ = nnls(fb, power_mel[t])
    return np.sqrt(out)


def spectral_convergence(samples: np.ndarray, mag: np.ndarray, cfg: StftConfig) -> float:
    denom = np.linalg.norm(mag)
    if denom == 0:
        return 0.0
    est = np.abs(stft(samples, cfg))
    return float(np.linalg.norm(est - mag) / denom)


def griffin_lim(
    mag: np.ndarray,
    cfg: StftConfig = StftConfig(),
    iterations: int = 32,
    sample_rate: int = SAMPLE_RATE,
    seed: int = 0,
    momentum: float = 0.99,
    return_errors: bool = False,
):
    """Phase retrieval from an STFT magnitude.

    Fast Griffin-Lim: seeded random initial phase, then alternating
    least-squares inversion and magnitude replacement with ``momentum``
    extrapolation of the projected spectrum (``momentum=0`` is the classic
    algorithm).  With ``return_errors`` the spectral convergence of the
    estimate before each iteration and of the returned waveform is also
    returned (``iterations + 1`` values).
    """
    mag = np.asarray(mag, dtype=np.float64)
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if mag.ndim != 2 or mag.shape[1] != cfg.bins:
        raise ValueError(f"magnitude must be frames x {cfg.bins}")
    if np.any(mag < 0):
        raise ValueError("magnitudes must be non-negative")
    length = (mag.shape[0] - 1) * cfg.hop_length + cfg.window_length
    if not np.any(mag):
        out = Waveform(np.zeros(length), sample_rate)
        return (out, [0.0] * (iterations + 1)) if return_errors else out
    total = np.linalg.norm(mag)
    rng = np.random.default_rng(seed)
    proj_prev = mag * np.exp(2j * np.pi * rng.random(mag.shape))
    x = istft(proj_prev, cfg)
    errors = []
    for _ in range(iterations):
        spec = stft(x, cfg)
        if return_errors:
            errors.append(float(np.linalg.norm(np.abs(spec) - mag) / total))
        proj = mag * np.exp(1j * np.angle(spec))
        x = istft(proj + momentum * (proj - proj_prev), cfg)
        proj_prev = proj
    if return_errors:
        errors.append(spectral_convergence(x, mag, cfg))
    out = Waveform(x, sample_rate)
    return (out, errors) if return_errors else out


# -- silence trimming ------------------------------------------------------


def _runs(mask: np.ndarray):
    """Yield (start, stop) of maximal runs of True."""
    if not len(mask):
        return
    padded = np.concatenate([[False], mask, [False]])
    diff = np.diff(padded.astype(np.int8))
    starts = np.flatnonzero(diff == 1)
    stops = np.flatnonzero(diff == -1)
    yield from zip(starts.tolist(), stops.tolist())


def trim_silence(
    w: Waveform,
    threshold_db: float = -40.0,
    min_silence: float = 0.1,
    internal: bool = True,
    frame_seconds: float = 0.01,
):
    """Drop low-energy regions using a frame RMS gate.

    Leading and trailing silence is always removed; internal silent runs of at
    least ``min_silence`` seconds are removed when ``internal`` is set.
    Returns the trimmed waveform and the kept ``(start, stop)`` sample ranges
    of the original.
    """
    if threshold_db >= 0:
        raise ValueError("threshold_db must be negative")
    x = w.samples
    frame = max(1, int(round(frame_seconds * w.sample_rate)))
    n = int(np.ceil(len(x) / frame))
    if n == 0:
        return Waveform(np.zeros(0), w.sample_rate), []
    padded = np.zeros(n * frame)
    padded[: len(x)] = x
    rms = np.sqrt(np.mean(padded.reshape(n, frame) ** 2, axis=1))
    # the final partial frame is judged on its real samples only
    tail = len(x) - (n - 1) * frame
    rms[-1] = np.sqrt(np.mean(x[(n - 1) * frame :] ** 2)) if tail else 0.0
    loud = rms > 10.0 ** (threshold_db / 20.0)
    if not loud.any():
        return Waveform(np.zeros(0), w.sample_rate), []
    first, last = np.flatnonzero(loud)[[0, -1]]
    keep = np.zeros(n, dtype=bool)
    keep[first : last + 1] = True
    if internal:
        min_frames = max(1, int(round(min_silence / frame_seconds)))
        for start, stop in _runs(~loud[first : last + 1]):
            if stop - start >= min_frames:
                keep[first + start : first + stop] = False
    intervals = [(s * frame, min(e * frame, len(x))) for s, e in _runs(keep)]
    out = np.concatenate([x[s:e] for s, e in intervals])
    return Waveform(out, w.sample_rate), intervals


# -- F0 --------------------------------------------------------------------


def _lpc_residual(frame: np.ndarray, order: int) -> tuple[np.ndarray, float]:
    """Inverse-filtered frame and prediction gain in dB.

    Coefficients come from the Hamming-windowed frame; the filter is applied to
    the raw frame and its first ``order`` output samples are dropped.
    """
    tapered = frame * np.hamming(len(frame))
    r = np.correlate(tapered, tapered, "full")[len(frame) - 1 : len(frame) + order].copy()
    r[0] *= 1 + 1e-9
    coeffs = solve_toeplitz(r[:order], r[1 : order + 1])
    residual = signal.lfilter(np.concatenate([[1.0], -coeffs]), [1.0], frame)[order:]
    body = frame[order:]
    gain = 10 * np.log10((body @ body) / max(residual @ residual, 1e-300))
    return residual, gain


def _normalized_autocorr(frame: np.ndarray, lags: np.ndarray, span: int) -> np.ndarray:
    head = frame[:span]
    e0 = head @ head
    shifted = np.lib.stride_tricks.sliding_window_view(frame, span)[lags]
    energy = np.einsum("ij,ij->i", shifted, shifted)
    return (shifted @ head) / np.sqrt(max(e0, 1e-300) * np.maximum(energy, 1e-300))


def extract_f0(
    w: Waveform,
    f0_min: float = 60.0,
    f0_max: float = 400.0,
    hop: int = 160,
    voicing_threshold: float = 0.3,
    frame_length: int | None = None,
    lpc_order: int = 12,
    tonal_gain_db: float = 30.0,
) -> F0Track:
    """Per-frame F0 from the normalized autocorrelation peak in the search band.

    The period is the smallest lag whose correlation reaches 90% of the band
    maximum (guards against octave-down errors), refined by parabolic
    interpolation.  A frame is voiced when its correlation peak reaches
    ``voicing_threshold`` both on the signal and on its LPC residual; the
    residual check keeps formant-shaped noise (whisper) from passing as
    periodic.  Frames predictable beyond ``tonal_gain_db`` are pure tones and
    skip the residual check.  Unvoiced frames are reported as 0.
    """
    if not 0 < f0_min < f0_max:
        raise ValueError(f"invalid F0 band [{f0_min}, {f0_max}]")
    if f0_max >= w.sample_rate / 2:
        raise ValueError("f0_max must be below the Nyquist frequency")
    sr = w.sample_rate
    lag_min = max(1, int(np.floor(sr / f0_max)))
    lag_max = int(np.ceil(sr / f0_min))
    if frame_length is None:
        frame_length = 2 * lag_max + 2
    x = w.samples
    n = frame_count(len(x), frame_length, hop)
    f0 = np.zeros(n)
    if n == 0:
        return F0Track(f0, hop)
    frames = np.lib.stride_tricks.sliding_window_view(x, frame_length)[::hop][:n]
    span = frame_length - lag_max
    lags = np.arange(lag_min, lag_max + 1)
    for t in range(n):
        fr = frames[t] - frames[t].mean()
        if fr[:span] @ fr[:span] <= 1e-12:
            continue
        r = _normalized_autocorr(fr, lags, span)
        best = r.max()
        if best < voicing_threshold:
            continue
        residual, gain = _lpc_residual(fr, lpc_order)
        if gain < tonal_gain_db and _normalized_autocorr(residual, lags, span - lpc_order).max() < voicing_threshold:
            continue
        k = int(np.argmax(r))
        for i in range(len(r)):
            left = r[i - 1] if i > 0 else -np.inf
            right = r[i + 1] if i + 1 < len(r) else -np.inf
            if r[i] >= 0.9 * best and r[i] >= left and r[i] >= right:
                k = i
                break
        lag = float(lags[k])
        if 0 < k < len(r) - 1:
            a, b, c = r[k - 1], r[k], r[k + 1]
            denom = a - 2 * b + c
            if denom < 0:
                lag += 0.5 * (a - c) / denom
        f0[t] = sr / lag
    return F0Track(f0, hop)


def sine(freq: float, seconds: float, sample_rate: int = SAMPLE_RATE, amplitude: float = 0.5, phase: float = 0.0) -> Waveform:
    t = np.arange(int(round(seconds * sample_rate))) / sample_rate
    return Waveform(amplitude * np.sin(2 * np.pi * freq * t + phase), sample_rate)
