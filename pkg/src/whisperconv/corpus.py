"""Manifests, speaker-disjoint splits, the aligned-corpus builder, pseudo-pair
generation, ablation data modes and corpus statistics."""

from __future__ import annotations

import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import torch
from scipy.ndimage import median_filter

from . import alignment as al
from . import dsp, tensorio
from .features import Frontend, cmvn, denormalize_mel, normalize_mel
from .flow import Direction, FlowModel, euler_sample
from .tokenizer import RoleError, Tokenizer, fsq_quantize, tokenize

log = logging.getLogger(__name__)

MODES = ("whisper", "normal")
LANGUAGES = ("EN", "CN")
PROVENANCES = ("real", "pseudo")
FIELDS = ("id", "speaker", "mode", "language", "audio_path", "pair_id", "provenance", "transcript")
ALIGNED_MANIFEST = "aligned.jsonl"


class ManifestParseError(ValueError):
    pass


class ManifestValidationError(ValueError):
    pass


class InfeasibleSplitError(ValueError):
    pass


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class UtteranceRecord:
    id: str
    speaker: str
    mode: str
    language: str
    audio_path: str
    pair_id: str | None = None
    provenance: str = "real"
    transcript: str = ""

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.language not in LANGUAGES:
            raise ValueError(f"language must be one of {LANGUAGES}, got {self.language!r}")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"provenance must be one of {PROVENANCES}, got {self.provenance!r}")
        if not self.id or "\t" in self.id:
            raise ValueError("record id must be non-empty and tab-free")

    def to_line(self) -> str:
        values = [self.id, self.speaker, self.mode, self.language, self.audio_path, self.pair_id or "", self.provenance, self.transcript]
        return "\t".join(values)

    @classmethod
    def from_line(cls, line: str) -> "UtteranceRecord":
        parts = line.split("\t", len(FIELDS) - 1)
        if len(parts) != len(FIELDS):
            raise ValueError(f"expected {len(FIELDS)} tab-separated fields, got {len(parts)}")
        rec = dict(zip(FIELDS, parts))
        rec["pair_id"] = rec["pair_id"] or None
        return cls(**rec)


# -- manifests ---------------------------------------------------------------


def validate_manifest(records: Sequence[UtteranceRecord]) -> None:
    seen = set()
    for r in records:
        if r.id in seen:
            raise ManifestValidationError(f"duplicate record id {r.id!r}")
        seen.add(r.id)
    groups = defaultdict(list)
    for r in records:
        if r.pair_id:
            groups[r.pair_id].append(r)
    for pid, members in groups.items():
        modes = sorted(m.mode for m in members)
        if modes != ["normal", "whisper"]:
            raise ManifestValidationError(
                f"pair {pid!r} must link one whisper and one normal record, found modes {modes}"
            )


def parse_manifest(text: str, source: str = "<manifest>") -> list[UtteranceRecord]:
    records = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            records.append(UtteranceRecord.from_line(line))
        except ValueError as exc:
            raise ManifestParseError(f"{source}:{lineno}: {exc}") from None
    validate_manifest(records)
    return records


def load_manifest(path) -> list[UtteranceRecord]:
    path = Path(path)
    return parse_manifest(path.read_text(encoding="utf-8"), str(path))


def write_manifest(records: Iterable[UtteranceRecord], path) -> None:
    lines = ["#" + "\t".join(FIELDS)] + [r.to_line() for r in records]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def resolve_audio(record: UtteranceRecord, base_dir) -> Path:
    p = Path(record.audio_path)
    return p if p.is_absolute() else Path(base_dir) / p


def resolve_pairs(records: Sequence[UtteranceRecord]) -> dict[str, tuple[UtteranceRecord, UtteranceRecord]]:
    """pair_id -> (whisper, normal), in first-appearance order."""
    pairs: dict[str, dict[str, UtteranceRecord]] = {}
    for r in records:
        if r.pair_id:
            pairs.setdefault(r.pair_id, {})[r.mode] = r
    out = {}
    for pid, members in pairs.items():
        if set(members) != {"whisper", "normal"}:
            raise ManifestValidationError(f"pair {pid!r} is incomplete")
        out[pid] = (members["whisper"], members["normal"])
    return out


# -- splits ------------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    ratios: tuple[float, float, float] = (91.0, 6.0, 3.0)
    seed: int = 0

    def __post_init__(self):
        if len(self.ratios) != 3 or any(r < 0 for r in self.ratios) or sum(self.ratios) <= 0:
            raise ValueError("split ratios must be three non-negative weights with a positive sum")


def split_speakers(records: Sequence[UtteranceRecord], spec: SplitSpec = SplitSpec()):
    """Speaker-disjoint train/validation/test manifests.

    Speakers are shuffled with the seed and each is assigned to the bucket
    furthest below its utterance-count target (lowest index on ties).
    """
    by_speaker: dict[str, list[UtteranceRecord]] = {}
    for r in records:
        by_speaker.setdefault(r.speaker, []).append(r)
    speakers = sorted(by_speaker)
    if len(speakers) < 3:
        raise InfeasibleSplitError(f"need at least 3 speakers, have {len(speakers)}")
    order = np.random.default_rng(spec.seed).permutation(len(speakers))
    total = len(records)
    weights = np.asarray(spec.ratios, dtype=np.float64)
    targets = weights / weights.sum() * total
    counts = np.zeros(3)
    buckets: list[list[UtteranceRecord]] = [[], [], []]
    for idx in order:
        spk = speakers[idx]
        k = int(np.argmax(targets - counts))
        buckets[k].extend(by_speaker[spk])
        counts[k] += len(by_speaker[spk])
    return tuple(buckets)


# -- aligned corpus ----------------------------------------------------------


@dataclass
class PosteriorgramSource:
    """Posteriorgrams per utterance id plus a character vocabulary (index 0 = blank).

    ``lookup`` returns a Posteriorgram for a record id or ``None`` when absent.
    """

    vocab: list[str]
    lookup: Callable[[str], al.Posteriorgram | None]

    @classmethod
    def from_directory(cls, directory) -> "PosteriorgramSource":
        directory = Path(directory)
        vocab = (directory / "vocab.txt").read_text(encoding="utf-8").splitlines()

        def lookup(utt_id):
            path = directory / f"{utt_id}.post"
            return al.Posteriorgram(tensorio.read_tensor(path)) if path.exists() else None

        return cls(vocab, lookup)

    def encode(self, transcript: str) -> tuple[list[int], list[int]]:
        """Token ids and per-word token counts for a whitespace-separated transcript."""
        index = {tok: i for i, tok in enumerate(self.vocab)}
        tokens, lengths = [], []
        for word in transcript.split():
            ids = [index[ch] for ch in word if ch in index]
            if len(ids) != len(word):
                missing = sorted(set(ch for ch in word if ch not in index))
                raise ValueError(f"characters {missing} not in vocabulary")
            tokens += ids
            lengths.append(len(ids))
        return tokens, lengths


@dataclass
class AlignConfig:
    frontend: Frontend = field(default_factory=Frontend)
    radius: int = 5
    distance: str = "euclidean"
    invert: bool = False
    vocoder_iterations: int = 32


@dataclass
class AlignResult:
    entries: list[dict]
    processed: int = 0
    skipped: int = 0
    failures: dict[str, str] = field(default_factory=dict)


def _word_segments(source: PosteriorgramSource | None, record: UtteranceRecord):
    if source is None:
        return None
    post = source.lookup(record.id)
    if post is None:
        return None
    tokens, lengths = source.encode(record.transcript)
    if not tokens:
        return []
    segs = al.merge_words(al.ctc_forced_align(post, tokens), lengths)
    return [[s.start_frame, s.end_frame] for s in segs]


def align_one(whisper: UtteranceRecord, normal: UtteranceRecord, base_dir, cfg: AlignConfig, posteriorgrams=None):
    """Align one pair; returns (aligned whisper mel, normal mel, mapping, path, metadata)."""
    fe = cfg.frontend
    meta = {}
    w_wave = fe.condition(dsp.load_wav(resolve_audio(whisper, base_dir)))
    n_wave = fe.condition(dsp.load_wav(resolve_audio(normal, base_dir)))
    if posteriorgrams is not None:
        meta["whisper_words"] = _word_segments(posteriorgrams, whisper)
        meta["normal_words"] = _word_segments(posteriorgrams, normal)
    w_mel = fe.mel(fe.trim(w_wave))
    n_mel = fe.mel(fe.trim(n_wave))
    aligned, mapping, path = al.align_pair(w_mel, n_mel, cfg.radius, cfg.distance)
    return aligned, n_mel, mapping, path, meta


def build_aligned_corpus(
    records: Sequence[UtteranceRecord],
    out_dir,
    base_dir=".",
    cfg: AlignConfig = AlignConfig(),
    posteriorgrams: PosteriorgramSource | None = None,
    force: bool = False,
) -> AlignResult:
    """Run the pair alignment pipeline and persist its outputs.

    Per pair: resample, normalize, trim silence, mel analysis, optional forced
    alignment metadata, FastDTW, frame mapping, and the whisper mel warped onto
    the normal time axis.  Pairs whose outputs exist are skipped unless
    ``force``; failures are recorded per pair without stopping the run.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    previous = {}
    manifest_path = out_dir / ALIGNED_MANIFEST
    if manifest_path.exists():
        previous = {e["pair_id"]: e for e in read_aligned_manifest(out_dir)}
    pairs = resolve_pairs(records)
    result = AlignResult(entries=[])
    for pid in sorted(pairs):
        whisper, normal = pairs[pid]
        files = aligned_files(out_dir, pid)
        if not force and pid in previous and all(p.exists() for p in files.values()):
            result.entries.append(previous[pid])
            result.skipped += 1
            continue
        try:
            aligned, n_mel, mapping, path, meta = align_one(whisper, normal, base_dir, cfg, posteriorgrams)
        except Exception as exc:  # per-pair isolation: any stage failure is recorded
            result.failures[pid] = f"{type(exc).__name__}: {exc}"
            log.warning("pair %s failed: %s", pid, exc)
            continue
        tensorio.write_tensor(files["whisper"], aligned.values)
        tensorio.write_tensor(files["normal"], n_mel.values)
        tensorio.write_tensor(files["mapping"], mapping.target_to_source)
        if cfg.invert:
            wav = cfg.frontend.vocode(aligned, cfg.vocoder_iterations)
            dsp.write_wav(wav, out_dir / f"{pid}.whisper.aligned.wav")
        entry = {
            "pair_id": pid,
            "whisper_id": whisper.id,
            "normal_id": normal.id,
            "speaker": normal.speaker,
            "language": normal.language,
            "provenance": normal.provenance,
            "frames": int(n_mel.frames),
            "path_length": len(path),
            "cost": round(float(path.cost), 6),
            "mapping": mapping.target_to_source.tolist(),
        }
        entry.update(meta)
        result.entries.append(entry)
        result.processed += 1
    write_aligned_manifest(out_dir, result.entries)
    return result


def aligned_files(out_dir, pair_id: str) -> dict[str, Path]:
    out_dir = Path(out_dir)
    return {
        "whisper": out_dir / f"{pair_id}.whisper.mel",
        "normal": out_dir / f"{pair_id}.normal.mel",
        "mapping": out_dir / f"{pair_id}.mapping",
    }


def write_aligned_manifest(out_dir, entries: Sequence[dict]) -> None:
    lines = [json.dumps(e, sort_keys=True) for e in sorted(entries, key=lambda e: e["pair_id"])]
    (Path(out_dir) / ALIGNED_MANIFEST).write_text("".join(line + "\n" for line in lines))


def read_aligned_manifest(out_dir) -> list[dict]:
    text = (Path(out_dir) / ALIGNED_MANIFEST).read_text()
    return [json.loads(line) for line in text.splitlines() if line.strip()]


@dataclass
class FeaturePair:
    """Frame-matched (whisper, normal) log-mel pair used for tokenizer training."""

    pair_id: str
    whisper: np.ndarray
    normal: np.ndarray
    provenance: str = "real"
    source: str = "aligned"


def load_feature_pairs(out_dir) -> list[FeaturePair]:
    pairs = []
    for e in read_aligned_manifest(out_dir):
        files = aligned_files(out_dir, e["pair_id"])
        pairs.append(
            FeaturePair(
                e["pair_id"],
                tensorio.read_tensor(files["whisper"]).astype(np.float64),
                tensorio.read_tensor(files["normal"]).astype(np.float64),
                e.get("provenance", "real"),
                e.get("source", "aligned"),
            )
        )
    return pairs


def write_feature_pairs(pairs: Sequence[FeaturePair], out_dir) -> None:
    """Persist pairs in the aligned-corpus layout (mapping is the identity)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for p in pairs:
        if p.whisper.shape != p.normal.shape:
            raise ValueError(f"pair {p.pair_id} is not frame-matched")
        files = aligned_files(out_dir, p.pair_id)
        tensorio.write_tensor(files["whisper"], p.whisper)
        tensorio.write_tensor(files["normal"], p.normal)
        tensorio.write_tensor(files["mapping"], np.arange(len(p.normal)))
        entries.append({"pair_id": p.pair_id, "frames": len(p.normal), "provenance": p.provenance, "source": p.source})
    write_aligned_manifest(out_dir, entries)


# -- pseudo pairs ------------------------------------------------------------


def select_prompts(records: Sequence[UtteranceRecord], base_dir) -> dict[str, UtteranceRecord]:
    """Longest normal-mode clip per speaker (ties broken by id)."""
    best: dict[str, tuple[float, str, UtteranceRecord]] = {}
    for r in records:
        if r.mode != "normal":
            continue
        try:
            dur = dsp.wav_duration(resolve_audio(r, base_dir))
        except (OSError, dsp.AudioFormatError):
            continue
        cur = best.get(r.speaker)
        if cur is None or dur > cur[0] or (dur == cur[0] and r.id < cur[1]):
            best[r.speaker] = (dur, r.id, r)
    return {spk: v[2] for spk, v in best.items()}


@dataclass
class PseudoConfig:
    frontend: Frontend = field(default_factory=Frontend)
    sampler_steps: int = 10
    max_prompt_frames: int = 100
    vocoder_iterations: int = 32


def _features_tensor(mel_values: np.ndarray, dtype) -> torch.Tensor:
    return torch.as_tensor(cmvn(mel_values), dtype=dtype)


def gen_pseudo_pair(
    normal: UtteranceRecord,
    n2w: Tokenizer,
    distilled: Tokenizer,
    flow: FlowModel,
    prompt: UtteranceRecord,
    base_dir,
    out_dir,
    seed: int = 0,
    cfg: PseudoConfig = PseudoConfig(),
) -> tuple[dsp.Waveform, list[UtteranceRecord], dict]:
    """Synthesize a whispered twin of a real normal utterance.

    The n2w tokenizer maps the normal features into whisper token space; the
    flow model renders those tokens as whisper-mode mel frames continuing a
    timbre prompt, and Griffin-Lim inverts the result.  Returns the waveform,
    the two emitted records and token-level diagnostics.
    """
    if n2w.model.role != "n2w":
        raise RoleError(f"pseudo generation needs an 'n2w' tokenizer, got {n2w.model.role!r}")
    if distilled.model.role != "distilled":
        raise RoleError("prompt tokens need the frozen 'distilled' tokenizer")
    if getattr(flow, "role", None) != "flow":
        raise RoleError("pseudo generation needs a flow model")
    if normal.mode != "normal":
        raise ValueError("source record must be normal speech")
    fe = cfg.frontend
    dtype = next(flow.parameters()).dtype
    src_mel = fe.mel(fe.load(resolve_audio(normal, base_dir)))
    prompt_mel = fe.mel(fe.load(resolve_audio(prompt, base_dir), trim=True)).values[: cfg.max_prompt_frames]

    with torch.no_grad():
        target_tokens = fsq_quantize(n2w.model(_features_tensor(src_mel.values, dtype)), n2w.fsq).indices
        prompt_tokens = tokenize(distilled, _features_tensor(prompt_mel, dtype)).indices
        tokens = torch.cat([prompt_tokens, target_tokens])
        mel_norm = euler_sample(
            flow,
            tokens,
            Direction.N2W,
            torch.as_tensor(normalize_mel(prompt_mel), dtype=dtype),
            src_mel.frames,
            cfg.sampler_steps,
            seed,
        )
    mel = dsp.MelSpectrogram(denormalize_mel(mel_norm.double().numpy()), fe.stft.hop_length, fe.sample_rate)
    wave = fe.vocode(mel, cfg.vocoder_iterations, seed)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pair_id = f"pseudo-{normal.id}"
    wav_path = out_dir / f"{pair_id}.whisper.wav"
    dsp.write_wav(wave, wav_path)
    records = [
        UtteranceRecord(f"{pair_id}-w", normal.speaker, "whisper", normal.language, str(wav_path.resolve()), pair_id, "pseudo", normal.transcript),
        UtteranceRecord(f"{pair_id}-n", normal.speaker, "normal", normal.language, str(resolve_audio(normal, base_dir).resolve()), pair_id, "pseudo", normal.transcript),
    ]
    info = {"pair_id": pair_id, "token_frames": int(target_tokens.shape[0]), "source_frames": int(src_mel.frames)}
    return wave, records, info


# -- ablation modes ------------------------------------------------------------


def dsp_whisperize(w: dsp.Waveform, cfg: dsp.StftConfig = dsp.StftConfig(), kernel: int = 15, seed: int = 0) -> dsp.Waveform:
    """Signal-processing whisper stand-in.

    Harmonic peaks are flattened by median-filtering each frame's magnitude
    across frequency, and the excitation is replaced by noise through random
    phase.  The spectral envelope survives; periodicity does not.
    """
    spec = dsp.stft(w.samples, cfg)
    envelope = median_filter(np.abs(spec), size=(1, kernel), mode="nearest")
    phase = np.exp(2j * np.pi * np.random.default_rng(seed).random(spec.shape))
    x = dsp.istft(envelope * phase, cfg)
    out = np.zeros(len(w))
    out[: len(x)] = x
    peak = np.max(np.abs(w.samples))
    if np.any(out):
        out *= peak / np.max(np.abs(out))
    return dsp.Waveform(out, w.sample_rate)


def pad_pair(a: np.ndarray, b: np.ndarray, fill: float = math.log(dsp.EPS)) -> tuple[np.ndarray, np.ndarray]:
    """Pad the shorter mel with silence frames so both have equal length."""
    n = max(len(a), len(b))

    def pad(x):
        if len(x) == n:
            return x
        return np.vstack([x, np.full((n - len(x), x.shape[1]), fill)])

    return pad(a), pad(b)


ABLATION_MODES = ("RAW", "DSP", "ALIGNED", "PSEUDO", "A_PLUS_P")


@dataclass
class AblationInputs:
    real_records: Sequence[UtteranceRecord] = ()
    base_dir: str = "."
    aligned_dir: str | None = None
    pseudo_records: Sequence[UtteranceRecord] = ()
    frontend: Frontend = field(default_factory=Frontend)
    seed: int = 0


def make_ablation_config(mode: str, inputs: AblationInputs) -> list[FeaturePair]:
    """Training pairs for one data-construction strategy.

    RAW pads unaligned real pairs; DSP pairs real normal speech with its
    signal-processing whisper; ALIGNED reads an aligned corpus; PSEUDO uses
    generated pairs; A_PLUS_P concatenates ALIGNED then PSEUDO.
    """
    mode = mode.upper()
    if mode not in ABLATION_MODES:
        raise ConfigurationError(f"unknown ablation mode {mode!r}; expected one of {ABLATION_MODES}")
    fe = inputs.frontend
    if mode == "RAW":
        pairs = resolve_pairs(inputs.real_records)
        if not pairs:
            raise ConfigurationError("RAW mode needs real paired records")
        out = []
        for pid in sorted(pairs):
            w, n = pairs[pid]
            wm = fe.mel(fe.load(resolve_audio(w, inputs.base_dir))).values
            nm = fe.mel(fe.load(resolve_audio(n, inputs.base_dir))).values
            wm, nm = pad_pair(wm, nm)
            out.append(FeaturePair(pid, wm, nm, "real", "raw"))
        return out
    if mode == "DSP":
        normals = [r for r in inputs.real_records if r.mode == "normal"]
        if not normals:
            raise ConfigurationError("DSP mode needs normal-speech records")
        out = []
        for r in sorted(normals, key=lambda r: r.id):
            wave = fe.load(resolve_audio(r, inputs.base_dir))
            whisper = dsp_whisperize(wave, fe.stft, seed=inputs.seed)
            out.append(FeaturePair(f"dsp-{r.id}", fe.mel(whisper).values, fe.mel(wave).values, "real", "dsp"))
        return out
    if mode == "ALIGNED":
        if not inputs.aligned_dir or not (Path(inputs.aligned_dir) / ALIGNED_MANIFEST).exists():
            raise ConfigurationError("ALIGNED mode needs an aligned corpus directory")
        return load_feature_pairs(inputs.aligned_dir)
    if mode == "PSEUDO":
        pairs = resolve_pairs(inputs.pseudo_records)
        if not pairs:
            raise ConfigurationError("PSEUDO mode needs generated pseudo pairs")
        out = []
        for pid in sorted(pairs):
            w, n = pairs[pid]
            wm = fe.mel(fe.load(resolve_audio(w, inputs.base_dir))).values
            nm = fe.mel(fe.load(resolve_audio(n, inputs.base_dir))).values
            frames = min(len(wm), len(nm))
            out.append(FeaturePair(pid, wm[:frames], nm[:frames], "pseudo", "pseudo"))
        return out
    aligned = make_ablation_config("ALIGNED", inputs)
    pseudo = make_ablation_config("PSEUDO", inputs)
    seen = set()
    out = []
    for p in aligned + pseudo:
        if p.pair_id not in seen:
            seen.add(p.pair_id)
            out.append(p)
    return out


# -- statistics --------------------------------------------------------------


@dataclass
class GroupStats:
    hours: float = 0.0
    pairs: int = 0
    speakers: int = 0

    def __add__(self, other: "GroupStats") -> "GroupStats":
        return GroupStats(self.hours + other.hours, self.pairs + other.pairs, self.speakers + other.speakers)


@dataclass
class CorpusStats:
    groups: dict[tuple[str, str], GroupStats] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def __add__(self, other: "CorpusStats") -> "CorpusStats":
        keys = sorted(set(self.groups) | set(other.groups))
        return CorpusStats(
            {k: self.groups.get(k, GroupStats()) + other.groups.get(k, GroupStats()) for k in keys},
            self.warnings + other.warnings,
        )

    def total(self) -> GroupStats:
        out = GroupStats()
        for g in self.groups.values():
            out = out + g
        return out


def corpus_stats(records: Sequence[UtteranceRecord], base_dir=".", durations: dict[str, float] | None = None) -> CorpusStats:
    """Duration, pair and speaker counts per (language, provenance).

    Durations come from WAV headers unless supplied; unreadable audio is
    reported as a warning and contributes no duration.
    """
    stats = CorpusStats()
    hours = defaultdict(float)
    speakers = defaultdict(set)
    pair_members = defaultdict(set)
    for r in records:
        key = (r.language, r.provenance)
        speakers[key].add(r.speaker)
        if r.pair_id:
            pair_members[key].add((r.pair_id, r.mode))
        if durations is not None and r.id in durations:
            hours[key] += durations[r.id] / 3600.0
            continue
        try:
            hours[key] += dsp.wav_duration(resolve_audio(r, base_dir)) / 3600.0
        except (OSError, dsp.AudioFormatError) as exc:
            stats.warnings.append(f"{r.id}: {exc}")
            hours[key] += 0.0
    for key in sorted(speakers):
        members = pair_members[key]
        complete = {pid for pid, mode in members if (pid, "whisper") in members and (pid, "normal") in members}
        stats.groups[key] = GroupStats(hours[key], len(complete), len(speakers[key]))
    return stats


def _count(n: int) -> str:
    if n >= 1000:
        return f"{n / 1000:.0f}k"
    return str(n)


def format_stats(stats: CorpusStats) -> str:
    lines = ["Lang\tProvenance\tTime(h)\tPairs\tSpk"]
    for (lang, prov), g in sorted(stats.groups.items()):
        lines.append(f"{lang}\t{prov}\t{g.hours:.0f}\t{_count(g.pairs)}\t{g.speakers}")
    return "\n".join(lines)


def stats_row(stats: CorpusStats, language: str, provenance: str) -> str:
    g = stats.groups[(language, provenance)]
    return f"{language} {g.hours:.0f} {_count(g.pairs)} {g.speakers}"
