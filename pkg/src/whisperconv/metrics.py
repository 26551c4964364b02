"""Objective evaluation: edit-distance error rates, F0 correlation, embedding
similarity and report aggregation."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import dsp, tensorio
from .features import Frontend

MIN_COVOICED = 10
SIM_LABEL = "proxy-SIM"


class UndefinedMetricError(ValueError):
    pass


@dataclass(frozen=True)
class EditCounts:
    substitutions: int
    insertions: int
    deletions: int

    @property
    def total(self) -> int:
        return self.substitutions + self.insertions + self.deletions


def edit_distance(hyp: Sequence, ref: Sequence) -> EditCounts:
    """Minimal unit-cost edits turning ``ref`` into ``hyp``.

    The backtrace prefers a substitution (or match), then a deletion, then an
    insertion whenever several moves are optimal.
    """
    n, m = len(ref), len(hyp)
    d = [list(range(m + 1))]
    for i in range(1, n + 1):
        prev, row = d[-1], [i]
        r = ref[i - 1]
        for j in range(1, m + 1):
            row.append(min(prev[j - 1] + (r != hyp[j - 1]), prev[j] + 1, row[j - 1] + 1))
        d.append(row)
    s = ins = dele = 0
    i, j = n, m
    while i or j:
        if i and j and d[i][j] == d[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            s += ref[i - 1] != hyp[j - 1]
            i, j = i - 1, j - 1
        elif i and d[i][j] == d[i - 1][j] + 1:
            dele += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return EditCounts(int(s), ins, dele)


def units(text: str, unit: str) -> list[str]:
    if unit == "word":
        return text.split()
    if unit == "character":
        return [ch for ch in text if not ch.isspace()]
    raise ValueError(f"unit must be 'word' or 'character', got {unit!r}")


def error_rate(hyp: str, ref: str, unit: str = "word") -> float:
    """(S + I + D) / len(ref); WER for words, CER for characters."""
    r = units(ref, unit)
    if not r:
        raise UndefinedMetricError("reference is empty")
    return edit_distance(units(hyp, unit), r).total / len(r)


def _resample_track(values: np.ndarray, length: int) -> np.ndarray:
    if len(values) == length:
        return values
    src = np.linspace(0.0, 1.0, len(values))
    return np.interp(np.linspace(0.0, 1.0, length), src, values)


def f0_corr(converted: dsp.F0Track, target: dsp.F0Track) -> float | None:
    """Pearson r over frames voiced in both tracks; ``None`` when undefined.

    The shorter track is linearly resampled to the longer one's length.
    Voicing of a resampled frame requires both neighbouring source frames to
    be voiced, so unvoiced zeros never leak into the interpolated values.
    """
    a = np.asarray(converted.f0, dtype=np.float64)
    b = np.asarray(target.f0, dtype=np.float64)
    if not len(a) or not len(b):
        raise ValueError("F0 tracks must be non-empty")
    n = max(len(a), len(b))

    def stretch(x):
        if len(x) == n:
            return x, x > 0
        pos = np.linspace(0.0, len(x) - 1, n)
        lo = np.floor(pos).astype(int)
        hi = np.minimum(lo + 1, len(x) - 1)
        voiced = (x[lo] > 0) & (x[hi] > 0)
        return _resample_track(x, n), voiced

    a, va = stretch(a)
    b, vb = stretch(b)
    both = va & vb
    if both.sum() < MIN_COVOICED:
        return None
    x, y = a[both], b[both]
    if np.std(x) == 0 or np.std(y) == 0:
        return None
    return float(np.corrcoef(x, y)[0, 1])


def cosine_sim(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise UndefinedMetricError("cosine similarity of a zero vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def proxy_embedding(mel: dsp.MelSpectrogram) -> np.ndarray:
    """Speaker stand-in: per-bin mean and standard deviation of log-mel frames."""
    return np.concatenate([mel.values.mean(0), mel.values.std(0)])


# -- reports -----------------------------------------------------------------


@dataclass
class UtteranceMetrics:
    id: str
    sim: float | None = None
    error_rate: float | None = None
    f0_corr: float | None = None


@dataclass
class MetricsReport:
    unit: str = "word"
    utterances: list[UtteranceMetrics] = field(default_factory=list)
    excluded: list[str] = field(default_factory=list)

    def mean(self, name: str) -> float | None:
        vals = [getattr(u, name) for u in self.utterances if getattr(u, name) is not None]
        return float(np.mean(vals)) if vals else None

    def count(self, name: str) -> int:
        return sum(getattr(u, name) is not None for u in self.utterances)

    def format_table(self) -> str:
        rate = "WER" if self.unit == "word" else "CER"

        def fmt(v):
            return "undefined" if v is None else f"{v:.3f}"

        header = f"{SIM_LABEL}\t{rate}\tF0_CoRR"
        means = f"{fmt(self.mean('sim'))}\t{fmt(self.mean('error_rate'))}\t{fmt(self.mean('f0_corr'))}"
        counts = f"n={self.count('sim')}\tn={self.count('error_rate')}\tn={self.count('f0_corr')}"
        lines = [header, means, counts, f"excluded: {len(self.excluded)}"]
        lines += [f"  missing pair: {e}" for e in self.excluded]
        return "\n".join(lines)

    def write_records(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for u in self.utterances:
                fh.write(json.dumps(asdict(u), sort_keys=True) + "\n")


def read_records(path) -> list[UtteranceMetrics]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            out.append(UtteranceMetrics(**json.loads(line)))
    return out


def load_hypotheses(path) -> dict[str, str]:
    """Tab-separated ``id<TAB>text`` lines; the text may be empty."""
    hyps = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        key, sep, text = line.partition("\t")
        if not sep:
            raise ValueError(f"{path}:{lineno}: expected id<TAB>text")
        hyps[key] = text
    return hyps


@dataclass
class EvalItem:
    """Paths and text for one converted/reference utterance pair."""

    id: str
    converted_audio: Path
    reference_audio: Path
    reference_text: str = ""
    hypothesis: str | None = None


def evaluate(
    items: Sequence[EvalItem],
    missing: Sequence[str] = (),
    unit: str = "word",
    frontend: Frontend = Frontend(),
    embeddings: Callable[[str, str], np.ndarray | None] | None = None,
) -> MetricsReport:
    """Per-utterance metrics plus corpus means over defined values.

    ``embeddings(id, side)`` may supply speaker embeddings for ``side`` in
    {"converted", "reference"}; otherwise the mel mean/std stand-in is used.
    """
    report = MetricsReport(unit=unit, excluded=sorted(missing))
    for item in sorted(items, key=lambda it: it.id):
        conv = frontend.condition(dsp.load_wav(item.converted_audio))
        ref = frontend.condition(dsp.load_wav(item.reference_audio))
        emb_c = embeddings(item.id, "converted") if embeddings else None
        emb_r = embeddings(item.id, "reference") if embeddings else None
        if emb_c is None:
            emb_c = proxy_embedding(frontend.mel(conv))
        if emb_r is None:
            emb_r = proxy_embedding(frontend.mel(ref))
        m = UtteranceMetrics(item.id)
        try:
            m.sim = cosine_sim(emb_c, emb_r)
        except UndefinedMetricError:
            pass
        if item.hypothesis is not None and units(item.reference_text, unit):
            m.error_rate = error_rate(item.hypothesis, item.reference_text, unit)
        m.f0_corr = f0_corr(dsp.extract_f0(conv), dsp.extract_f0(ref))
        report.utterances.append(m)
    return report


def tensor_embeddings(directory) -> Callable[[str, str], np.ndarray | None]:
    """Embeddings stored as ``<id>.<side>.wft`` tensor files."""
    directory = Path(directory)

    def lookup(utt_id, side):
        path = directory / f"{utt_id}.{side}.wft"
        return tensorio.read_tensor(path) if path.exists() else None

    return lookup


def is_undefined(value) -> bool:
    return value is None or (isinstance(value, float) and math.isnan(value))
