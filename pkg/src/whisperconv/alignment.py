"""Corpus alignment: CTC decoding and forced alignment over posteriorgrams,
exact DTW, FastDTW, and reduction of warping paths to frame mappings."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .dsp import MelSpectrogram


class InfeasibleAlignmentError(ValueError):
    pass


@dataclass
class Posteriorgram:
    log_probs: np.ndarray

    def __post_init__(self):
        self.log_probs = np.asarray(self.log_probs, dtype=np.float64)
        if self.log_probs.ndim != 2:
            raise ValueError("posteriorgram must be frames x vocab")
        if self.log_probs.size:
            if np.any(self.log_probs > 1e-6):
                raise ValueError("log-probabilities must be <= 0")
            if np.any(np.abs(logsumexp(self.log_probs, axis=1)) > 1e-4):
                raise ValueError("rows must be log-softmax normalized")

    @classmethod
    def from_logits(cls, logits) -> "Posteriorgram":
        logits = np.asarray(logits, dtype=np.float64)
        return cls(logits - logsumexp(logits, axis=1, keepdims=True))

    @property
    def frames(self) -> int:
        return self.log_probs.shape[0]

    @property
    def vocab(self) -> int:
        return self.log_probs.shape[1]


@dataclass(frozen=True)
class TokenSegment:
    token: int
    start_frame: int
    end_frame: int


@dataclass
class AlignmentPath:
    steps: list[tuple[int, int]]
    cost: float

    def __len__(self):
        return len(self.steps)

    def validate(self, len_a: int, len_b: int) -> None:
        if self.steps[0] != (0, 0) or self.steps[-1] != (len_a - 1, len_b - 1):
            raise ValueError("path is not anchored at both corners")
        for (i0, j0), (i1, j1) in zip(self.steps, self.steps[1:]):
            if (i1 - i0, j1 - j0) not in ((1, 0), (0, 1), (1, 1)):
                raise ValueError(f"invalid step {(i0, j0)} -> {(i1, j1)}")
        if self.cost < 0:
            raise ValueError("negative path cost")


@dataclass
class FrameMapping:
    target_to_source: np.ndarray

    def __len__(self):
        return len(self.target_to_source)


# -- CTC -------------------------------------------------------------------


def collapse(labels: Sequence[int], blank: int = 0) -> list[int]:
    out = []
    prev = None
    for lab in labels:
        if lab != prev and lab != blank:
            out.append(int(lab))
        prev = lab
    return out


def ctc_greedy_decode(p: Posteriorgram, blank: int = 0) -> list[int]:
    if not 0 <= blank < max(p.vocab, 1):
        raise ValueError(f"blank index {blank} outside vocabulary of size {p.vocab}")
    if p.frames == 0:
        return []
    return collapse(np.argmax(p.log_probs, axis=1).tolist(), blank)


def min_ctc_frames(transcript: Sequence[int]) -> int:
    """Fewest frames a CTC path needs: one per token plus a blank between repeats."""
    repeats = sum(1 for a, b in zip(transcript, transcript[1:]) if a == b)
    return len(transcript) + repeats


def ctc_viterbi_labels(p: Posteriorgram, transcript: Sequence[int], blank: int = 0) -> tuple[list[int], list[int]]:
    """Best CTC path: per-frame state indices into the blank-interleaved transcript
    and the corresponding framewise labels."""
    transcript = [int(t) for t in transcript]
    if not transcript:
        raise ValueError("transcript must be non-empty")
    if any(t < 0 or t >= p.vocab for t in transcript) or not 0 <= blank < p.vocab:
        raise ValueError("token index outside vocabulary")
    if blank in transcript:
        raise ValueError("transcript may not contain the blank token")
    if min_ctc_frames(transcript) > p.frames:
        raise InfeasibleAlignmentError(
            f"transcript of {len(transcript)} tokens needs {min_ctc_frames(transcript)} frames, have {p.frames}"
        )
    ext = [blank]
    for tok in transcript:
        ext += [tok, blank]
    S = len(ext)
    ext_arr = np.array(ext)
    # a state may be entered from two back only if it is a token differing from the one two back
    skip = np.zeros(S, dtype=bool)
    skip[2:] = (ext_arr[2:] != blank) & (ext_arr[2:] != ext_arr[:-2])

    T = p.frames
    emit = p.log_probs[:, ext_arr]
    score = np.full(S, -np.inf)
    score[0] = emit[0, 0]
    score[1] = emit[0, 1]
    back = np.zeros((T, S), dtype=np.int8)
    for t in range(1, T):
        stay = score
        step = np.concatenate([[-np.inf], score[:-1]])
        jump = np.where(skip, np.concatenate([[-np.inf, -np.inf], score[:-2]]), -np.inf)
        cand = np.stack([stay, step, jump])
        # argmax takes the first maximum: prefer staying, then single step
        choice = np.argmax(cand, axis=0)
        back[t] = choice
        score = cand[choice, np.arange(S)] + emit[t]
    end = S - 1 if score[S - 1] >= score[S - 2] else S - 2
    if not np.isfinite(score[end]):
        raise InfeasibleAlignmentError("no valid CTC path")
    states = [end]
    for t in range(T - 1, 0, -1):
        states.append(states[-1] - int(back[t, states[-1]]))
    states.reverse()
    return states, [ext[s] for s in states]


def ctc_forced_align(p: Posteriorgram, transcript: Sequence[int], blank: int = 0) -> list[TokenSegment]:
    """Viterbi alignment of ``transcript`` under the CTC topology.

    Each transcript token receives the contiguous span of frames on which the
    best path emits it; blank frames belong to no segment.
    """
    states, _ = ctc_viterbi_labels(p, transcript, blank)
    segments = []
    for k, tok in enumerate(transcript):
        frames = [t for t, s in enumerate(states) if s == 2 * k + 1]
        segments.append(TokenSegment(int(tok), frames[0], frames[-1] + 1))
    return segments


def segments_to_labels(segments: Sequence[TokenSegment], frames: int, blank: int = 0) -> list[int]:
    labels = [blank] * frames
    for seg in segments:
        labels[seg.start_frame : seg.end_frame] = [seg.token] * (seg.end_frame - seg.start_frame)
    return labels


def merge_words(segments: Sequence[TokenSegment], word_lengths: Sequence[int]) -> list[TokenSegment]:
    """Group consecutive sub-word segments into word spans.

    A merged segment carries the token of its first child.
    """
    if sum(word_lengths) != len(segments) or any(n <= 0 for n in word_lengths):
        raise ValueError(f"word lengths {list(word_lengths)} do not partition {len(segments)} segments")
    out = []
    pos = 0
    for n in word_lengths:
        children = segments[pos : pos + n]
        out.append(TokenSegment(children[0].token, children[0].start_frame, children[-1].end_frame))
        pos += n
    return out


# -- DTW -------------------------------------------------------------------


def _as_frames(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("sequences must be non-empty frames x dim arrays")
    return x


def _distance_rows(a: np.ndarray, b: np.ndarray, metric: str) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    if metric == "euclidean":
        return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    if metric == "sqeuclidean":
        return np.einsum("ijk,ijk->ij", diff, diff)
    if metric in ("cityblock", "manhattan"):
        return np.abs(diff).sum(-1)
    raise ValueError(f"unknown distance {metric!r}")


def _check_pair(a, b):
    a, b = _as_frames(a), _as_frames(b)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    return a, b


def _dtw_window(a: np.ndarray, b: np.ndarray, lo: np.ndarray, hi: np.ndarray, metric: str) -> AlignmentPath:
    """DP restricted to columns ``lo[i]..hi[i]`` (inclusive) of each row ``i``."""
    n, m = len(a), len(b)
    inf = float("inf")
    acc = []
    local = []
    prev_row = None
    prev_lo = prev_hi = 0
    for i in range(n):
        l, h = int(lo[i]), int(hi[i])
        d = _distance_rows(a[i : i + 1], b[l : h + 1], metric)[0].tolist()
        row = [inf] * (h - l + 1)
        for k in range(h - l + 1):
            j = l + k
            if i == 0 and j == 0:
                row[k] = d[k]
                continue
            best = inf
            if prev_row is not None:
                if prev_lo <= j - 1 <= prev_hi:
                    best = prev_row[j - 1 - prev_lo]
                if prev_lo <= j <= prev_hi and prev_row[j - prev_lo] < best:
                    best = prev_row[j - prev_lo]
            if k > 0 and row[k - 1] < best:
                best = row[k - 1]
            row[k] = best + d[k]
        acc.append(row)
        local.append(d)
        prev_row, prev_lo, prev_hi = row, l, h

    def get(i, j):
        if i < 0 or j < lo[i] or j > hi[i]:
            return inf
        return acc[i][j - lo[i]]

    if not np.isfinite(get(n - 1, m - 1)):
        raise RuntimeError("search window does not connect the corners")
    i, j = n - 1, m - 1
    steps = [(i, j)]
    cost = local[i][j - lo[i]]
    while (i, j) != (0, 0):
        # ties: diagonal first, then the step that advanced i
        cands = [(get(i - 1, j - 1), i - 1, j - 1), (get(i - 1, j), i - 1, j), (get(i, j - 1), i, j - 1)]
        best = min(c[0] for c in cands)
        _, i, j = next(c for c in cands if c[0] == best)
        steps.append((i, j))
        cost += local[i][j - lo[i]]
    steps.reverse()
    return AlignmentPath(steps, float(cost))


def dtw_exact(a, b, distance: str = "euclidean") -> AlignmentPath:
    """Globally optimal monotone alignment of two frame sequences."""
    a, b = _check_pair(a, b)
    n, m = len(a), len(b)
    return _dtw_window(a, b, np.zeros(n, dtype=int), np.full(n, m - 1), distance)


def _coarsen(x: np.ndarray) -> np.ndarray:
    """Halve resolution by averaging frame pairs; an odd trailing frame is kept alone."""
    n = len(x)
    even = x[: n - n % 2].reshape(-1, 2, x.shape[1]).mean(axis=1)
    return np.vstack([even, x[-1:]]) if n % 2 else even


def _project_window(path: AlignmentPath, n: int, m: int, radius: int) -> tuple[np.ndarray, np.ndarray]:
    """Row bounds of the fine-resolution window around a coarse path.

    The coarse path is dilated by ``radius`` cells; fine cell (i, j) is admitted
    when its coarse parent (i // 2, j // 2) lies in the dilated set.
    """
    cn, cm = (n + 1) // 2, (m + 1) // 2
    clo = np.full(cn, cm, dtype=int)
    chi = np.full(cn, -1, dtype=int)
    for i, j in path.steps:
        r0, r1 = max(0, i - radius), min(cn - 1, i + radius)
        clo[r0 : r1 + 1] = np.minimum(clo[r0 : r1 + 1], max(0, j - radius))
        chi[r0 : r1 + 1] = np.maximum(chi[r0 : r1 + 1], min(cm - 1, j + radius))
    rows = np.arange(n) // 2
    lo = 2 * clo[rows]
    hi = np.minimum(2 * chi[rows] + 1, m - 1)
    return lo, hi


def fastdtw(a, b, radius: int = 5, distance: str = "euclidean") -> AlignmentPath:
    """Approximate DTW by coarsen, solve, project and refine within ``radius``."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    a, b = _check_pair(a, b)
    return _fastdtw(a, b, int(radius), distance)


def _fastdtw(a, b, radius, distance):
    min_size = radius + 2
    if len(a) <= min_size or len(b) <= min_size:
        return dtw_exact(a, b, distance)
    coarse = _fastdtw(_coarsen(a), _coarsen(b), radius, distance)
    lo, hi = _project_window(coarse, len(a), len(b), radius)
    return _dtw_window(a, b, lo, hi, distance)


def path_to_frame_mapping(path: AlignmentPath, target: str = "b") -> FrameMapping:
    """Reduce a warping path to one source frame per target frame.

    ``target`` names which path coordinate is the target sequence (``"a"`` for
    the first index, ``"b"`` for the second).  Each target frame takes the lower
    median of the source frames it is matched with.
    """
    if target not in ("a", "b"):
        raise ValueError("target must be 'a' or 'b'")
    steps = np.asarray(path.steps, dtype=int)
    tgt, src = (steps[:, 1], steps[:, 0]) if target == "b" else (steps[:, 0], steps[:, 1])
    n = int(tgt[-1]) + 1
    mapping = np.empty(n, dtype=int)
    start = 0
    for k in range(n):
        stop = start
        while stop < len(tgt) and tgt[stop] == k:
            stop += 1
        if stop == start:
            raise ValueError(f"target frame {k} is not covered by the path")
        span = src[start:stop]
        mapping[k] = span[(len(span) - 1) // 2]
        start = stop
    return FrameMapping(mapping)


def align_pair(
    mel_source: MelSpectrogram, mel_target: MelSpectrogram, radius: int = 5, distance: str = "euclidean"
) -> tuple[MelSpectrogram, FrameMapping, AlignmentPath]:
    """Warp ``mel_source`` onto the time axis of ``mel_target``."""
    if mel_source.frames == 0 or mel_target.frames == 0:
        raise ValueError("cannot align empty spectrograms")
    if mel_source.bins != mel_target.bins:
        raise ValueError("mel configurations differ")
    path = fastdtw(mel_source.values, mel_target.values, radius, distance)
    mapping = path_to_frame_mapping(path, target="b")
    aligned = MelSpectrogram(mel_source.values[mapping.target_to_source], mel_target.hop_length, mel_target.sample_rate)
    return aligned, mapping, path


def linear_resample_frames(values: np.ndarray, frames: int) -> np.ndarray:
    """Naive baseline: nearest-frame linear time scaling to ``frames`` frames."""
    idx = np.round(np.linspace(0, len(values) - 1, frames)).astype(int)
    return values[idx]
