"""Symbolic drum scores on a quarter-beat (tatum) grid.

Covers building tatum grids from beat times, quantising onset annotations
to the nearest tatum (with the conflict / far bookkeeping used to judge how
many onsets a tatum-level score cannot represent), and rendering scores
back onto the 10 ms frame axis.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import HOP_SECONDS, INSTRUMENTS
from .errors import OrderingError

TATUMS_PER_BEAT = 4
FAR_SECONDS = 0.050


@dataclass
class TatumGrid:
    times: np.ndarray
    tatums_per_beat: int = TATUMS_PER_BEAT

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        if self.times.ndim != 1 or self.times.size == 0:
            raise ValueError("tatum grid needs at least one time")
        if not np.all(np.isfinite(self.times)):
            raise ValueError("tatum times must be finite")
        if np.any(np.diff(self.times) <= 0):
            raise OrderingError("tatum times must be strictly increasing")
        if self.tatums_per_beat != TATUMS_PER_BEAT:
            raise ValueError(f"only {TATUMS_PER_BEAT} tatums per beat are supported")

    def __len__(self):
        return self.times.size


@dataclass
class DrumScore:
    onsets: np.ndarray
    instruments: tuple = INSTRUMENTS
    tatum_times: np.ndarray | None = None
    tatums_per_beat: int = TATUMS_PER_BEAT

    def __post_init__(self):
        onsets = np.asarray(self.onsets)
        if onsets.ndim != 2:
            raise ValueError(f"score must be K x M, got shape {onsets.shape}")
        if not np.isin(onsets, (0, 1)).all():
            raise ValueError("score entries must be 0 or 1")
        self.onsets = onsets.astype(np.int8)
        self.instruments = tuple(self.instruments)
        if self.onsets.shape[0] != len(self.instruments):
            raise ValueError(
                f"score has {self.onsets.shape[0]} rows for {len(self.instruments)} instruments")
        if self.onsets.shape[1] < 1:
            raise ValueError("score needs at least one tatum")
        if self.tatum_times is not None:
            self.tatum_times = np.asarray(self.tatum_times, dtype=np.float64)
            if self.tatum_times.shape != (self.n_tatums,):
                raise ValueError("tatum_times length must equal the number of tatums")

    @property
    def n_tatums(self) -> int:
        return self.onsets.shape[1]

    @classmethod
    def empty(cls, n_tatums: int, **kwargs) -> "DrumScore":
        return cls(np.zeros((len(INSTRUMENTS), n_tatums), dtype=np.int8), **kwargs)

    def __eq__(self, other):
        if not isinstance(other, DrumScore):
            return NotImplemented
        return (self.instruments == other.instruments
                and np.array_equal(self.onsets, other.onsets))

    def to_json(self) -> dict:
        out = {
            "instruments": list(self.instruments),
            "tatums_per_beat": self.tatums_per_beat,
            "onsets": self.onsets.astype(int).tolist(),
        }
        if self.tatum_times is not None:
            out["tatum_times"] = [float(t) for t in self.tatum_times]
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "DrumScore":
        return cls(np.asarray(obj["onsets"]), tuple(obj.get("instruments", INSTRUMENTS)),
                   obj.get("tatum_times"), obj.get("tatums_per_beat", TATUMS_PER_BEAT))


@dataclass
class OnsetAnnotation:
    """Frame-level ground truth as ``(instrument index, seconds)`` pairs."""

    events: list = field(default_factory=list)

    def __post_init__(self):
        events = []
        for k, t in self.events:
            t = float(t)
            if not np.isfinite(t) or t < 0:
                raise ValueError(f"onset time must be finite and >= 0, got {t}")
            if not 0 <= int(k) < len(INSTRUMENTS):
                raise ValueError(f"instrument index {k} out of range")
            events.append((int(k), t))
        self.events = events

    def times_for(self, k: int) -> np.ndarray:
        return np.array([t for kk, t in self.events if kk == k], dtype=np.float64)


@dataclass
class UndetectableStats:
    total: int = 0
    conflict: int = 0
    far: int = 0
    union: int = 0

    def _ratio(self, n):
        return n / self.total if self.total else 0.0

    @property
    def conflict_ratio(self) -> float:
        return self._ratio(self.conflict)

    @property
    def far_ratio(self) -> float:
        return self._ratio(self.far)

    @property
    def union_ratio(self) -> float:
        return self._ratio(self.union)

    def __add__(self, other: "UndetectableStats") -> "UndetectableStats":
        return UndetectableStats(self.total + other.total, self.conflict + other.conflict,
                                 self.far + other.far, self.union + other.union)


def build_tatum_grid(beats: Sequence[float]) -> TatumGrid:
    """Split every beat interval into four tatums.

    Four more tatums follow the last beat, spaced by the final beat period,
    so ``M = 4 * len(beats)``.
    """
    beats = np.asarray(beats, dtype=np.float64)
    if beats.ndim != 1 or beats.size < 2:
        raise ValueError("need at least two beat times")
    if np.any(np.diff(beats) <= 0):
        raise OrderingError("beat times must be strictly increasing")
    extended = np.append(beats, beats[-1] + (beats[-1] - beats[-2]))
    frac = np.arange(TATUMS_PER_BEAT) / TATUMS_PER_BEAT
    starts = extended[:-1, None]
    spans = np.diff(extended)[:, None]
    return TatumGrid((starts + spans * frac).reshape(-1))


def nearest_tatum(times: np.ndarray, grid_times: np.ndarray) -> np.ndarray:
    """Index of the closest tatum; exact ties go to the earlier tatum."""
    times = np.asarray(times, dtype=np.float64)
    right = np.clip(np.searchsorted(grid_times, times, side="left"), 0, grid_times.size - 1)
    left = np.clip(right - 1, 0, None)
    choose_left = np.abs(times - grid_times[left]) <= np.abs(grid_times[right] - times)
    return np.where(choose_left, left, right)


def quantize_onsets(ann: OnsetAnnotation, grid: TatumGrid,
                    far_seconds: float = FAR_SECONDS) -> tuple[DrumScore, UndetectableStats]:
    """Place each onset on its nearest tatum and count undetectable onsets.

    When several onsets of one instrument land on the same tatum, the one
    closest to the tatum is kept and the rest count as conflicts.  Onsets
    more than ``far_seconds`` from their nearest tatum count as far; they
    are still placed on that tatum.
    """
    if len(grid) == 0:
        raise ValueError("empty tatum grid")
    k_count = len(INSTRUMENTS)
    onsets = np.zeros((k_count, len(grid)), dtype=np.int8)
    stats = UndetectableStats()
    for k in range(k_count):
        times = ann.times_for(k)
        if times.size == 0:
            continue
        idx = nearest_tatum(times, grid.times)
        dist = np.abs(times - grid.times[idx])
        far = dist > far_seconds
        # stable order: by tatum, then distance, then time
        order = np.lexsort((times, dist, idx))
        conflict = np.zeros(times.size, dtype=bool)
        conflict[order[1:]] = idx[order[1:]] == idx[order[:-1]]
        onsets[k, idx] = 1
        stats.total += times.size
        stats.conflict += int(conflict.sum())
        stats.far += int(far.sum())
        stats.union += int((conflict | far).sum())
    return DrumScore(onsets, tatum_times=grid.times.copy()), stats


def score_to_frames(score: DrumScore, grid: TatumGrid, n_frames: int,
                    hop: float = HOP_SECONDS) -> tuple[np.ndarray, int]:
    """Binary ``K x T`` frame activations; returns ``(frames, n_clipped)``.

    Tatum ``m`` maps to frame ``floor(b_m / hop + 0.5)``; onsets whose frame
    falls outside ``[0, n_frames)`` are dropped and counted.
    """
    if score.n_tatums != len(grid):
        raise ValueError(f"score has {score.n_tatums} tatums but grid has {len(grid)}")
    frames = np.floor(grid.times / hop + 0.5).astype(np.int64)
    out = np.zeros((score.onsets.shape[0], n_frames), dtype=np.int8)
    clipped = 0
    for k in range(score.onsets.shape[0]):
        hit = frames[score.onsets[k] == 1]
        inside = (hit >= 0) & (hit < n_frames)
        clipped += int((~inside).sum())
        out[k, hit[inside]] = 1
    return out, clipped


def score_to_annotation(score: DrumScore, grid: TatumGrid) -> OnsetAnnotation:
    ks, ms = np.nonzero(score.onsets)
    return OnsetAnnotation(sorted(zip(ks.tolist(), grid.times[ms].tolist()), key=lambda e: e[1]))


# -- text formats -----------------------------------------------------------------
def read_beats(path) -> np.ndarray:
    values = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            values.append(float(line.split()[0]))
        except ValueError:
            raise ValueError(f"{path}:{lineno}: not a beat time: {line!r}") from None
    return np.asarray(values)


def write_beats(path, beats) -> None:
    Path(path).write_text("".join(f"{b:.6f}\n" for b in beats), encoding="utf-8")


def read_annotation(path) -> OnsetAnnotation:
    events = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2 or parts[1].strip() not in INSTRUMENTS:
            raise ValueError(f"{path}:{lineno}: expected '<seconds>\\t<BD|SD|HH>', got {line!r}")
        events.append((INSTRUMENTS.index(parts[1].strip()), float(parts[0])))
    return OnsetAnnotation(events)


def write_annotation(path, ann: OnsetAnnotation) -> None:
    lines = [f"{t:.6f}\t{INSTRUMENTS[k]}\n" for k, t in sorted(ann.events, key=lambda e: (e[1], e[0]))]
    Path(path).write_text("".join(lines), encoding="utf-8")


def load_score(path) -> DrumScore:
    return DrumScore.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def save_score(path, score: DrumScore) -> None:
    Path(path).write_text(json.dumps(score.to_json()) + "\n", encoding="utf-8")
