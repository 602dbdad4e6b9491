"""Deterministic synthetic drum corpus.

Scores are built by tiling a one-bar base pattern, randomly resampling a
fraction of cells and optionally replacing every Nth bar with a denser fill.
Audio is rendered at a constant tempo from filtered, exponentially decaying
noise bursts, so the exact beat and onset times are known.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import signal

from . import INSTRUMENTS, SAMPLE_RATE
from .dsp import AudioClip, write_wav
from .errors import ConfigError
from .score import (TATUMS_PER_BEAT, DrumScore, OnsetAnnotation, save_score, write_annotation,
                    write_beats)

logger = logging.getLogger(__name__)

BAR = 16
SPLITS = ("train", "val", "test")


@dataclass
class PatternTemplate:
    base_pattern: np.ndarray
    bars: int = 4
    variation_rate: float = 0.05
    fill_bar_period: int = 0
    fill_density: float = 0.5
    name: str = ""

    def __post_init__(self):
        self.base_pattern = np.asarray(self.base_pattern, dtype=np.int8)
        if self.base_pattern.shape != (len(INSTRUMENTS), BAR):
            raise ConfigError(f"base pattern must be {len(INSTRUMENTS)} x {BAR}, "
                              f"got {self.base_pattern.shape}")
        if not np.isin(self.base_pattern, (0, 1)).all():
            raise ConfigError("base pattern entries must be 0 or 1")
        if self.bars < 1:
            raise ConfigError("a template needs at least one bar")
        if not 0.0 <= self.variation_rate <= 1.0 or not 0.0 <= self.fill_density <= 1.0:
            raise ConfigError("variation_rate and fill_density must lie in [0, 1]")
        if self.fill_bar_period < 0:
            raise ConfigError("fill_bar_period must be >= 0 (0 disables fills)")

    def is_fill_bar(self, bar: int) -> bool:
        return self.fill_bar_period > 0 and (bar + 1) % self.fill_bar_period == 0


def _pattern(bd, sd, hh) -> np.ndarray:
    rows = np.zeros((3, BAR), dtype=np.int8)
    for k, hits in enumerate((bd, sd, hh)):
        rows[k, list(hits)] = 1
    return rows


EIGHTHS = range(0, 16, 2)
BASE_PATTERNS = {
    "rock": _pattern((0, 8), (4, 12), EIGHTHS),
    "rock_push": _pattern((0, 6, 8), (4, 12), EIGHTHS),
    "disco": _pattern((0, 4, 8, 12), (4, 12), range(2, 16, 4)),
    "halftime": _pattern((0, 10), (8,), EIGHTHS),
    "funk": _pattern((0, 3, 10), (4, 7, 12), range(16)),
    "shuffle": _pattern((0, 7, 8), (4, 12, 15), (0, 3, 4, 7, 8, 11, 12, 15)),
}


def default_templates(bars: int = 4, variation_rate: float = 0.05,
                      fill_bar_period: int = 0) -> list[PatternTemplate]:
    return [PatternTemplate(p, bars, variation_rate, fill_bar_period, name=n)
            for n, p in BASE_PATTERNS.items()]


def sample_score(template: PatternTemplate, seed) -> DrumScore:
    """Tile the base pattern, then resample cells at ``variation_rate``.

    A resampled cell becomes a fair coin flip, so even ``variation_rate=1``
    keeps half of the cells.  Fill bars draw every cell independently with
    probability ``fill_density``.
    """
    rng = np.random.default_rng(seed)
    grid = np.tile(template.base_pattern, (1, template.bars))
    touched = rng.random(grid.shape) < template.variation_rate
    coins = (rng.random(grid.shape) < 0.5).astype(np.int8)
    grid = np.where(touched, coins, grid)
    fills = (rng.random(grid.shape) < template.fill_density).astype(np.int8)
    for bar in range(template.bars):
        if template.is_fill_bar(bar):
            grid[:, bar * BAR:(bar + 1) * BAR] = fills[:, bar * BAR:(bar + 1) * BAR]
    return DrumScore(grid.astype(np.int8))


# -- audio -----------------------------------------------------------------------------
@dataclass
class Recipe:
    """One instrument's burst: filtered noise with an exponential decay."""

    center_hz: float
    decay: float
    gain: float = 1.0
    highpass: bool = False
    noise_mix: float = 0.0

    def __post_init__(self):
        if self.decay <= 0 or self.center_hz <= 0:
            raise ConfigError("recipe decay and center frequency must be positive")


def default_recipes() -> dict:
    return {"BD": Recipe(60.0, 0.15, 1.0),
            "SD": Recipe(200.0, 0.12, 0.8, noise_mix=0.5),
            "HH": Recipe(8000.0, 0.05, 0.5, highpass=True)}


@dataclass
class RenderSpec:
    tempo: float = 120.0
    recipes: dict = field(default_factory=default_recipes)
    noise_floor: float = 1e-3
    peak: float = 0.9
    seed: int = 0
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        if self.tempo <= 0:
            raise ConfigError(f"tempo must be positive, got {self.tempo}")
        self.recipes = {k: Recipe(**v) if isinstance(v, dict) else v
                        for k, v in self.recipes.items()}
        missing = set(INSTRUMENTS) - set(self.recipes)
        if missing:
            raise ConfigError(f"missing synthesis recipes for {sorted(missing)}")
        if self.noise_floor < 0:
            raise ConfigError("noise_floor must be nonnegative")

    @property
    def tatum_period(self) -> float:
        return 60.0 / self.tempo / TATUMS_PER_BEAT


def _burst(recipe: Recipe, rng: np.random.Generator, sr: int) -> np.ndarray:
    n = max(1, int(round(5.0 * recipe.decay * sr)))
    noise = rng.standard_normal(n)
    if recipe.highpass:
        sos = signal.butter(4, recipe.center_hz, btype="highpass", fs=sr, output="sos")
    else:
        lo, hi = recipe.center_hz / 1.5, min(recipe.center_hz * 1.5, sr / 2 - 1)
        sos = signal.butter(2, [lo, hi], btype="bandpass", fs=sr, output="sos")
    tone = signal.sosfilt(sos, noise)
    tone /= np.max(np.abs(tone)) or 1.0
    if recipe.noise_mix:
        broad = rng.standard_normal(n)
        tone = (1 - recipe.noise_mix) * tone + recipe.noise_mix * broad / np.max(np.abs(broad))
    env = np.exp(-np.arange(n) / (recipe.decay * sr))
    return recipe.gain * tone * env


def render(score: DrumScore, spec: RenderSpec) -> tuple[AudioClip, np.ndarray, OnsetAnnotation]:
    """Synthesize audio for ``score``; returns ``(clip, beat_times, annotation)``.

    Tatum ``m`` sits at ``m * 60 / (4 * tempo)`` seconds and the clip lasts
    exactly ``M`` tatum periods.
    """
    sr = spec.sample_rate
    period = spec.tatum_period
    m_count = score.n_tatums
    tatum_times = np.arange(m_count) * period
    beats = tatum_times[::TATUMS_PER_BEAT].copy()
    n_samples = int(round(m_count * period * sr))
    audio = np.zeros(n_samples)
    rng = np.random.default_rng(spec.seed)
    events = []
    for m in range(m_count):
        for k, name in enumerate(score.instruments):
            if not score.onsets[k, m]:
                continue
            events.append((k, float(tatum_times[m])))
            start = int(round(tatum_times[m] * sr))
            burst = _burst(spec.recipes[name], rng, sr)[:n_samples - start]
            audio[start:start + burst.size] += burst
    top = np.max(np.abs(audio)) if audio.size else 0.0
    if top > 0:
        audio *= spec.peak / top
    audio += spec.noise_floor * rng.standard_normal(n_samples)
    return AudioClip(audio, sr), beats, OnsetAnnotation(events)


# -- corpora -------------------------------------------------------------------------
def _child_seed(seed: int, *path: int) -> list[int]:
    return [int(seed), *map(int, path)]


def synth_song(templates: Sequence[PatternTemplate], seed, tempo_range=(100.0, 140.0),
               render_kw: dict | None = None):
    """One random song: ``(score, clip, beats, annotation, tempo, template name)``."""
    rng = np.random.default_rng(seed)
    template = templates[int(rng.integers(len(templates)))]
    tempo = float(np.round(rng.uniform(*tempo_range), 1))
    score = sample_score(template, rng.integers(2**63))
    spec = RenderSpec(tempo=tempo, seed=int(rng.integers(2**63)), **(render_kw or {}))
    clip, beats, ann = render(score, spec)
    score.tatum_times = np.arange(score.n_tatums) * spec.tatum_period
    return score, clip, beats, ann, tempo, template.name


def split_ids(n_songs: int, seed: int, fractions=(0.70, 0.15, 0.15)) -> dict[int, str]:
    """Shuffle song indices and cut them into train/val/test."""
    if n_songs < 3:
        raise ConfigError("a split needs at least three songs")
    order = np.random.default_rng(_child_seed(seed, 7)).permutation(n_songs)
    n_train = max(1, int(round(fractions[0] * n_songs)))
    n_val = max(1, int(round(fractions[1] * n_songs)))
    n_train = min(n_train, n_songs - 2)
    n_val = min(n_val, n_songs - n_train - 1)
    labels = {}
    for pos, idx in enumerate(order):
        labels[int(idx)] = "train" if pos < n_train else "val" if pos < n_train + n_val else "test"
    return labels


def make_dataset(out_dir, n_songs: int, templates: Sequence[PatternTemplate] | None = None,
                 tempo_range=(100.0, 140.0), seed: int = 0, render_kw: dict | None = None,
                 splits: dict[int, str] | None = None) -> dict:
    """Write WAV, beats, annotation and score files plus ``manifest.json``.

    Returns the manifest.  ``splits`` overrides the default 70/15/15 split.
    """
    templates = list(templates or default_templates())
    out = Path(out_dir)
    song_dir = out / "songs"
    try:
        song_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {song_dir}: {exc}") from exc
    labels = splits if splits is not None else split_ids(n_songs, seed)
    songs = []
    for i in range(n_songs):
        sid = f"song{i:03d}"
        score, clip, beats, ann, tempo, tname = synth_song(
            templates, _child_seed(seed, 1, i), tempo_range, render_kw)
        paths = {"wav": f"songs/{sid}.wav", "beats": f"songs/{sid}.beats.txt",
                 "annotation": f"songs/{sid}.onsets.txt", "score": f"songs/{sid}.score.json"}
        write_wav(out / paths["wav"], clip.samples)
        write_beats(out / paths["beats"], beats)
        write_annotation(out / paths["annotation"], ann)
        save_score(out / paths["score"], score)
        songs.append({"id": sid, **paths, "split": labels[i], "tempo": tempo, "template": tname,
                      "bars": score.n_tatums // BAR})
    manifest = {"seed": seed, "n_songs": n_songs, "songs": songs}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    logger.info("wrote %d songs to %s", n_songs, out)
    return manifest


def make_lm_corpus(n_scores: int, templates: Sequence[PatternTemplate] | None = None,
                   seed: int = 0) -> list[DrumScore]:
    """Unpaired symbolic scores for language-model training."""
    templates = list(templates or default_templates())
    rng = np.random.default_rng(_child_seed(seed, 2))
    return [sample_score(templates[int(rng.integers(len(templates)))], rng.integers(2**63))
            for _ in range(n_scores)]


def template_to_dict(t: PatternTemplate) -> dict:
    d = asdict(t)
    d["base_pattern"] = t.base_pattern.astype(int).tolist()
    return d
