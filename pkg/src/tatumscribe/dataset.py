"""Loading paired songs (audio, beats, score) into training items."""
from __future__ import annotations

import json
from pathlib import Path

from .dsp import mel_spectrogram, read_wav
from .score import build_tatum_grid, load_score, read_beats
from .synth import SPLITS, synth_song
from .training import TrainItem


def load_manifest(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise FileNotFoundError(f"manifest not found: {path}") from None
    manifest["root"] = str(path.parent)
    return manifest


def item_from_files(wav, beats, score, name: str = "") -> TrainItem:
    grid = build_tatum_grid(read_beats(beats))
    return TrainItem(mel_spectrogram(read_wav(wav)), grid.times, load_score(score), name)


def load_items(manifest, split: str | None = None) -> list[TrainItem]:
    """Training items for every song in ``split`` (all songs when None)."""
    if not isinstance(manifest, dict):
        manifest = load_manifest(manifest)
    if split is not None and split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}, got {split!r}")
    root = Path(manifest["root"])
    return [item_from_files(root / s["wav"], root / s["beats"], root / s["score"], s["id"])
            for s in manifest["songs"] if split is None or s["split"] == split]


def synth_items(n_songs: int, templates, seed: int, tempo_range=(100.0, 140.0),
                render_kw: dict | None = None) -> list[TrainItem]:
    """In-memory songs; the spectrogram is computed from the rendered clip directly."""
    items = []
    for i in range(n_songs):
        score, clip, beats, _, _, _ = synth_song(templates, [seed, 1, i], tempo_range, render_kw)
        grid = build_tatum_grid(beats)
        items.append(TrainItem(mel_spectrogram(clip), grid.times, score, f"song{i:03d}"))
    return items

