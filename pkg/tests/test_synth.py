import json

import numpy as np
import pytest

from tatumscribe.dsp import n_frames, read_wav
from tatumscribe.lm import bigram_nll, corpus_score, train_bigram
from tatumscribe.score import (build_tatum_grid, load_score, quantize_onsets, read_annotation,
                               read_beats)
from tatumscribe.synth import (BASE_PATTERNS, PatternTemplate, RenderSpec, default_templates,
                               make_dataset, make_lm_corpus, render, sample_score, split_ids)

ROCK = BASE_PATTERNS["rock"]


def test_no_variation_is_exact_tiling():
    score = sample_score(PatternTemplate(ROCK, bars=3, variation_rate=0.0), seed=1)
    np.testing.assert_array_equal(score.onsets, np.tile(ROCK, (1, 3)))


def test_full_variation_is_a_coin_per_cell():
    template = PatternTemplate(ROCK, bars=4, variation_rate=1.0)
    tiled = np.tile(ROCK, (1, 4))
    dist = np.mean([np.mean(sample_score(template, s).onsets != tiled) for s in range(300)])
    assert abs(dist - 0.5) < 0.02


def test_sampling_is_seeded():
    template = PatternTemplate(ROCK, bars=4, variation_rate=0.3, fill_bar_period=2)
    assert sample_score(template, 5) == sample_score(template, 5)
    assert sample_score(template, 5) != sample_score(template, 6)


def test_fill_bars_replace_pattern():
    template = PatternTemplate(ROCK, bars=4, variation_rate=0.0, fill_bar_period=2,
                               fill_density=1.0)
    y = sample_score(template, 0).onsets
    np.testing.assert_array_equal(y[:, :16], ROCK)
    assert y[:, 16:32].all() and y[:, 48:].all()


def test_template_validation():
    with pytest.raises(ValueError):
        PatternTemplate(np.zeros((3, 12)))
    with pytest.raises(ValueError):
        PatternTemplate(ROCK, variation_rate=1.5)


def test_empty_score_renders_noise_floor():
    score = sample_score(PatternTemplate(np.zeros((3, 16)), bars=2, variation_rate=0.0), 0)
    clip, _, ann = render(score, RenderSpec(tempo=120, noise_floor=0.01, seed=3))
    rms = np.sqrt(np.mean(clip.samples ** 2))
    assert abs(rms - 0.01) < 0.001
    assert ann.events == []


def test_render_peak_and_duration():
    score = sample_score(PatternTemplate(ROCK, bars=2), 0)
    spec = RenderSpec(tempo=120, noise_floor=0.0)
    clip, beats, _ = render(score, spec)
    assert np.max(np.abs(clip.samples)) == pytest.approx(0.9)
    assert clip.samples.size / 44100 == pytest.approx(32 * 0.125, abs=0.010)
    np.testing.assert_allclose(beats, np.arange(8) * 0.5)


def test_doubling_tempo_halves_duration():
    score = sample_score(PatternTemplate(ROCK, bars=2), 0)
    slow, _, _ = render(score, RenderSpec(tempo=90))
    fast, _, _ = render(score, RenderSpec(tempo=180))
    assert abs(slow.samples.size / 2 - fast.samples.size) <= 441


def test_render_round_trip_quantizes_exactly():
    for seed, template in enumerate(default_templates(bars=3, variation_rate=0.2,
                                                      fill_bar_period=2)):
        score = sample_score(template, seed)
        _, beats, ann = render(score, RenderSpec(tempo=95 + 11 * seed, seed=seed))
        back, stats = quantize_onsets(ann, build_tatum_grid(beats))
        assert back == score
        assert stats.conflict == 0 and stats.far == 0 and stats.union_ratio == 0.0


def test_split_partition():
    for n in (3, 10, 41):
        labels = split_ids(n, seed=2)
        assert sorted(labels) == list(range(n))
        assert {"train", "val", "test"} == set(labels.values())
    counts = list(split_ids(20, seed=0).values())
    assert (counts.count("train"), counts.count("val"), counts.count("test")) == (14, 3, 3)


def test_make_dataset_is_deterministic(tmp_path):
    m1 = make_dataset(tmp_path / "a", 10, default_templates(bars=1), seed=4)
    m2 = make_dataset(tmp_path / "b", 10, default_templates(bars=1), seed=4)
    assert m1 == m2
    assert (tmp_path / "a/manifest.json").read_bytes() == (tmp_path / "b/manifest.json").read_bytes()
    for song in m1["songs"]:
        for key in ("wav", "beats", "annotation", "score"):
            assert (tmp_path / "a" / song[key]).read_bytes() == (tmp_path / "b" / song[key]).read_bytes()


def test_dataset_files_are_consistent(tmp_path):
    manifest = make_dataset(tmp_path, 4, default_templates(bars=2), seed=1)
    assert json.loads((tmp_path / "manifest.json").read_text()) == manifest
    for song in manifest["songs"]:
        clip = read_wav(tmp_path / song["wav"])
        period = 60.0 / song["tempo"] / 4
        assert abs(clip.samples.size / 44100 - song["bars"] * 16 * period) <= 0.010
        assert n_frames(clip.samples.size) >= 1
        grid = build_tatum_grid(read_beats(tmp_path / song["beats"]))
        back, stats = quantize_onsets(read_annotation(tmp_path / song["annotation"]), grid)
        assert back == load_score(tmp_path / song["score"]) and stats.union == 0


def test_repetitive_lm_corpus_beats_chance():
    corpus = make_lm_corpus(30, default_templates(bars=4, variation_rate=0.05), seed=0)
    model = train_bigram(corpus)
    assert corpus_score([bigram_nll(model, s) for s in corpus]).perplexity < 2.0
