import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bce_sum
from tatumscribe.autograd import Tensor
from tatumscribe.autograd.gradcheck import gradcheck
from tatumscribe.baseline import (BaselineConfig, FrameCRNN, PeakPickConfig, frame_loss,
                                  frames_to_tatums, peak_pick, train_baseline, transcribe_frames)
from tatumscribe.errors import ConfigError
from tatumscribe.score import DrumScore, TatumGrid
from tatumscribe.training import TrainItem
from tatumscribe.transcriber import TranscriberConfig

MICRO = TranscriberConfig(channels=[1], gru_layers=1, hidden=3)


# -- frame loss ----------------------------------------------------------------------
def test_frame_loss_uniform():
    loss = frame_loss(Tensor(np.full((3, 9), 0.5)), np.zeros((3, 9)), beta=1.0)
    assert float(loss.data) == pytest.approx(27 * math.log(2), abs=1e-12)


def test_frame_loss_perfect(rng):
    y = (rng.random((3, 9)) < 0.3).astype(float)
    assert float(frame_loss(Tensor(y), y).data) < 1e-5


def test_frame_loss_hand_value():
    loss = float(frame_loss(Tensor([[0.9, 0.1]]), np.array([[1, 0]]), beta=8.0).data)
    assert abs(loss - -(8 * math.log(0.9) + math.log(0.9))) < 1e-12
    assert loss == pytest.approx(0.948, abs=5e-4)


def test_frame_loss_matches_loop(rng):
    p = rng.uniform(0.01, 0.99, size=(3, 15))
    y = (rng.random((3, 15)) < 0.4).astype(float)
    assert abs(float(frame_loss(Tensor(p), y).data) - bce_sum(y, p, 8.0)) < 1e-10


def test_frame_loss_gradcheck(rng):
    p = Tensor(rng.uniform(0.05, 0.95, size=(3, 8)), requires_grad=True)
    y = (rng.random((3, 8)) < 0.4).astype(float)
    assert gradcheck(lambda: frame_loss(p, y), [p]) <= 1.0


# -- peak picking --------------------------------------------------------------------
def test_flat_curve_has_no_peaks(backend):
    assert peak_pick(np.full(20, 0.3))[0].tolist() == []


def test_single_spike(backend):
    assert peak_pick(np.array([0.0, 0.0, 1.0, 0.0, 0.0]))[0].tolist() == [2]


def test_twin_spikes_two_apart(backend):
    act = np.array([0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0])
    assert peak_pick(act)[0].tolist() == [2]


def test_twin_spikes_three_apart(backend):
    act = np.array([0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0])
    assert peak_pick(act)[0].tolist() == [2, 5]


def test_rows_are_independent(backend):
    act = np.zeros((3, 6))
    act[0, 1] = act[2, 4] = 0.9
    assert [r.tolist() for r in peak_pick(act)] == [[1], [], [4]]


def test_degenerate_windows_select_everything(backend, rng):
    act = rng.random(25)
    cfg = PeakPickConfig(threshold=0.0, w1=0, w2=0, w3=0, w4=0, w5=0)
    assert peak_pick(act, cfg)[0].tolist() == list(range(25))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(0, 3), st.integers(0, 3), st.integers(0, 4))
def test_peak_properties(seed, w1, w2, w5):
    act = np.random.default_rng(seed).random(40)
    cfg = PeakPickConfig(0.1, w1, w2, 2, 0, w5)
    picks = peak_pick(act, cfg)[0]
    assert np.all(np.diff(picks) > w5)
    for t in picks:
        assert act[t] >= act[max(0, t - w1):t + w2 + 1].max()


def test_peak_config_validation():
    with pytest.raises(ConfigError):
        PeakPickConfig(w1=-1)
    with pytest.raises(ConfigError):
        PeakPickConfig(threshold=1.5)


# -- frames to tatums ----------------------------------------------------------------
def test_frames_to_tatums_cases():
    grid = TatumGrid(np.arange(8) * 0.25)
    assert frames_to_tatums([[], [], []], grid) == DrumScore.empty(8)
    score = frames_to_tatums([np.array([25]), [], []], grid)
    assert np.flatnonzero(score.onsets[0]).tolist() == [1]
    merged = frames_to_tatums([[], np.array([24, 26]), []], grid)
    assert merged.onsets[1].tolist() == [0, 1, 0, 0, 0, 0, 0, 0]


# -- frame network -------------------------------------------------------------------
def test_frame_network_shapes_and_range(rng):
    act = FrameCRNN(MICRO, seed=1)(rng.random((80, 17))).data
    assert act.shape == (3, 17)
    assert np.all((act >= 0) & (act <= 1))


def test_frame_network_gradcheck(backend):
    rng = np.random.default_rng(4)
    model = FrameCRNN(MICRO, seed=3)
    for p in model.parameters().values():
        p.data += rng.normal(scale=0.1, size=p.shape)
    model.out.weight.data *= 0.2
    spec = rng.random((80, 6))
    y = (rng.random((3, 6)) < 0.3).astype(float)
    params = list(model.parameters().values())
    assert gradcheck(lambda: frame_loss(model(spec), y), params) <= 1.0


def test_baseline_training_round_trip(tmp_path, rng):
    items = []
    for i in range(2):
        score = DrumScore((rng.random((3, 4)) < 0.5).astype(np.int8))
        items.append(TrainItem(rng.random((80, 30)), [0.02, 0.09, 0.16, 0.23], score, f"s{i}"))
    cfg = BaselineConfig(epochs=2, seed=1, model=MICRO)
    model, hist = train_baseline(items, cfg, log_path=tmp_path / "log.csv")
    again, hist2 = train_baseline(items, cfg)
    assert hist == hist2 and len(hist) == 2
    model.save(tmp_path / "frame.tscb")
    loaded = FrameCRNN.load(tmp_path / "frame.tscb")
    act, score = transcribe_frames(loaded, items[0].spec, TatumGrid(items[0].tatum_times))
    np.testing.assert_array_equal(act, model(items[0].spec).data)
    assert score.n_tatums == 4
