import csv
import math

import numpy as np
import pytest

from tatumscribe.autograd import Tensor
from tatumscribe.autograd.gradcheck import gradcheck
from tatumscribe.errors import AlignmentError, ConfigError, DimensionError
from tatumscribe.lm import BigramLM, GruLM
from tatumscribe.score import DrumScore
from tatumscribe.training import (GumbelDraw, TrainConfig, TrainItem, gumbel_sigmoid, loss_parts,
                                  loss_total, loss_tran, train)
from tatumscribe.transcriber import Transcriber, TranscriberConfig

MICRO = TranscriberConfig(channels=[1], gru_layers=1, hidden=3)


def sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def random_items(n, n_frames, n_tatums, seed):
    rng = np.random.default_rng(seed)
    items = []
    for i in range(n):
        times = np.sort(rng.choice(np.arange(1, n_frames - 1), n_tatums, replace=False)) * 0.01
        score = DrumScore((rng.random((3, n_tatums)) < 0.4).astype(np.int8))
        items.append(TrainItem(rng.random((80, n_frames)), times, score, f"s{i}"))
    return items


def repeater_bigram(eps=1e-3):
    return BigramLM(np.tile([[1 - eps, eps], [eps, 1 - eps]], (3, 1, 1)))


# -- weighted cross entropy ----------------------------------------------------------
def test_perfect_prediction_is_near_zero(rng):
    y = (rng.random((3, 10)) < 0.5).astype(float)
    loss = float(loss_tran(Tensor(y), y, gamma=0.46).data)
    assert 0 <= loss < 30 * 0.46 * abs(math.log(1 - 1e-7)) + 30 * abs(math.log(1 - 1e-7))


def test_uniform_prediction_unit_weight():
    loss = loss_tran(Tensor(np.full((3, 7), 0.5)), np.zeros((3, 7)), gamma=1.0)
    assert float(loss.data) == pytest.approx(21 * math.log(2), abs=1e-12)


def test_weighted_cross_entropy_hand_value():
    loss = loss_tran(Tensor([[0.8, 0.3]]), np.array([[1, 0]]), gamma=0.5)
    assert float(loss.data) == pytest.approx(-(0.5 * math.log(0.8) + math.log(0.7)), abs=1e-14)
    assert float(loss.data) == pytest.approx(0.468, abs=5e-4)


def test_cross_entropy_shape_check():
    with pytest.raises(DimensionError):
        loss_tran(Tensor(np.full((3, 4), 0.5)), np.zeros((3, 5)), 0.5)


def test_cross_entropy_gradcheck(rng):
    phi = Tensor(rng.uniform(0.05, 0.95, size=(3, 6)), requires_grad=True)
    y = (rng.random((3, 6)) < 0.5).astype(float)
    assert gradcheck(lambda: loss_tran(phi, y, 0.61), [phi]) <= 1.0


# -- gumbel-sigmoid ------------------------------------------------------------------
def test_gumbel_outputs_in_unit_interval(rng):
    phi = Tensor(rng.random((3, 200)))
    y = gumbel_sigmoid(phi, 0.2, rng).data
    assert np.all((y >= 0) & (y <= 1))
    draw = GumbelDraw.sample((3, 200), np.random.default_rng(2))
    arg = (phi.data + draw.v1 - draw.v2) / 0.2
    y = gumbel_sigmoid(phi, 0.2, draw=draw).data
    moderate = np.abs(arg) < 30  # beyond this float64 rounds the sigmoid to 0 or 1
    assert np.all((y[moderate] > 0) & (y[moderate] < 1))


def test_gumbel_hard_limit(rng):
    phi = Tensor(rng.random((3, 50)))
    draw = GumbelDraw.sample((3, 50), rng)
    target = (phi.data + draw.v1 - draw.v2 > 0).astype(float)
    y = gumbel_sigmoid(phi, 1e-6, draw=draw).data
    assert np.abs(y - target).max() < 1e-6


@pytest.mark.parametrize("phi", [0.0, 0.5, 1.0])
def test_gumbel_acceptance_law(phi):
    rng = np.random.default_rng(11)
    y = gumbel_sigmoid(Tensor(np.full(100_000, phi)), 0.2, rng).data
    assert abs(np.mean(y > 0.5) - sigmoid(phi)) < 0.01


def test_gumbel_logit_variant():
    rng = np.random.default_rng(12)
    y = gumbel_sigmoid(Tensor(np.full(100_000, 0.3)), 0.2, rng, logit=True).data
    assert abs(np.mean(y > 0.5) - 0.3) < 0.01


def test_gumbel_requires_positive_tau(rng):
    with pytest.raises(ConfigError):
        gumbel_sigmoid(Tensor([0.5]), 0.0, rng)


# -- total loss ----------------------------------------------------------------------
def test_alpha_zero_is_plain_cross_entropy(rng):
    phi = Tensor(rng.uniform(0.1, 0.9, size=(3, 20)))
    y = (rng.random((3, 20)) < 0.4).astype(float)
    cfg = TrainConfig(lm_kind="bigram", alpha=0.0)
    gen = np.random.default_rng(0)
    state = gen.bit_generator.state
    total = loss_total(phi, y, repeater_bigram(), cfg, gen)
    assert float(total.data) == float(loss_tran(phi, y, cfg.gamma).data)
    assert gen.bit_generator.state == state  # no noise drawn


def test_alpha_without_language_model_rejected():
    with pytest.raises(ConfigError):
        TrainConfig(lm_kind="none", alpha=0.1)


def test_published_defaults():
    assert (TrainConfig(lm_kind="bigram").gamma, TrainConfig(lm_kind="bigram").alpha) == (0.46, 0.068)
    assert (TrainConfig(lm_kind="gru").gamma, TrainConfig(lm_kind="gru").alpha) == (0.61, 0.055)
    cfg = TrainConfig()
    assert (cfg.tau, cfg.threshold, cfg.clamp, cfg.alpha) == (0.2, 0.2, 1e-7, 0.0)


@pytest.mark.parametrize("kind", ["bigram", "gru"])
def test_total_loss_gradcheck_with_frozen_noise(kind, rng):
    m = 20
    lm = repeater_bigram(0.1) if kind == "bigram" else GruLM(hidden=4, n_layers=2, seed=1)
    if kind == "gru":
        lm.requires_grad_(False)
    cfg = TrainConfig(lm_kind=kind, tau=0.7)
    phi = Tensor(rng.uniform(0.1, 0.9, size=(3, m)), requires_grad=True)
    y = (rng.random((3, m)) < 0.4).astype(float)
    draw = GumbelDraw.sample((3, m), rng)
    assert gradcheck(lambda: loss_total(phi, y, lm, cfg, draw=draw), [phi]) <= 1.0


def test_regularizer_penalises_broken_repetition(rng):
    bar = (rng.random((3, 16)) < 0.4).astype(float)
    y = np.tile(bar, (1, 2))
    phi = np.clip(y, 0.05, 0.95)
    phi[:, 16:] = 1.0 - phi[:, 16:]  # second bar contradicts the first
    draw = GumbelDraw.sample(y.shape, rng)
    losses = [float(loss_total(Tensor(phi), y, repeater_bigram(),
                               TrainConfig(lm_kind="bigram", alpha=a), draw=draw).data)
              for a in (0.0, 0.05, 0.5)]
    assert losses[0] < losses[1] < losses[2]


def test_parts_add_up(rng):
    phi = Tensor(rng.uniform(0.1, 0.9, size=(3, 20)))
    y = (rng.random((3, 20)) < 0.4).astype(float)
    cfg = TrainConfig(lm_kind="bigram")
    total, tran, lang = loss_parts(phi, y, repeater_bigram(), cfg, np.random.default_rng(0))
    assert float(total.data) == pytest.approx(float(tran.data) + 0.068 * float(lang.data), rel=1e-14)


# -- training loop -------------------------------------------------------------------
def test_item_rejects_misaligned_score():
    with pytest.raises(AlignmentError):
        TrainItem(np.zeros((80, 10)), [0.01, 0.05], DrumScore.empty(3))


def test_training_is_deterministic(tmp_path):
    items = random_items(2, 30, 5, seed=0)
    cfg = TrainConfig(epochs=2, seed=3, model=MICRO)
    logs = []
    for run in range(2):
        _, hist = train(items, None, cfg, val=items[:1], log_path=tmp_path / f"log{run}.csv")
        logs.append(hist)
    assert logs[0][0].l_total == logs[1][0].l_total
    assert (tmp_path / "log0.csv").read_bytes() == (tmp_path / "log1.csv").read_bytes()
    rows = list(csv.reader(open(tmp_path / "log0.csv")))
    assert rows[0] == ["epoch", "l_tran", "l_lang", "l_total", "train_f", "val_f"]
    assert len(rows) == 3


def test_zero_alpha_matches_unregularized_run():
    items = random_items(3, 24, 4, seed=1)
    plain, _ = train(items, None, TrainConfig(epochs=2, seed=5, model=MICRO))
    zero, _ = train(items, GruLM(hidden=3, n_layers=1), TrainConfig(
        lm_kind="gru", alpha=0.0, gamma=0.46, epochs=2, seed=5, model=MICRO))
    for name, p in plain.parameters().items():
        np.testing.assert_array_equal(p.data, zero.parameters()[name].data)


def test_regularized_training_runs_and_logs_lang_term():
    items = random_items(2, 40, 18, seed=2)
    _, hist = train(items, repeater_bigram(0.05),
                    TrainConfig(lm_kind="bigram", epochs=1, seed=0, model=MICRO))
    assert hist[0].l_lang > 0
    assert hist[0].l_total == pytest.approx(hist[0].l_tran + 0.068 * hist[0].l_lang, rel=1e-12)


def test_micro_model_gradients_through_total_loss(backend):
    rng = np.random.default_rng(9)
    model = Transcriber(MICRO, seed=2)
    for p in model.parameters().values():
        p.data += rng.normal(scale=0.1, size=p.shape)
    model.out.weight.data *= 0.2
    lm = GruLM(hidden=3, n_layers=1, seed=4).requires_grad_(False)
    cfg = TrainConfig(lm_kind="gru", tau=0.8)
    spec = rng.random((80, 20))
    grid = [0.02, 0.07, 0.12, 0.17]
    y = (rng.random((3, 4)) < 0.5).astype(float)
    draw = GumbelDraw.sample((3, 4), rng)
    params = list(model.parameters().values())
    assert gradcheck(lambda: loss_total(model(spec, grid), y, lm, cfg, draw=draw), params) <= 1.0
