"""Frame-level comparison system.

A CRNN with the transcriber's encoder and a GRU decoder that runs over
frames instead of tatums.  Its frame activations are decoded with a
three-condition peak picker and the picked onsets are then snapped to the
tatum grid.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import HOP_SECONDS
from . import kernels
from .autograd import AdamW, AdamWConfig, Tensor, backward, checkpoint, dropout, reshape, transpose
from .autograd.nn import ConvEncoder, GRUStack, Linear, Module
from .errors import CheckpointError, ConfigError, DimensionError, InsufficientDataError
from .score import DrumScore, OnsetAnnotation, TatumGrid, quantize_onsets, score_to_frames
from .training import TrainItem, loss_tran
from .transcriber import TranscriberConfig

logger = logging.getLogger(__name__)

PREFIX = "frame."
BETA = 8.0


@dataclass
class PeakPickConfig:
    threshold: float = 0.2
    w1: int = 2
    w2: int = 0
    w3: int = 2
    w4: int = 0
    w5: int = 2

    def __post_init__(self):
        if min(self.w1, self.w2, self.w3, self.w4, self.w5) < 0:
            raise ConfigError("peak-picking windows must be nonnegative")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError(f"peak-picking threshold must lie in [0, 1], got {self.threshold}")


@dataclass
class BaselineConfig:
    beta: float = BETA
    clamp: float = 1e-7
    epochs: int = 50
    seed: int = 0
    optim: AdamWConfig = field(default_factory=AdamWConfig)
    model: TranscriberConfig = field(default_factory=TranscriberConfig)
    peaks: PeakPickConfig = field(default_factory=PeakPickConfig)

    def __post_init__(self):
        if isinstance(self.optim, dict):
            self.optim = AdamWConfig(**self.optim)
        if isinstance(self.model, dict):
            self.model = TranscriberConfig(**self.model)
        if isinstance(self.peaks, dict):
            self.peaks = PeakPickConfig(**self.peaks)
        if self.beta <= 0:
            raise ConfigError(f"beta must be positive, got {self.beta}")
        if self.epochs < 0:
            raise ConfigError("epochs must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)


def frame_loss(phi: Tensor, target, beta: float = BETA, clamp: float = 1e-7) -> Tensor:
    """Onset-weighted cross entropy over ``K x T`` frame activations."""
    return loss_tran(phi, target, beta, clamp)


def peak_pick(act, cfg: PeakPickConfig | None = None) -> list[np.ndarray]:
    """Onset frame indices for each row of a ``K x T`` activation matrix."""
    cfg = cfg or PeakPickConfig()
    act = np.asarray(act, dtype=np.float64)
    if act.ndim == 1:
        act = act[None, :]
    if act.ndim != 2:
        raise DimensionError(f"activations must be K x T, got shape {act.shape}")
    return [kernels.peak_pick(np.ascontiguousarray(row), cfg.threshold,
                              cfg.w1, cfg.w2, cfg.w3, cfg.w4, cfg.w5) for row in act]


def frames_to_tatums(onsets: Sequence[np.ndarray], grid: TatumGrid,
                     hop: float = HOP_SECONDS) -> DrumScore:
    """Snap frame onsets to their nearest tatums; several onsets on one tatum collapse."""
    events = [(k, int(t) * hop) for k, frames in enumerate(onsets) for t in frames]
    score, _ = quantize_onsets(OnsetAnnotation(events), grid)
    return score


class FrameCRNN(Module):
    """Encoder shared in design with the transcriber, GRU decoder over frames."""

    def __init__(self, cfg: TranscriberConfig | None = None, seed: int = 0):
        self.cfg = cfg or TranscriberConfig()
        rng = np.random.default_rng(seed)
        self.encoder = ConvEncoder(self.cfg.channels, rng)
        self.decoder = GRUStack(self.cfg.feature_dim, self.cfg.hidden, self.cfg.gru_layers, rng)
        self.out = Linear(self.cfg.hidden, self.cfg.k, rng, init="uniform")

    def __call__(self, spec, training: bool = False,
                 rng: np.random.Generator | None = None) -> Tensor:
        x = spec if isinstance(spec, Tensor) else Tensor(spec)
        if x.ndim != 2 or x.shape[0] != self.cfg.n_mels:
            raise DimensionError(
                f"expected a {self.cfg.n_mels} x T spectrogram, got shape {x.shape}")
        feats = reshape(self.encoder(reshape(x, (1,) + x.shape)),
                        (self.cfg.feature_dim, x.shape[1]))
        h = dropout(self.decoder(transpose(feats)), self.cfg.dropout, training, rng)
        return transpose(self.out(h).sigmoid())

    def save(self, path) -> None:
        checkpoint.save(path, checkpoint.with_prefix(self.state_dict(), PREFIX))

    @classmethod
    def load(cls, path) -> "FrameCRNN":
        state = checkpoint.strip_prefix(checkpoint.load(path), PREFIX)
        if not state:
            raise CheckpointError(f"{path}: no '{PREFIX}' tensors found")
        try:
            n_conv = sum(k.startswith("encoder.") and k.endswith(".weight") for k in state)
            cfg = TranscriberConfig(
                channels=[state[f"encoder.convs.{i}.weight"].shape[0] for i in range(n_conv)],
                gru_layers=len({k.split(".")[2] for k in state if k.startswith("decoder.layers.")}),
                hidden=state["decoder.layers.0.w_hh"].shape[1],
                k=state["out.bias"].shape[0])
        except KeyError as exc:
            raise CheckpointError(f"{path}: missing tensor {exc}") from None
        model = cls(cfg)
        model.load_state_dict(state)
        return model


def frame_targets(item: TrainItem) -> np.ndarray:
    """Binary ``K x T`` targets rendered from the tatum score."""
    frames, _ = score_to_frames(item.score, TatumGrid(item.tatum_times), item.spec.shape[1])
    return frames


def transcribe_frames(model: FrameCRNN, spec, grid: TatumGrid,
                      peaks: PeakPickConfig | None = None) -> tuple[np.ndarray, DrumScore]:
    """Frame activations and the tatum score obtained from their peaks."""
    act = model(spec, training=False).data
    score = frames_to_tatums(peak_pick(act, peaks), grid)
    return act, score


def train_baseline(dataset: Sequence[TrainItem], cfg: BaselineConfig,
                   log_path=None) -> tuple[FrameCRNN, list[float]]:
    """Fit the frame CRNN, one step per song; returns the mean loss of each epoch."""
    dataset = list(dataset)
    if not dataset:
        raise InsufficientDataError("training needs at least one song")
    targets = [frame_targets(item) for item in dataset]
    model = FrameCRNN(cfg.model, seed=cfg.seed)
    opt = AdamW.from_config(model.parameters(), cfg.optim)
    order_rng = np.random.default_rng([cfg.seed, 1])
    dropout_rng = np.random.default_rng([cfg.seed, 2])
    history = []
    fh = open(log_path, "w", newline="", encoding="utf-8") if log_path else None
    try:
        writer = csv.writer(fh, lineterminator="\n") if fh else None
        if writer:
            writer.writerow(("epoch", "l_frame"))
        for epoch in range(1, cfg.epochs + 1):
            total = 0.0
            for i in order_rng.permutation(len(dataset)):
                opt.zero_grad()
                phi = model(dataset[i].spec, training=True, rng=dropout_rng)
                loss = frame_loss(phi, targets[i], cfg.beta, cfg.clamp)
                total += float(loss.data)
                backward(loss)
                opt.step()
            history.append(total / len(dataset))
            logger.info("baseline epoch %d: l_frame %.4f", epoch, history[-1])
            if writer:
                writer.writerow((epoch, f"{history[-1]:.10g}"))
    finally:
        if fh:
            fh.close()
    return model, history
