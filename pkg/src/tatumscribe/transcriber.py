"""Convolutional-recurrent transcriber mapping a mel spectrogram to tatum onsets.

The network has three stages:

``encode``
    3x3 convolutions with ReLU over the ``1 x 80 x T`` spectrogram; channels
    and mel bands are then flattened into ``D = C * 80`` features per frame.
``tatum_pool``
    max over the frames assigned to each tatum by the midpoint rule.
``decode``
    stacked GRU over the tatum sequence, dropout, a fully connected layer
    and an element-wise sigmoid giving ``K x M`` onset probabilities.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import HOP_SECONDS, INSTRUMENTS
from .autograd import Tensor, checkpoint, dropout, reshape, transpose, window_max
from .autograd.nn import ConvEncoder, GRUStack, Linear, Module
from .dsp import N_MELS
from .errors import CheckpointError, ConfigError, CoverageError, DimensionError
from .score import DrumScore, TatumGrid

PREFIX = "crnn."


@dataclass
class TranscriberConfig:
    channels: list = field(default_factory=lambda: [8, 8, 16, 16])
    gru_layers: int = 3
    hidden: int = 98
    dropout: float = 0.3
    n_mels: int = N_MELS
    k: int = len(INSTRUMENTS)
    threshold: float = 0.2

    def __post_init__(self):
        self.channels = [int(c) for c in self.channels]
        if not self.channels or min(self.channels) < 1:
            raise ConfigError(f"channels must be a nonempty list of positive ints, got {self.channels}")
        if self.gru_layers < 1 or self.hidden < 1:
            raise ConfigError("the decoder needs at least one GRU layer with a positive width")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError(f"threshold must lie in [0, 1], got {self.threshold}")

    @property
    def feature_dim(self) -> int:
        return self.channels[-1] * self.n_mels

    def to_dict(self) -> dict:
        return asdict(self)


def tatum_windows(tatum_times, n_frames: int, hop: float = HOP_SECONDS):
    """Frame windows ``[starts[m], stops[m])`` for each tatum.

    Frame ``t`` (at ``t * hop`` seconds) belongs to tatum ``m`` when it lies
    between the midpoints to the neighbouring tatums.  The first and last
    windows extend to the ends of the frame axis, so the windows partition
    all ``n_frames`` frames.
    """
    b = np.asarray(tatum_times, dtype=np.float64)
    if b.ndim != 1 or b.size == 0:
        raise DimensionError("need at least one tatum time")
    if n_frames < 1:
        raise DimensionError("need at least one frame")
    if b[-1] < 0.0 or b[0] >= n_frames * hop:
        raise CoverageError(
            f"tatum grid [{b[0]:.3f}, {b[-1]:.3f}] s lies outside the "
            f"{n_frames * hop:.3f} s frame range")
    frame_times = np.arange(n_frames) * hop
    bounds = np.searchsorted(frame_times, (b[:-1] + b[1:]) / 2.0, side="left")
    starts = np.concatenate([[0], bounds]).astype(np.int64)
    stops = np.concatenate([bounds, [n_frames]]).astype(np.int64)
    if stops[0] <= starts[0]:
        raise CoverageError("the first tatum window holds no frames")
    return starts, stops


def tatum_pool(features, tatum_times, hop: float = HOP_SECONDS) -> Tensor:
    """Max-pool ``D x T`` frame features to ``D x M`` tatum features."""
    if isinstance(tatum_times, TatumGrid):
        tatum_times = tatum_times.times
    n_frames = features.shape[-1]
    starts, stops = tatum_windows(tatum_times, n_frames, hop)
    return window_max(features, starts, stops)


class Transcriber(Module):
    """The CRNN; parameters are named ``encoder.*``, ``decoder.*`` and ``out.*``."""

    def __init__(self, cfg: TranscriberConfig | None = None, seed: int = 0):
        self.cfg = cfg or TranscriberConfig()
        rng = np.random.default_rng(seed)
        self.encoder = ConvEncoder(self.cfg.channels, rng)
        self.decoder = GRUStack(self.cfg.feature_dim, self.cfg.hidden, self.cfg.gru_layers, rng)
        self.out = Linear(self.cfg.hidden, self.cfg.k, rng, init="uniform")

    def encode(self, spec) -> Tensor:
        x = spec if isinstance(spec, Tensor) else Tensor(spec)
        if x.ndim != 2 or x.shape[0] != self.cfg.n_mels:
            raise DimensionError(
                f"expected a {self.cfg.n_mels} x T spectrogram, got shape {x.shape}")
        h = self.encoder(reshape(x, (1,) + x.shape))
        return reshape(h, (self.cfg.feature_dim, x.shape[1]))

    def decode(self, pooled: Tensor, training: bool = False,
               rng: np.random.Generator | None = None) -> Tensor:
        h = self.decoder(transpose(pooled))
        h = dropout(h, self.cfg.dropout, training, rng)
        return transpose(self.out(h).sigmoid())

    def __call__(self, spec, grid, training: bool = False,
                 rng: np.random.Generator | None = None) -> Tensor:
        """Onset probabilities ``K x M`` as a tensor on the autograd tape."""
        return self.decode(tatum_pool(self.encode(spec), grid), training, rng)

    def save(self, path) -> None:
        checkpoint.save(path, checkpoint.with_prefix(self.state_dict(), PREFIX))

    @classmethod
    def load(cls, path, cfg: TranscriberConfig | None = None) -> "Transcriber":
        """Restore a checkpoint; layer sizes not given by ``cfg`` come from the file."""
        state = checkpoint.strip_prefix(checkpoint.load(path), PREFIX)
        if not state:
            raise CheckpointError(f"{path}: no '{PREFIX}' tensors found")
        try:
            inferred = TranscriberConfig(
                channels=[state[f"encoder.convs.{i}.weight"].shape[0]
                          for i in range(sum(k.endswith(".weight") and k.startswith("encoder.")
                                             for k in state))],
                gru_layers=len({k.split(".")[2] for k in state if k.startswith("decoder.layers.")}),
                hidden=state["decoder.layers.0.w_hh"].shape[1],
                k=state["out.bias"].shape[0],
            )
        except KeyError as exc:
            raise CheckpointError(f"{path}: missing tensor {exc}") from None
        if cfg is not None:
            inferred.dropout, inferred.threshold = cfg.dropout, cfg.threshold
        model = cls(inferred)
        model.load_state_dict(state)
        return model


def binarize(phi: np.ndarray, threshold: float = 0.2) -> DrumScore:
    """Onset wherever ``phi >= threshold``."""
    return DrumScore((np.asarray(phi) >= threshold).astype(np.int8))


def transcribe(model: Transcriber, spec, grid,
               threshold: float | None = None) -> tuple[np.ndarray, DrumScore]:
    """Run the network in inference mode; returns ``(phi, score)``."""
    times = grid.times if isinstance(grid, TatumGrid) else np.asarray(grid, dtype=np.float64)
    phi = model(spec, times, training=False).data
    score = binarize(phi, model.cfg.threshold if threshold is None else threshold)
    score.tatum_times = times.copy()
    return phi, score
