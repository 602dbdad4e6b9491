"""Supervised transcriber training with a language-model naturalness term.

The objective for one song is

    L_total = L_tran(phi | Y_hat) + alpha * L_lang(Y)

where ``L_tran`` is a class-weighted binary cross entropy, ``Y`` is a
relaxed binary sample drawn from ``phi`` with the gumbel-sigmoid trick and
``L_lang`` is the negative log-likelihood of ``Y`` under a frozen,
pretrained language model.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .autograd import AdamW, AdamWConfig, Tensor, backward, clip, log
from .errors import AlignmentError, ConfigError, DimensionError, InsufficientDataError
from .evaluation import PrfResult, micro_average, tatum_prf
from .lm import BigramLM, GruLM, bigram_nll_relaxed, gru_lm_nll_tensor
from .score import DrumScore
from .transcriber import Transcriber, TranscriberConfig, transcribe

logger = logging.getLogger(__name__)

# published weights per regularizer; "none" borrows the bi-gram's gamma
DEFAULTS = {"none": (0.46, 0.0), "bigram": (0.46, 0.068), "gru": (0.61, 0.055)}
LOG_FIELDS = ("epoch", "l_tran", "l_lang", "l_total", "train_f", "val_f")


@dataclass
class TrainConfig:
    lm_kind: str = "none"
    gamma: float | None = None
    alpha: float | None = None
    tau: float = 0.2
    threshold: float = 0.2
    clamp: float = 1e-7
    epochs: int = 50
    seed: int = 0
    logit_gumbel: bool = False
    log_f_every_epoch: bool = True
    optim: AdamWConfig = field(default_factory=AdamWConfig)
    model: TranscriberConfig = field(default_factory=TranscriberConfig)

    def __post_init__(self):
        if self.lm_kind not in DEFAULTS:
            raise ConfigError(f"lm_kind must be one of {sorted(DEFAULTS)}, got {self.lm_kind!r}")
        gamma, alpha = DEFAULTS[self.lm_kind]
        self.gamma = gamma if self.gamma is None else float(self.gamma)
        self.alpha = alpha if self.alpha is None else float(self.alpha)
        if isinstance(self.optim, dict):
            self.optim = AdamWConfig(**self.optim)
        if isinstance(self.model, dict):
            self.model = TranscriberConfig(**self.model)
        if self.gamma <= 0:
            raise ConfigError(f"gamma must be positive, got {self.gamma}")
        if self.alpha < 0:
            raise ConfigError(f"alpha must be nonnegative, got {self.alpha}")
        if self.alpha > 0 and self.lm_kind == "none":
            raise ConfigError("alpha > 0 needs a language model (lm_kind is 'none')")
        if self.tau <= 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if not 0.0 < self.clamp < 0.5:
            raise ConfigError(f"clamp must lie in (0, 0.5), got {self.clamp}")
        if self.epochs < 0:
            raise ConfigError("epochs must be nonnegative")
        self.model.threshold = self.threshold

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainItem:
    """One song: an ``80 x T`` spectrogram, its tatum times and the target score."""

    spec: np.ndarray
    tatum_times: np.ndarray
    score: DrumScore
    name: str = ""

    def __post_init__(self):
        self.spec = np.asarray(self.spec, dtype=np.float64)
        self.tatum_times = np.asarray(self.tatum_times, dtype=np.float64)
        if self.score.n_tatums != self.tatum_times.size:
            raise AlignmentError(
                f"{self.name or 'item'}: score has {self.score.n_tatums} tatums, "
                f"grid has {self.tatum_times.size}")


@dataclass
class GumbelDraw:
    u1: np.ndarray
    u2: np.ndarray

    @classmethod
    def sample(cls, shape, rng: np.random.Generator) -> "GumbelDraw":
        tiny = np.finfo(np.float64).tiny
        return cls(rng.uniform(tiny, 1.0, size=shape), rng.uniform(tiny, 1.0, size=shape))

    @property
    def v1(self) -> np.ndarray:
        return -np.log(-np.log(self.u1))

    @property
    def v2(self) -> np.ndarray:
        return -np.log(-np.log(self.u2))


@dataclass
class EpochLog:
    epoch: int
    l_tran: float
    l_lang: float
    l_total: float
    train_f: float
    val_f: float


def loss_tran(phi: Tensor, target, gamma: float, clamp: float = 1e-7) -> Tensor:
    """Onset-weighted binary cross entropy, summed over all cells.

    ``gamma`` scales the onset terms.  Probabilities are clamped to
    ``[clamp, 1 - clamp]`` inside the logs.
    """
    y = np.asarray(target.onsets if isinstance(target, DrumScore) else target, dtype=np.float64)
    if y.shape != phi.shape:
        raise DimensionError(f"phi {phi.shape} and target {y.shape} differ in shape")
    p = clip(phi, clamp, 1.0 - clamp)
    return -(log(p) * (gamma * y) + log(1.0 - p) * (1.0 - y)).sum()


def gumbel_sigmoid(phi: Tensor, tau: float, rng: np.random.Generator | None = None,
                   draw: GumbelDraw | None = None, logit: bool = False) -> Tensor:
    """Relaxed Bernoulli sample ``sigmoid((phi + V1 - V2) / tau)``.

    ``V1`` and ``V2`` are standard gumbel variates, constant for the
    gradient.  With ``logit=True`` the logit of ``phi`` replaces ``phi``.
    Pass ``draw`` to reuse fixed noise.
    """
    if tau <= 0:
        raise ConfigError(f"tau must be positive, got {tau}")
    if draw is None:
        if rng is None:
            raise ValueError("gumbel_sigmoid needs a generator or a fixed draw")
        draw = GumbelDraw.sample(phi.shape, rng)
    x = phi
    if logit:
        x = log(phi) - log(1.0 - phi)
    return ((x + (draw.v1 - draw.v2)) * (1.0 / tau)).sigmoid()


def lang_nll(lm, y: Tensor) -> Tensor:
    if isinstance(lm, BigramLM):
        return bigram_nll_relaxed(lm, y)
    if isinstance(lm, GruLM):
        return gru_lm_nll_tensor(lm, y)
    raise ConfigError(f"unsupported language model {type(lm).__name__}")


def loss_parts(phi: Tensor, target, lm, cfg: TrainConfig,
               rng: np.random.Generator | None = None,
               draw: GumbelDraw | None = None) -> tuple[Tensor, Tensor, Tensor | None]:
    """``(L_total, L_tran, L_lang)``; ``L_lang`` is None when ``alpha`` is 0.

    No gumbel noise is drawn when the regularizer is off.
    """
    tran = loss_tran(phi, target, cfg.gamma, cfg.clamp)
    if cfg.alpha == 0:
        return tran, tran, None
    if lm is None:
        raise ConfigError("alpha > 0 needs a language model")
    y = gumbel_sigmoid(phi, cfg.tau, rng, draw, cfg.logit_gumbel)
    # rounding can push the sample onto 0 or 1, which the LM accepts
    lang = lang_nll(lm, y)
    return tran + lang * cfg.alpha, tran, lang


def loss_total(phi: Tensor, target, lm, cfg: TrainConfig,
               rng: np.random.Generator | None = None,
               draw: GumbelDraw | None = None) -> Tensor:
    return loss_parts(phi, target, lm, cfg, rng, draw)[0]


def evaluate_f(model: Transcriber, items: Sequence[TrainItem], threshold: float) -> PrfResult:
    """Micro-averaged tatum F over a set of songs, inference mode."""
    results = []
    for item in items:
        _, est = transcribe(model, item.spec, item.tatum_times, threshold)
        results.append(tatum_prf(est, item.score)[0])
    return micro_average(results)


def train(dataset: Sequence[TrainItem], lm, cfg: TrainConfig,
          val: Sequence[TrainItem] = (), log_path=None,
          on_epoch: Callable[[EpochLog], bool | None] | None = None
          ) -> tuple[Transcriber, list[EpochLog]]:
    """Train a fresh transcriber, one optimizer step per song.

    Four generators derive from ``cfg.seed``: parameter initialisation,
    song order, dropout masks and gumbel noise.  Keeping the gumbel stream
    separate means switching the regularizer on or off leaves the song order
    and dropout masks unchanged.

    ``on_epoch`` sees each epoch's log row; returning True ends training
    early.
    """
    dataset = list(dataset)
    if not dataset:
        raise InsufficientDataError("training needs at least one song")
    for item in list(dataset) + list(val):
        if item.score.n_tatums != item.tatum_times.size:
            raise AlignmentError(f"{item.name}: score and grid lengths differ")
    if cfg.alpha > 0:
        if lm is None:
            raise ConfigError("alpha > 0 needs a language model")
        if isinstance(lm, GruLM):
            lm.requires_grad_(False)
    model = Transcriber(cfg.model, seed=cfg.seed)
    opt = AdamW.from_config(model.parameters(), cfg.optim)
    order_rng = np.random.default_rng([cfg.seed, 1])
    dropout_rng = np.random.default_rng([cfg.seed, 2])
    gumbel_rng = np.random.default_rng([cfg.seed, 3])
    history: list[EpochLog] = []
    writer = None
    fh = open(log_path, "w", newline="", encoding="utf-8") if log_path else None
    try:
        if fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(LOG_FIELDS)
        for epoch in range(1, cfg.epochs + 1):
            sums = np.zeros(3)
            for i in order_rng.permutation(len(dataset)):
                item = dataset[i]
                opt.zero_grad()
                phi = model(item.spec, item.tatum_times, training=True, rng=dropout_rng)
                total, tran, lang = loss_parts(phi, item.score, lm, cfg, gumbel_rng)
                sums += (float(tran.data), 0.0 if lang is None else float(lang.data),
                         float(total.data))
                backward(total)
                opt.step()
            sums /= len(dataset)
            last = epoch == cfg.epochs
            want_f = cfg.log_f_every_epoch or last
            train_f = evaluate_f(model, dataset, cfg.threshold).f_measure if want_f else float("nan")
            val_f = (evaluate_f(model, val, cfg.threshold).f_measure
                     if val and want_f else float("nan"))
            row = EpochLog(epoch, *sums.tolist(), train_f, val_f)
            history.append(row)
            logger.info("epoch %d: l_tran %.4f l_lang %.4f l_total %.4f train_f %.4f val_f %.4f",
                        epoch, row.l_tran, row.l_lang, row.l_total, row.train_f, row.val_f)
            if writer:
                writer.writerow([epoch] + [f"{v:.10g}" for v in sums] +
                                [f"{train_f:.6f}", f"{val_f:.6f}"])
                fh.flush()
            if on_epoch is not None and on_epoch(row):
                break
    finally:
        if fh:
            fh.close()
    return model, history
