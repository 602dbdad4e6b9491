"""Symbolic drum-score language models.

Two priors over binary ``K x M`` tatum grids:

* a skip-type bi-gram that predicts each cell from the same instrument one
  bar (16 tatums) earlier, and
* a GRU network that predicts the whole column from all previous columns.

Both report negative log-likelihood in nats and a perplexity expressed per
binary symbol in base 2, so a fair-coin predictor scores exactly 2.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import INSTRUMENTS
from .autograd import AdamW, AdamWConfig, Tensor, backward, concat, softplus, transpose
from .autograd import checkpoint
from .autograd.nn import GRUStack, Linear, Module
from .autograd.tensor import stable_sigmoid
from .errors import DomainError, InsufficientDataError
from .score import DrumScore

logger = logging.getLogger(__name__)

SKIP = 16
LN2 = math.log(2.0)


@dataclass(frozen=True)
class LmScore:
    nll: float
    n_symbols: int

    @property
    def bits_per_symbol(self) -> float:
        return self.nll / LN2 / self.n_symbols

    @property
    def perplexity(self) -> float:
        return 2.0 ** self.bits_per_symbol

    def __add__(self, other: "LmScore") -> "LmScore":
        return LmScore(self.nll + other.nll, self.n_symbols + other.n_symbols)


def corpus_score(scores: Sequence[LmScore]) -> LmScore:
    """Pool log-likelihoods and symbol counts over a corpus."""
    total = LmScore(0.0, 0)
    for s in scores:
        total = total + s
    return total


def _onsets(score) -> np.ndarray:
    return score.onsets if isinstance(score, DrumScore) else np.asarray(score)


# -- skip-type bi-gram ---------------------------------------------------------------
@dataclass
class BigramLM:
    """Per-instrument 2x2 tables ``tables[k, A, B] = p(Y[k,m]=B | Y[k,m-16]=A)``."""

    tables: np.ndarray
    skip: int = SKIP
    instruments: tuple = INSTRUMENTS

    def __post_init__(self):
        self.tables = np.asarray(self.tables, dtype=np.float64)
        if self.tables.shape != (len(self.instruments), 2, 2):
            raise ValueError(f"bigram tables must be K x 2 x 2, got {self.tables.shape}")
        if np.any(self.tables <= 0) or np.any(self.tables > 1):
            raise ValueError("bigram probabilities must lie in (0, 1]")
        if not np.allclose(self.tables.sum(axis=2), 1.0, atol=1e-12, rtol=0):
            raise ValueError("bigram rows must sum to 1")

    @classmethod
    def uniform(cls) -> "BigramLM":
        return cls(np.full((len(INSTRUMENTS), 2, 2), 0.5))

    def to_json(self) -> dict:
        return {"kind": "bigram", "skip": self.skip,
                "tables": {name: self.tables[k].tolist()
                           for k, name in enumerate(self.instruments)}}

    @classmethod
    def from_json(cls, obj: dict) -> "BigramLM":
        if obj.get("kind", "bigram") != "bigram":
            raise ValueError(f"not a bigram model: kind={obj.get('kind')!r}")
        names = tuple(obj["tables"])
        return cls(np.array([obj["tables"][n] for n in names]), obj.get("skip", SKIP), names)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "BigramLM":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def train_bigram(corpus: Sequence[DrumScore], pooled: bool = False) -> BigramLM:
    """Add-one smoothed transition tables over tatums 17..M of every score.

    With ``pooled=True`` the counts of all instruments are merged into one
    table shared by every instrument.
    """
    if not corpus:
        raise InsufficientDataError("bigram training needs a nonempty corpus")
    counts = np.zeros((len(INSTRUMENTS), 2, 2))
    used = 0
    for score in corpus:
        y = _onsets(score).astype(np.int64)
        if y.shape[1] <= SKIP:
            continue
        used += 1
        prev, cur = y[:, :-SKIP], y[:, SKIP:]
        for a in (0, 1):
            for b in (0, 1):
                counts[:, a, b] += ((prev == a) & (cur == b)).sum(axis=1)
    if not used:
        raise InsufficientDataError(f"every score is shorter than {SKIP + 1} tatums")
    if pooled:
        counts = np.broadcast_to(counts.sum(axis=0), counts.shape).copy()
    tables = (counts + 1.0) / (counts.sum(axis=2, keepdims=True) + 2.0)
    return BigramLM(tables)


def bigram_nll(model: BigramLM, score) -> LmScore:
    y = _onsets(score).astype(np.int64)
    k_count, m_count = y.shape
    if m_count <= SKIP:
        raise InsufficientDataError(
            f"the skip bi-gram likelihood needs more than {SKIP} tatums, got {m_count}")
    rows = np.arange(k_count)[:, None]
    probs = model.tables[rows, y[:, :-SKIP], y[:, SKIP:]]
    return LmScore(float(-np.log(probs).sum()), k_count * (m_count - SKIP))


def bigram_nll_relaxed(model: BigramLM, y: Tensor) -> Tensor:
    """Differentiable bi-gram NLL for real-valued ``y`` in [0, 1].

    Each transition probability is interpolated bilinearly between the four
    table entries using weights ``y`` / ``1 - y``; it equals the table lookup
    when ``y`` is binary.
    """
    if y.shape[1] <= SKIP:
        raise InsufficientDataError(f"need more than {SKIP} tatums, got {y.shape[1]}")
    prev = y[:, :-SKIP]
    cur = y[:, SKIP:]
    pi = model.tables
    p00, p01 = pi[:, 0, 0][:, None], pi[:, 0, 1][:, None]
    p10, p11 = pi[:, 1, 0][:, None], pi[:, 1, 1][:, None]
    # expand the bilinear form: p = p00 + prev*(p10-p00) + cur*(p01-p00) + prev*cur*(p00-p01-p10+p11)
    prob = (prev * (p10 - p00) + cur * (p01 - p00)
            + prev * cur * (p00 - p01 - p10 + p11)) + p00
    return -(prob.log().sum())


# -- GRU language model ----------------------------------------------------------------
class GruLM(Module):
    """Stacked GRU over previous score columns with a sigmoid output per instrument."""

    def __init__(self, hidden: int = 64, n_layers: int = 3, seed: int = 0,
                 k: int = len(INSTRUMENTS)):
        rng = np.random.default_rng(seed)
        self.k = k
        self.rnn = GRUStack(k, hidden, n_layers, rng)
        self.out = Linear(hidden, k, rng, init="he")

    @property
    def hidden(self) -> int:
        return self.rnn.layers[0].hidden

    def logits(self, y: Tensor) -> Tensor:
        """Teacher-forced logits ``M x K``; step m sees columns ``1..m-1``."""
        inputs = concat([Tensor(np.zeros((1, self.k))), transpose(y)[:-1]], axis=0)
        return self.out(self.rnn(inputs))

    def predict(self, score) -> np.ndarray:
        """Next-column onset probabilities, ``K x M``."""
        return stable_sigmoid(self.logits(Tensor(_onsets(score))).data).T

    def save(self, path) -> None:
        checkpoint.save(path, checkpoint.with_prefix(self.state_dict(), "lm."))

    @classmethod
    def load(cls, path) -> "GruLM":
        state = checkpoint.strip_prefix(checkpoint.load(path), "lm.")
        n_layers = len({k.split(".")[2] for k in state if k.startswith("rnn.layers.")})
        hidden = state["rnn.layers.0.w_hh"].shape[1]
        k = state["rnn.layers.0.w_ih"].shape[1]
        model = cls(hidden, n_layers, k=k)
        model.load_state_dict(state)
        return model


def gru_lm_nll_tensor(model: GruLM, y) -> Tensor:
    """Differentiable teacher-forced NLL (nats) of a binary or soft ``K x M`` grid."""
    y = y if isinstance(y, Tensor) else Tensor(_onsets(y))
    if y.ndim != 2 or y.shape[0] != model.k or y.shape[1] < 1:
        raise ValueError(f"expected a {model.k} x M grid, got shape {y.shape}")
    if np.any(y.data < 0.0) or np.any(y.data > 1.0) or not np.all(np.isfinite(y.data)):
        raise DomainError("language-model inputs must lie in [0, 1]")
    logits = model.logits(y)
    target = transpose(y)
    # -[y log s(l) + (1-y) log(1-s(l))] == softplus(l) - y*l
    return (softplus(logits) - target * logits).sum()


def gru_lm_nll(model: GruLM, score) -> LmScore:
    y = _onsets(score) if not isinstance(score, Tensor) else score.data
    value = gru_lm_nll_tensor(model, Tensor(np.asarray(y, dtype=np.float64)))
    return LmScore(float(value.data), int(np.asarray(y).size))


def train_gru_lm(corpus: Sequence[DrumScore], epochs: int, seed: int, hidden: int = 64,
                 n_layers: int = 3, optim: AdamWConfig | None = None,
                 on_epoch=None, val: Sequence[DrumScore] = ()) -> tuple[GruLM, list[float]]:
    """Fit a GRU LM by teacher forcing, one optimizer step per score.

    Returns the model and the mean per-symbol training NLL (nats) of each
    epoch.  ``epochs=0`` returns the initialisation untouched.  When ``val``
    scores are given, the parameters of the epoch with the lowest validation
    NLL are restored at the end.
    """
    if not corpus:
        raise InsufficientDataError("GRU LM training needs a nonempty corpus")
    model = GruLM(hidden, n_layers, seed=seed)
    opt = AdamW.from_config(model.parameters(), optim or AdamWConfig())
    order_rng = np.random.default_rng([seed, 1])
    data = [Tensor(_onsets(s).astype(np.float64)) for s in corpus]
    history = []
    best, best_state = math.inf, None
    for epoch in range(epochs):
        total, symbols = 0.0, 0
        for i in order_rng.permutation(len(data)):
            opt.zero_grad()
            loss = gru_lm_nll_tensor(model, data[i])
            total += float(loss.data)
            symbols += data[i].size
            backward(loss)
            opt.step()
        history.append(total / symbols)
        if val:
            score = corpus_score([gru_lm_nll(model, s) for s in val]).bits_per_symbol
            if score < best:
                best, best_state = score, model.state_dict()
            logger.info("lm epoch %d: nll/symbol %.5f, val bits/symbol %.5f",
                        epoch + 1, history[-1], score)
        else:
            logger.info("lm epoch %d: nll/symbol %.5f", epoch + 1, history[-1])
        if on_epoch is not None:
            on_epoch(epoch + 1, history[-1])
    if best_state is not None:
        model.load_state_dict(best_state)
    return model, history


def load_lm(path):
    """Load a bi-gram (JSON) or GRU (checkpoint) language model by file content."""
    path = Path(path)
    head = path.read_bytes()[:5]
    if head == checkpoint.MAGIC:
        return GruLM.load(path)
    return BigramLM.load(path)


def score_lm(model, score) -> LmScore:
    if isinstance(model, BigramLM):
        return bigram_nll(model, score)
    return gru_lm_nll(model, score)
