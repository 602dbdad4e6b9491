"""Precision, recall and F-measure for tatum-level scores and beat times."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import INSTRUMENTS
from .errors import AlignmentError, OrderingError
from .score import DrumScore

BEAT_TOLERANCE = 0.050
CSV_FIELDS = ("song", "instrument", "n_e", "n_g", "n_c", "p", "r", "f")


@dataclass(frozen=True)
class PrfResult:
    """Counts of estimated, ground-truth and correct events.

    Empty denominators give 0 for the affected ratio, and F is 0 whenever
    P + R is 0.
    """

    n_e: int
    n_g: int
    n_c: int

    def __post_init__(self):
        if min(self.n_e, self.n_g, self.n_c) < 0:
            raise ValueError("counts must be nonnegative")
        if self.n_c > min(self.n_e, self.n_g):
            raise ValueError(f"n_c={self.n_c} exceeds min(n_e={self.n_e}, n_g={self.n_g})")

    @property
    def precision(self) -> float:
        return self.n_c / self.n_e if self.n_e else 0.0

    @property
    def recall(self) -> float:
        return self.n_c / self.n_g if self.n_g else 0.0

    @property
    def f_measure(self) -> float:
        p, r = self.precision, self.recall
        return 2.0 * p * r / (p + r) if p + r > 0 else 0.0

    def __add__(self, other: "PrfResult") -> "PrfResult":
        return PrfResult(self.n_e + other.n_e, self.n_g + other.n_g, self.n_c + other.n_c)

    def as_dict(self) -> dict:
        return {"n_e": self.n_e, "n_g": self.n_g, "n_c": self.n_c,
                "p": self.precision, "r": self.recall, "f": self.f_measure}


def tatum_prf(estimated: DrumScore, truth: DrumScore) -> tuple[PrfResult, dict[str, PrfResult]]:
    """Cell-wise onset matching; returns the overall result and one per instrument."""
    est, ref = np.asarray(estimated.onsets), np.asarray(truth.onsets)
    if est.shape != ref.shape:
        raise AlignmentError(f"estimated score {est.shape} and truth {ref.shape} are not aligned")
    per = {}
    for k, name in enumerate(truth.instruments):
        per[name] = PrfResult(int(est[k].sum()), int(ref[k].sum()),
                              int(np.logical_and(est[k], ref[k]).sum()))
    return sum(per.values(), PrfResult(0, 0, 0)), per


def beat_prf(estimated: Sequence[float], truth: Sequence[float],
             tol: float = BEAT_TOLERANCE) -> PrfResult:
    """Match beats one-to-one within ``tol`` seconds.

    Estimated beats are visited in time order; each takes the nearest still
    unmatched ground-truth beat if it lies within the tolerance.
    """
    est = np.asarray(estimated, dtype=np.float64)
    ref = np.asarray(truth, dtype=np.float64)
    for name, arr in (("estimated", est), ("truth", ref)):
        if np.any(np.diff(arr) < 0):
            raise OrderingError(f"{name} beat times must be sorted")
    taken = np.zeros(ref.size, dtype=bool)
    n_c = 0
    for t in est:
        if not ref.size:
            break
        dist = np.where(taken, np.inf, np.abs(ref - t))
        j = int(np.argmin(dist))
        if dist[j] <= tol:
            taken[j] = True
            n_c += 1
    return PrfResult(est.size, ref.size, n_c)


def micro_average(results: Iterable[PrfResult]) -> PrfResult:
    """Pool counts over songs before forming ratios."""
    return sum(results, PrfResult(0, 0, 0))


def macro_average(results: Iterable[PrfResult]) -> dict:
    """Mean of per-song P, R and F."""
    results = list(results)
    if not results:
        return {"p": 0.0, "r": 0.0, "f": 0.0}
    return {"p": float(np.mean([r.precision for r in results])),
            "r": float(np.mean([r.recall for r in results])),
            "f": float(np.mean([r.f_measure for r in results]))}


def corpus_prf(estimates: Sequence[DrumScore], truths: Sequence[DrumScore]) -> PrfResult:
    if len(estimates) != len(truths):
        raise AlignmentError(f"{len(estimates)} estimates for {len(truths)} references")
    return micro_average(tatum_prf(e, t)[0] for e, t in zip(estimates, truths))


# -- output ----------------------------------------------------------------------------
def metric_rows(song: str, per_instrument: dict[str, PrfResult]) -> list[dict]:
    return [{"song": song, "instrument": name, **res.as_dict()}
            for name, res in per_instrument.items()]


def _fmt(value):
    return f"{value:.6f}" if isinstance(value, float) else value


def write_metrics_csv(path, rows: Iterable[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row[k]) for k in CSV_FIELDS})


def read_metrics_csv(path) -> list[dict]:
    """Parse a metrics CSV; malformed content is reported as ``path:line``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}:1: missing columns {sorted(missing)}")
        rows = []
        for row in reader:
            try:
                counts = {k: int(row[k]) for k in ("n_e", "n_g", "n_c")}
                PrfResult(**counts)
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{reader.line_num}: bad metrics row: {exc}") from None
            rows.append({**row, **counts})
    return rows


def summarize(rows: Sequence[dict]) -> dict:
    """Corpus summary from per-song, per-instrument rows.

    ``micro`` pools counts over songs; ``macro`` averages per-song overall
    scores.  Both are given overall and for each instrument.
    """
    songs: dict[str, PrfResult] = {}
    by_inst: dict[str, list[PrfResult]] = {}
    for r in rows:
        res = PrfResult(r["n_e"], r["n_g"], r["n_c"])
        songs[r["song"]] = songs.get(r["song"], PrfResult(0, 0, 0)) + res
        by_inst.setdefault(r["instrument"], []).append(res)
    order = [n for n in INSTRUMENTS if n in by_inst] + sorted(set(by_inst) - set(INSTRUMENTS))
    return {
        "n_songs": len(songs),
        "micro": micro_average(songs.values()).as_dict(),
        "macro": macro_average(songs.values()),
        "per_instrument": {n: {"micro": micro_average(by_inst[n]).as_dict(),
                               "macro": macro_average(by_inst[n])} for n in order},
    }


def write_summary_json(path, summary: dict) -> None:
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
