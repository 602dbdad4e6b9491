"""Command-line entry point: ``tatumscribe <command> [options]``.

Every command accepts ``--config`` (a JSON file), ``--seed`` and ``--out``.
Flags override config values, and the effective configuration is written
to ``<out>/config.json`` so that every output can be reproduced.

Exit codes: 0 on success, 1 for invalid input or configuration, 2 for
failures while running.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .autograd import AdamWConfig
from .baseline import BaselineConfig, FrameCRNN, PeakPickConfig, train_baseline, transcribe_frames
from .dataset import load_items, load_manifest
from .errors import ConfigError, TatumscribeError
from .evaluation import (metric_rows, read_metrics_csv, summarize, tatum_prf, write_metrics_csv,
                         write_summary_json)
from .lm import BigramLM, corpus_score, load_lm, score_lm, train_bigram, train_gru_lm
from .score import (TatumGrid, build_tatum_grid, load_score, quantize_onsets, read_annotation,
                    read_beats, save_score)
from .synth import default_templates, make_dataset, make_lm_corpus
from .training import TrainConfig, train
from .transcriber import Transcriber, TranscriberConfig, transcribe

logger = logging.getLogger("tatumscribe")

SCORE_SUFFIX = ".score.json"
REPORT_ROWS = (("baseline", "baseline CRNN"), ("crnn", "CRNN"),
               ("bigram", "+Bi-gram"), ("gru", "+GRU"))

# config sections and the fields each accepts
SYNTH_FIELDS = {"n_songs": 10, "bars": 4, "variation_rate": 0.05, "fill_bar_period": 0,
                "tempo_min": 100.0, "tempo_max": 140.0, "noise_floor": 1e-3, "lm_scores": 0}
LM_FIELDS = {"epochs": 10, "hidden": 64, "n_layers": 3, "pooled": False}
SECTIONS = {
    "synth": set(SYNTH_FIELDS),
    "lm": set(LM_FIELDS) | {"optim"},
    "model": {f.name for f in dataclasses.fields(TranscriberConfig)},
    "train": {f.name for f in dataclasses.fields(TrainConfig)} - {"model", "seed"},
    "baseline": {"beta", "clamp", "epochs", "optim"},
    "peaks": {f.name for f in dataclasses.fields(PeakPickConfig)},
}
OPTIM_FIELDS = {f.name for f in dataclasses.fields(AdamWConfig)}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# -- config ----------------------------------------------------------------------------
def load_config(path) -> dict:
    """Read and validate a JSON run config; unknown keys are rejected."""
    if path is None:
        return {}
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        cfg = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    unknown = set(cfg) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"{path}: unknown sections {sorted(unknown)}")
    for name, section in cfg.items():
        if not isinstance(section, dict):
            raise ConfigError(f"{path}: section '{name}' must be an object")
        bad = set(section) - SECTIONS[name]
        if bad:
            raise ConfigError(f"{path}: unknown keys in '{name}': {sorted(bad)}")
        bad_optim = set(section.get("optim", {})) - OPTIM_FIELDS
        if bad_optim:
            raise ConfigError(f"{path}: unknown keys in '{name}.optim': {sorted(bad_optim)}")
    return cfg


def _merge(base: dict, overrides: dict) -> dict:
    out = dict(base)
    out.update({k: v for k, v in overrides.items() if v is not None})
    return out


def _build(cls, values: dict, what: str):
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(f"invalid {what} configuration: {exc}") from None


def _jsonable(obj):
    if dataclasses.is_dataclass(obj):
        return {k: _jsonable(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dump_config(out: Path, command: str, args, effective: dict) -> None:
    record = {"command": command, "version": __version__, "seed": args.seed,
              "args": {k: v for k, v in sorted(vars(args).items())
                       if k not in ("func", "config", "out", "seed")},
              "config": effective}
    (out / "config.json").write_text(
        json.dumps(_jsonable(record), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _require(*paths) -> None:
    for p in paths:
        if p is not None and not Path(p).exists():
            raise FileNotFoundError(f"input not found: {p}")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _score_files(path) -> dict[str, Path]:
    """Map song id to score file for a single file or a directory of scores."""
    path = Path(path)
    if path.is_file():
        return {path.name.removesuffix(SCORE_SUFFIX).removesuffix(".json"): path}
    files = sorted(path.glob(f"*{SCORE_SUFFIX}")) or sorted(path.glob("*.json"))
    return {f.name.removesuffix(SCORE_SUFFIX).removesuffix(".json"): f for f in files}


# -- commands --------------------------------------------------------------------------
def cmd_synth(args, cfg) -> int:
    values = _merge(SYNTH_FIELDS, cfg.get("synth", {}))
    values = _merge(values, {"n_songs": args.n_songs, "bars": args.bars,
                             "variation_rate": args.variation_rate, "lm_scores": args.lm_scores})
    out = _out_dir(args)
    templates = default_templates(values["bars"], values["variation_rate"],
                                  values["fill_bar_period"])
    manifest = make_dataset(out, values["n_songs"], templates,
                            (values["tempo_min"], values["tempo_max"]), args.seed,
                            {"noise_floor": values["noise_floor"]})
    if values["lm_scores"]:
        lm_dir = out / "lm_corpus"
        lm_dir.mkdir(exist_ok=True)
        for i, score in enumerate(make_lm_corpus(values["lm_scores"], templates, args.seed)):
            save_score(lm_dir / f"lm{i:04d}{SCORE_SUFFIX}", score)
    dump_config(out, "synth", args, values)
    print(f"wrote {len(manifest['songs'])} songs to {out}")
    return 0


def _load_scores(path) -> list:
    files = _score_files(path)
    if not files:
        raise ConfigError(f"no score files found in {path}")
    return [(name, load_score(f)) for name, f in files.items()]


def cmd_train_lm(args, cfg) -> int:
    _require(args.scores, args.val_scores)
    values = _merge(LM_FIELDS, cfg.get("lm", {}))
    values = _merge(values, {"epochs": args.epochs})
    corpus = [s for _, s in _load_scores(args.scores)]
    out = _out_dir(args)
    if args.kind == "bigram":
        model = train_bigram(corpus, pooled=values["pooled"])
        path = out / "bigram.json"
    else:
        optim = _build(AdamWConfig, values.get("optim", {}), "optimizer")
        val = [s for _, s in _load_scores(args.val_scores)] if args.val_scores else ()
        model, history = train_gru_lm(corpus, values["epochs"], args.seed, values["hidden"],
                                      values["n_layers"], optim, val=val)
        path = out / "gru_lm.tscb"
        (out / "lm_log.csv").write_text(
            "epoch,nll_per_symbol\n" + "".join(f"{i + 1},{v:.10g}\n" for i, v in enumerate(history)),
            encoding="utf-8")
    model.save(path)
    fit = corpus_score([score_lm(model, s) for s in corpus])
    dump_config(out, "train-lm", args, values)
    print(f"{args.kind} model written to {path}; training perplexity {fit.perplexity:.3f}")
    return 0


def cmd_eval_lm(args, cfg) -> int:
    _require(args.model, args.scores)
    model = load_lm(args.model)
    results = []
    for name, score in _load_scores(args.scores):
        res = score_lm(model, score)
        results.append(res)
        print(f"{name}\t{res.perplexity:.3f}")
    total = corpus_score(results)
    print(f"mean\t{total.perplexity:.3f}")
    if args.out:
        out = _out_dir(args)
        (out / "perplexity.json").write_text(json.dumps(
            {"perplexity": total.perplexity, "nll": total.nll, "n_symbols": total.n_symbols},
            indent=2) + "\n", encoding="utf-8")
    return 0


def _train_config(args, cfg, lm) -> TrainConfig:
    values = dict(cfg.get("train", {}))
    kind = "none" if lm is None else "bigram" if isinstance(lm, BigramLM) else "gru"
    if values.get("lm_kind", kind) != kind:
        raise ConfigError(f"config lm_kind={values['lm_kind']!r} but the model is {kind!r}")
    values["lm_kind"] = kind
    values = _merge(values, {"epochs": args.epochs, "gamma": args.gamma, "alpha": args.alpha})
    values["seed"] = args.seed
    values["model"] = _build(TranscriberConfig, cfg.get("model", {}), "model")
    values["optim"] = _build(AdamWConfig, values.get("optim", {}), "optimizer")
    return _build(TrainConfig, values, "training")


def cmd_train(args, cfg) -> int:
    _require(args.data, args.lm)
    lm = load_lm(args.lm) if args.lm else None
    tcfg = _train_config(args, cfg, lm)
    manifest = load_manifest(args.data)
    items = load_items(manifest, "train")
    val = load_items(manifest, "val")
    out = _out_dir(args)
    model, history = train(items, lm, tcfg, val=val, log_path=out / "train_log.csv")
    model.save(out / "crnn.tscb")
    dump_config(out, "train", args, tcfg)
    last = history[-1] if history else None
    if last:
        print(f"trained {tcfg.epochs} epochs: l_total {last.l_total:.4f} "
              f"train_f {last.train_f:.3f} val_f {last.val_f:.3f}")
    return 0


def _songs(args):
    """Yield ``(id, spec_item)`` for the songs named by --data/--split."""
    manifest = load_manifest(args.data)
    return load_items(manifest, args.split)


def cmd_transcribe(args, cfg) -> int:
    _require(args.model, args.data)
    mcfg = _build(TranscriberConfig, cfg.get("model", {}), "model")
    if args.threshold is not None:
        mcfg.threshold = args.threshold
    model = Transcriber.load(args.model, mcfg)
    out = _out_dir(args)
    for item in _songs(args):
        phi, score = transcribe(model, item.spec, item.tatum_times)
        save_score(out / f"{item.name}{SCORE_SUFFIX}", score)
        np.save(out / f"{item.name}.phi.npy", phi)
    dump_config(out, "transcribe", args, {"model": mcfg})
    print(f"transcribed {args.split or 'all'} songs into {out}")
    return 0


def cmd_baseline_train(args, cfg) -> int:
    _require(args.data)
    values = _merge(cfg.get("baseline", {}), {"epochs": args.epochs})
    values["seed"] = args.seed
    values["model"] = _build(TranscriberConfig, cfg.get("model", {}), "model")
    values["optim"] = _build(AdamWConfig, values.get("optim", {}), "optimizer")
    values["peaks"] = _build(PeakPickConfig, cfg.get("peaks", {}), "peak-picking")
    bcfg = _build(BaselineConfig, values, "baseline")
    items = load_items(load_manifest(args.data), "train")
    out = _out_dir(args)
    model, history = train_baseline(items, bcfg, log_path=out / "train_log.csv")
    model.save(out / "frame.tscb")
    dump_config(out, "baseline-train", args, bcfg)
    print(f"trained baseline {bcfg.epochs} epochs: l_frame {history[-1] if history else float('nan'):.4f}")
    return 0


def cmd_baseline_transcribe(args, cfg) -> int:
    _require(args.model, args.data)
    peaks = _build(PeakPickConfig, cfg.get("peaks", {}), "peak-picking")
    model = FrameCRNN.load(args.model)
    out = _out_dir(args)
    for item in _songs(args):
        act, score = transcribe_frames(model, item.spec, TatumGrid(item.tatum_times), peaks)
        score.tatum_times = item.tatum_times.copy()
        save_score(out / f"{item.name}{SCORE_SUFFIX}", score)
    dump_config(out, "baseline-transcribe", args, {"peaks": peaks})
    print(f"transcribed {args.split or 'all'} songs into {out}")
    return 0


def cmd_quantize(args, cfg) -> int:
    _require(args.annotation, args.beats)
    grid = build_tatum_grid(read_beats(args.beats))
    score, stats = quantize_onsets(read_annotation(args.annotation), grid)
    out = _out_dir(args)
    name = Path(args.annotation).name.split(".")[0]
    save_score(out / f"{name}{SCORE_SUFFIX}", score)
    report = {"total": stats.total, "conflict": stats.conflict, "far": stats.far,
              "union": stats.union, "conflict_ratio": stats.conflict_ratio,
              "far_ratio": stats.far_ratio, "union_ratio": stats.union_ratio}
    (out / f"{name}.quantize.json").write_text(json.dumps(report, indent=2) + "\n",
                                               encoding="utf-8")
    print(f"{stats.total} onsets: conflict {stats.conflict_ratio:.4f} far {stats.far_ratio:.4f} "
          f"union {stats.union_ratio:.4f}")
    return 0


def cmd_evaluate(args, cfg) -> int:
    _require(args.est, args.ref)
    est, ref = _score_files(args.est), _score_files(args.ref)
    if Path(args.est).is_file() and Path(args.ref).is_file():
        pairs = [(next(iter(ref)), next(iter(est.values())), next(iter(ref.values())))]
    else:
        missing = sorted(set(est) - set(ref))
        if missing:
            raise ConfigError(f"no reference score for {missing}")
        if not est:
            raise ConfigError(f"no estimated scores found in {args.est}")
        pairs = [(name, est[name], ref[name]) for name in sorted(est)]
    rows = []
    for name, e, r in pairs:
        _, per = tatum_prf(load_score(e), load_score(r))
        rows.extend(metric_rows(name, per))
    summary = summarize(rows)
    micro = summary["micro"]
    print(f"F={micro['f']:.3f} P={micro['p']:.3f} R={micro['r']:.3f} ({summary['n_songs']} songs)")
    if args.out:
        out = _out_dir(args)
        write_metrics_csv(out / "metrics.csv", rows)
        write_summary_json(out / "summary.json", summary)
    return 0


def cmd_report(args, cfg) -> int:
    inputs = [(label, getattr(args, key)) for key, label in REPORT_ROWS if getattr(args, key)]
    if not inputs:
        raise ConfigError("report needs at least one metrics CSV")
    _require(*(p for _, p in inputs))
    lines = ["| method | F | P | R |", "|---|---|---|---|"]
    table = []
    for label, path in inputs:
        micro = summarize(read_metrics_csv(path))["micro"]
        table.append({"method": label, "f": micro["f"], "p": micro["p"], "r": micro["r"]})
        lines.append(f"| {label} | {100 * micro['f']:.1f} | {100 * micro['p']:.1f} | "
                     f"{100 * micro['r']:.1f} |")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.out:
        out = _out_dir(args)
        (out / "report.md").write_text(text, encoding="utf-8")
        (out / "report.json").write_text(json.dumps(table, indent=2) + "\n", encoding="utf-8")
    return 0


# -- parser ----------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tatumscribe", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, func, help_, out_required=True):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=out_required, help="output directory")
        p.set_defaults(func=func)
        return p

    p = command("synth", cmd_synth, "generate a synthetic paired corpus")
    p.add_argument("--n-songs", type=int)
    p.add_argument("--bars", type=int)
    p.add_argument("--variation-rate", type=float)
    p.add_argument("--lm-scores", type=int, help="also write this many unpaired scores")

    p = command("train-lm", cmd_train_lm, "train a bi-gram or GRU language model")
    p.add_argument("--kind", choices=("bigram", "gru"), required=True)
    p.add_argument("--scores", required=True, help="directory of score JSON files")
    p.add_argument("--val-scores", help="GRU only: keep the epoch that scores best here")
    p.add_argument("--epochs", type=int)

    p = command("eval-lm", cmd_eval_lm, "perplexity of a language model", out_required=False)
    p.add_argument("--model", required=True)
    p.add_argument("--scores", required=True)

    p = command("train", cmd_train, "train the tatum-level transcriber")
    p.add_argument("--data", required=True, help="corpus directory or manifest.json")
    p.add_argument("--lm", help="language model file; omit for plain training")
    p.add_argument("--epochs", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--alpha", type=float)

    for name, func, helptext in (("transcribe", cmd_transcribe, "tatum-level transcription"),
                                 ("baseline-transcribe", cmd_baseline_transcribe,
                                  "frame-level transcription with peak picking")):
        p = command(name, func, helptext)
        p.add_argument("--model", required=True)
        p.add_argument("--data", required=True)
        p.add_argument("--split", choices=("train", "val", "test"))
        if name == "transcribe":
            p.add_argument("--threshold", type=float)

    p = command("baseline-train", cmd_baseline_train, "train the frame-level baseline")
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int)

    p = command("quantize", cmd_quantize, "snap onset annotations to the tatum grid")
    p.add_argument("--annotation", required=True)
    p.add_argument("--beats", required=True)

    p = command("evaluate", cmd_evaluate, "tatum-level P/R/F", out_required=False)
    p.add_argument("--est", required=True, help="score file or directory")
    p.add_argument("--ref", required=True, help="score file or directory")

    p = command("report", cmd_report, "comparison table from metrics CSVs", out_required=False)
    for key, label in REPORT_ROWS:
        p.add_argument(f"--{key}", help=f"metrics CSV for the {label} row")
    return parser


def main(argv=None) -> int:
    level = os.environ.get("TATUMSCRIBE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except (TatumscribeError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        logger.debug("runtime failure", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
