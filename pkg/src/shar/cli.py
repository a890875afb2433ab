"""Command line entry point: ``shar {validate,train,benchmark,gradcheck,synth}``.

A config file holds ``key = value`` lines (``#`` comments). Recognized keys:
``events``, ``annotations``, ``meta`` (paths, relative to the config file),
``house``, ``encoding``, ``model``, ``seed``, ``epochs``, ``hidden``,
``unroll``, ``lr``, ``threads``, ``out``, ``alpha``, ``crf_epochs``,
``crf_lr``, ``crf_l2``. Command-line flags override file values.

Exit codes: 0 success, 1 numerical/acceptance failure, 2 input/config error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import checks
from .baselines import CrfTagger
from .dataset import (DatasetError, EncodingKind, HouseMeta, encode, format_intervals,
                      format_meta, load_house, synth_events)
from .evaluation import BenchmarkConfig, emit_report, make_estimator, run_benchmark
from .lstm import LstmTagger, TrainConfig
from .persist import atomic_write, save_model

EXIT_OK, EXIT_NUMERIC, EXIT_INPUT = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    events: str | None = None
    annotations: str | None = None
    meta: str | None = None
    house: str = ""
    encoding: EncodingKind = EncodingKind.LAST_FIRED
    model: str = "lstm"
    seed: int = 0
    threads: int = 1
    out: str = "."
    train: TrainConfig = field(default_factory=TrainConfig)
    bench: BenchmarkConfig = field(default_factory=BenchmarkConfig)


def read_config_file(path) -> dict[str, str]:
    values = {}
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key] = value
    base = os.path.dirname(os.path.abspath(path))
    for key in ("events", "annotations", "meta", "out"):
        if key in values and not os.path.isabs(values[key]):
            values[key] = os.path.join(base, values[key])
    return values


_FLAG_KEYS = ("house", "model", "encoding", "seed", "epochs", "hidden", "unroll", "lr",
              "threads", "out")


def build_config(args: argparse.Namespace) -> RunConfig:
    values = read_config_file(args.config) if getattr(args, "config", None) else {}
    for key in _FLAG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = str(flag)
    known = {"events", "annotations", "meta", "alpha", "crf_epochs", "crf_lr", "crf_l2",
             *_FLAG_KEYS}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    try:
        train = TrainConfig(
            hidden_size=int(values.get("hidden", 300)),
            unroll_len=int(values.get("unroll", 70)),
            learning_rate=float(values.get("lr", 0.0004)),
            epochs=int(values.get("epochs", 50)),
            seed=int(values.get("seed", 0)))
        bench = BenchmarkConfig(
            lstm=train,
            alpha=float(values.get("alpha", 0.01)),
            crf_epochs=int(values.get("crf_epochs", 100)),
            crf_learning_rate=float(values.get("crf_lr", 0.01)),
            crf_l2=float(values.get("crf_l2", 1e-4)))
        cfg = RunConfig(
            events=values.get("events"), annotations=values.get("annotations"),
            meta=values.get("meta"), house=values.get("house", ""),
            encoding=EncodingKind.parse(values.get("encoding", "last-fired")),
            model=values.get("model", "lstm"), seed=train.seed,
            threads=int(values.get("threads", 1)), out=values.get("out", "."),
            train=train, bench=bench)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.model not in ("lstm", "nb", "hmm", "crf", "all"):
        raise ConfigError(f"unknown model {cfg.model!r}")
    if cfg.threads < 1:
        raise ConfigError("threads must be >= 1")
    return cfg


def _load(cfg: RunConfig):
    missing = [k for k in ("events", "annotations", "meta") if not getattr(cfg, k)]
    if missing:
        raise ConfigError(f"config is missing: {', '.join(missing)}")
    for key in ("events", "annotations", "meta"):
        path = getattr(cfg, key)
        if not os.path.isfile(path):
            raise ConfigError(f"{key} file not found: {path}")
    return load_house(cfg.events, cfg.annotations, cfg.meta, name=cfg.house)


# --------------------------------------------------------------------------
# subcommands

def cmd_validate(cfg: RunConfig) -> int:
    house = _load(cfg)
    meta = house.meta
    print(f"{len(house.days)} days, {meta.sensor_count} sensors, "
          f"{meta.activity_count - 1} activities (+Idle)")
    hist = np.zeros(meta.activity_count, dtype=np.int64)
    for d in house.days:
        hist += np.bincount(d.labels, minlength=meta.activity_count)
    width = max(len(n) for n in meta.activity_names)
    for name, count in zip(meta.activity_names, hist):
        print(f"  {name.ljust(width)}  {count}")
    return EXIT_OK


def cmd_train(cfg: RunConfig) -> int:
    if cfg.model == "all":
        raise ConfigError("train needs a single --model")
    house = _load(cfg)
    if not house.days:
        raise ConfigError("dataset has no days")
    L = house.meta.activity_count
    est = make_estimator(cfg.model, cfg.bench, L, cfg.seed)
    X = [encode(d.features, cfg.encoding) for d in house.days]
    y = [d.labels for d in house.days]
    try:
        est.fit(X, y)
    except FloatingPointError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    stem = f"{cfg.model}-{cfg.encoding.value}"
    save_model(os.path.join(cfg.out, f"model-{stem}.bin"), est, cfg.encoding)
    if isinstance(est, LstmTagger):
        rows = [f"{e},{loss:.10f}" for e, loss in enumerate(est.loss_trace_)]
        atomic_write(os.path.join(cfg.out, f"loss-{stem}.csv"),
                     "epoch,mean_window_loss\n" + "".join(r + "\n" for r in rows))
    elif isinstance(est, CrfTagger):
        total = sum(len(v) for v in y)
        rows = [f"{e},{-obj / total:.10f}" for e, obj in enumerate(est.objective_trace_)]
        atomic_write(os.path.join(cfg.out, f"loss-{stem}.csv"),
                     "epoch,mean_slice_loss\n" + "".join(r + "\n" for r in rows))
    print(f"training accuracy: {100.0 * est.score(X, y):.2f}%")
    return EXIT_OK


def cmd_benchmark(cfg: RunConfig) -> int:
    house = _load(cfg)
    try:
        report = run_benchmark(house, cfg.model, cfg.encoding, cfg.bench, cfg.seed,
                               threads=cfg.threads)
    except RuntimeError as exc:
        print(f"benchmark failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    stem = f"benchmark-{house.meta.name or 'house'}-{cfg.model}-{cfg.encoding.value}"
    text = emit_report(report, "text")
    atomic_write(os.path.join(cfg.out, stem + ".txt"), text)
    atomic_write(os.path.join(cfg.out, stem + ".csv"), emit_report(report, "csv"))
    print(text, end="")
    return EXIT_OK


def cmd_gradcheck(corrupt: bool = False) -> int:
    errors = checks.run_gradchecks(corrupt=corrupt)
    limits = {"LSTM": checks.LSTM_TOLERANCE, "CRF": checks.CRF_TOLERANCE}
    ok = True
    for name, err in errors.items():
        passed = err < limits[name]
        ok &= passed
        print(f"{name} max rel err: {err:.3e} <{limits[name]:g} {'PASS' if passed else 'FAIL'}")
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_synth(out: str, days: int, sensors: int, activities: int, seed: int,
              name: str = "synthetic") -> int:
    meta = HouseMeta.generic(name, sensors, activities)
    events, annotations = synth_events(meta, days, seed)
    atomic_write(os.path.join(out, "events.txt"), format_intervals(events, "sensor_id"))
    atomic_write(os.path.join(out, "annotations.txt"),
                 format_intervals(annotations, "activity_id"))
    atomic_write(os.path.join(out, "meta.txt"), format_meta(meta))
    atomic_write(os.path.join(out, "house.cfg"),
                 f"house = {name}\nevents = events.txt\nannotations = annotations.txt\n"
                 f"meta = meta.txt\n")
    print(f"wrote {days} days, {sensors} sensors, {activities} activities to {out}")
    return EXIT_OK


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shar", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def data_flags(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--house", help="house name, e.g. A (selects published reference rows)")
        p.add_argument("--encoding", choices=["raw", "last-fired"])
        p.add_argument("--model", choices=["lstm", "nb", "hmm", "crf", "all"])
        p.add_argument("--seed", type=int)
        p.add_argument("--epochs", type=int, help="LSTM epochs")
        p.add_argument("--hidden", type=int)
        p.add_argument("--unroll", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--threads", type=int)
        p.add_argument("--out")

    data_flags(sub.add_parser("validate", help="parse a house and print a summary"))
    data_flags(sub.add_parser("train", help="train one model on every day of a house"))
    data_flags(sub.add_parser("benchmark", help="leave-one-day-out benchmark"))
    sub.add_parser("gradcheck", help="finite-difference gradient checks")
    synth = sub.add_parser("synth", help="write a synthetic house")
    synth.add_argument("--out", default=".")
    synth.add_argument("--days", type=int, default=5)
    synth.add_argument("--sensors", type=int, default=10)
    synth.add_argument("--activities", type=int, default=6, help="excluding Idle")
    synth.add_argument("--seed", type=int, default=7)
    synth.add_argument("--house", default="synthetic")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gradcheck":
            return cmd_gradcheck()
        if args.command == "synth":
            return cmd_synth(args.out, args.days, args.sensors, args.activities, args.seed,
                             args.house)
        cfg = build_config(args)
        handler = {"validate": cmd_validate, "train": cmd_train,
                   "benchmark": cmd_benchmark}[args.command]
        return handler(cfg)
    except (ConfigError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
