"""Leave-one-day-out benchmark: per-fold training, timeslice accuracy,
mean/std aggregation and report rendering."""

from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, clone

from .baselines import CrfTagger, HmmTagger, NaiveBayesTagger
from .dataset import EncodingKind, House, HouseMeta, encode, make_folds
from .lstm import LstmTagger, TrainConfig

MODEL_KINDS = ("nb", "hmm", "crf", "lstm")
MODEL_LABELS = {"nb": "Naive Bayes", "hmm": "HMM", "hsmm": "HSMM", "crf": "CRF", "lstm": "LSTM"}
REPORT_ROW_ORDER = ("nb", "hmm", "hsmm", "crf", "lstm")


@dataclass(frozen=True)
class ReferenceCell:
    mean: float
    std: float
    text: str


def _cells(*texts):
    out = []
    for t in texts:
        mean, std = t.split("±")
        out.append(ReferenceCell(float(mean), float(std), t))
    return out


# Published timeslice accuracies (%) per model for houses A, B, C.
_PUBLISHED = {
    EncodingKind.RAW: {
        "nb": _cells("77.1±20.8", "80.4±18.0", "46.5±22.6"),
        "hmm": _cells("59.1±28.7", "63.2±24.7", "26.5±22.7"),
        "hsmm": _cells("59.5±29.0", "63.8±24.2", "31.2±24.6"),
        "crf": _cells("89.8±8.5", "78.0±25.9", "46.3±25.5"),
        "lstm": _cells("89.8±8.2", "85.7±14.3", "64.22±21.9"),
    },
    EncodingKind.LAST_FIRED: {
        "nb": _cells("95.3±2.8", "86.2±13.8", "87.0±12.2"),
        "hmm": _cells("89.5±8.4", "48.4±26.0", "83.9±13.9"),
        "hsmm": _cells("91.0±7.2", "67.1±24.8", "84.5±13.2"),
        "crf": _cells("96.4±2.4", "89.2±13.9", "89.7±8.4"),
        "lstm": _cells("95.3±2.0", "88.5±12.6", "85.9±10.6"),
    },
}
_HOUSE_COLUMN = {"A": 0, "B": 1, "C": 2}


def _house_key(house: str) -> str:
    key = house.strip().upper()
    if key.startswith("HOUSE"):
        key = key[5:].strip()
    return key


def reference_table(house: str, encoding: EncodingKind | str) -> dict[str, ReferenceCell]:
    """Published rows for ``house`` ("A", "house B", ...) keyed by model kind."""
    key = _house_key(house)
    if key not in _HOUSE_COLUMN:
        raise KeyError(f"no published results for house {house!r}")
    col = _HOUSE_COLUMN[key]
    return {kind: cells[col] for kind, cells in _PUBLISHED[EncodingKind.parse(encoding)].items()}


def timeslice_accuracy(pred, truth) -> float:
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"prediction length {pred.shape} != truth length {truth.shape}")
    if pred.size == 0:
        raise ValueError("cannot score an empty sequence")
    return float(np.count_nonzero(pred == truth)) / pred.size


def confusion_matrix(pred, truth, n_classes: int) -> np.ndarray:
    """Counts indexed [truth, pred]."""
    out = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(out, (np.asarray(truth), np.asarray(pred)), 1)
    return out


@dataclass
class FoldResult:
    test_date: object
    model_kind: str
    encoding: EncodingKind
    accuracy: float
    train_seconds: float
    confusion: np.ndarray


@dataclass
class BenchmarkConfig:
    """Hyperparameters for every model kind a benchmark may train."""

    lstm: TrainConfig = field(default_factory=TrainConfig)
    alpha: float = 0.01
    crf_epochs: int = 100
    crf_learning_rate: float = 0.01
    crf_l2: float = 1e-4


@dataclass
class BenchmarkReport:
    house: HouseMeta
    encoding: EncodingKind
    folds: dict[str, list[FoldResult]] = field(default_factory=dict)

    @property
    def rows(self) -> dict[str, tuple[float, float]]:
        """Per model: (mean accuracy %, population std %) over folds."""
        out = {}
        for kind, results in self.folds.items():
            acc = np.array([r.accuracy for r in results]) * 100.0
            out[kind] = (float(acc.mean()), float(acc.std())) if acc.size else (float("nan"),) * 2
        return out

    @property
    def reference_rows(self) -> dict[str, ReferenceCell]:
        try:
            return reference_table(self.house.name, self.encoding)
        except KeyError:
            return {}


def make_estimator(kind: str, cfg: BenchmarkConfig, n_classes: int, seed: int) -> BaseEstimator:
    if kind == "nb":
        return NaiveBayesTagger(alpha=cfg.alpha, n_classes=n_classes)
    if kind == "hmm":
        return HmmTagger(alpha=cfg.alpha, n_classes=n_classes)
    if kind == "crf":
        return CrfTagger(epochs=cfg.crf_epochs, learning_rate=cfg.crf_learning_rate,
                         l2=cfg.crf_l2, seed=seed, n_classes=n_classes)
    if kind == "lstm":
        return LstmTagger.from_config(cfg.lstm, n_classes).set_params(seed=seed)
    raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def _run_fold(job):
    kind, template, train_days, test_day, encoding, cfg, n_classes, seed = job
    if template is None:
        est = make_estimator(kind, cfg, n_classes, seed)
    else:
        est = clone(template)
        if "seed" in est.get_params():
            est.set_params(seed=seed)
    X_train = [encode(d.features, encoding) for d in train_days]
    start = time.perf_counter()
    try:
        est.fit(X_train, [d.labels for d in train_days])
        pred = est.predict([encode(test_day.features, encoding)])[0]
    except Exception as exc:
        raise RuntimeError(f"{kind} fold for {test_day.date} failed: {exc}") from exc
    elapsed = time.perf_counter() - start
    conf = confusion_matrix(pred, test_day.labels, n_classes)
    acc = float(np.trace(conf)) / float(conf.sum())
    return FoldResult(test_day.date, kind, encoding, acc, elapsed, conf)


def run_benchmark(house: House, model_kind, encoding: EncodingKind | str,
                  cfg: BenchmarkConfig | None = None, seed: int = 0,
                  threads: int = 1, report: BenchmarkReport | None = None) -> BenchmarkReport:
    """Train and score ``model_kind`` on every leave-one-day-out fold.

    ``model_kind`` is a kind name (``nb``, ``hmm``, ``crf``, ``lstm``), a
    list of them, ``"all"``, or an unfitted estimator that is cloned per fold.
    Fold k trains with seed ``seed ^ k``. Results are ordered by test date.
    """
    encoding = EncodingKind.parse(encoding)
    cfg = cfg or BenchmarkConfig()
    report = report or BenchmarkReport(house.meta, encoding)
    if model_kind == "all":
        kinds = list(MODEL_KINDS)
    elif isinstance(model_kind, (list, tuple)):
        kinds = list(model_kind)
    else:
        kinds = [model_kind]
    folds = make_folds(house.days)
    L = house.meta.activity_count
    for kind in kinds:
        if isinstance(kind, BaseEstimator):
            name, template = getattr(kind, "name", type(kind).__name__), kind
        else:
            if kind not in MODEL_KINDS:
                raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
            name, template = kind, None
        jobs = [(name, template, train, test, encoding, cfg, L, seed ^ k)
                for k, (train, test) in enumerate(folds)]
        if threads > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(_run_fold, jobs))
        else:
            results = [_run_fold(job) for job in jobs]
        report.folds[name] = sorted(results, key=lambda r: r.test_date)
    return report


def format_cell(mean: float, std: float) -> str:
    return f"{mean:.1f}±{std:.1f}"


def emit_report(report: BenchmarkReport, fmt: str = "text") -> str:
    if fmt == "csv":
        return _emit_csv(report)
    if fmt == "text":
        return _emit_text(report)
    raise ValueError(f"unknown report format {fmt!r}")


def _emit_csv(report: BenchmarkReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["house", "model", "encoding", "fold_date", "accuracy"])
    for kind, results in report.folds.items():
        for r in results:
            writer.writerow([report.house.name, kind, report.encoding.value,
                             str(r.test_date), f"{r.accuracy:.6f}"])
    return buf.getvalue()


def _emit_text(report: BenchmarkReport) -> str:
    title = "raw" if report.encoding is EncodingKind.RAW else "last-fired"
    n_folds = max((len(v) for v in report.folds.values()), default=0)
    reference = report.reference_rows
    measured = report.rows
    order = [k for k in REPORT_ROW_ORDER if k in measured]
    order += [k for k in measured if k not in REPORT_ROW_ORDER]
    if set(MODEL_KINDS) <= set(measured):
        order.insert(order.index("crf"), "hsmm")
    table = [("Model", "Measured", "Published")]
    for kind in order:
        got = format_cell(*measured[kind]) if kind in measured else "-"
        ref = reference[kind].text if kind in reference else "n/a"
        table.append((MODEL_LABELS.get(kind, kind), got, ref))
    widths = [max(len(row[i]) for row in table) for i in range(3)]
    lines = [f"Results of {title} sensor data, house {report.house.name or '?'} "
             f"({n_folds} folds, timeslice accuracy %)"]
    for n, row in enumerate(table):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
