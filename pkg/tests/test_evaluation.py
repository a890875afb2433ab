import datetime as dt
from pathlib import Path

import numpy as np
import pytest
from sklearn.base import BaseEstimator

from shar.dataset import EncodingKind, House, HouseMeta
from shar.evaluation import (BenchmarkReport, FoldResult, confusion_matrix, emit_report,
                             format_cell, reference_table, run_benchmark, timeslice_accuracy)

GOLDEN = Path(__file__).parent / "golden"


class OracleTagger(BaseEstimator):
    """Test hook: looks each test day up in a table of true labels."""

    name = "oracle"
    table: dict = {}

    def fit(self, X, y):
        return self

    def predict(self, X):
        return [self.table[np.asarray(x).tobytes()] for x in X]


class TestAccuracy:
    def test_identity(self):
        y = np.array([0, 1, 2, 2])
        assert timeslice_accuracy(y, y) == 1.0

    def test_constant_idle(self):
        truth = np.array([0] * 864 + [3] * 576)
        assert timeslice_accuracy(np.zeros(1440, int), truth) == pytest.approx(0.6, abs=0)

    def test_complement(self):
        truth = np.arange(10) % 2
        assert timeslice_accuracy(1 - truth, truth) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            timeslice_accuracy(np.zeros(3), np.zeros(4))

    def test_confusion_trace(self):
        pred, truth = np.array([0, 1, 1, 2]), np.array([0, 1, 2, 2])
        conf = confusion_matrix(pred, truth, 3)
        assert conf.sum() == 4 and conf[2, 1] == 1
        assert np.trace(conf) / conf.sum() == timeslice_accuracy(pred, truth)


class TestReference:
    def test_cells(self):
        assert reference_table("B", "raw")["lstm"].text == "85.7±14.3"
        assert reference_table("House C", "last-fired")["hmm"].text == "83.9±13.9"
        cell = reference_table("A", EncodingKind.RAW)["nb"]
        assert (cell.mean, cell.std, cell.text) == (77.1, 20.8, "77.1±20.8")
        assert reference_table("C", "raw")["lstm"].text == "64.22±21.9"
        assert reference_table("A", "last-fired")["crf"].text == "96.4±2.4"

    def test_all_thirty_cells(self):
        cells = [reference_table(h, e) for h in "ABC" for e in ("raw", "last-fired")]
        assert sum(len(c) for c in cells) == 30
        assert all("hsmm" in c for c in cells)

    def test_unknown_house(self):
        with pytest.raises(KeyError):
            reference_table("D", "raw")


def fold(date, acc_slices, kind="lstm", L=3):
    conf = np.zeros((L, L), dtype=np.int64)
    conf[0, 0] = acc_slices
    conf[0, 1] = 1440 - acc_slices
    return FoldResult(date, kind, EncodingKind.RAW, acc_slices / 1440, 0.0, conf)


def sample_report():
    meta = HouseMeta.generic("A", 14, 10)
    report = BenchmarkReport(meta, EncodingKind.RAW)
    days = [dt.date(2008, 2, 25) + dt.timedelta(days=k) for k in range(3)]
    for kind, accs in {"nb": (1100, 1200, 1300), "hmm": (800, 900, 1000),
                       "crf": (1290, 1300, 1310), "lstm": (1440, 1296, 1152)}.items():
        report.folds[kind] = [fold(d, a, kind) for d, a in zip(days, accs)]
    return report


class TestReport:
    def test_cell_format(self):
        assert format_cell(89.8, 8.2) == "89.8±8.2"

    def test_population_std(self):
        mean, std = sample_report().rows["lstm"]
        acc = np.array([1440, 1296, 1152]) / 1440 * 100
        assert mean == pytest.approx(acc.mean(), abs=1e-12)
        assert std == pytest.approx(np.sqrt(((acc - acc.mean()) ** 2).mean()), abs=1e-12)

    def test_text_golden(self):
        assert emit_report(sample_report(), "text") == (GOLDEN / "report_house_a_raw.txt").read_text()

    def test_csv(self):
        lines = emit_report(sample_report(), "csv").splitlines()
        assert lines[0] == "house,model,encoding,fold_date,accuracy"
        assert len(lines) == 4 * 3 + 1
        assert lines[-1] == "A,lstm,raw,2008-02-27,0.800000"

    def test_empty_csv(self):
        report = BenchmarkReport(HouseMeta.generic("A", 1, 1), EncodingKind.RAW)
        assert emit_report(report, "csv") == "house,model,encoding,fold_date,accuracy\n"

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            emit_report(sample_report(), "html")


class TestBenchmark:
    def test_oracle_is_perfect(self, synth):
        OracleTagger.table = {d.features.astype(np.uint8).tobytes(): d.labels for d in synth.days}
        report = run_benchmark(synth, OracleTagger(), "raw")
        assert report.rows["oracle"] == (100.0, 0.0)
        assert len(report.folds["oracle"]) == len(synth.days)

    def test_fold_structure(self, synth):
        report = run_benchmark(synth, ["nb", "hmm"], "last-fired", seed=3)
        for kind in ("nb", "hmm"):
            results = report.folds[kind]
            assert [r.test_date for r in results] == sorted(d.date for d in synth.days)
            for r in results:
                assert r.confusion.sum() == 1440
                assert r.accuracy == np.trace(r.confusion) / r.confusion.sum()
                assert r.encoding is EncodingKind.LAST_FIRED
        mean = np.mean([r.accuracy for r in report.folds["nb"]]) * 100
        assert report.rows["nb"][0] == pytest.approx(mean, abs=1e-12)

    def test_fold_seeds_differ(self, synth):
        seen = []

        class Spy(BaseEstimator):
            name = "spy"

            def __init__(self, seed=0):
                self.seed = seed

            def fit(self, X, y):
                seen.append(self.seed)
                return self

            def predict(self, X):
                return [np.zeros(len(x), int) for x in X]

        run_benchmark(synth, Spy(), "raw", seed=10)
        assert seen == [10 ^ k for k in range(len(synth.days))]

    def test_unknown_kind(self, synth):
        with pytest.raises(ValueError):
            run_benchmark(synth, "svm", "raw")

    def test_failed_fold_names_date(self, synth):
        class Broken(BaseEstimator):
            def fit(self, X, y):
                raise FloatingPointError("boom")

        with pytest.raises(RuntimeError, match="2008-02-25"):
            run_benchmark(synth, Broken(), "raw")

    def test_threads_match_serial(self, synth):
        a = run_benchmark(synth, "nb", "raw", seed=1)
        b = run_benchmark(synth, "nb", "raw", seed=1, threads=2)
        assert emit_report(a, "csv") == emit_report(b, "csv")
