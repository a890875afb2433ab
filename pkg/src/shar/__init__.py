"""Activity recognition from binary smart-home sensors: a peephole LSTM
sequence labeler, naive Bayes / HMM / CRF baselines, house-log ingestion and
a leave-one-day-out benchmark."""

from .baselines import CrfTagger, HmmTagger, NaiveBayesTagger
from .dataset import DayGrid, EncodingKind, House, HouseMeta, encode, load_house, synth_house
from .evaluation import BenchmarkConfig, BenchmarkReport, emit_report, run_benchmark
from .lstm import LstmTagger, TrainConfig

__version__ = "0.1.0"

__all__ = [
    "BenchmarkConfig", "BenchmarkReport", "CrfTagger", "DayGrid", "EncodingKind", "House",
    "HouseMeta", "HmmTagger", "LstmTagger", "NaiveBayesTagger", "TrainConfig",
    "emit_report", "encode", "load_house", "run_benchmark", "synth_house",
]
