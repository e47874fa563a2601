"""Cluster-wide task slowdown detection from per-slot duration distributions.

The pipeline is: bin task events into per-slot duration histograms, reconstruct
each slot with a stack of gated attention layers followed by a learned
transport plan, train with a trust-weighted loss, and flag slots whose
expected duration exceeds the reconstruction's.
"""

from .autodiff import Parameter, Tensor, backward, finite_difference_check
from .data import (
    DistributionSeries,
    IntervalScheme,
    SCHEMES,
    TaskEvent,
    bin_events,
    get_scheme,
    normalize,
    read_events_csv,
    read_labels,
    read_series,
    split,
    write_labels,
    write_series,
)
from .model import SornModel, TrainConfig
from .scoring import ScoreReport, anomaly_score, best_f1_threshold, evaluate, normalize_rows, threshold
from .synth import SynthDataset, SynthSpec, generate
from .training import TrainingError, train

__version__ = "0.1.0"

__all__ = [
    "Parameter",
    "Tensor",
    "backward",
    "finite_difference_check",
    "DistributionSeries",
    "IntervalScheme",
    "SCHEMES",
    "TaskEvent",
    "bin_events",
    "get_scheme",
    "normalize",
    "read_events_csv",
    "read_labels",
    "read_series",
    "split",
    "write_labels",
    "write_series",
    "SornModel",
    "TrainConfig",
    "ScoreReport",
    "anomaly_score",
    "best_f1_threshold",
    "evaluate",
    "normalize_rows",
    "threshold",
    "SynthDataset",
    "SynthSpec",
    "generate",
    "TrainingError",
    "train",
]
