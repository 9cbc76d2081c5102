"""Occupancy forecasting for EV charging stations.

The package trains and evaluates per-station occupancy forecasters on a
15-minute time grid.  The main model fuses a recurrent encoding of recent
occupancy ("dynamic information") with encodings of long-run per-station
usage profiles ("static information") and decodes a multi-step occupancy
forecast autoregressively.  Classic comparators (historical average,
nearest neighbour, logistic regression, plain recurrent baselines) share
one forecaster contract so experiments can swap models freely.
"""

from .data import (
    SLOT_SECONDS,
    SLOTS_PER_DAY,
    SLOTS_PER_WEEK,
    ChargingRecord,
    DatasetSplit,
    StationSeries,
    TimeSlot,
    Window,
    build_series,
    make_windows,
    parse_records,
    serialize_records,
    split_train_test,
)
from .errors import (
    ChargecastError,
    ConfigError,
    DataError,
    NotFittedError,
    NumericalError,
    ShapeError,
    UsageError,
)
from .features import (
    DynamicLayout,
    ProfileSet,
    StaticProfile,
    StaticRows,
    build_static_profiles,
    encode_dynamic,
    nearest_rank_quantile,
    static_rows_for_window,
)
from .model import DfdsConfig, DfdsParams, bce_loss, dfds_backward, dfds_forward
from .baselines import (
    DfdsForecaster,
    Forecaster,
    GruFcForecaster,
    HistoricalAverageForecaster,
    KnnForecaster,
    LogisticRegressionForecaster,
    MODEL_REGISTRY,
    Seq2SeqForecaster,
    make_forecaster,
)
from .metrics import ConfusionCounts, PrfScores, confusion_counts, macro_average, prf_scores
from .synthetic import SyntheticConfig, generate_synthetic
from .training import TrainConfig, gradient_check, train

__version__ = "0.1.0"

__all__ = [
    "SLOT_SECONDS",
    "SLOTS_PER_DAY",
    "SLOTS_PER_WEEK",
    "ChargingRecord",
    "ChargecastError",
    "ConfigError",
    "ConfusionCounts",
    "DataError",
    "DatasetSplit",
    "DfdsConfig",
    "DfdsForecaster",
    "DfdsParams",
    "DynamicLayout",
    "Forecaster",
    "GruFcForecaster",
    "HistoricalAverageForecaster",
    "KnnForecaster",
    "LogisticRegressionForecaster",
    "MODEL_REGISTRY",
    "NotFittedError",
    "NumericalError",
    "PrfScores",
    "ProfileSet",
    "Seq2SeqForecaster",
    "ShapeError",
    "StaticProfile",
    "StaticRows",
    "StationSeries",
    "SyntheticConfig",
    "TimeSlot",
    "TrainConfig",
    "UsageError",
    "Window",
    "bce_loss",
    "build_series",
    "build_static_profiles",
    "confusion_counts",
    "dfds_backward",
    "dfds_forward",
    "encode_dynamic",
    "generate_synthetic",
    "gradient_check",
    "macro_average",
    "make_forecaster",
    "make_windows",
    "nearest_rank_quantile",
    "parse_records",
    "prf_scores",
    "serialize_records",
    "split_train_test",
    "static_rows_for_window",
    "train",
]
